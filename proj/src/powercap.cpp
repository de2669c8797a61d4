#include "cpc/powercap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace cpc {

namespace {

double cap_for_managed(const PowerModelParams& p, double managed_mhz) {
  const double c = std::clamp(managed_mhz + p.c_hypervisor, 0.0, p.c_peak);
  return clamp_cap(p, cap_for_capacity(p, c).watts);
}

double budget_held_elsewhere(const ClusterSnapshot& s) {
  double sum = 0.0;
  for (const auto& [id, h] : s.hosts) {
    if (h.holds_budget() && !h.is_on()) sum += h.state.cap.watts;
  }
  return sum;
}

CapMap current_caps(const ClusterSnapshot& s) {
  CapMap out;
  for (const auto& [id, h] : s.hosts) {
    if (h.is_on()) out[id] = h.state.cap.watts;
  }
  return out;
}

}  // namespace

FlexiblePower get_flexible_power(const ClusterSnapshot& snapshot) {
  FlexiblePower out;
  out.snapshot = snapshot;
  double held = 0.0;
  for (const auto& [id, h] : snapshot.hosts) {
    if (!h.is_on()) {
      out.reserved_caps[id] = 0.0;
      if (h.holds_budget()) held += h.state.cap.watts;
      continue;
    }
    const double r = reserved_cap_for(h.spec, snapshot.cpu_reservations(id));
    out.reserved_caps[id] = r;
    out.snapshot.host(id).state.cap.watts = r;
    held += r;
  }
  out.unreserved_budget = snapshot.power_budget - held;
  return out;
}

double share_proportionally(const ClusterSnapshot& snapshot, CapMap& caps, const CapMap& weights, double amount) {
  std::vector<HostId> open;
  for (const auto& [id, w] : caps) {
    if (w < snapshot.host(id).spec.power.p_peak - kWattEpsilon) open.push_back(id);
  }
  while (amount > kWattEpsilon && !open.empty()) {
    double total = 0.0;
    for (const auto& id : open) total += std::max(0.0, weights.count(id) ? weights.at(id) : 0.0);
    const bool equal = total <= 0.0;
    std::vector<HostId> still;
    double placed = 0.0;
    for (const auto& id : open) {
      const double weight = equal ? 1.0 : std::max(0.0, weights.count(id) ? weights.at(id) : 0.0);
      const double offer = amount * weight / (equal ? static_cast<double>(open.size()) : total);
      const double room = snapshot.host(id).spec.power.p_peak - caps[id];
      if (offer >= room - kWattEpsilon) {
        caps[id] += room;
        placed += room;
      } else {
        still.push_back(id);
      }
    }
    if (still.size() == open.size()) {
      for (const auto& id : open) {
        const double weight = equal ? 1.0 : std::max(0.0, weights.count(id) ? weights.at(id) : 0.0);
        caps[id] += amount * weight / (equal ? static_cast<double>(open.size()) : total);
      }
      return 0.0;
    }
    amount -= placed;
    open = std::move(still);
  }
  return std::max(0.0, amount);
}

ActionPlan cap_change_plan(const ClusterSnapshot& snapshot, const CapMap& caps) {
  ActionPlan plan;
  std::vector<ActionId> decreases;
  for (const auto& [id, w] : caps) {
    if (w < snapshot.host(id).state.cap.watts - kWattEpsilon) decreases.push_back(plan.add(SetPowerCap{id, w}));
  }
  for (const auto& [id, w] : caps) {
    if (w > snapshot.host(id).state.cap.watts + kWattEpsilon) plan.add(SetPowerCap{id, w}, decreases);
  }
  return plan;
}

// ---- redivvy ----

CapPlan redivvy_power_cap(const ClusterSnapshot& current, const ClusterSnapshot& corrected,
                          const RedivvyOptions& options) {
  CapPlan out;
  out.caps = current_caps(current);
  CapMap required;
  double needed = 0.0;
  double excess = 0.0;
  for (const auto& [id, cs] : out.caps) {
    const double cf = corrected.host(id).state.cap.watts;
    required[id] = cf;
    if (cf > cs + kWattEpsilon) {
      needed += cf - cs;
    } else {
      excess += cs - cf;
    }
  }
  if (needed <= kWattEpsilon) return out;

  CapMap caps;
  const double budget = current.power_budget - budget_held_elsewhere(current);
  const double held = std::accumulate(out.caps.begin(), out.caps.end(), 0.0,
                                      [](double acc, const auto& kv) { return acc + kv.second; });
  double free = budget - held;
  if (options.literal_ratio || needed <= excess) {
    const double r = excess > 0.0 ? needed / excess : 0.0;
    const double keep = options.literal_ratio ? r : 1.0 - r;
    for (const auto& [id, cs] : out.caps) {
      const double cf = required[id];
      caps[id] = cf > cs + kWattEpsilon ? cf : cf + keep * (cs - cf);
    }
  } else {
    // Slack alone cannot fund the raises; the rest must come from free budget.
    if (needed - excess > free + kWattEpsilon) {
      out.feasible = false;
      out.reason = "cap increases exceed slack plus unreserved budget";
      return out;
    }
    caps = required;
    free -= needed - excess;
  }
  double total = 0.0;
  for (const auto& [id, w] : caps) total += w;
  if (options.literal_ratio) {
    if (total > budget + kWattEpsilon) {
      out.feasible = false;
      out.reason = "literal ratio exceeds the budget";
    }
  } else {
    share_proportionally(current, caps, required, std::max(0.0, budget - total));
  }
  for (auto& [id, w] : caps) w = clamp_cap(current.host(id).spec.power, w);
  out.caps = caps;
  out.plan = cap_change_plan(current, caps);
  return out;
}

// ---- balance ----

namespace {

class PowerBalancer {
 public:
  explicit PowerBalancer(const ClusterSnapshot& s) {
    for (const auto& [id, h] : s.hosts) {
      if (!h.is_on()) continue;
      hosts_.push_back(id);
      watts_.push_back(h.state.cap.watts);
      params_.push_back(h.spec.power);
      floor_.push_back(reserved_cap_for(h.spec, s.cpu_reservations(id)));
      res_.push_back(s.cpu_reservations(id));
      // Water-filling hands out min(capacity, sum of ceilings), so the
      // ceiling sum is all the balancer needs to know about the residents.
      double ceilings = 0.0;
      for (const auto& vid : s.residents(id)) {
        const auto& vm = s.vm(vid);
        ceilings += cpu_claim(vm.spec, h.spec, vm.estimate.cpu_mhz).ceiling;
      }
      ceiling_.push_back(ceilings);
    }
    norm_.resize(hosts_.size());
    ent_.resize(hosts_.size());
    for (std::size_t i = 0; i < hosts_.size(); ++i) refresh(i);
  }

  std::size_t size() const { return hosts_.size(); }
  double imbalance() const { return population_stddev(norm_); }

  double managed(std::size_t i, double w) const { return managed_capacity(params_[i], PowerCap{w}); }

  double entitlement(std::size_t i, double w) const { return std::min(managed(i, w), ceiling_[i]); }

  double normalized(std::size_t i, double w) const {
    const double c = managed(i, w);
    if (c <= 0.0) return ceiling_[i] > 0.0 ? 1.0 : 0.0;
    return ceiling_[i] <= 0.0 ? 0.0 : std::min(c, ceiling_[i]) / c;
  }

  void refresh(std::size_t i) {
    ent_[i] = entitlement(i, watts_[i]);
    norm_[i] = normalized(i, watts_[i]);
  }

  /// Imbalance if `x` watts moved from host j to host i.
  double imbalance_if(std::size_t i, std::size_t j, double x) {
    const double ni = norm_[i];
    const double nj = norm_[j];
    norm_[i] = normalized(i, watts_[i] + x);
    norm_[j] = normalized(j, watts_[j] - x);
    const double out = population_stddev(norm_);
    norm_[i] = ni;
    norm_[j] = nj;
    return out;
  }

  void transfer(std::size_t i, std::size_t j, double x) {
    watts_[i] = std::min(params_[i].p_peak, watts_[i] + x);
    watts_[j] = std::max(floor_[j], watts_[j] - x);
    refresh(i);
    refresh(j);
  }

  /// One progressive-filling step. Returns false when every pair is blocked.
  bool fill_step(double imb) {
    const std::size_t n = size();
    const double mean = std::accumulate(norm_.begin(), norm_.end(), 0.0) / static_cast<double>(n);
    if (mean <= 0.0) return false;
    std::vector<std::size_t> above;
    std::vector<std::size_t> below;
    for (std::size_t i = 0; i < n; ++i) {
      if (norm_[i] > mean + kImbalanceTol) above.push_back(i);
      if (norm_[i] < mean - kImbalanceTol) below.push_back(i);
    }
    std::stable_sort(above.begin(), above.end(), [&](auto a, auto b) { return norm_[a] > norm_[b]; });
    std::stable_sort(below.begin(), below.end(), [&](auto a, auto b) { return norm_[a] < norm_[b]; });
    for (std::size_t h : above) {
      const double peak = managed(h, params_[h].p_peak);
      const double target = std::min(peak, ent_[h] / mean);
      const double need = cap_for_managed(params_[h], target) - watts_[h];
      if (need <= kStepTol) continue;
      for (std::size_t l : below) {
        const double keep = std::max(ent_[l] / mean, res_[l]);
        const double keep_w = std::max(floor_[l], cap_for_managed(params_[l], keep));
        const double avail = watts_[l] - keep_w;
        const double x = std::min({need, avail, params_[h].p_peak - watts_[h]});
        if (x <= kStepTol) continue;
        if (imbalance_if(h, l, x) < imb - kImbalanceTol) {
          transfer(h, l, x);
          return true;
        }
      }
    }
    return false;
  }

  /// One sweep of local search: every pair's transfer line, then every host
  /// as the receiver of watts drained from several donors. The second move
  /// gets a saturated host out of its plateau (N stays 1 until its capacity
  /// passes its demand), which no single donor may be able to fund.
  bool polish_round() {
    bool improved = false;
    for (std::size_t i = 0; i < size(); ++i) {
      for (std::size_t j = i + 1; j < size(); ++j) improved = polish_pair(i, j) || improved;
    }
    for (std::size_t r = 0; r < size(); ++r) improved = polish_receiver(r) || improved;
    return improved;
  }

  CapMap caps() const {
    CapMap out;
    for (std::size_t i = 0; i < size(); ++i) out[hosts_[i]] = watts_[i];
    return out;
  }

  static constexpr double kImbalanceTol = 1e-12;
  static constexpr double kStepTol = 1e-9;
  static constexpr double kPolishGain = 1e-10;

 private:
  /// Running sums of N and N^2 for O(1) what-if variance during searches.
  struct Moments {
    double sum = 0.0;
    double sq = 0.0;
    double n = 0.0;

    double stddev() const {
      const double mean = sum / n;
      return std::sqrt(std::max(0.0, sq / n - mean * mean));
    }
    void swap(double from, double to) {
      sum += to - from;
      sq += to * to - from * from;
    }
  };

  Moments moments() const {
    Moments m;
    m.n = static_cast<double>(size());
    for (double x : norm_) {
      m.sum += x;
      m.sq += x * x;
    }
    return m;
  }

  /// Approximate minimum of f on [lo, hi]: a dense scan (the objective has a
  /// kink wherever a host crosses saturation, so it is not unimodal), then
  /// golden-section inside the winning bracket.
  template <typename F>
  static double line_search(const F& f, double lo, double hi) {
    constexpr int kScan = 48;
    int best_k = 0;
    double best_x = lo;
    double best_f = f(lo);
    for (int k = 1; k <= kScan; ++k) {
      const double x = lo + (hi - lo) * k / kScan;
      const double fx = f(x);
      if (fx < best_f) {
        best_f = fx;
        best_x = x;
        best_k = k;
      }
    }
    double a = lo + (hi - lo) * std::max(0, best_k - 1) / kScan;
    double b = lo + (hi - lo) * std::min(kScan, best_k + 1) / kScan;
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - phi * (b - a);
    double d = a + phi * (b - a);
    double fc = f(c);
    double fd = f(d);
    for (int k = 0; k < 60 && b - a > 1e-9; ++k) {
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - phi * (b - a);
        fc = f(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + phi * (b - a);
        fd = f(d);
      }
    }
    for (double x : {c, d}) {
      const double fx = f(x);
      if (fx < best_f) {
        best_f = fx;
        best_x = x;
      }
    }
    return best_x;
  }

  bool polish_pair(std::size_t i, std::size_t j) {
    const double hi = std::min(params_[i].p_peak - watts_[i], watts_[j] - floor_[j]);
    const double lo = -std::min(watts_[i] - floor_[i], params_[j].p_peak - watts_[j]);
    if (hi - lo <= kStepTol) return false;
    const Moments base = moments();
    auto f = [&](double x) {
      Moments m = base;
      m.swap(norm_[i], normalized(i, watts_[i] + x));
      m.swap(norm_[j], normalized(j, watts_[j] - x));
      return m.stddev();
    };
    const double x = line_search(f, lo, hi);
    if (std::abs(x) <= kStepTol || !(imbalance_if(i, j, x) < imbalance() - kPolishGain)) return false;
    transfer(i, j, x);
    return true;
  }

  /// Donor draws for moving `amount` watts into r: lowest N first, each down to its floor.
  std::vector<std::pair<std::size_t, double>> drain(const std::vector<std::size_t>& donors, double amount) const {
    std::vector<std::pair<std::size_t, double>> out;
    for (std::size_t d : donors) {
      if (amount <= 0.0) break;
      const double take = std::min(amount, watts_[d] - floor_[d]);
      if (take > 0.0) out.emplace_back(d, take);
      amount -= take;
    }
    return out;
  }

  bool polish_receiver(std::size_t r) {
    const double room = params_[r].p_peak - watts_[r];
    if (room <= kStepTol) return false;
    std::vector<std::size_t> donors;
    double avail = 0.0;
    for (std::size_t d = 0; d < size(); ++d) {
      if (d == r || watts_[d] - floor_[d] <= kStepTol) continue;
      donors.push_back(d);
      avail += watts_[d] - floor_[d];
    }
    if (donors.size() < 2) return false;  // one donor is a pair move
    std::stable_sort(donors.begin(), donors.end(), [&](auto a, auto b) { return norm_[a] < norm_[b]; });
    const double hi = std::min(room, avail);
    const Moments base = moments();
    auto f = [&](double x) {
      Moments m = base;
      m.swap(norm_[r], normalized(r, watts_[r] + x));
      for (const auto& [d, take] : drain(donors, x)) m.swap(norm_[d], normalized(d, watts_[d] - take));
      return m.stddev();
    };
    const double x = line_search(f, 0.0, hi);
    if (x <= kStepTol) return false;

    const double before = imbalance();
    const auto saved_w = watts_;
    const auto saved_n = norm_;
    const auto saved_e = ent_;
    for (const auto& [d, take] : drain(donors, x)) transfer(r, d, take);
    if (imbalance() < before - kPolishGain) return true;
    watts_ = saved_w;
    norm_ = saved_n;
    ent_ = saved_e;
    return false;
  }

  std::vector<HostId> hosts_;
  std::vector<double> watts_;
  std::vector<PowerModelParams> params_;
  std::vector<double> floor_;
  std::vector<double> res_;
  std::vector<double> ceiling_;
  std::vector<double> ent_;
  std::vector<double> norm_;
};

}  // namespace

PowerBalanceResult balance_power_cap(const ClusterSnapshot& snapshot, double threshold,
                                     const PowerBalanceOptions& options) {
  PowerBalanceResult out;
  out.snapshot = snapshot;
  PowerBalancer b(snapshot);
  out.caps = b.caps();
  if (b.size() == 0) return out;
  out.initial_imbalance = b.imbalance();
  double imb = out.initial_imbalance;
  while (imb > threshold && out.transfers < options.max_transfers) {
    if (!b.fill_step(imb)) break;
    ++out.transfers;
    imb = b.imbalance();
    out.trajectory.push_back(imb);
  }
  if (options.polish) {
    for (int round = 0; round < options.max_polish_rounds && imb > threshold; ++round) {
      const double before = imb;
      if (!b.polish_round()) break;
      imb = b.imbalance();
      ++out.polish_transfers;
      out.trajectory.push_back(imb);
      if (!(imb < before)) break;
    }
  }
  out.final_imbalance = imb;
  out.caps = b.caps();
  out.plan = cap_change_plan(snapshot, out.caps);
  for (const auto& [id, w] : out.caps) out.snapshot.host(id).state.cap.watts = w;
  return out;
}

// ---- DPM redistribution ----

PowerOnGrant redistribute_for_power_on(const ClusterSnapshot& snapshot, const HostId& candidate,
                                       const DpmConfig& config) {
  PowerOnGrant grant;
  const auto& cand = snapshot.host(candidate);
  if (cand.state.power_state != PowerState::Off) {
    throw InvariantError("power-on candidate " + candidate.str() + " is not off");
  }
  const auto& cp = cand.spec.power;
  const double free = std::max(0.0, snapshot.power_budget - snapshot.cap_sum());
  if (free >= cp.p_peak - kWattEpsilon) {
    grant.cap_watts = cp.p_peak;
    grant.feasible = true;
    return grant;
  }

  double peak_sum = cp.p_peak;
  for (const auto& [id, h] : snapshot.hosts) {
    if (h.is_on()) peak_sum += h.spec.power.p_peak;
  }
  const double fair = snapshot.power_budget * cp.p_peak / peak_sum;
  const double target = std::min(cp.p_peak, std::max(fair, free));
  double want = target - free;

  std::vector<std::pair<double, HostId>> donors;
  for (const auto& [id, h] : snapshot.hosts) {
    if (h.is_on()) donors.emplace_back(host_utilization(snapshot, id), id);
  }
  std::sort(donors.begin(), donors.end());
  double donated = 0.0;
  for (const auto& [u, id] : donors) {
    if (want <= kWattEpsilon) break;
    if (u > config.high_utilization_threshold) continue;
    const auto& h = snapshot.host(id);
    double demand = 0.0;
    for (const auto& v : snapshot.residents(id)) demand += effective_cpu_demand(snapshot.vm(v), h.spec);
    const double keep_util = cap_for_managed(h.spec.power, demand / config.high_utilization_threshold);
    const double floor = std::max(reserved_cap_for(h.spec, snapshot.cpu_reservations(id)), keep_util);
    const double give = std::min(want, h.state.cap.watts - floor);
    if (give <= kWattEpsilon) continue;
    grant.plan.add(SetPowerCap{id, h.state.cap.watts - give});
    want -= give;
    donated += give;
  }
  grant.cap_watts = std::min(cp.p_peak, free + donated);
  grant.feasible = grant.cap_watts >= cp.p_idle - kWattEpsilon &&
                   managed_capacity(cp, PowerCap{std::max(cp.p_idle, grant.cap_watts)}) > 0.0;
  if (!grant.feasible) grant.plan = ActionPlan{};
  return grant;
}

ActionPlan reclaim_on_power_off(const ClusterSnapshot& after_power_off, const HostId& host) {
  if (after_power_off.host(host).state.power_state != PowerState::Off) {
    throw InvariantError("reclaim for host " + host.str() + " which is not off");
  }
  CapMap caps = current_caps(after_power_off);
  const double free = after_power_off.power_budget - after_power_off.cap_sum();
  if (free <= kWattEpsilon || caps.empty()) return {};
  const CapMap weights = caps;
  share_proportionally(after_power_off, caps, weights, free);
  ActionPlan plan;
  for (const auto& [id, w] : caps) {
    if (w > after_power_off.host(id).state.cap.watts + kWattEpsilon) plan.add(SetPowerCap{id, w});
  }
  return plan;
}

PowerCapHooks cloudpowercap_hooks() {
  PowerCapHooks hooks;
  hooks.redistribute_for_power_on = redistribute_for_power_on;
  hooks.reclaim_on_power_off = reclaim_on_power_off;
  return hooks;
}

// ---- sequencing ----

TransitionPlan build_transition_plan(const ClusterSnapshot& start, const CapMap& target_caps,
                                     const std::vector<MigrateVm>& migrations) {
  TransitionPlan out;
  out.result = start;
  ClusterSnapshot& cur = out.result;
  std::vector<MigrateVm> pending = migrations;
  std::vector<ActionId> barrier;

  auto caps_done = [&] {
    for (const auto& [id, w] : target_caps) {
      if (std::abs(cur.host(id).state.cap.watts - w) > kWattEpsilon) return false;
    }
    return true;
  };
  auto emit = [&](std::vector<ActionId>& layer, const ActionKind& kind, std::vector<ActionId> prereqs) {
    apply_action(cur, kind);
    layer.push_back(out.plan.add(kind, std::move(prereqs)));
  };
  auto close_layer = [&](std::vector<ActionId>& layer) {
    if (layer.empty()) return false;
    barrier = layer;
    return true;
  };

  const std::size_t limit = 4 * (target_caps.size() + migrations.size()) + 8;
  for (std::size_t round = 0; round < limit; ++round) {
    if (pending.empty() && caps_done()) break;
    bool progress = false;

    std::vector<ActionId> layer;
    for (const auto& [id, w] : target_caps) {
      const auto& h = cur.host(id);
      if (h.state.cap.watts <= w + kWattEpsilon) continue;
      const double floor = reserved_cap_for(h.spec, cur.cpu_reservations(id));
      const double next = std::max(w, floor);
      if (next < h.state.cap.watts - kWattEpsilon) emit(layer, SetPowerCap{id, next}, barrier);
    }
    progress |= close_layer(layer);

    layer.clear();
    for (const auto& [id, w] : target_caps) {
      const double now = cur.host(id).state.cap.watts;
      if (now >= w - kWattEpsilon) continue;
      const double room = cur.power_budget - cur.cap_sum();
      const double next = now + std::min(w - now, room);
      if (next > now + kWattEpsilon) emit(layer, SetPowerCap{id, next}, barrier);
    }
    progress |= close_layer(layer);

    layer.clear();
    std::vector<MigrateVm> blocked;
    std::map<HostId, ActionId> departed;
    for (const auto& m : pending) {
      const auto& dst = cur.host(m.dst);
      const auto& vm = cur.vm(m.vm);
      const bool fits = vm.host == m.src && dst.is_on() && cur.host(m.src).is_on() &&
                        cur.cpu_reservations(m.dst) + vm.spec.cpu.reservation <= dst.managed_capacity() + kMhzEpsilon &&
                        cur.mem_reservations(m.dst) + vm.spec.mem.reservation <= dst.spec.memory_mb + kMhzEpsilon;
      if (!fits) {
        blocked.push_back(m);
        continue;
      }
      auto prereqs = barrier;
      if (auto it = departed.find(m.dst); it != departed.end()) prereqs.push_back(it->second);
      emit(layer, m, prereqs);
      departed[m.src] = layer.back();
    }
    pending = std::move(blocked);
    progress |= close_layer(layer);
    if (!progress) break;
  }
  out.stuck = pending;
  out.feasible = pending.empty() && caps_done();
  return out;
}

}  // namespace cpc
