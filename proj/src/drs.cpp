#include "cpc/drs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <tuple>

namespace cpc {

namespace {

constexpr double kImbalanceEpsilon = 1e-12;

}  // namespace

double MigrationCostModel::cost_mhz_s(const VmSpec& vm, const HostSpec& src, const HostSpec& dst) const {
  return duration_s(vm) * (overhead_mhz(src) + overhead_mhz(dst));
}

void MigrationCostModel::validate() const {
  if (!(bandwidth_mb_per_s > 0.0)) throw InvariantError("vmotion bandwidth must be > 0");
  if (!(cpu_overhead_cores >= 0.0)) throw InvariantError("vmotion cpu overhead must be >= 0");
  if (!(risk_factor >= 0.0)) throw InvariantError("cost-benefit risk factor must be >= 0");
}

void DrsConfig::validate() const {
  if (!(invocation_period > 0.0)) throw InvariantError("drs invocation period must be > 0");
  if (!(imbalance_threshold >= 0.0)) throw InvariantError("imbalance threshold must be >= 0");
  if (max_moves_per_pass < 0) throw InvariantError("max moves per pass must be >= 0");
  migration_cost.validate();
}

void DpmConfig::validate() const {
  if (!(low_utilization_threshold > 0.0 && low_utilization_threshold < high_utilization_threshold &&
        high_utilization_threshold <= 1.0)) {
    throw InvariantError("dpm thresholds must satisfy 0 < low < high <= 1");
  }
  if (!(evaluation_window >= 0.0)) throw InvariantError("dpm evaluation window must be >= 0");
}

// ---- RuleIndex ----

RuleIndex::RuleIndex(const ClusterSnapshot& snapshot) {
  for (const auto& r : snapshot.rules) {
    switch (r.kind) {
      case RuleKind::VmHostPin:
        for (const auto& v : r.vms) pins_[v].push_back(r.hosts);
        break;
      case RuleKind::VmVmAntiAffinity:
      case RuleKind::VmVmAffinity: {
        auto& target = r.kind == RuleKind::VmVmAffinity ? aff_ : anti_;
        for (const auto& v : r.vms) {
          for (const auto& w : r.vms) {
            if (v != w) target[v].push_back(w);
          }
        }
        break;
      }
    }
  }
  for (auto* m : {&anti_, &aff_}) {
    for (auto& [v, list] : *m) {
      std::sort(list.begin(), list.end());
      list.erase(std::unique(list.begin(), list.end()), list.end());
    }
  }
}

bool RuleIndex::pinned_allows(const VmId& vm, const HostId& host) const {
  auto it = pins_.find(vm);
  if (it == pins_.end()) return true;
  for (const auto& hosts : it->second) {
    if (std::find(hosts.begin(), hosts.end(), host) == hosts.end()) return false;
  }
  return true;
}

const std::vector<VmId>& RuleIndex::anti_affine(const VmId& vm) const {
  auto it = anti_.find(vm);
  return it == anti_.end() ? none_ : it->second;
}

const std::vector<VmId>& RuleIndex::affine(const VmId& vm) const {
  auto it = aff_.find(vm);
  return it == aff_.end() ? none_ : it->second;
}

bool RuleIndex::allows(const VmId& vm, const HostId& host, const std::map<VmId, HostId>& placement) const {
  if (!pinned_allows(vm, host)) return false;
  for (const auto& other : anti_affine(vm)) {
    auto it = placement.find(other);
    if (it != placement.end() && it->second == host) return false;
  }
  return true;
}

double reserved_cap_for(const HostSpec& host, double cpu_reservations) {
  const auto& p = host.power;
  const double need = cpu_reservations + p.c_hypervisor;
  if (need > p.c_peak + kMhzEpsilon) {
    throw InvariantError("host " + host.id.str() + " reservations exceed peak capacity");
  }
  return clamp_cap(p, cap_for_capacity(p, std::min(need, p.c_peak)).watts);
}

// ---- constraint correction ----

namespace {

std::map<VmId, HostId> current_placement(const ClusterSnapshot& s) {
  std::map<VmId, HostId> out;
  for (const auto& [id, vm] : s.vms) {
    if (vm.host) out.emplace(id, *vm.host);
  }
  return out;
}

class CorrectionState {
 public:
  CorrectionState(const ClusterSnapshot& s, const ClusterSnapshot* flex)
      : s_(s), flex_(flex), rules_(s), placement_(current_placement(s)) {
    const auto ents = compute_entitlements(s);
    for (const auto& [id, vm] : s.vms) {
      if (!vm.host) continue;
      res_cpu_[*vm.host] += vm.spec.cpu.reservation;
      res_mem_[*vm.host] += vm.spec.mem.reservation;
      load_[*vm.host] += ents.at(id).cpu_mhz;
      ent_[id] = ents.at(id).cpu_mhz;
    }
    res_before_ = res_cpu_;
    if (flex_) {
      budget_ = flex_->power_budget;
      for (const auto& [id, h] : flex_->hosts) {
        if (h.holds_budget() && !h.is_on()) fixed_caps_ += h.state.cap.watts;
      }
    }
  }

  std::vector<HostId> hosts_by_load() const {
    std::vector<std::pair<double, HostId>> order;
    for (const auto& [id, h] : s_.hosts) {
      if (!h.is_on()) continue;
      const double cap = h.managed_capacity();
      const double load = value(load_, id);
      const double n = load <= 0.0 ? 0.0 : (cap > 0.0 ? load / cap : std::numeric_limits<double>::infinity());
      order.emplace_back(n, id);
    }
    std::sort(order.begin(), order.end());
    std::vector<HostId> out;
    for (auto& [n, id] : order) out.push_back(id);
    return out;
  }

  /// Moves every member of `group` not yet on `dst` there if rules, capacity
  /// and budget allow.
  bool try_move(const std::vector<VmId>& group, const HostId& dst) {
    std::vector<VmId> movers;
    for (const auto& v : group) {
      if (placement_.at(v) != dst) movers.push_back(v);
    }
    if (movers.empty()) return true;
    auto tentative = placement_;
    for (const auto& v : movers) tentative[v] = dst;
    double add_cpu = 0.0;
    double add_mem = 0.0;
    std::map<HostId, double> cpu_after = res_cpu_;
    for (const auto& v : movers) {
      if (!rules_.allows(v, dst, tentative)) return false;
      const auto& vm = s_.vm(v);
      add_cpu += vm.spec.cpu.reservation;
      add_mem += vm.spec.mem.reservation;
      cpu_after[placement_.at(v)] -= vm.spec.cpu.reservation;
    }
    cpu_after[dst] += add_cpu;
    const auto& h = s_.host(dst);
    const double capacity = flex_ ? h.peak_managed_capacity() : h.managed_capacity();
    if (cpu_after[dst] > capacity + kMhzEpsilon) return false;
    if (value(res_mem_, dst) + add_mem > h.spec.memory_mb + kMhzEpsilon) return false;
    if (flex_ && reserved_total(cpu_after) > budget_ + kWattEpsilon) return false;

    for (const auto& v : movers) {
      const HostId src = placement_.at(v);
      const auto& vm = s_.vm(v);
      res_cpu_[src] -= vm.spec.cpu.reservation;
      res_mem_[src] -= vm.spec.mem.reservation;
      load_[src] -= ent_[v];
      res_cpu_[dst] += vm.spec.cpu.reservation;
      res_mem_[dst] += vm.spec.mem.reservation;
      load_[dst] += ent_[v];
      placement_[v] = dst;
      receivers_.insert(dst);
      migrations_.push_back(MigrateVm{v, src, dst});
    }
    return true;
  }

  void fix_affinity(const Rule& r) {
    std::vector<VmId> group;
    std::set<HostId> used;
    for (const auto& v : r.vms) {
      auto it = placement_.find(v);
      if (it == placement_.end()) continue;
      group.push_back(v);
      used.insert(it->second);
    }
    if (used.size() <= 1) return;
    for (const auto& dst : hosts_by_load()) {
      if (try_move(group, dst)) return;
    }
  }

  void fix_anti_affinity(const Rule& r) {
    std::set<HostId> seen;
    for (const auto& v : r.vms) {
      auto it = placement_.find(v);
      if (it == placement_.end()) continue;
      if (seen.insert(it->second).second) continue;
      for (const auto& dst : hosts_by_load()) {
        if (seen.count(dst)) continue;
        if (try_move({v}, dst)) {
          seen.insert(dst);
          break;
        }
      }
    }
  }

  void fix_pin(const Rule& r) {
    for (const auto& v : r.vms) {
      auto it = placement_.find(v);
      if (it == placement_.end()) continue;
      if (std::find(r.hosts.begin(), r.hosts.end(), it->second) != r.hosts.end()) continue;
      for (const auto& dst : hosts_by_load()) {
        if (try_move({v}, dst)) break;
      }
    }
  }

  ConstraintCorrection finish() {
    ConstraintCorrection out;
    out.flexible = flex_ != nullptr;
    out.migrations = migrations_;
    out.corrected = s_;
    for (const auto& [v, h] : placement_) out.corrected.vm(v).host = h;
    for (const auto& [id, h] : s_.hosts) {
      if (h.is_on()) out.required_caps[id] = h.state.cap.watts;
    }
    if (flex_) {
      out.required_caps = required_caps();
      for (const auto& [id, w] : out.required_caps) out.corrected.host(id).state.cap.watts = w;
    }
    out.unresolved = rule_violations(out.corrected);
    return out;
  }

 private:
  static double value(const std::map<HostId, double>& m, const HostId& k) {
    auto it = m.find(k);
    return it == m.end() ? 0.0 : it->second;
  }

  double reserved_total(const std::map<HostId, double>& cpu) const {
    double sum = fixed_caps_;
    for (const auto& [id, h] : s_.hosts) {
      if (h.is_on()) sum += reserved_cap_for(h.spec, value(cpu, id));
    }
    return sum;
  }

  std::map<HostId, double> required_caps() const {
    std::map<HostId, double> reserved;
    std::map<HostId, double> desired;
    double reserved_sum = fixed_caps_;
    for (const auto& [id, h] : s_.hosts) {
      if (!h.is_on()) continue;
      const double r = reserved_cap_for(h.spec, value(res_cpu_, id));
      reserved[id] = r;
      reserved_sum += r;
      double want = r;
      if (receivers_.count(id)) {
        const auto& p = h.spec.power;
        const double headroom = std::max(0.0, h.managed_capacity() - value(res_before_, id));
        const double c = std::min(p.c_peak, value(res_cpu_, id) + headroom + p.c_hypervisor);
        want = std::max(r, cap_for_capacity(p, c).watts);
        if (want <= h.state.cap.watts + kWattEpsilon) want = r;
      }
      desired[id] = want;
    }
    double extras = 0.0;
    for (const auto& [id, w] : desired) extras += w - reserved[id];
    const double room = std::max(0.0, budget_ - reserved_sum);
    const double scale = extras > room ? room / extras : 1.0;
    std::map<HostId, double> out;
    for (const auto& [id, w] : desired) out[id] = reserved[id] + (w - reserved[id]) * scale;
    return out;
  }

  const ClusterSnapshot& s_;
  const ClusterSnapshot* flex_;
  RuleIndex rules_;
  std::map<VmId, HostId> placement_;
  std::map<VmId, double> ent_;
  std::map<HostId, double> res_cpu_;
  std::map<HostId, double> res_mem_;
  std::map<HostId, double> res_before_;
  std::map<HostId, double> load_;
  std::set<HostId> receivers_;
  std::vector<MigrateVm> migrations_;
  double budget_ = 0.0;
  double fixed_caps_ = 0.0;
};

}  // namespace

ConstraintCorrection correct_constraints(const ClusterSnapshot& snapshot, const ClusterSnapshot* flexible_power) {
  CorrectionState state(snapshot, flexible_power);
  for (const auto& r : snapshot.rules) {
    switch (r.kind) {
      case RuleKind::VmVmAffinity: state.fix_affinity(r); break;
      case RuleKind::VmVmAntiAffinity: state.fix_anti_affinity(r); break;
      case RuleKind::VmHostPin: state.fix_pin(r); break;
    }
  }
  return state.finish();
}

// ---- entitlement balancing ----

BalanceResult balance_entitlements(const ClusterSnapshot& snapshot, const DrsConfig& config) {
  BalanceResult out;
  out.snapshot = snapshot;
  std::vector<HostId> hosts = snapshot.powered_on_hosts();
  if (hosts.empty()) return out;

  const std::size_t n = hosts.size();
  std::map<HostId, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index[hosts[i]] = i;

  std::vector<double> cap(n);
  std::vector<double> res(n, 0.0);
  std::vector<double> mem_res(n, 0.0);
  std::vector<std::vector<VmId>> residents(n);
  for (std::size_t i = 0; i < n; ++i) cap[i] = snapshot.host(hosts[i]).managed_capacity();
  for (const auto& [id, vm] : snapshot.vms) {
    if (!vm.host) continue;
    const std::size_t i = index.at(*vm.host);
    residents[i].push_back(id);
    res[i] += vm.spec.cpu.reservation;
    mem_res[i] += vm.spec.mem.reservation;
  }

  auto normalized = [&](std::size_t i, double sum) {
    if (sum <= 0.0) return 0.0;
    return cap[i] > 0.0 ? sum / cap[i] : 1.0;
  };
  auto host_sum = [&](std::size_t i, const std::vector<VmId>& vms) {
    const auto e = cpu_entitlements_on(snapshot, hosts[i], cap[i], vms);
    double sum = 0.0;
    for (double x : e) sum += x;
    return sum;
  };

  std::vector<double> norm(n);
  for (std::size_t i = 0; i < n; ++i) norm[i] = normalized(i, host_sum(i, residents[i]));
  double imbalance = population_stddev(norm);
  out.initial_imbalance = imbalance;
  out.final_imbalance = imbalance;
  if (n < 2) return out;

  const RuleIndex rules(snapshot);
  auto placement = current_placement(snapshot);
  // Moves out of each host so far; a later move in waits for all of them.
  std::vector<std::vector<ActionId>> moves_from(n);
  std::map<VmId, ActionId> last_move_of;

  while (static_cast<int>(out.migrations.size()) < config.max_moves_per_pass &&
         imbalance > config.imbalance_threshold) {
    struct Best {
      double imbalance;
      VmId vm;
      std::size_t src;
      std::size_t dst;
    };
    std::optional<Best> best;
    std::vector<double> trial = norm;

    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < residents[i].size(); ++k) {
        const VmId& vid = residents[i][k];
        if (!rules.affine(vid).empty()) continue;
        const auto& vm = snapshot.vm(vid);
        std::optional<double> src_norm;
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          if (res[j] + vm.spec.cpu.reservation > cap[j] + kMhzEpsilon) continue;
          const auto& dst_host = snapshot.host(hosts[j]);
          if (mem_res[j] + vm.spec.mem.reservation > dst_host.spec.memory_mb + kMhzEpsilon) continue;
          if (!rules.allows(vid, hosts[j], placement)) continue;
          if (!src_norm) {
            auto without = residents[i];
            without.erase(without.begin() + static_cast<std::ptrdiff_t>(k));
            src_norm = normalized(i, host_sum(i, without));
          }
          auto with = residents[j];
          with.insert(std::lower_bound(with.begin(), with.end(), vid), vid);
          const double dst_norm = normalized(j, host_sum(j, with));
          // N saturates at 1, so piling onto a saturated host can still lower
          // the stddev. Only accept moves toward a host left less loaded than
          // the source was.
          if (!(dst_norm < norm[i] - kImbalanceEpsilon)) continue;
          trial[i] = *src_norm;
          trial[j] = dst_norm;
          const double after = population_stddev(trial);
          trial[i] = norm[i];
          trial[j] = norm[j];
          if (!(after < imbalance - kImbalanceEpsilon)) continue;
          if (config.costbenefit_enabled) {
            const double benefit = (imbalance - after) * 0.5 * (cap[i] + cap[j]) * config.invocation_period;
            const double cost = config.migration_cost.cost_mhz_s(vm.spec, snapshot.host(hosts[i]).spec, dst_host.spec);
            if (benefit < cost * config.migration_cost.risk_factor) continue;
          }
          const bool better =
              !best || after < best->imbalance - kImbalanceEpsilon ||
              (std::abs(after - best->imbalance) <= kImbalanceEpsilon &&
               std::tie(vid, hosts[j]) < std::tie(best->vm, hosts[best->dst]));
          if (better) best = Best{after, vid, i, j};
        }
      }
    }
    if (!best) break;

    const auto& vm = snapshot.vm(best->vm);
    auto& from = residents[best->src];
    from.erase(std::find(from.begin(), from.end(), best->vm));
    auto& to = residents[best->dst];
    to.insert(std::lower_bound(to.begin(), to.end(), best->vm), best->vm);
    res[best->src] -= vm.spec.cpu.reservation;
    res[best->dst] += vm.spec.cpu.reservation;
    mem_res[best->src] -= vm.spec.mem.reservation;
    mem_res[best->dst] += vm.spec.mem.reservation;
    norm[best->src] = normalized(best->src, host_sum(best->src, from));
    norm[best->dst] = normalized(best->dst, host_sum(best->dst, to));
    imbalance = population_stddev(norm);
    placement[best->vm] = hosts[best->dst];

    MigrateVm move{best->vm, hosts[best->src], hosts[best->dst]};
    std::vector<ActionId> prereqs = moves_from[best->dst];
    if (auto it = last_move_of.find(best->vm); it != last_move_of.end() &&
                                               std::find(prereqs.begin(), prereqs.end(), it->second) == prereqs.end()) {
      prereqs.push_back(it->second);
    }
    const ActionId id = out.plan.add(move, prereqs);
    moves_from[best->src].push_back(id);
    last_move_of[best->vm] = id;
    out.migrations.push_back(move);
    out.snapshot.vm(best->vm).host = hosts[best->dst];
    out.trajectory.push_back(imbalance);
  }
  out.final_imbalance = imbalance;
  return out;
}

// ---- DPM ----

double effective_cpu_demand(const VmEntry& vm, const HostSpec& host) {
  return cpu_claim(vm.spec, host, vm.estimate.cpu_mhz).ceiling;
}

double effective_mem_demand(const VmEntry& vm) { return mem_claim(vm.spec, vm.estimate.mem_mb).ceiling; }

namespace {

struct HostLoad {
  double cpu = 0.0;
  double mem = 0.0;
  double res_cpu = 0.0;
  double res_mem = 0.0;
};

double ratio(double load, double capacity) {
  if (load <= 0.0) return 0.0;
  return capacity > 0.0 ? load / capacity : std::numeric_limits<double>::infinity();
}

double utilization_of(const HostEntry& h, const HostLoad& l) {
  return std::max(ratio(l.cpu, h.managed_capacity()), ratio(l.mem, h.spec.memory_mb));
}

std::map<HostId, HostLoad> host_loads(const ClusterSnapshot& s) {
  std::map<HostId, HostLoad> out;
  for (const auto& [id, h] : s.hosts) {
    if (h.is_on()) out[id];
  }
  for (const auto& [id, vm] : s.vms) {
    if (!vm.host) continue;
    auto& l = out[*vm.host];
    l.cpu += effective_cpu_demand(vm, s.host(*vm.host).spec);
    l.mem += effective_mem_demand(vm);
    l.res_cpu += vm.spec.cpu.reservation;
    l.res_mem += vm.spec.mem.reservation;
  }
  return out;
}

/// Plans moves of every VM off `victim`; nullopt if some VM has nowhere to go.
std::optional<std::vector<MigrateVm>> plan_evacuation(const ClusterSnapshot& s, const HostId& victim,
                                                      std::map<HostId, HostLoad> loads,
                                                      const DpmConfig& cfg, const RuleIndex& rules) {
  auto placement = current_placement(s);
  std::vector<VmId> residents = s.residents(victim);
  const auto& victim_spec = s.host(victim).spec;
  std::stable_sort(residents.begin(), residents.end(), [&](const VmId& a, const VmId& b) {
    return effective_cpu_demand(s.vm(a), victim_spec) > effective_cpu_demand(s.vm(b), victim_spec);
  });

  std::set<VmId> done;
  std::vector<MigrateVm> moves;
  for (const auto& v : residents) {
    if (done.count(v)) continue;
    // Affinity partners on the victim travel together; partners elsewhere fix the destination.
    std::vector<VmId> group{v};
    std::optional<HostId> forced;
    for (const auto& p : rules.affine(v)) {
      auto it = placement.find(p);
      if (it == placement.end()) continue;
      if (it->second == victim) {
        if (!done.count(p) && p != v) group.push_back(p);
      } else {
        forced = it->second;
      }
    }
    std::optional<std::pair<double, HostId>> best;
    for (const auto& [dst, load] : loads) {
      if (dst == victim) continue;
      if (forced && dst != *forced) continue;
      const auto& h = s.host(dst);
      HostLoad after = load;
      bool ok = true;
      auto tentative = placement;
      for (const auto& g : group) tentative[g] = dst;
      for (const auto& g : group) {
        const auto& vm = s.vm(g);
        if (!rules.allows(g, dst, tentative)) ok = false;
        after.cpu += effective_cpu_demand(vm, h.spec);
        after.mem += effective_mem_demand(vm);
        after.res_cpu += vm.spec.cpu.reservation;
        after.res_mem += vm.spec.mem.reservation;
      }
      if (!ok) continue;
      if (after.res_cpu > h.managed_capacity() + kMhzEpsilon) continue;
      if (after.res_mem > h.spec.memory_mb + kMhzEpsilon) continue;
      const double u = utilization_of(h, after);
      if (u > cfg.high_utilization_threshold) continue;
      if (!best || u < best->first) best = std::make_pair(u, dst);
    }
    if (!best) return std::nullopt;
    auto& load = loads[best->second];
    const auto& h = s.host(best->second);
    for (const auto& g : group) {
      const auto& vm = s.vm(g);
      load.cpu += effective_cpu_demand(vm, h.spec);
      load.mem += effective_mem_demand(vm);
      load.res_cpu += vm.spec.cpu.reservation;
      load.res_mem += vm.spec.mem.reservation;
      placement[g] = best->second;
      moves.push_back(MigrateVm{g, victim, best->second});
      done.insert(g);
    }
  }
  return moves;
}

}  // namespace

double host_utilization(const ClusterSnapshot& snapshot, const HostId& host) {
  const auto& h = snapshot.host(host);
  if (!h.is_on()) throw InvariantError("utilization of host " + host.str() + " which is not on");
  return utilization_of(h, host_loads(snapshot)[host]);
}

PowerCapHooks fixed_cap_hooks(std::optional<double> watts) {
  PowerCapHooks hooks;
  hooks.redistribute_for_power_on = [watts](const ClusterSnapshot& s, const HostId& candidate, const DpmConfig&) {
    PowerOnGrant grant;
    const auto& p = s.host(candidate).spec.power;
    grant.cap_watts = clamp_cap(p, watts.value_or(p.p_peak));
    grant.feasible = s.cap_sum() + grant.cap_watts <= s.power_budget + kWattEpsilon;
    return grant;
  };
  hooks.reclaim_on_power_off = [](const ClusterSnapshot&, const HostId&) { return ActionPlan{}; };
  return hooks;
}

DpmResult dpm_evaluate(const ClusterSnapshot& snapshot, const DpmConfig& config, const PowerCapHooks& hooks) {
  DpmResult out;
  if (!config.enabled) {
    out.reason = "dpm disabled";
    return out;
  }
  double last_change = -std::numeric_limits<double>::infinity();
  for (const auto& [id, h] : snapshot.hosts) {
    if (h.state.power_state == PowerState::PoweringOn || h.state.power_state == PowerState::PoweringOff) {
      out.reason = "host " + id.str() + " is changing power state";
      return out;
    }
    last_change = std::max(last_change, h.state.last_power_change);
  }

  const auto loads = host_loads(snapshot);
  std::vector<std::pair<double, HostId>> util;
  bool overloaded = false;
  bool all_low = true;
  for (const auto& [id, load] : loads) {
    const double u = utilization_of(snapshot.host(id), load);
    util.emplace_back(u, id);
    overloaded = overloaded || u > config.high_utilization_threshold;
    all_low = all_low && u < config.low_utilization_threshold;
  }

  if (overloaded) {
    std::optional<std::pair<HostId, PowerOnGrant>> best;
    for (const auto& [id, h] : snapshot.hosts) {
      if (h.state.power_state != PowerState::Off) continue;
      auto grant = hooks.redistribute_for_power_on(snapshot, id, config);
      if (!grant.feasible) continue;
      if (managed_capacity(h.spec.power, PowerCap{grant.cap_watts}) <= 0.0) continue;
      if (!best || grant.cap_watts > best->second.cap_watts + kWattEpsilon) best.emplace(id, std::move(grant));
    }
    if (!best) {
      out.reason = "overloaded but no standby host can be powered on";
      return out;
    }
    const auto funding = out.plan.append(best->second.plan);
    out.plan.add(PowerOnHost{best->first, best->second.cap_watts}, funding);
    out.power_on = best->first;
    out.reason = "host utilization above high threshold";
    return out;
  }

  if (!all_low || util.size() < 2) return out;
  if (snapshot.time - last_change < config.evaluation_window) {
    out.reason = "power-off deferred by evaluation window";
    return out;
  }
  std::sort(util.begin(), util.end());
  const RuleIndex rules(snapshot);
  for (const auto& [u, victim] : util) {
    auto moves = plan_evacuation(snapshot, victim, loads, config, rules);
    if (!moves) continue;
    std::vector<ActionId> ids;
    ClusterSnapshot after = snapshot;
    for (const auto& m : *moves) {
      ids.push_back(out.plan.add(m));
      after.vm(m.vm).host = m.dst;
    }
    const ActionId off = out.plan.add(PowerOffHost{victim}, ids);
    apply_action(after, PowerOffHost{victim});
    out.plan.append(hooks.reclaim_on_power_off(after, victim), {off});
    out.power_off = victim;
    out.evacuations = *moves;
    out.reason = "all hosts below low threshold";
    return out;
  }
  out.reason = "no host can be evacuated";
  return out;
}

}  // namespace cpc
