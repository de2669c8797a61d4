#include "cpc/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cpc/entitlement.hpp"
#include "cpc/powercap.hpp"

namespace cpc {

namespace {

constexpr double kTimeEpsilon = 1e-9;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

/// Barrier: every action of `stage` runs after all of `plan`'s current actions.
void append_stage(ActionPlan& plan, const ActionPlan& stage) {
  if (stage.empty()) return;
  plan.append(stage, plan.ids());
}

ActionPlan plan_fixed(const ClusterSnapshot& s, const DrsConfig& drs, const DpmConfig& dpm,
                      std::optional<double> watts) {
  ActionPlan plan;
  ClusterSnapshot projected = s;
  const auto cc = correct_constraints(s);
  if (!cc.migrations.empty()) {
    CapMap caps;
    for (const auto& [id, h] : s.hosts) caps[id] = h.state.cap.watts;
    auto tp = build_transition_plan(s, caps, cc.migrations);
    append_stage(plan, tp.plan);
    projected = std::move(tp.result);
  }
  auto be = balance_entitlements(projected, drs);
  append_stage(plan, be.plan);
  const auto d = dpm_evaluate(be.snapshot, dpm, fixed_cap_hooks(watts));
  append_stage(plan, d.plan);
  return plan;
}

ActionPlan plan_cloudpowercap(const ClusterSnapshot& s, const DrsConfig& drs, const DpmConfig& dpm) {
  ActionPlan plan;
  ClusterSnapshot projected = s;

  const auto flex = get_flexible_power(s);
  const auto cc = correct_constraints(s, &flex.snapshot);
  if (!cc.migrations.empty()) {
    const auto caps = redivvy_power_cap(s, cc.corrected);
    auto tp = build_transition_plan(s, caps.caps, cc.migrations);
    append_stage(plan, tp.plan);
    projected = std::move(tp.result);
  }

  auto pb = balance_power_cap(projected, drs.imbalance_threshold);
  append_stage(plan, pb.plan);
  projected = std::move(pb.snapshot);
  if (pb.final_imbalance > drs.imbalance_threshold) {
    auto be = balance_entitlements(projected, drs);
    append_stage(plan, be.plan);
    projected = std::move(be.snapshot);
  }

  const auto d = dpm_evaluate(projected, dpm, cloudpowercap_hooks());
  append_stage(plan, d.plan);
  return plan;
}

// ---- action execution ----

enum class Status { Waiting, Running, Done, Dropped };

struct Pending {
  Action action;
  double issued = 0.0;
  Status status = Status::Waiting;
  double start = 0.0;
  double finish = 0.0;
};

struct Overhead {
  HostId host;
  double mhz = 0.0;
};

class Simulation {
 public:
  Simulation(const Scenario& scenario, const RunOptions& options)
      : sc_(scenario), opt_(options), policy_(options.policy) {
    sim_ = sc_.sim;
    if (opt_.tick) sim_.tick = *opt_.tick;
    drs_ = sc_.drs;
    drs_.invocation_period = sim_.drs_period;
    drs_.migration_cost.bandwidth_mb_per_s = sim_.vmotion.bandwidth_mb_per_s;
    drs_.migration_cost.cpu_overhead_cores = sim_.vmotion.cpu_overhead_cores;
    if (policy_.kind == PolicyKind::Static) {
      static_watts_ = static_cap_for(sc_, policy_);
      policy_.static_watts = static_watts_;
    }
    state_ = policy_snapshot(sc_, policy_);
    // No demand history exists before t = 0, so DPM waits a full window.
    for (auto& [id, h] : state_.hosts) h.state.last_power_change = 0.0;
    const double n = std::max(1.0, sim_.demand_window / sim_.tick);
    alpha_ = 2.0 / (n + 1.0);
    m_.policy = policy_.name();
    m_.window_start = sim_.metrics_window ? sim_.metrics_window->first : 0.0;
    m_.window_end = sim_.metrics_window ? std::min(sim_.metrics_window->second, sim_.end_time) : sim_.end_time;
  }

  SimMetrics run() {
    const auto ticks = static_cast<long>(std::ceil(sim_.end_time / sim_.tick - kTimeEpsilon));
    const auto period_ticks = std::max(1L, std::lround(sim_.drs_period / sim_.tick));
    for (long k = 0; k < ticks; ++k) {
      const double t = static_cast<double>(k) * sim_.tick;
      const double t_end = std::min(t + sim_.tick, sim_.end_time);
      state_.time = t;
      refresh_rules(t);
      sample_demand(t);

      if ((k % period_ticks == 0 || invoke_next_) && !has_pending()) {
        invoke_next_ = false;
        ++m_.drs_invocations;
        issue(plan_invocation(state_, policy_, drs_, sc_.dpm, static_watts_), t);
      }
      advance(t_end);
      account(t, t_end);
    }
    for (const auto& [id, h] : state_.hosts) m_.final_caps[id] = h.state.cap.watts;
    for (const auto& [vm, g] : vm_acc_) m_.vm_satisfaction[vm] = g.satisfaction();
    const double span = m_.window_end - m_.window_start;
    m_.average_power_w = span > 0.0 ? m_.energy_wh * 3600.0 / span : 0.0;
    return std::move(m_);
  }

 private:
  void refresh_rules(double t) {
    state_.rules.clear();
    for (const auto& r : sc_.rules) {
      if (r.active_at(t)) state_.rules.push_back(r.rule);
    }
  }

  // Estimates track the larger of a smoothed average and the latest sample,
  // so rising demand is seen immediately and falling demand decays.
  void sample_demand(double t) {
    for (auto& [id, vm] : state_.vms) {
      const auto d = vm.spec.demand.at(t);
      current_[id] = d;
      auto it = ewma_.find(id);
      if (it == ewma_.end()) {
        it = ewma_.emplace(id, d).first;
      } else {
        it->second.cpu_mhz += alpha_ * (d.cpu_mhz - it->second.cpu_mhz);
        it->second.mem_mb += alpha_ * (d.mem_mb - it->second.mem_mb);
      }
      vm.estimate = {std::max(it->second.cpu_mhz, d.cpu_mhz), std::max(it->second.mem_mb, d.mem_mb)};
    }
  }

  bool has_pending() const {
    return std::any_of(pending_.begin(), pending_.end(),
                       [](const Pending& p) { return p.status == Status::Waiting || p.status == Status::Running; });
  }

  void issue(const ActionPlan& plan, double t) {
    pending_.clear();
    for (const auto& a : plan.actions()) pending_.push_back({a, t, Status::Waiting, 0.0, 0.0});
  }

  double latency(const ActionKind& kind) const {
    return std::visit(Overloaded{
                          [&](const SetPowerCap&) { return sim_.powercap_latency; },
                          [&](const MigrateVm& m) { return state_.vm(m.vm).spec.memory_mb / sim_.vmotion.bandwidth_mb_per_s; },
                          [&](const PowerOnHost&) { return sim_.power_on_latency; },
                          [&](const PowerOffHost&) { return sim_.power_off_latency; },
                      },
                      kind);
  }

  /// Earliest time a waiting action may start, or nullopt if a prerequisite
  /// is still unfinished. Sets `dropped` if a prerequisite was dropped.
  std::optional<double> ready_time(const Pending& p, bool& dropped) const {
    double ready = p.issued;
    dropped = false;
    for (ActionId id : p.action.prerequisites) {
      const auto& q = pending_[id];
      if (q.status == Status::Dropped) {
        dropped = true;
        return std::nullopt;
      }
      if (q.status != Status::Done) return std::nullopt;
      ready = std::max(ready, q.finish);
    }
    return ready;
  }

  void drop(Pending& p, double t) {
    p.status = Status::Dropped;
    p.start = p.finish = t;
    ++m_.dropped_actions;
    m_.events.push_back({t, t, describe(p.action.kind), false});
  }

  void start(Pending& p, double t) {
    state_.time = t;
    ClusterSnapshot probe = state_;
    try {
      apply_action(probe, p.action.kind);
    } catch (const std::exception&) {
      drop(p, t);
      return;
    }
    p.status = Status::Running;
    p.start = t;
    p.finish = t + latency(p.action.kind);
    if (const auto* on = std::get_if<PowerOnHost>(&p.action.kind)) {
      auto& h = state_.host(on->host);
      h.state.power_state = PowerState::PoweringOn;
      h.state.cap.watts = probe.host(on->host).state.cap.watts;
      h.state.last_power_change = t;
    } else if (const auto* off = std::get_if<PowerOffHost>(&p.action.kind)) {
      auto& h = state_.host(off->host);
      h.state.power_state = PowerState::PoweringOff;
      h.state.last_power_change = t;
    }
  }

  void complete(Pending& p) {
    const double t = p.finish;
    state_.time = t;
    const bool ok = std::visit(
        Overloaded{
            [&](const SetPowerCap&) { return try_apply(p.action.kind); },
            [&](const MigrateVm&) {
              if (!try_apply(p.action.kind)) return false;
              ++m_.vmotions;
              return true;
            },
            [&](const PowerOnHost& a) {
              auto& h = state_.host(a.host);
              h.state.power_state = PowerState::On;
              h.state.last_power_change = t;
              ++m_.power_ons;
              invoke_next_ = true;
              return true;
            },
            [&](const PowerOffHost& a) {
              auto& h = state_.host(a.host);
              h.state.power_state = PowerState::Off;
              h.state.cap.watts = 0.0;
              h.state.last_power_change = t;
              ++m_.power_offs;
              return true;
            },
        },
        p.action.kind);
    if (!ok) {
      drop(p, t);
      return;
    }
    if (std::holds_alternative<SetPowerCap>(p.action.kind)) ++m_.cap_changes;
    p.status = Status::Done;
    m_.events.push_back({p.start, p.finish, describe(p.action.kind), true});
  }

  bool try_apply(const ActionKind& kind) {
    try {
      apply_action(state_, kind);
      return true;
    } catch (const std::exception&) {
      return false;
    }
  }

  /// Runs starts and completions in time order up to `t_end`. Completions
  /// at an instant precede starts; ties are broken by action id.
  void advance(double t_end) {
    for (;;) {
      // Dependents of a dropped action are dropped too.
      for (bool changed = true; changed;) {
        changed = false;
        for (auto& p : pending_) {
          bool dropped = false;
          if (p.status == Status::Waiting && (ready_time(p, dropped), dropped)) {
            drop(p, p.issued);
            changed = true;
          }
        }
      }
      double best = std::numeric_limits<double>::infinity();
      Pending* next = nullptr;
      bool next_is_start = false;
      for (auto& p : pending_) {
        if (p.status == Status::Running && p.finish < best - kTimeEpsilon) {
          best = p.finish;
          next = &p;
          next_is_start = false;
        }
      }
      for (auto& p : pending_) {
        if (p.status != Status::Waiting) continue;
        bool dropped = false;
        const auto r = ready_time(p, dropped);
        if (r && *r < best - kTimeEpsilon) {
          best = *r;
          next = &p;
          next_is_start = true;
        }
      }
      if (!next || best > t_end + kTimeEpsilon) return;
      if (next_is_start) {
        start(*next, best);
      } else {
        complete(*next);
      }
    }
  }

  std::vector<Overhead> overheads(double t0, double t1) const {
    std::vector<Overhead> out;
    const double len = t1 - t0;
    for (const auto& p : pending_) {
      const auto* m = std::get_if<MigrateVm>(&p.action.kind);
      if (!m || (p.status != Status::Running && p.status != Status::Done)) continue;
      const double overlap = std::min(p.finish, t1) - std::max(p.start, t0);
      if (overlap <= 0.0 || len <= 0.0) continue;
      const double frac = overlap / len;
      for (const HostId& h : {m->src, m->dst}) {
        out.push_back({h, frac * sim_.vmotion.cpu_overhead_cores * state_.host(h).spec.mhz_per_core});
      }
    }
    return out;
  }

  void account(double t0, double t1) {
    const double dt = t1 - t0;
    const bool in_window = t0 >= m_.window_start - kTimeEpsilon && t0 < m_.window_end - kTimeEpsilon;
    const auto ovh = overheads(t0, t1);
    TimelinePoint point;
    point.time = t0;

    for (const auto& [hid, h] : state_.hosts) {
      HostTick ht;
      ht.id = hid.str();
      ht.state = h.state.power_state;
      ht.cap_w = h.state.cap.watts;
      const auto residents = state_.residents(hid);
      std::vector<const VmSpec*> specs;
      std::vector<double> cpu_demand;
      for (const auto& v : residents) {
        specs.push_back(&state_.vm(v).spec);
        cpu_demand.push_back(current_.at(v).cpu_mhz);
        ht.demand_mhz += cpu_demand.back();
      }
      for (const auto& o : ovh) {
        if (o.host == hid) ht.overhead_mhz += o.mhz;
      }

      std::vector<double> cpu(residents.size(), 0.0);
      std::vector<double> mem(residents.size(), 0.0);
      if (h.is_on()) {
        const double managed = h.managed_capacity();
        ht.overhead_mhz = std::min(ht.overhead_mhz, managed);
        cpu = schedule_host_tick(h.spec, managed, specs, cpu_demand, ht.overhead_mhz);
        std::vector<DivvyClaim> claims;
        for (const auto& v : residents) claims.push_back(mem_claim(state_.vm(v).spec, current_.at(v).mem_mb));
        mem = divvy(h.spec.memory_mb, claims, DivvyMode::ScaleReservations);
        for (double c : cpu) ht.delivered_mhz += c;
        const double busy = (ht.delivered_mhz + ht.overhead_mhz) / h.spec.power.c_peak;
        ht.power_w = power_consumed(h.spec.power, std::clamp(busy, 0.0, 1.0));
      } else if (h.state.power_state == PowerState::PoweringOn) {
        ht.power_w = h.state.cap.watts;
      } else if (h.state.power_state == PowerState::PoweringOff) {
        ht.power_w = h.spec.power.p_idle;
      }
      point.total_power_w += ht.power_w;

      if (in_window) {
        m_.energy_wh += ht.power_w * dt / 3600.0;
        for (std::size_t i = 0; i < residents.size(); ++i) {
          const auto& vm = state_.vm(residents[i]);
          m_.cpu_payload += cpu[i] * dt;
          m_.mem_payload += mem[i] * dt;
          auto& g = m_.groups[vm.spec.group];
          g.cpu_delivered += cpu[i] * dt;
          g.cpu_demand += cpu_demand[i] * dt;
          auto& a = vm_acc_[residents[i].str()];
          a.cpu_delivered += cpu[i] * dt;
          a.cpu_demand += cpu_demand[i] * dt;
        }
      }
      point.hosts.push_back(std::move(ht));
    }

    if (in_window) {
      // Unplaced VMs still count toward demand.
      for (const auto& [id, vm] : state_.vms) {
        const auto& d = current_.at(id);
        m_.cpu_demand += d.cpu_mhz * dt;
        m_.mem_demand += d.mem_mb * dt;
        if (!vm.host) {
          m_.groups[vm.spec.group].cpu_demand += d.cpu_mhz * dt;
          vm_acc_[id.str()].cpu_demand += d.cpu_mhz * dt;
        }
      }
    }
    if (opt_.timeline) m_.timeline.push_back(std::move(point));
  }

  const Scenario& sc_;
  RunOptions opt_;
  Policy policy_;
  SimSettings sim_;
  DrsConfig drs_;
  double static_watts_ = 0.0;
  double alpha_ = 1.0;
  ClusterSnapshot state_;
  std::map<VmId, DemandSample> current_;
  std::map<VmId, DemandSample> ewma_;
  std::map<std::string, GroupMetrics> vm_acc_;
  std::vector<Pending> pending_;
  bool invoke_next_ = false;
  SimMetrics m_;
};

}  // namespace

double static_cap_for(const Scenario& scenario, const Policy& policy) {
  if (policy.static_watts) return *policy.static_watts;
  if (scenario.static_cap_watts) return *scenario.static_cap_watts;
  if (scenario.hosts.empty()) return 0.0;
  return scenario.power_budget / static_cast<double>(scenario.hosts.size());
}

ClusterSnapshot policy_snapshot(const Scenario& scenario, const Policy& policy) {
  ClusterSnapshot s = scenario.initial_snapshot();
  if (policy.kind == PolicyKind::CloudPowerCap) return s;

  const double w = policy.kind == PolicyKind::Static ? static_cap_for(scenario, policy) : 0.0;
  double budget = 0.0;
  std::vector<std::string> problems;
  for (auto& [id, h] : s.hosts) {
    const auto& p = h.spec.power;
    const double cap = policy.kind == PolicyKind::StaticHigh ? p.p_peak : std::min(w, p.p_peak);
    if (cap < p.p_idle - kWattEpsilon) {
      problems.push_back("host " + id.str() + ": static cap " + std::to_string(w) + " W is below idle power");
      continue;
    }
    budget += cap;
    if (h.state.power_state != PowerState::Off) h.state.cap.watts = cap;
  }
  s.power_budget = budget;
  if (problems.empty()) {
    for (const auto& v : s.violations()) problems.push_back(policy.name() + ": " + v);
  }
  if (!problems.empty()) throw ScenarioError(std::move(problems));
  return s;
}

ActionPlan plan_invocation(const ClusterSnapshot& snapshot, const Policy& policy, const DrsConfig& drs,
                           const DpmConfig& dpm, double static_watts) {
  switch (policy.kind) {
    case PolicyKind::CloudPowerCap: return plan_cloudpowercap(snapshot, drs, dpm);
    case PolicyKind::Static: return plan_fixed(snapshot, drs, dpm, static_watts);
    case PolicyKind::StaticHigh: return plan_fixed(snapshot, drs, dpm, std::nullopt);
  }
  return {};
}

std::vector<double> schedule_host_tick(const HostSpec& host, double managed_mhz,
                                       const std::vector<const VmSpec*>& vms,
                                       const std::vector<double>& demand_mhz, double overhead_mhz) {
  if (vms.size() != demand_mhz.size()) throw InvariantError("schedule_host_tick: demand count mismatch");
  std::vector<DivvyClaim> claims;
  claims.reserve(vms.size());
  for (std::size_t i = 0; i < vms.size(); ++i) {
    // Delivery is consumption: an idle reservation is not burned, it stays
    // available to the other residents.
    DivvyClaim c = cpu_claim(*vms[i], host, demand_mhz[i]);
    const double want = std::max(0.0, demand_mhz[i]);
    c.reservation = std::min(c.reservation, want);
    c.ceiling = std::max(c.reservation, std::min(c.ceiling, want));
    claims.push_back(c);
  }
  return divvy(std::max(0.0, managed_mhz - overhead_mhz), claims, DivvyMode::ScaleReservations);
}

double energy_wh(const PowerModelParams& power, double busy_mhz, double seconds) {
  return power_consumed(power, std::clamp(busy_mhz / power.c_peak, 0.0, 1.0)) * seconds / 3600.0;
}

SimMetrics run(const Scenario& scenario, const RunOptions& options) {
  scenario.validate();
  if (options.tick) {
    Scenario copy = scenario;
    copy.sim.tick = *options.tick;
    copy.validate();
  }
  return Simulation(scenario, options).run();
}

}  // namespace cpc
