#include "cpc/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace cpc {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

void ResourceControls::validate(const std::string& what) const {
  if (!(reservation >= 0.0)) throw InvariantError(what + ": reservation must be >= 0");
  if (!(limit >= reservation)) throw InvariantError(what + ": limit must be >= reservation");
  if (!(shares > 0.0) || !std::isfinite(shares)) throw InvariantError(what + ": shares must be > 0");
}

DemandTrace::DemandTrace(std::vector<DemandSegment> segments) : segments_(std::move(segments)) {
  if (segments_.empty()) return;
  if (segments_.front().start != 0.0) throw InvariantError("demand trace must start at t=0");
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& s = segments_[i];
    if (i > 0 && !(s.start > segments_[i - 1].start)) {
      throw InvariantError("demand trace start times must be strictly increasing");
    }
    if (!(s.cpu_mhz >= 0.0) || !(s.mem_mb >= 0.0)) {
      throw InvariantError("demand trace values must be >= 0");
    }
  }
}

DemandSample DemandTrace::at(double time) const {
  if (segments_.empty()) return {};
  auto it = std::upper_bound(segments_.begin(), segments_.end(), time,
                             [](double t, const DemandSegment& s) { return t < s.start; });
  if (it == segments_.begin()) return {segments_.front().cpu_mhz, segments_.front().mem_mb};
  --it;
  return {it->cpu_mhz, it->mem_mb};
}

void VmSpec::validate() const {
  const std::string where = "vm " + id.str();
  if (id.str().empty()) throw InvariantError("vm id must be nonempty");
  if (vcpus < 1) throw InvariantError(where + ": vcpus must be >= 1");
  if (!(memory_mb > 0.0)) throw InvariantError(where + ": memory must be > 0");
  cpu.validate(where + " cpu");
  mem.validate(where + " mem");
  if (mem.reservation > memory_mb) throw InvariantError(where + ": memory reservation exceeds configured memory");
}

void HostSpec::validate() const {
  const std::string where = "host " + id.str();
  if (id.str().empty()) throw InvariantError("host id must be nonempty");
  if (cores < 1) throw InvariantError(where + ": cores must be >= 1");
  if (!(mhz_per_core > 0.0)) throw InvariantError(where + ": mhz_per_core must be > 0");
  if (!(memory_mb > 0.0)) throw InvariantError(where + ": memory must be > 0");
  try {
    power.validate();
  } catch (const DomainError& e) {
    throw InvariantError(where + ": " + e.what());
  }
  if (std::abs(cores * mhz_per_core - power.c_peak) > kMhzEpsilon * std::max(1.0, power.c_peak)) {
    throw InvariantError(where + ": cores x mhz_per_core must equal c_peak");
  }
}

std::string to_string(PowerState state) {
  switch (state) {
    case PowerState::On: return "on";
    case PowerState::Off: return "off";
    case PowerState::PoweringOn: return "powering_on";
    case PowerState::PoweringOff: return "powering_off";
  }
  return "?";
}

std::string to_string(RuleKind kind) {
  switch (kind) {
    case RuleKind::VmVmAffinity: return "affinity";
    case RuleKind::VmVmAntiAffinity: return "anti_affinity";
    case RuleKind::VmHostPin: return "host_pin";
  }
  return "?";
}

double HostEntry::managed_capacity() const {
  if (!is_on()) return 0.0;
  return cpc::managed_capacity(spec.power, state.cap);
}

double HostEntry::peak_managed_capacity() const {
  return cpc::managed_capacity(spec.power, PowerCap{spec.power.p_peak});
}

const HostEntry& ClusterSnapshot::host(const HostId& id) const {
  auto it = hosts.find(id);
  if (it == hosts.end()) throw InvariantError("unknown host " + id.str());
  return it->second;
}

HostEntry& ClusterSnapshot::host(const HostId& id) {
  auto it = hosts.find(id);
  if (it == hosts.end()) throw InvariantError("unknown host " + id.str());
  return it->second;
}

const VmEntry& ClusterSnapshot::vm(const VmId& id) const {
  auto it = vms.find(id);
  if (it == vms.end()) throw InvariantError("unknown vm " + id.str());
  return it->second;
}

VmEntry& ClusterSnapshot::vm(const VmId& id) {
  auto it = vms.find(id);
  if (it == vms.end()) throw InvariantError("unknown vm " + id.str());
  return it->second;
}

std::vector<VmId> ClusterSnapshot::residents(const HostId& h) const {
  std::vector<VmId> out;
  for (const auto& [id, vm] : vms) {
    if (vm.host && *vm.host == h) out.push_back(id);
  }
  return out;
}

std::map<HostId, std::vector<VmId>> ClusterSnapshot::placement() const {
  std::map<HostId, std::vector<VmId>> out;
  for (const auto& [id, h] : hosts) out[id];
  for (const auto& [id, vm] : vms) {
    if (vm.host) out[*vm.host].push_back(id);
  }
  return out;
}

std::vector<HostId> ClusterSnapshot::powered_on_hosts() const {
  std::vector<HostId> out;
  for (const auto& [id, h] : hosts) {
    if (h.is_on()) out.push_back(id);
  }
  return out;
}

double ClusterSnapshot::cap_sum() const {
  double sum = 0.0;
  for (const auto& [id, h] : hosts) {
    if (h.holds_budget()) sum += h.state.cap.watts;
  }
  return sum;
}

double ClusterSnapshot::cpu_reservations(const HostId& h) const {
  double sum = 0.0;
  for (const auto& [id, vm] : vms) {
    if (vm.host && *vm.host == h) sum += vm.spec.cpu.reservation;
  }
  return sum;
}

double ClusterSnapshot::mem_reservations(const HostId& h) const {
  double sum = 0.0;
  for (const auto& [id, vm] : vms) {
    if (vm.host && *vm.host == h) sum += vm.spec.mem.reservation;
  }
  return sum;
}

std::vector<std::string> ClusterSnapshot::violations() const {
  std::vector<std::string> out;
  std::map<HostId, double> cpu_res;
  std::map<HostId, double> mem_res;
  for (const auto& [id, vm] : vms) {
    if (!vm.host) continue;
    auto it = hosts.find(*vm.host);
    if (it == hosts.end()) {
      out.push_back("vm " + id.str() + " placed on unknown host " + vm.host->str());
      continue;
    }
    if (!it->second.is_on()) {
      out.push_back("vm " + id.str() + " placed on host " + vm.host->str() + " which is " +
                    to_string(it->second.state.power_state));
    }
    cpu_res[*vm.host] += vm.spec.cpu.reservation;
    mem_res[*vm.host] += vm.spec.mem.reservation;
  }
  for (const auto& [id, h] : hosts) {
    const auto& p = h.spec.power;
    if (h.state.power_state == PowerState::Off) {
      if (h.state.cap.watts != 0.0) out.push_back("host " + id.str() + " is off with nonzero cap");
      continue;
    }
    if (h.state.cap.watts < p.p_idle - kWattEpsilon || h.state.cap.watts > p.p_peak + kWattEpsilon) {
      out.push_back("host " + id.str() + " cap " + fmt(h.state.cap.watts) + " W outside [" +
                    fmt(p.p_idle) + ", " + fmt(p.p_peak) + "]");
      continue;
    }
    if (!h.is_on()) continue;
    const double managed = h.managed_capacity();
    if (cpu_res[id] > managed + kMhzEpsilon) {
      out.push_back("host " + id.str() + " cpu reservations " + fmt(cpu_res[id]) +
                    " MHz exceed managed capacity " + fmt(managed) + " MHz");
    }
    if (mem_res[id] > h.spec.memory_mb + kMhzEpsilon) {
      out.push_back("host " + id.str() + " memory reservations " + fmt(mem_res[id]) +
                    " MB exceed host memory " + fmt(h.spec.memory_mb) + " MB");
    }
  }
  const double caps = cap_sum();
  if (caps > power_budget + kWattEpsilon) {
    out.push_back("power caps " + fmt(caps) + " W exceed cluster budget " + fmt(power_budget) + " W");
  }
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const auto& r = rules[i];
    if (r.vms.empty()) out.push_back("rule " + r.name + " has no members");
    for (const auto& v : r.vms) {
      if (!vms.count(v)) out.push_back("rule " + r.name + " references unknown vm " + v.str());
    }
    for (const auto& h : r.hosts) {
      if (!hosts.count(h)) out.push_back("rule " + r.name + " references unknown host " + h.str());
    }
    if (r.kind == RuleKind::VmHostPin && r.hosts.empty()) {
      out.push_back("rule " + r.name + " pins to an empty host set");
    }
  }
  return out;
}

void ClusterSnapshot::validate() const {
  auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid snapshot: " + v.front();
  if (v.size() > 1) msg += " (and " + std::to_string(v.size() - 1) + " more)";
  throw InvariantError(msg);
}

std::vector<RuleViolation> rule_violations(const ClusterSnapshot& snapshot) {
  std::vector<RuleViolation> out;
  for (std::size_t i = 0; i < snapshot.rules.size(); ++i) {
    const auto& r = snapshot.rules[i];
    RuleViolation v{i, r.name, {}};
    switch (r.kind) {
      case RuleKind::VmVmAffinity: {
        std::set<HostId> used;
        for (const auto& id : r.vms) {
          const auto& vm = snapshot.vm(id);
          if (vm.host) used.insert(*vm.host);
        }
        if (used.size() > 1) v.vms = r.vms;
        break;
      }
      case RuleKind::VmVmAntiAffinity: {
        std::map<HostId, std::vector<VmId>> by_host;
        for (const auto& id : r.vms) {
          const auto& vm = snapshot.vm(id);
          if (vm.host) by_host[*vm.host].push_back(id);
        }
        for (auto& [h, ids] : by_host) {
          // Everyone but the first VM on a shared host is in violation.
          for (std::size_t k = 1; k < ids.size(); ++k) v.vms.push_back(ids[k]);
        }
        break;
      }
      case RuleKind::VmHostPin: {
        for (const auto& id : r.vms) {
          const auto& vm = snapshot.vm(id);
          if (vm.host && std::find(r.hosts.begin(), r.hosts.end(), *vm.host) == r.hosts.end()) {
            v.vms.push_back(id);
          }
        }
        break;
      }
    }
    if (!v.vms.empty()) out.push_back(std::move(v));
  }
  return out;
}

bool placement_allowed(const ClusterSnapshot& snapshot, const std::map<VmId, HostId>& placement,
                       const VmId& vm, const HostId& dst) {
  for (const auto& r : snapshot.rules) {
    if (std::find(r.vms.begin(), r.vms.end(), vm) == r.vms.end()) continue;
    if (r.kind == RuleKind::VmHostPin) {
      if (std::find(r.hosts.begin(), r.hosts.end(), dst) == r.hosts.end()) return false;
    } else if (r.kind == RuleKind::VmVmAntiAffinity) {
      for (const auto& other : r.vms) {
        if (other == vm) continue;
        auto it = placement.find(other);
        if (it != placement.end() && it->second == dst) return false;
      }
    }
  }
  return true;
}

std::vector<VmId> affinity_partners(const ClusterSnapshot& snapshot, const VmId& vm) {
  std::set<VmId> out;
  for (const auto& r : snapshot.rules) {
    if (r.kind != RuleKind::VmVmAffinity) continue;
    if (std::find(r.vms.begin(), r.vms.end(), vm) == r.vms.end()) continue;
    for (const auto& other : r.vms) {
      if (other != vm) out.insert(other);
    }
  }
  return {out.begin(), out.end()};
}

std::string describe(const ActionKind& kind) {
  return std::visit(
      Overloaded{
          [](const SetPowerCap& a) { return "SetPowerCap(" + a.host.str() + ", " + fmt(a.watts) + " W)"; },
          [](const MigrateVm& a) {
            return "MigrateVm(" + a.vm.str() + ", " + a.src.str() + " -> " + a.dst.str() + ")";
          },
          [](const PowerOnHost& a) { return "PowerOnHost(" + a.host.str() + ", " + fmt(a.watts) + " W)"; },
          [](const PowerOffHost& a) { return "PowerOffHost(" + a.host.str() + ")"; },
      },
      kind);
}

ActionId ActionPlan::add(ActionKind kind, std::vector<ActionId> prerequisites) {
  const ActionId id = actions_.size();
  for (ActionId p : prerequisites) {
    if (p >= id) throw InvariantError("prerequisite " + std::to_string(p) + " does not precede action");
  }
  std::sort(prerequisites.begin(), prerequisites.end());
  prerequisites.erase(std::unique(prerequisites.begin(), prerequisites.end()), prerequisites.end());
  actions_.push_back(Action{id, std::move(kind), std::move(prerequisites)});
  return id;
}

std::vector<ActionId> ActionPlan::append(const ActionPlan& other, const std::vector<ActionId>& after) {
  std::vector<ActionId> mapping;
  mapping.reserve(other.size());
  for (const auto& a : other.actions()) {
    std::vector<ActionId> prereqs = after;
    for (ActionId p : a.prerequisites) prereqs.push_back(mapping.at(p));
    mapping.push_back(add(a.kind, std::move(prereqs)));
  }
  return mapping;
}

std::vector<ActionId> ActionPlan::ids() const {
  std::vector<ActionId> out;
  out.reserve(actions_.size());
  for (const auto& a : actions_) out.push_back(a.id);
  return out;
}

namespace {

void check_cap_range(const HostEntry& h, double watts) {
  const auto& p = h.spec.power;
  if (watts < p.p_idle - kWattEpsilon || watts > p.p_peak + kWattEpsilon) {
    throw InvariantError("cap " + fmt(watts) + " W outside [" + fmt(p.p_idle) + ", " + fmt(p.p_peak) +
                         "] for host " + h.spec.id.str());
  }
}

void check_budget(const ClusterSnapshot& s) {
  const double caps = s.cap_sum();
  if (caps > s.power_budget + kWattEpsilon) {
    throw InvariantError("power caps " + fmt(caps) + " W exceed budget " + fmt(s.power_budget) + " W");
  }
}

void check_reservations(const ClusterSnapshot& s, const HostId& id) {
  const auto& h = s.host(id);
  if (!h.is_on()) return;
  const double res = s.cpu_reservations(id);
  const double managed = h.managed_capacity();
  if (res > managed + kMhzEpsilon) {
    throw InvariantError("host " + id.str() + " cpu reservations " + fmt(res) +
                         " MHz exceed managed capacity " + fmt(managed) + " MHz");
  }
  const double mem = s.mem_reservations(id);
  if (mem > h.spec.memory_mb + kMhzEpsilon) {
    throw InvariantError("host " + id.str() + " memory reservations exceed host memory");
  }
}

}  // namespace

void apply_action(ClusterSnapshot& s, const ActionKind& kind) {
  std::visit(
      Overloaded{
          [&](const SetPowerCap& a) {
            auto& h = s.host(a.host);
            if (h.state.power_state == PowerState::Off) {
              if (a.watts != 0.0) throw InvariantError("host " + a.host.str() + " is off; cap must be 0");
              return;
            }
            check_cap_range(h, a.watts);
            const double old = h.state.cap.watts;
            h.state.cap.watts = clamp_cap(h.spec.power, a.watts);
            try {
              check_budget(s);
              check_reservations(s, a.host);
            } catch (...) {
              h.state.cap.watts = old;
              throw;
            }
          },
          [&](const MigrateVm& a) {
            auto& vm = s.vm(a.vm);
            if (!vm.host || *vm.host != a.src) {
              throw InvariantError("vm " + a.vm.str() + " is not on host " + a.src.str());
            }
            if (a.src == a.dst) throw InvariantError("source and destination are the same host");
            if (!s.host(a.src).is_on()) throw InvariantError("source host " + a.src.str() + " is not on");
            if (!s.host(a.dst).is_on()) throw InvariantError("destination host " + a.dst.str() + " is not on");
            vm.host = a.dst;
            try {
              check_reservations(s, a.dst);
            } catch (...) {
              vm.host = a.src;
              throw;
            }
          },
          [&](const PowerOnHost& a) {
            auto& h = s.host(a.host);
            if (h.state.power_state != PowerState::Off) {
              throw InvariantError("host " + a.host.str() + " is not off");
            }
            check_cap_range(h, a.watts);
            h.state.power_state = PowerState::On;
            h.state.cap.watts = clamp_cap(h.spec.power, a.watts);
            h.state.last_power_change = s.time;
            try {
              check_budget(s);
            } catch (...) {
              h.state.power_state = PowerState::Off;
              h.state.cap.watts = 0.0;
              throw;
            }
          },
          [&](const PowerOffHost& a) {
            auto& h = s.host(a.host);
            if (!h.is_on()) throw InvariantError("host " + a.host.str() + " is not on");
            if (!s.residents(a.host).empty()) {
              throw InvariantError("host " + a.host.str() + " still has resident vms");
            }
            h.state.power_state = PowerState::Off;
            h.state.cap.watts = 0.0;
            h.state.last_power_change = s.time;
          },
      },
      kind);
}

ClusterSnapshot apply_actions(const ClusterSnapshot& snapshot, std::span<const Action> actions) {
  std::set<ActionId> seen;
  for (const auto& a : actions) {
    for (ActionId p : a.prerequisites) {
      if (!seen.count(p)) {
        throw InvariantError("action " + std::to_string(a.id) + " " + describe(a.kind) +
                             ": prerequisite " + std::to_string(p) + " has not been applied");
      }
    }
    if (!seen.insert(a.id).second) {
      throw InvariantError("duplicate action id " + std::to_string(a.id));
    }
  }
  ClusterSnapshot out = snapshot;
  for (const auto& a : actions) {
    try {
      apply_action(out, a.kind);
    } catch (const InvariantError& e) {
      throw InvariantError("action " + std::to_string(a.id) + " " + describe(a.kind) + ": " + e.what());
    } catch (const DomainError& e) {
      throw InvariantError("action " + std::to_string(a.id) + " " + describe(a.kind) + ": " + e.what());
    }
  }
  return out;
}

ClusterSnapshot apply_actions(const ClusterSnapshot& snapshot, const ActionPlan& plan) {
  return apply_actions(snapshot, std::span<const Action>(plan.actions()));
}

}  // namespace cpc
