#include "cpc/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

namespace cpc {

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
  std::string out = "invalid scenario";
  for (const auto& p : problems) out += "\n  " + p;
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string format_watts(double w) {
  std::ostringstream os;
  os << w;
  return os.str();
}

}  // namespace

ScenarioError::ScenarioError(std::vector<std::string> problems)
    : std::runtime_error(join_problems(problems)), problems_(std::move(problems)) {}

std::string Policy::name() const {
  switch (kind) {
    case PolicyKind::CloudPowerCap: return "CPC";
    case PolicyKind::StaticHigh: return "StaticHigh";
    case PolicyKind::Static: return static_watts ? "Static(" + format_watts(*static_watts) + ")" : "Static";
  }
  return "?";
}

Policy Policy::parse(const std::string& text) {
  const std::string t = lower(text);
  if (t == "cpc" || t == "cloudpowercap") return {PolicyKind::CloudPowerCap, std::nullopt};
  if (t == "statichigh" || t == "static-high" || t == "static_high") return {PolicyKind::StaticHigh, std::nullopt};
  if (t == "static") return {PolicyKind::Static, std::nullopt};
  std::string num;
  if (t.rfind("static(", 0) == 0 && t.back() == ')') num = t.substr(7, t.size() - 8);
  if (t.rfind("static:", 0) == 0) num = t.substr(7);
  if (!num.empty()) {
    std::size_t used = 0;
    double w = 0.0;
    try {
      w = std::stod(num, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == num.size() && w > 0.0 && std::isfinite(w)) return {PolicyKind::Static, w};
  }
  throw ScenarioError({"unknown policy '" + text + "' (expected CPC, Static, Static(W) or StaticHigh)"});
}

void Scenario::validate() const {
  std::vector<std::string> problems;
  auto check = [&](const std::string& where, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      problems.push_back(where + ": " + e.what());
    }
  };

  std::set<HostId> host_ids;
  std::set<HostId> on_hosts;
  double caps = 0.0;
  for (std::size_t i = 0; i < hosts.size(); ++i) {
    const auto& h = hosts[i];
    const std::string where = "$.hosts[" + std::to_string(i) + "]";
    check(where, [&] { h.spec.validate(); });
    if (!host_ids.insert(h.spec.id).second) problems.push_back(where + ": duplicate host id " + h.spec.id.str());
    if (h.power_state == PowerState::On) {
      on_hosts.insert(h.spec.id);
      if (h.power_cap < h.spec.power.p_idle - kWattEpsilon || h.power_cap > h.spec.power.p_peak + kWattEpsilon) {
        problems.push_back(where + ": power_cap must lie in [p_idle, p_peak] for a powered-on host");
      }
      caps += h.power_cap;
    } else if (h.power_state == PowerState::Off) {
      if (h.power_cap != 0.0) problems.push_back(where + ": power_cap must be 0 for a powered-off host");
    } else {
      problems.push_back(where + ": initial power_state must be on or off");
    }
  }

  std::set<VmId> vm_ids;
  for (std::size_t i = 0; i < vms.size(); ++i) {
    const auto& v = vms[i];
    const std::string where = "$.vms[" + std::to_string(i) + "]";
    check(where, [&] { v.spec.validate(); });
    if (!vm_ids.insert(v.spec.id).second) problems.push_back(where + ": duplicate vm id " + v.spec.id.str());
    if (v.host) {
      if (!host_ids.count(*v.host)) {
        problems.push_back(where + ": unknown host " + v.host->str());
      } else if (!on_hosts.count(*v.host)) {
        problems.push_back(where + ": placed on host " + v.host->str() + " which is powered off");
      }
    }
  }

  for (std::size_t i = 0; i < rules.size(); ++i) {
    const auto& r = rules[i];
    const std::string where = "$.rules[" + std::to_string(i) + "]";
    if (r.rule.vms.empty()) problems.push_back(where + ": rule has no vms");
    for (const auto& v : r.rule.vms) {
      if (!vm_ids.count(v)) problems.push_back(where + ": unknown vm " + v.str());
    }
    for (const auto& h : r.rule.hosts) {
      if (!host_ids.count(h)) problems.push_back(where + ": unknown host " + h.str());
    }
    if (r.rule.kind == RuleKind::VmHostPin && r.rule.hosts.empty()) {
      problems.push_back(where + ": host pin needs at least one host");
    }
    if (!(r.active_from < r.active_until)) problems.push_back(where + ": active_from must precede active_until");
  }

  if (!(power_budget > 0.0)) problems.push_back("$.cluster_power_budget: must be > 0");
  if (caps > power_budget + kWattEpsilon) {
    problems.push_back("$.cluster_power_budget: initial caps exceed the budget");
  }
  if (static_cap_watts && !(*static_cap_watts > 0.0)) problems.push_back("$.static_cap_watts: must be > 0");

  const auto& s = sim;
  if (!(s.tick > 0.0)) problems.push_back("$.sim.tick: must be > 0");
  if (!(s.end_time > 0.0)) problems.push_back("$.sim.end_time: must be > 0");
  if (!(s.drs_period > 0.0)) {
    problems.push_back("$.sim.drs_period: must be > 0");
  } else if (s.tick > 0.0) {
    const double k = s.drs_period / s.tick;
    if (std::abs(k - std::round(k)) > 1e-9) problems.push_back("$.sim.drs_period: must be a multiple of tick");
  }
  if (!(s.powercap_latency >= 0.0)) problems.push_back("$.sim.powercap_latency: must be >= 0");
  if (!(s.power_on_latency >= 0.0)) problems.push_back("$.sim.power_on_latency: must be >= 0");
  if (!(s.power_off_latency >= 0.0)) problems.push_back("$.sim.power_off_latency: must be >= 0");
  if (!(s.demand_window > 0.0)) problems.push_back("$.sim.demand_window: must be > 0");
  if (!(s.vmotion.bandwidth_mb_per_s > 0.0)) problems.push_back("$.sim.vmotion.bandwidth_mb_per_s: must be > 0");
  if (!(s.vmotion.cpu_overhead_cores >= 0.0)) problems.push_back("$.sim.vmotion.cpu_overhead_cores: must be >= 0");
  if (s.metrics_window && !(s.metrics_window->first < s.metrics_window->second)) {
    problems.push_back("$.sim.metrics_window: start must precede end");
  }
  check("$.drs", [&] { drs.validate(); });
  check("$.dpm", [&] { dpm.validate(); });

  if (problems.empty()) {
    for (const auto& v : initial_snapshot().violations()) problems.push_back("initial state: " + v);
  }
  if (!problems.empty()) throw ScenarioError(std::move(problems));
}

ClusterSnapshot Scenario::initial_snapshot() const {
  ClusterSnapshot s;
  s.power_budget = power_budget;
  s.time = 0.0;
  for (const auto& h : hosts) {
    HostEntry e;
    e.spec = h.spec;
    e.state.power_state = h.power_state;
    e.state.cap = PowerCap{h.power_state == PowerState::Off ? 0.0 : h.power_cap};
    s.hosts[h.spec.id] = e;
  }
  for (const auto& v : vms) {
    VmEntry e;
    e.spec = v.spec;
    e.host = v.host;
    e.estimate = v.spec.demand.at(0.0);
    s.vms[v.spec.id] = e;
  }
  for (const auto& r : rules) {
    if (r.active_at(0.0)) s.rules.push_back(r.rule);
  }
  return s;
}

}  // namespace cpc
