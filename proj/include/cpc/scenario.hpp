#ifndef CPC_SCENARIO_HPP_
#define CPC_SCENARIO_HPP_

#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cpc/cluster.hpp"
#include "cpc/drs.hpp"

namespace cpc {

/// Schema or semantic problems in a scenario document. Carries every
/// problem found, each prefixed with its location.
class ScenarioError : public std::runtime_error {
 public:
  explicit ScenarioError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

enum class PolicyKind { CloudPowerCap, Static, StaticHigh };

struct Policy {
  PolicyKind kind = PolicyKind::CloudPowerCap;
  /// Per-host cap for Static; unset means the scenario's static_cap_watts.
  std::optional<double> static_watts;

  /// "CPC", "Static", "Static(250)" or "StaticHigh".
  std::string name() const;
  /// Accepts the names above case-insensitively, plus "cloudpowercap" and "static:250".
  static Policy parse(const std::string& text);
};

struct ScenarioHost {
  HostSpec spec;
  PowerState power_state = PowerState::On;
  double power_cap = 0.0;
};

struct ScenarioVm {
  VmSpec spec;
  std::optional<HostId> host;
};

struct TimedRule {
  Rule rule;
  double active_from = 0.0;
  double active_until = std::numeric_limits<double>::infinity();

  bool active_at(double t) const { return t >= active_from && t < active_until; }
};

struct VmotionModel {
  double bandwidth_mb_per_s = 1280.0;
  double cpu_overhead_cores = 0.10;
};

struct SimSettings {
  double tick = 10.0;
  double end_time = 0.0;
  double drs_period = 300.0;
  double powercap_latency = 0.001;
  double power_on_latency = 120.0;
  double power_off_latency = 120.0;
  /// Smoothing window of the demand estimator.
  double demand_window = 300.0;
  VmotionModel vmotion;
  /// Payload, energy and power are accumulated only inside this interval.
  std::optional<std::pair<double, double>> metrics_window;
};

struct Scenario {
  static constexpr int kVersion = 1;

  std::string name;
  std::string description;
  std::vector<ScenarioHost> hosts;
  std::vector<ScenarioVm> vms;
  std::vector<TimedRule> rules;
  double power_budget = 0.0;
  /// Cap used by the Static policy when none is given explicitly.
  std::optional<double> static_cap_watts;
  SimSettings sim;
  DrsConfig drs;
  DpmConfig dpm;

  /// Throws ScenarioError listing every problem.
  void validate() const;

  /// Snapshot at t = 0 with the scenario's own caps and budget.
  ClusterSnapshot initial_snapshot() const;
};

}  // namespace cpc

#endif  // CPC_SCENARIO_HPP_
