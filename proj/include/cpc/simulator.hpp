#ifndef CPC_SIMULATOR_HPP_
#define CPC_SIMULATOR_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cpc/cluster.hpp"
#include "cpc/drs.hpp"
#include "cpc/powercap.hpp"
#include "cpc/scenario.hpp"

namespace cpc {

/// Snapshot a policy starts from. Static pins every powered-on host to the
/// static cap with a budget of hosts x cap; StaticHigh uses peak power and
/// the sum of peaks; CloudPowerCap keeps the scenario as written.
/// Throws ScenarioError when the static cap cannot host the placement.
ClusterSnapshot policy_snapshot(const Scenario& scenario, const Policy& policy);

/// Static cap in watts for `policy`: explicit value, then the scenario's
/// static_cap_watts, then the budget split evenly over all hosts.
double static_cap_for(const Scenario& scenario, const Policy& policy);

/// One DRS invocation: constraint correction, balancing, then DPM. Stages are
/// separated by barriers so each starts after the previous one completes.
ActionPlan plan_invocation(const ClusterSnapshot& snapshot, const Policy& policy, const DrsConfig& drs,
                           const DpmConfig& dpm, double static_watts = 0.0);

/// Water-filling split of (managed - overhead) over resident VMs, given
/// their current demand. No VM gets more than it demands; reservations are
/// scaled down if the overhead leaves too little room for them.
std::vector<double> schedule_host_tick(const HostSpec& host, double managed_mhz,
                                       const std::vector<const VmSpec*>& vms,
                                       const std::vector<double>& demand_mhz, double overhead_mhz);

/// Energy in Wh of a powered-on host running `busy_mhz` for `seconds`.
double energy_wh(const PowerModelParams& power, double busy_mhz, double seconds);

struct HostTick {
  std::string id;
  PowerState state = PowerState::On;
  double cap_w = 0.0;
  double power_w = 0.0;
  double delivered_mhz = 0.0;
  double demand_mhz = 0.0;
  double overhead_mhz = 0.0;

  bool operator==(const HostTick&) const = default;
};

struct TimelinePoint {
  double time = 0.0;
  double total_power_w = 0.0;
  std::vector<HostTick> hosts;

  bool operator==(const TimelinePoint&) const = default;
};

struct GroupMetrics {
  double cpu_delivered = 0.0;  ///< MHz.s
  double cpu_demand = 0.0;     ///< MHz.s
  double satisfaction() const { return cpu_demand > 0.0 ? cpu_delivered / cpu_demand : 1.0; }
};

struct ActionEvent {
  double start = 0.0;
  double finish = 0.0;
  std::string action;
  bool completed = true;
};

struct SimMetrics {
  std::string policy;
  double window_start = 0.0;
  double window_end = 0.0;
  double cpu_payload = 0.0;  ///< MHz.s delivered inside the metrics window
  double cpu_demand = 0.0;   ///< MHz.s demanded inside the metrics window
  double mem_payload = 0.0;  ///< MB.s
  double mem_demand = 0.0;   ///< MB.s
  double energy_wh = 0.0;
  double average_power_w = 0.0;
  int vmotions = 0;
  int power_ons = 0;
  int power_offs = 0;
  int cap_changes = 0;
  int dropped_actions = 0;
  int drs_invocations = 0;
  std::map<std::string, GroupMetrics> groups;
  std::map<std::string, double> vm_satisfaction;
  std::vector<ActionEvent> events;
  std::vector<TimelinePoint> timeline;
  CapMap final_caps;
};

struct RunOptions {
  Policy policy;
  bool timeline = false;
  std::optional<double> tick;
};

/// Validates the scenario, then simulates it under one policy.
/// Deterministic: equal inputs give bit-identical metrics.
SimMetrics run(const Scenario& scenario, const RunOptions& options);

}  // namespace cpc

#endif  // CPC_SIMULATOR_HPP_
