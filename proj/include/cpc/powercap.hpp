#ifndef CPC_POWERCAP_HPP_
#define CPC_POWERCAP_HPP_

#include <map>
#include <string>
#include <vector>

#include "cpc/cluster.hpp"
#include "cpc/drs.hpp"

namespace cpc {

using CapMap = std::map<HostId, double>;

struct FlexiblePower {
  /// Clone of the input with every powered-on host capped at its reserved cap.
  ClusterSnapshot snapshot;
  /// Reserved cap per host; 0 for powered-off hosts.
  CapMap reserved_caps;
  double unreserved_budget = 0.0;
};

FlexiblePower get_flexible_power(const ClusterSnapshot& snapshot);

struct RedivvyOptions {
  /// Give slack hosts C_F + r(C_S - C_F) with r = needed/excess as printed,
  /// instead of the budget-conserving (1 - r). For comparison only.
  bool literal_ratio = false;
};

struct CapPlan {
  ActionPlan plan;
  /// Final cap of every powered-on host.
  CapMap caps;
  bool feasible = true;
  std::string reason;
};

/// Redistributes caps after constraint correction. `corrected` carries the
/// required caps (raised on hosts that need more, reserved elsewhere).
CapPlan redivvy_power_cap(const ClusterSnapshot& current, const ClusterSnapshot& corrected,
                          const RedivvyOptions& options = {});

struct PowerBalanceOptions {
  /// Pairwise line search run after progressive filling stalls above the threshold.
  bool polish = true;
  int max_transfers = 2000;
  int max_polish_rounds = 50;
};

struct PowerBalanceResult {
  ActionPlan plan;
  ClusterSnapshot snapshot;
  CapMap caps;
  double initial_imbalance = 0.0;
  double final_imbalance = 0.0;
  /// Imbalance after every accepted transfer, progressive filling and polishing alike.
  std::vector<double> trajectory;
  int transfers = 0;
  int polish_transfers = 0;
};

/// Progressive filling of capacity from the least to the most loaded hosts
/// until imbalance drops to `threshold` or a peak clamp or reservation floor
/// blocks further transfers.
PowerBalanceResult balance_power_cap(const ClusterSnapshot& snapshot, double threshold,
                                     const PowerBalanceOptions& options = {});

/// Funds a power-on of `candidate` from free budget, then from powered-on
/// hosts in ascending utilization without pushing any past the high threshold.
PowerOnGrant redistribute_for_power_on(const ClusterSnapshot& snapshot, const HostId& candidate,
                                       const DpmConfig& config);

/// Shares the free budget of `after_power_off` among powered-on hosts in
/// proportion to their caps, clamped at peak.
ActionPlan reclaim_on_power_off(const ClusterSnapshot& after_power_off, const HostId& host);

PowerCapHooks cloudpowercap_hooks();

/// Adds `amount` watts to `caps` in proportion to `weights`, clamping at each
/// host's peak and handing overflow to the rest. Returns what was not placed.
double share_proportionally(const ClusterSnapshot& snapshot, CapMap& caps, const CapMap& weights,
                            double amount);

/// Decreases first, then increases that depend on every decrease.
ActionPlan cap_change_plan(const ClusterSnapshot& snapshot, const CapMap& caps);

struct TransitionPlan {
  ActionPlan plan;
  ClusterSnapshot result;
  bool feasible = true;
  std::vector<MigrateVm> stuck;
};

/// Orders cap changes and migrations so every intermediate state is valid.
/// Works in layers of decreases, increases and migrations, each depending on
/// the previous sub-layer, until all targets are met or nothing can move.
TransitionPlan build_transition_plan(const ClusterSnapshot& start, const CapMap& target_caps,
                                     const std::vector<MigrateVm>& migrations);

}  // namespace cpc

#endif  // CPC_POWERCAP_HPP_
