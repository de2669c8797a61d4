#ifndef CPC_DRS_HPP_
#define CPC_DRS_HPP_

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cpc/cluster.hpp"
#include "cpc/entitlement.hpp"

namespace cpc {

/// Live-migration cost: single-pass memory copy with a fixed CPU overhead on
/// both endpoints while the copy runs.
struct MigrationCostModel {
  double bandwidth_mb_per_s = 1280.0;
  /// Fraction of one physical core consumed on each endpoint.
  double cpu_overhead_cores = 0.10;
  double risk_factor = 1.0;

  double duration_s(const VmSpec& vm) const { return vm.memory_mb / bandwidth_mb_per_s; }
  double overhead_mhz(const HostSpec& host) const { return cpu_overhead_cores * host.mhz_per_core; }
  /// CPU MHz-seconds burned on source and destination together.
  double cost_mhz_s(const VmSpec& vm, const HostSpec& src, const HostSpec& dst) const;
  void validate() const;
};

struct DrsConfig {
  double invocation_period = 300.0;
  double imbalance_threshold = 0.05;
  int max_moves_per_pass = 20;
  bool costbenefit_enabled = true;
  MigrationCostModel migration_cost;

  void validate() const;
};

struct DpmConfig {
  bool enabled = true;
  double high_utilization_threshold = 0.81;
  double low_utilization_threshold = 0.45;
  /// No power-off is proposed within this many seconds of any host power change.
  double evaluation_window = 900.0;

  void validate() const;
};

/// Lookup of per-VM rule constraints built once per algorithm pass.
class RuleIndex {
 public:
  explicit RuleIndex(const ClusterSnapshot& snapshot);

  /// False when a host pin excludes `host`.
  bool pinned_allows(const VmId& vm, const HostId& host) const;
  const std::vector<VmId>& anti_affine(const VmId& vm) const;
  const std::vector<VmId>& affine(const VmId& vm) const;
  /// Pin and anti-affinity check against `placement`.
  bool allows(const VmId& vm, const HostId& host, const std::map<VmId, HostId>& placement) const;

 private:
  std::map<VmId, std::vector<std::vector<HostId>>> pins_;
  std::map<VmId, std::vector<VmId>> anti_;
  std::map<VmId, std::vector<VmId>> aff_;
  std::vector<VmId> none_;
};

// ---- constraint correction ----

struct ConstraintCorrection {
  std::vector<MigrateVm> migrations;
  /// Per powered-on host cap after correction. Flexible mode raises caps of
  /// destinations that need more capacity; elsewhere it is the reserved cap.
  /// Fixed mode reports current caps.
  std::map<HostId, double> required_caps;
  /// Input snapshot with the migrations applied and caps set to required_caps.
  ClusterSnapshot corrected;
  std::vector<RuleViolation> unresolved;
  bool flexible = false;
};

/// Resolves rule violations by migrating VMs. With `flexible_power` (the
/// reserved-cap clone) destinations may use capacity up to peak as long as
/// the budget covers the implied reserved caps; without it capacities are
/// fixed at the current caps.
ConstraintCorrection correct_constraints(const ClusterSnapshot& snapshot,
                                         const ClusterSnapshot* flexible_power = nullptr);

/// Lowest cap that keeps `cpu_reservations` (plus hypervisor overhead)
/// covered, clamped into [p_idle, p_peak]. Throws InvariantError when the
/// reservations exceed peak capacity.
double reserved_cap_for(const HostSpec& host, double cpu_reservations);

// ---- entitlement balancing ----

struct BalanceResult {
  ActionPlan plan;
  std::vector<MigrateVm> migrations;
  ClusterSnapshot snapshot;
  double initial_imbalance = 0.0;
  double final_imbalance = 0.0;
  /// Imbalance after each accepted move.
  std::vector<double> trajectory;
};

/// Greedy hill climbing over single-VM migrations.
BalanceResult balance_entitlements(const ClusterSnapshot& snapshot, const DrsConfig& config);

// ---- DPM ----

/// Effective demand of a VM on a host: the estimate bounded by limit and vCPUs.
double effective_cpu_demand(const VmEntry& vm, const HostSpec& host);
double effective_mem_demand(const VmEntry& vm);

/// max(cpu demand / managed capacity, memory demand / memory) for an On host.
double host_utilization(const ClusterSnapshot& snapshot, const HostId& host);

struct PowerOnGrant {
  /// Donor cap decreases that fund the candidate.
  ActionPlan plan;
  double cap_watts = 0.0;
  bool feasible = false;
};

struct PowerCapHooks {
  std::function<PowerOnGrant(const ClusterSnapshot&, const HostId&, const DpmConfig&)> redistribute_for_power_on;
  /// Called with the snapshot after the power-off has been applied.
  std::function<ActionPlan(const ClusterSnapshot&, const HostId&)> reclaim_on_power_off;
};

/// Hooks for policies whose caps never move: a woken host gets `watts`
/// (p_peak when unset) if the budget has room, and nothing is reclaimed.
PowerCapHooks fixed_cap_hooks(std::optional<double> watts);

struct DpmResult {
  ActionPlan plan;
  std::optional<HostId> power_on;
  std::optional<HostId> power_off;
  std::vector<MigrateVm> evacuations;
  std::string reason;
};

DpmResult dpm_evaluate(const ClusterSnapshot& snapshot, const DpmConfig& config,
                       const PowerCapHooks& hooks);

}  // namespace cpc

#endif  // CPC_DRS_HPP_
