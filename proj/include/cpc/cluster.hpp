#ifndef CPC_CLUSTER_HPP_
#define CPC_CLUSTER_HPP_

#include <compare>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "cpc/power_model.hpp"

namespace cpc {

/// Snapshot or action sequence breaks a cluster invariant.
class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// String identifier tagged by the entity kind it names.
template <typename Tag>
class Id {
 public:
  Id() = default;
  explicit Id(std::string value) : value_(std::move(value)) {}

  const std::string& str() const { return value_; }

  friend auto operator<=>(const Id&, const Id&) = default;
  friend bool operator==(const Id&, const Id&) = default;
  friend std::ostream& operator<<(std::ostream& os, const Id& id) { return os << id.value_; }

 private:
  std::string value_;
};

struct HostTag {};
struct VmTag {};
using HostId = Id<HostTag>;
using VmId = Id<VmTag>;

inline constexpr double kUnlimited = std::numeric_limits<double>::infinity();

/// Reservation / limit / shares for one resource (MHz for CPU, MB for memory).
struct ResourceControls {
  double reservation = 0.0;
  double limit = kUnlimited;
  double shares = 1000.0;

  void validate(const std::string& what) const;
};

struct DemandSample {
  double cpu_mhz = 0.0;
  double mem_mb = 0.0;
};

struct DemandSegment {
  double start = 0.0;
  double cpu_mhz = 0.0;
  double mem_mb = 0.0;
};

/// Piecewise-constant demand over time; the first segment starts at t = 0.
class DemandTrace {
 public:
  DemandTrace() = default;
  explicit DemandTrace(std::vector<DemandSegment> segments);

  DemandSample at(double time) const;
  const std::vector<DemandSegment>& segments() const { return segments_; }

 private:
  std::vector<DemandSegment> segments_;
};

struct VmSpec {
  VmId id;
  int vcpus = 1;
  double memory_mb = 0.0;
  ResourceControls cpu;
  ResourceControls mem;
  DemandTrace demand;
  std::string group = "default";

  void validate() const;
};

struct HostSpec {
  HostId id;
  int cores = 1;
  double mhz_per_core = 0.0;
  double memory_mb = 0.0;
  PowerModelParams power;

  void validate() const;
};

enum class PowerState { On, Off, PoweringOn, PoweringOff };

std::string to_string(PowerState state);

struct HostState {
  PowerState power_state = PowerState::On;
  PowerCap cap;
  double last_power_change = -std::numeric_limits<double>::infinity();
};

struct HostEntry {
  HostSpec spec;
  HostState state;

  bool is_on() const { return state.power_state == PowerState::On; }
  /// True for every state that draws on the cluster power budget.
  bool holds_budget() const { return state.power_state != PowerState::Off; }
  /// Managed capacity at the current cap, zero unless powered on.
  double managed_capacity() const;
  double peak_managed_capacity() const;
};

enum class RuleKind { VmVmAffinity, VmVmAntiAffinity, VmHostPin };

std::string to_string(RuleKind kind);

struct Rule {
  std::string name;
  RuleKind kind = RuleKind::VmVmAffinity;
  std::vector<VmId> vms;
  std::vector<HostId> hosts;
};

struct VmEntry {
  VmSpec spec;
  std::optional<HostId> host;
  /// Demand estimate used for entitlements and DPM.
  DemandSample estimate;
};

/// Point-in-time view of the cluster. Algorithms take it by const reference
/// and return new values.
struct ClusterSnapshot {
  std::map<HostId, HostEntry> hosts;
  std::map<VmId, VmEntry> vms;
  std::vector<Rule> rules;
  double power_budget = 0.0;
  double time = 0.0;

  const HostEntry& host(const HostId& id) const;
  HostEntry& host(const HostId& id);
  const VmEntry& vm(const VmId& id) const;
  VmEntry& vm(const VmId& id);

  /// VM ids on `host`, ascending.
  std::vector<VmId> residents(const HostId& host) const;
  /// Map host -> resident VM ids for every host (empty vectors included).
  std::map<HostId, std::vector<VmId>> placement() const;
  std::vector<HostId> powered_on_hosts() const;

  double cap_sum() const;
  double cpu_reservations(const HostId& host) const;
  double mem_reservations(const HostId& host) const;

  /// Every invariant breach as a human-readable line. Empty when valid.
  std::vector<std::string> violations() const;
  void validate() const;
};

// ---- business rules ----

struct RuleViolation {
  std::size_t rule_index = 0;
  std::string rule_name;
  std::vector<VmId> vms;
};

std::vector<RuleViolation> rule_violations(const ClusterSnapshot& snapshot);

/// Whether `vm` may sit on `dst` given pin and anti-affinity rules and the
/// placements in `placement` (affinity is handled by the caller as a group).
bool placement_allowed(const ClusterSnapshot& snapshot,
                       const std::map<VmId, HostId>& placement, const VmId& vm,
                       const HostId& dst);

/// VMs that share an affinity rule with `vm` (excluding `vm`).
std::vector<VmId> affinity_partners(const ClusterSnapshot& snapshot, const VmId& vm);

// ---- actions ----

struct SetPowerCap {
  HostId host;
  double watts = 0.0;
};

struct MigrateVm {
  VmId vm;
  HostId src;
  HostId dst;
};

/// Powers a host on with the given cap already assigned.
struct PowerOnHost {
  HostId host;
  double watts = 0.0;
};

struct PowerOffHost {
  HostId host;
};

using ActionKind = std::variant<SetPowerCap, MigrateVm, PowerOnHost, PowerOffHost>;
using ActionId = std::size_t;

struct Action {
  ActionId id = 0;
  ActionKind kind;
  std::vector<ActionId> prerequisites;
};

std::string describe(const ActionKind& kind);

/// Dependency-ordered action list. Ids are positions; prerequisites always
/// point backwards, so plans built through add() are acyclic.
class ActionPlan {
 public:
  ActionId add(ActionKind kind, std::vector<ActionId> prerequisites = {});

  /// Appends `other`, adding `after` as prerequisites of each of its actions.
  /// Returns the new ids of other's actions, in order.
  std::vector<ActionId> append(const ActionPlan& other, const std::vector<ActionId>& after = {});

  const std::vector<Action>& actions() const { return actions_; }
  std::vector<ActionId> ids() const;
  bool empty() const { return actions_.empty(); }
  std::size_t size() const { return actions_.size(); }

 private:
  std::vector<Action> actions_;
};

/// Applies one action in place. Throws InvariantError and leaves the
/// snapshot unchanged when the action is invalid.
void apply_action(ClusterSnapshot& snapshot, const ActionKind& kind);

/// Validates prerequisite ordering, then applies every action to a copy.
/// Throws InvariantError naming the first offending action.
ClusterSnapshot apply_actions(const ClusterSnapshot& snapshot, std::span<const Action> actions);
ClusterSnapshot apply_actions(const ClusterSnapshot& snapshot, const ActionPlan& plan);

}  // namespace cpc

#endif  // CPC_CLUSTER_HPP_
