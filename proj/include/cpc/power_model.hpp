#ifndef CPC_POWER_MODEL_HPP_
#define CPC_POWER_MODEL_HPP_

#include <optional>
#include <stdexcept>
#include <string>

namespace cpc {

/// Raised when a power or capacity argument falls outside the linear model's domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Linear host power model coefficients.
///
/// Power is in watts and CPU capacity in MHz. Consumption grows linearly
/// from p_idle at zero utilization to p_peak at full c_peak utilization;
/// c_hypervisor is capacity the hypervisor keeps for itself and is never
/// handed to VMs.
struct PowerModelParams {
  double p_idle = 0.0;
  double p_peak = 0.0;
  double c_peak = 0.0;
  double c_hypervisor = 0.0;
  std::optional<double> p_nameplate;

  /// Throws DomainError if the coefficients are inconsistent.
  void validate() const;

  /// Watts per MHz of capped capacity.
  double slope() const { return (p_peak - p_idle) / c_peak; }
};

/// Per-host power cap. Zero for a powered-off host.
struct PowerCap {
  double watts = 0.0;
};

/// Raw capacity reachable under `cap`. Requires p_idle <= cap <= p_peak.
double capped_capacity(const PowerModelParams& params, PowerCap cap);

/// Capacity the resource manager may divide among VMs: capped capacity minus
/// the hypervisor reservation, floored at zero.
double managed_capacity(const PowerModelParams& params, PowerCap cap);

/// Inverse of capped_capacity. Requires 0 <= capacity <= c_peak.
PowerCap cap_for_capacity(const PowerModelParams& params, double capacity_mhz);

/// Upper-bound power draw at `utilization` (fraction of c_peak, in [0, 1]).
double power_consumed(const PowerModelParams& params, double utilization);

// Small tolerances absorb float noise at the domain edges (e.g. a cap that was
// computed as p_idle + 1e-13).
inline constexpr double kWattEpsilon = 1e-6;
inline constexpr double kMhzEpsilon = 1e-6;

/// Clamps a cap into [p_idle, p_peak].
double clamp_cap(const PowerModelParams& params, double watts);

/// Host description used for rack planning.
struct RackHostModel {
  PowerModelParams power;
  double memory_mb = 0.0;
};

struct RackDeployment {
  int host_count = 0;
  double total_cpu_mhz = 0.0;
  double total_memory_mb = 0.0;
};

/// How many hosts fit under `budget_watts` when each is capped at `cap`.
///
/// Caps above p_peak (e.g. budgeting at nameplate) count at face value for
/// the budget division, while capacity is bounded by c_peak.
RackDeployment plan_rack_deployment(double budget_watts, const RackHostModel& host,
                                    PowerCap cap);

}  // namespace cpc

#endif  // CPC_POWER_MODEL_HPP_
