#include "cpc/power_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cpc {

namespace {

std::string describe_range(double value, double lo, double hi) {
  std::ostringstream os;
  os << value << " outside [" << lo << ", " << hi << "]";
  return os.str();
}

}  // namespace

void PowerModelParams::validate() const {
  if (!(p_idle >= 0.0) || !(p_idle < p_peak)) {
    throw DomainError("power model requires 0 <= p_idle < p_peak");
  }
  if (!(c_peak > 0.0)) {
    throw DomainError("power model requires c_peak > 0");
  }
  if (!(c_hypervisor >= 0.0) || !(c_hypervisor < c_peak)) {
    throw DomainError("power model requires 0 <= c_hypervisor < c_peak");
  }
  if (p_nameplate && *p_nameplate < p_peak) {
    throw DomainError("nameplate power must be at least p_peak");
  }
}

double capped_capacity(const PowerModelParams& params, PowerCap cap) {
  if (cap.watts < params.p_idle - kWattEpsilon || cap.watts > params.p_peak + kWattEpsilon) {
    throw DomainError("power cap " + describe_range(cap.watts, params.p_idle, params.p_peak));
  }
  const double w = std::clamp(cap.watts, params.p_idle, params.p_peak);
  return params.c_peak * (w - params.p_idle) / (params.p_peak - params.p_idle);
}

double managed_capacity(const PowerModelParams& params, PowerCap cap) {
  return std::max(0.0, capped_capacity(params, cap) - params.c_hypervisor);
}

PowerCap cap_for_capacity(const PowerModelParams& params, double capacity_mhz) {
  if (capacity_mhz < -kMhzEpsilon || capacity_mhz > params.c_peak + kMhzEpsilon) {
    throw DomainError("capacity " + describe_range(capacity_mhz, 0.0, params.c_peak));
  }
  const double c = std::clamp(capacity_mhz, 0.0, params.c_peak);
  return PowerCap{params.p_idle + (params.p_peak - params.p_idle) * (c / params.c_peak)};
}

double power_consumed(const PowerModelParams& params, double utilization) {
  if (!(utilization >= 0.0 && utilization <= 1.0)) {
    throw DomainError("utilization " + describe_range(utilization, 0.0, 1.0));
  }
  return params.p_idle + (params.p_peak - params.p_idle) * utilization;
}

double clamp_cap(const PowerModelParams& params, double watts) {
  return std::clamp(watts, params.p_idle, params.p_peak);
}

RackDeployment plan_rack_deployment(double budget_watts, const RackHostModel& host,
                                    PowerCap cap) {
  if (!(budget_watts > 0.0) || !(cap.watts > 0.0)) {
    throw DomainError("rack planning requires positive budget and cap");
  }
  RackDeployment out;
  out.host_count = static_cast<int>(std::floor(budget_watts / cap.watts + 1e-9));
  const double usable = std::min(cap.watts, host.power.p_peak);
  const double per_host = std::min(capped_capacity(host.power, PowerCap{usable}), host.power.c_peak);
  out.total_cpu_mhz = out.host_count * per_host;
  out.total_memory_mb = out.host_count * host.memory_mb;
  return out;
}

}  // namespace cpc
