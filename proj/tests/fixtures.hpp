#ifndef CPC_TESTS_FIXTURES_HPP_
#define CPC_TESTS_FIXTURES_HPP_

#include <string>

#include "cpc/cluster.hpp"

namespace cpc::testing {

/// Host with `cores` x `mhz` of capacity and a linear idle/peak model.
inline HostEntry host(const std::string& id, double p_idle, double p_peak, double c_peak,
                      double cap_watts, double memory_mb = 65536.0, int cores = 1) {
  HostEntry h;
  h.spec.id = HostId(id);
  h.spec.cores = cores;
  h.spec.mhz_per_core = c_peak / cores;
  h.spec.memory_mb = memory_mb;
  h.spec.power = PowerModelParams{p_idle, p_peak, c_peak, 0.0, std::nullopt};
  h.state.power_state = PowerState::On;
  h.state.cap = PowerCap{cap_watts};
  return h;
}

/// Zero-idle 600 W host with 6 GHz at peak, as in the two-host walkthroughs.
inline HostEntry small_host(const std::string& id, double cap_watts) {
  return host(id, 0.0, 600.0, 6000.0, cap_watts, 65536.0, 6);
}

/// 12 x 2.9 GHz, 96 GB, 160/320 W.
inline HostEntry table1_host(const std::string& id, double cap_watts) {
  auto h = host(id, 160.0, 320.0, 34800.0, cap_watts, 96.0 * 1024, 12);
  h.spec.power.p_nameplate = 400.0;
  return h;
}

inline VmEntry vm(const std::string& id, const std::string& host_id, double cpu_demand,
                  double cpu_reservation = 0.0, int vcpus = 8, double memory_mb = 1024.0) {
  VmEntry v;
  v.spec.id = VmId(id);
  v.spec.vcpus = vcpus;
  v.spec.memory_mb = memory_mb;
  v.spec.cpu.reservation = cpu_reservation;
  v.spec.demand = DemandTrace({{0.0, cpu_demand, memory_mb / 2}});
  if (!host_id.empty()) v.host = HostId(host_id);
  v.estimate = {cpu_demand, memory_mb / 2};
  return v;
}

inline void add(ClusterSnapshot& s, HostEntry h) { s.hosts[h.spec.id] = std::move(h); }
inline void add(ClusterSnapshot& s, VmEntry v) { s.vms[v.spec.id] = std::move(v); }

inline HostId H(const std::string& s) { return HostId(s); }
inline VmId V(const std::string& s) { return VmId(s); }

}  // namespace cpc::testing

#endif  // CPC_TESTS_FIXTURES_HPP_
