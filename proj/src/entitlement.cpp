#include "cpc/entitlement.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace cpc {

std::vector<double> divvy(double capacity, const std::vector<DivvyClaim>& claims, DivvyMode mode) {
  const std::size_t n = claims.size();
  std::vector<double> alloc(n, 0.0);
  if (n == 0) return alloc;
  capacity = std::max(0.0, capacity);

  double reserved = 0.0;
  for (const auto& c : claims) reserved += c.reservation;
  if (reserved > capacity + kMhzEpsilon) {
    if (mode == DivvyMode::Strict) {
      std::ostringstream os;
      os << "reservations " << reserved << " exceed capacity " << capacity;
      throw InvariantError(os.str());
    }
    const double scale = reserved > 0.0 ? capacity / reserved : 0.0;
    for (std::size_t i = 0; i < n; ++i) alloc[i] = claims[i].reservation * scale;
    return alloc;
  }

  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < n; ++i) {
    alloc[i] = claims[i].reservation;
    if (claims[i].ceiling > claims[i].reservation) active.push_back(i);
  }
  double remaining = std::max(0.0, capacity - reserved);

  while (!active.empty() && remaining > 0.0) {
    double shares = 0.0;
    for (std::size_t i : active) shares += claims[i].shares;
    std::vector<std::size_t> still;
    double used = 0.0;
    for (std::size_t i : active) {
      const double offer = remaining * claims[i].shares / shares;
      const double room = claims[i].ceiling - alloc[i];
      if (offer >= room) {
        alloc[i] = claims[i].ceiling;
        used += room;
      } else {
        still.push_back(i);
      }
    }
    if (still.size() == active.size()) {
      // Nobody saturates: hand out the remainder and finish.
      for (std::size_t i : active) alloc[i] += remaining * claims[i].shares / shares;
      break;
    }
    remaining -= used;
    active = std::move(still);
  }
  return alloc;
}

DivvyClaim cpu_claim(const VmSpec& vm, const HostSpec& host, double demand_mhz) {
  const double vcpu_cap = vm.vcpus * host.mhz_per_core;
  const double ceiling = std::min({vm.cpu.limit, demand_mhz, vcpu_cap});
  return {vm.cpu.reservation, std::max(vm.cpu.reservation, ceiling), vm.cpu.shares};
}

DivvyClaim mem_claim(const VmSpec& vm, double demand_mb) {
  const double ceiling = std::min({vm.mem.limit, demand_mb, vm.memory_mb});
  return {vm.mem.reservation, std::max(vm.mem.reservation, ceiling), vm.mem.shares};
}

namespace {

EntitlementMap compute_with(const ClusterSnapshot& s,
                            const std::function<DemandSample(const VmId&, const VmEntry&)>& demand_of) {
  EntitlementMap out;
  for (const auto& [hid, vms] : s.placement()) {
    if (vms.empty()) continue;
    const auto& h = s.host(hid);
    if (!h.is_on()) {
      throw InvariantError("host " + hid.str() + " has resident vms but is " +
                           to_string(h.state.power_state));
    }
    std::vector<DivvyClaim> cpu;
    std::vector<DivvyClaim> mem;
    for (const auto& vid : vms) {
      const auto& vm = s.vm(vid);
      const DemandSample d = demand_of(vid, vm);
      cpu.push_back(cpu_claim(vm.spec, h.spec, d.cpu_mhz));
      mem.push_back(mem_claim(vm.spec, d.mem_mb));
    }
    std::vector<double> ce;
    std::vector<double> me;
    try {
      ce = divvy(h.managed_capacity(), cpu);
      me = divvy(h.spec.memory_mb, mem);
    } catch (const InvariantError& e) {
      throw InvariantError("host " + hid.str() + ": " + e.what());
    }
    for (std::size_t i = 0; i < vms.size(); ++i) out[vms[i]] = {ce[i], me[i]};
  }
  return out;
}

}  // namespace

EntitlementMap compute_entitlements(const ClusterSnapshot& snapshot) {
  return compute_with(snapshot, [](const VmId&, const VmEntry& vm) { return vm.estimate; });
}

EntitlementMap compute_entitlements(const ClusterSnapshot& snapshot, const DemandMap& demand) {
  return compute_with(snapshot, [&](const VmId& id, const VmEntry&) {
    auto it = demand.find(id);
    if (it == demand.end()) throw InvariantError("no demand estimate for vm " + id.str());
    return it->second;
  });
}

std::vector<double> cpu_entitlements_on(const ClusterSnapshot& snapshot, const HostId& host,
                                        double managed_mhz, const std::vector<VmId>& vms) {
  const auto& h = snapshot.host(host);
  std::vector<DivvyClaim> claims;
  claims.reserve(vms.size());
  for (const auto& vid : vms) {
    const auto& vm = snapshot.vm(vid);
    claims.push_back(cpu_claim(vm.spec, h.spec, vm.estimate.cpu_mhz));
  }
  try {
    return divvy(managed_mhz, claims);
  } catch (const InvariantError& e) {
    throw InvariantError("host " + host.str() + ": " + e.what());
  }
}

double sum_cpu_entitlement(const ClusterSnapshot& snapshot, const HostId& host,
                           const EntitlementMap& entitlements) {
  double sum = 0.0;
  for (const auto& [id, vm] : snapshot.vms) {
    if (!vm.host || *vm.host != host) continue;
    auto it = entitlements.find(id);
    if (it != entitlements.end()) sum += it->second.cpu_mhz;
  }
  return sum;
}

namespace {

// A host with no capacity but runnable demand is saturated, not idle: its
// entitlements are zero only because there is nothing to hand out.
bool wants_cpu(const ClusterSnapshot& s, const HostId& host) {
  const auto& h = s.host(host);
  for (const auto& [id, vm] : s.vms) {
    if (vm.host == host && cpu_claim(vm.spec, h.spec, vm.estimate.cpu_mhz).ceiling > 0.0) return true;
  }
  return false;
}

}  // namespace

double normalized_entitlement(const ClusterSnapshot& snapshot, const HostId& host,
                              const EntitlementMap& entitlements) {
  const auto& h = snapshot.host(host);
  if (!h.is_on()) {
    throw InvariantError("normalized entitlement of host " + host.str() + " which is " +
                         to_string(h.state.power_state));
  }
  const double cap = h.managed_capacity();
  if (cap <= 0.0) return wants_cpu(snapshot, host) ? 1.0 : 0.0;
  const double sum = sum_cpu_entitlement(snapshot, host, entitlements);
  return sum <= 0.0 ? 0.0 : sum / cap;
}

double normalized_entitlement(const ClusterSnapshot& snapshot, const HostId& host) {
  return normalized_entitlement(snapshot, host, compute_entitlements(snapshot));
}

std::map<HostId, double> normalized_entitlements(const ClusterSnapshot& snapshot,
                                                 const EntitlementMap& entitlements) {
  std::map<HostId, double> sums;
  for (const auto& [id, vm] : snapshot.vms) {
    if (!vm.host) continue;
    auto it = entitlements.find(id);
    if (it != entitlements.end()) sums[*vm.host] += it->second.cpu_mhz;
  }
  std::map<HostId, double> out;
  for (const auto& [id, h] : snapshot.hosts) {
    if (!h.is_on()) continue;
    const double sum = sums[id];
    const double cap = h.managed_capacity();
    if (cap <= 0.0) {
      out[id] = wants_cpu(snapshot, id) ? 1.0 : 0.0;
    } else {
      out[id] = sum <= 0.0 ? 0.0 : sum / cap;
    }
  }
  return out;
}

double population_stddev(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / values.size());
}

double imbalance_metric(const ClusterSnapshot& snapshot, const EntitlementMap& entitlements) {
  const auto n = normalized_entitlements(snapshot, entitlements);
  if (n.empty()) throw InvariantError("imbalance metric needs at least one powered-on host");
  std::vector<double> values;
  values.reserve(n.size());
  for (const auto& [id, v] : n) values.push_back(v);
  return population_stddev(values);
}

double imbalance_metric(const ClusterSnapshot& snapshot) {
  return imbalance_metric(snapshot, compute_entitlements(snapshot));
}

}  // namespace cpc
