#ifndef CPC_ENTITLEMENT_HPP_
#define CPC_ENTITLEMENT_HPP_

#include <map>
#include <vector>

#include "cpc/cluster.hpp"

namespace cpc {

/// One consumer's request in a proportional-share divvy.
struct DivvyClaim {
  double reservation = 0.0;
  /// Most the consumer may receive; never below the reservation.
  double ceiling = 0.0;
  double shares = 1.0;
};

enum class DivvyMode {
  /// Reservations exceeding capacity are an error.
  Strict,
  /// Reservations exceeding capacity are scaled down proportionally.
  ScaleReservations,
};

/// Water-filling divvy: everyone starts at its reservation, the remainder is
/// split by shares, and consumers that hit their ceiling hand their excess
/// back to the rest. Throws InvariantError in Strict mode on overcommit.
std::vector<double> divvy(double capacity, const std::vector<DivvyClaim>& claims,
                          DivvyMode mode = DivvyMode::Strict);

struct Entitlement {
  double cpu_mhz = 0.0;
  double mem_mb = 0.0;
};

using EntitlementMap = std::map<VmId, Entitlement>;
using DemandMap = std::map<VmId, DemandSample>;

DivvyClaim cpu_claim(const VmSpec& vm, const HostSpec& host, double demand_mhz);
DivvyClaim mem_claim(const VmSpec& vm, double demand_mb);

/// Entitlements for every placed VM using the estimates stored in the snapshot.
EntitlementMap compute_entitlements(const ClusterSnapshot& snapshot);

/// Same, with explicit demand estimates; every placed VM must have one.
EntitlementMap compute_entitlements(const ClusterSnapshot& snapshot, const DemandMap& demand);

/// CPU entitlements of `vms` if they shared `host` with `managed_mhz` of
/// capacity. Uses the snapshot's demand estimates.
std::vector<double> cpu_entitlements_on(const ClusterSnapshot& snapshot, const HostId& host,
                                        double managed_mhz, const std::vector<VmId>& vms);

double sum_cpu_entitlement(const ClusterSnapshot& snapshot, const HostId& host,
                           const EntitlementMap& entitlements);

/// Sum of CPU entitlements on `host` over its managed capacity. An empty host
/// reads 0. Throws InvariantError for a host that is not powered on.
double normalized_entitlement(const ClusterSnapshot& snapshot, const HostId& host,
                              const EntitlementMap& entitlements);
double normalized_entitlement(const ClusterSnapshot& snapshot, const HostId& host);

/// Normalized entitlement of each powered-on host.
std::map<HostId, double> normalized_entitlements(const ClusterSnapshot& snapshot,
                                                 const EntitlementMap& entitlements);

double population_stddev(const std::vector<double>& values);

/// Population standard deviation of normalized entitlements over powered-on
/// hosts. Throws InvariantError if no host is on.
double imbalance_metric(const ClusterSnapshot& snapshot, const EntitlementMap& entitlements);
double imbalance_metric(const ClusterSnapshot& snapshot);

}  // namespace cpc

#endif  // CPC_ENTITLEMENT_HPP_
