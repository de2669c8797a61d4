#ifndef CPC_PRESETS_HPP_
#define CPC_PRESETS_HPP_

#include <string>
#include <vector>

#include "cpc/cluster.hpp"
#include "cpc/power_model.hpp"
#include "cpc/scenario.hpp"

namespace cpc::presets {

/// The 12-core 2.9 GHz, 96 GB host: 160 W idle, 320 W peak, 400 W nameplate.
HostSpec table1_host(const std::string& id);

/// Three hosts at 250 W each; the VMs on host h3 spike to 2.4 GHz
/// between 750 s and 1400 s.
Scenario exp1();

/// Three hosts at 250 W each; demand drops at 750 s so DPM consolidates,
/// then rises at 1400 s. Power is measured from the rise to the end.
Scenario exp2();

/// 32 hosts at 250 W under an 8000 W budget. Eight hosts run trading VMs
/// that are busy in the second half of the day; the rest run pinned
/// hadoop VMs.
Scenario exp3();

/// The 25-host deployment the StaticHigh baseline of exp3 runs on.
Scenario exp3_static_high();

struct RackRow {
  double cap_watts = 0.0;
  RackDeployment deployment;
};

/// Host counts, CPU and memory for an 8000 W rack at 400/320/285/250 W caps.
std::vector<RackRow> table2();

/// Names accepted by `by_name` (table2 excluded: it is not a scenario).
const std::vector<std::string>& scenario_names();

/// Throws ScenarioError for unknown names.
Scenario by_name(const std::string& name);

}  // namespace cpc::presets

#endif  // CPC_PRESETS_HPP_
