#ifndef CPC_REPORT_HPP_
#define CPC_REPORT_HPP_

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "cpc/scenario.hpp"
#include "cpc/simulator.hpp"

namespace cpc {

/// One policy's results. Ratios are relative to the StaticHigh run.
struct ReportRow {
  std::string policy;
  double cpu_payload_ratio = 0.0;
  int vmotions = 0;
  double mem_payload_ratio = 0.0;
  double power_ratio = 0.0;
  double energy_wh = 0.0;
  double average_power_w = 0.0;
  int power_ons = 0;
  int power_offs = 0;
  /// Delivered over demanded CPU per VM group, e.g. "trading".
  std::map<std::string, double> group_satisfaction;
  /// Present only when a timeline was requested.
  std::vector<TimelinePoint> timeline;

  bool operator==(const ReportRow&) const = default;
};

struct ComparisonReport {
  std::string scenario;
  std::vector<ReportRow> rows;

  bool operator==(const ComparisonReport&) const = default;
};

/// A policy together with the scenario it runs on. Lets a baseline use a
/// different deployment, as the 25-host StaticHigh of the scale experiment.
struct ComparisonCase {
  Policy policy;
  Scenario scenario;
};

struct ComparisonOptions {
  bool timeline = false;
  std::optional<double> tick;
  /// Run the cases on separate threads. Results do not depend on it.
  bool parallel = true;
};

/// Runs every case. If no StaticHigh case is present, one is run on the
/// first case's scenario purely as the ratio baseline and is not reported.
ComparisonReport run_comparison(const std::vector<ComparisonCase>& cases, const ComparisonOptions& options = {});
ComparisonReport run_comparison(const Scenario& scenario, const std::vector<Policy>& policies,
                                const ComparisonOptions& options = {});

/// CPC, Static and StaticHigh for a named preset (exp3 pairs StaticHigh with
/// its 25-host deployment).
std::vector<ComparisonCase> preset_cases(const std::string& name);

/// Fixed header: policy,cpu_payload_ratio,vmotions,mem_payload_ratio,
/// power_ratio,energy_wh,average_power_w,power_ons,power_offs, then one
/// satisfaction_<group> column per group in sorted order.
std::string report_csv(const ComparisonReport& report);

/// Long-format timeline: policy,time,host,state,cap_w,power_w,delivered_mhz,demand_mhz.
std::string timeline_csv(const ComparisonReport& report);

std::string report_json(const ComparisonReport& report);
ComparisonReport parse_report_json(std::string_view text);

/// Writes `content` to `path`, or to stdout when path is empty or "-".
void write_output(const std::string& path, const std::string& content);

}  // namespace cpc

#endif  // CPC_REPORT_HPP_
