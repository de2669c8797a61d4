// cpcsim: run scenarios and presets, compare policies, emit CSV or JSON.
//
// Exit codes: 0 success, 1 invalid input (scenario or arguments),
// 2 runtime failure.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cpc/presets.hpp"
#include "cpc/report.hpp"
#include "cpc/scenario_io.hpp"

namespace {

using namespace cpc;

struct Common {
  std::optional<double> tick;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv";
  bool timeline = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--tick", c.tick, "Override the simulation tick in seconds")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", c.seed, "Reserved; simulations are deterministic");
  cmd->add_option("--out", c.out, "Output file (default stdout)");
  cmd->add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  cmd->add_flag("--timeline", c.timeline, "Include the per-tick host timeline");
}

std::string render(const ComparisonReport& report, const Common& c) {
  if (c.format == "json") return report_json(report);
  std::string out = report_csv(report);
  if (c.timeline) out += "\n" + timeline_csv(report);
  return out;
}

std::string table2_csv() {
  std::string out = "cap_watts,hosts,cpu_ghz,memory_gb\n";
  char buf[128];
  for (const auto& row : presets::table2()) {
    std::snprintf(buf, sizeof buf, "%g,%d,%.2f,%.0f\n", row.cap_watts, row.deployment.host_count,
                  row.deployment.total_cpu_mhz / 1000.0, row.deployment.total_memory_mb / 1024.0);
    out += buf;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CloudPowerCap cluster simulator"};
  app.require_subcommand(1);
  Common common;

  std::string scenario_path;
  std::string policy_text = "CPC";
  auto* run_cmd = app.add_subcommand("run", "Simulate one scenario under one policy");
  run_cmd->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  run_cmd->add_option("--policy", policy_text, "CPC, Static, Static(W) or StaticHigh");
  add_common(run_cmd, common);

  std::string preset_name;
  bool emit_scenario_flag = false;
  auto* preset_cmd = app.add_subcommand("preset", "Run or print a built-in experiment");
  preset_cmd->add_option("name", preset_name, "exp1, exp2, exp3, exp3-statichigh or table2")->required();
  preset_cmd->add_flag("--emit-scenario", emit_scenario_flag, "Print the scenario document instead of running it");
  add_common(preset_cmd, common);

  std::vector<std::string> policies{"CPC", "Static", "StaticHigh"};
  std::string baseline_path;
  auto* compare_cmd = app.add_subcommand("compare", "Simulate one scenario under several policies");
  compare_cmd->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  compare_cmd->add_option("--policies", policies, "Policies to run")->expected(1, -1);
  compare_cmd->add_option("--baseline-scenario", baseline_path, "Scenario for the StaticHigh run");
  add_common(compare_cmd, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const ComparisonOptions opts{common.timeline, common.tick, true};
    if (*run_cmd) {
      const Scenario s = load_scenario(scenario_path);
      const auto report = run_comparison(s, {Policy::parse(policy_text)}, opts);
      write_output(common.out, render(report, common));
    } else if (*preset_cmd) {
      if (preset_name == "table2") {
        write_output(common.out, table2_csv());
      } else if (emit_scenario_flag) {
        write_output(common.out, emit_scenario(presets::by_name(preset_name)));
      } else {
        std::vector<ComparisonCase> cases;
        if (preset_name == "exp3-statichigh") {
          cases = {{Policy{PolicyKind::StaticHigh, std::nullopt}, presets::exp3_static_high()}};
        } else {
          cases = preset_cases(preset_name);
        }
        write_output(common.out, render(run_comparison(cases, opts), common));
      }
    } else if (*compare_cmd) {
      const Scenario s = load_scenario(scenario_path);
      std::vector<ComparisonCase> cases;
      for (const auto& p : policies) {
        const Policy policy = Policy::parse(p);
        cases.push_back({policy, s});
        if (policy.kind == PolicyKind::StaticHigh && !baseline_path.empty()) {
          cases.back().scenario = load_scenario(baseline_path);
        }
      }
      write_output(common.out, render(run_comparison(cases, opts), common));
    }
  } catch (const ScenarioError& e) {
    std::cerr << "cpcsim: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "cpcsim: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
