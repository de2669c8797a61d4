#include "cpc/presets.hpp"

#include <cstdio>

namespace cpc::presets {

namespace {

constexpr double kGb = 1024.0;

std::string numbered(const std::string& prefix, int n) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d", n);
  return prefix + buf;
}

ScenarioHost on_host(const std::string& id, double cap) {
  return {table1_host(id), PowerState::On, cap};
}

ScenarioVm make_vm(const std::string& id, const std::string& host, int vcpus, double memory_mb,
                   std::vector<DemandSegment> trace, const std::string& group) {
  ScenarioVm v;
  v.spec.id = VmId(id);
  v.spec.vcpus = vcpus;
  v.spec.memory_mb = memory_mb;
  v.spec.demand = DemandTrace(std::move(trace));
  v.spec.group = group;
  v.host = HostId(host);
  return v;
}

/// Three reference hosts at 250 W with ten 1-vCPU 8 GB VMs each.
Scenario three_host_base(const std::string& name, const std::vector<DemandSegment>& normal,
                         const std::vector<DemandSegment>& h3_trace) {
  Scenario s;
  s.name = name;
  s.power_budget = 750.0;
  s.sim.end_time = 2100.0;
  for (int h = 1; h <= 3; ++h) {
    const std::string hid = "h" + std::to_string(h);
    s.hosts.push_back(on_host(hid, 250.0));
    for (int i = 1; i <= 10; ++i) {
      s.vms.push_back(make_vm(numbered(hid + "-vm", i), hid, 1, 8 * kGb, h == 3 ? h3_trace : normal, "default"));
    }
  }
  return s;
}

Scenario exp3_cluster(const std::string& name, int hadoop_hosts, double cap) {
  Scenario s;
  s.name = name;
  s.power_budget = 8000.0;
  s.sim.end_time = 86400.0;
  s.drs.imbalance_threshold = 0.002;
  s.dpm.enabled = false;
  constexpr double kPrime = 43200.0;

  Rule trading_pin{"trading-storage", RuleKind::VmHostPin, {}, {}};
  for (int h = 1; h <= 8; ++h) {
    const std::string hid = numbered("t", h);
    s.hosts.push_back(on_host(hid, cap));
    trading_pin.hosts.push_back(HostId(hid));
    for (int i = 1; i <= 6; ++i) {
      auto v = make_vm(hid + "-trade" + std::to_string(i), hid, 2, 8 * kGb,
                       {{0.0, 0.0, 1 * kGb}, {kPrime, 5200.0, 7 * kGb}}, "trading");
      trading_pin.vms.push_back(v.spec.id);
      s.vms.push_back(std::move(v));
    }
    // Hadoop tasks are not scheduled here while trading is in prime time.
    Rule local{"local-" + hid, RuleKind::VmHostPin, {}, {HostId(hid)}};
    for (int i = 1; i <= 3; ++i) {
      auto v = make_vm(hid + "-hadoop" + std::to_string(i), hid, 2, 16 * kGb,
                       {{0.0, 2500.0, 14 * kGb}, {kPrime, 0.0, 14 * kGb}}, "hadoop");
      local.vms.push_back(v.spec.id);
      s.vms.push_back(std::move(v));
    }
    s.rules.push_back({std::move(local)});
  }
  s.rules.insert(s.rules.begin(), TimedRule{std::move(trading_pin)});

  for (int h = 1; h <= hadoop_hosts; ++h) {
    const std::string hid = numbered("d", h);
    s.hosts.push_back(on_host(hid, cap));
    Rule local{"local-" + hid, RuleKind::VmHostPin, {}, {HostId(hid)}};
    for (int i = 1; i <= 6; ++i) {
      auto v = make_vm(hid + "-hadoop" + std::to_string(i), hid, 2, 16 * kGb, {{0.0, 2500.0, 14 * kGb}}, "hadoop");
      local.vms.push_back(v.spec.id);
      s.vms.push_back(std::move(v));
    }
    s.rules.push_back({std::move(local)});
  }
  return s;
}

}  // namespace

HostSpec table1_host(const std::string& id) {
  HostSpec h;
  h.id = HostId(id);
  h.cores = 12;
  h.mhz_per_core = 2900.0;
  h.memory_mb = 96 * kGb;
  h.power = PowerModelParams{160.0, 320.0, 34800.0, 0.0, 400.0};
  return h;
}

Scenario exp1() {
  auto s = three_host_base("exp1", {{0.0, 1000.0, 2 * kGb}},
                           {{0.0, 1000.0, 2 * kGb}, {750.0, 2400.0, 2 * kGb}, {1400.0, 1000.0, 2 * kGb}});
  s.description = "Headroom rebalancing: the VMs on h3 spike to 2.4 GHz from 750 s to 1400 s.";
  s.dpm.enabled = false;
  return s;
}

Scenario exp2() {
  const std::vector<DemandSegment> trace{{0.0, 1200.0, 2 * kGb}, {750.0, 400.0, 2 * kGb}, {1400.0, 1100.0, 2 * kGb}};
  auto s = three_host_base("exp2", trace, trace);
  s.description = "Standby power reallocation: demand drops at 750 s, then rises again at 1400 s.";
  s.sim.metrics_window = std::make_pair(1400.0, 2100.0);
  return s;
}

Scenario exp3() {
  auto s = exp3_cluster("exp3", 24, 250.0);
  s.description = "Flexible capacity: 8 trading hosts and 24 hadoop hosts at 250 W under an 8000 W budget.";
  return s;
}

Scenario exp3_static_high() {
  auto s = exp3_cluster("exp3-statichigh", 17, 320.0);
  s.description = "Baseline for exp3: 8 trading hosts and 17 hadoop hosts at 320 W.";
  return s;
}

std::vector<RackRow> table2() {
  const RackHostModel host{table1_host("rack").power, 96 * kGb};
  std::vector<RackRow> rows;
  for (double cap : {400.0, 320.0, 285.0, 250.0}) {
    rows.push_back({cap, plan_rack_deployment(8000.0, host, PowerCap{cap})});
  }
  return rows;
}

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{"exp1", "exp2", "exp3", "exp3-statichigh"};
  return names;
}

Scenario by_name(const std::string& name) {
  if (name == "exp1") return exp1();
  if (name == "exp2") return exp2();
  if (name == "exp3") return exp3();
  if (name == "exp3-statichigh") return exp3_static_high();
  throw ScenarioError({"unknown preset '" + name + "'"});
}

}  // namespace cpc::presets
