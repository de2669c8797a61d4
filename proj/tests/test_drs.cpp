#include <algorithm>

#include "cpc/drs.hpp"
#include "cpc/entitlement.hpp"
#include "cpc/powercap.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace cpc;
using namespace cpc::testing;

namespace {

ClusterSnapshot table1_cluster(int n_hosts, double cap, double vm_demand, int vms_per_host) {
  ClusterSnapshot s;
  s.power_budget = n_hosts * cap;
  for (int h = 0; h < n_hosts; ++h) {
    const std::string hid = "h" + std::to_string(h);
    add(s, table1_host(hid, cap));
    for (int v = 0; v < vms_per_host; ++v) {
      add(s, vm(hid + "v" + std::to_string(v), hid, vm_demand, 0, 1, 8192));
      s.vm(V(hid + "v" + std::to_string(v))).estimate.mem_mb = 2048;
    }
  }
  return s;
}

}  // namespace

TEST_CASE("balance_entitlements moves one VM in the headroom walkthrough") {
  ClusterSnapshot s;
  s.power_budget = 960;
  add(s, small_host("A", 480));
  add(s, small_host("B", 480));
  add(s, vm("a1", "A", 1800));
  for (int i = 0; i < 3; ++i) add(s, vm("b" + std::to_string(i), "B", 1200));
  const auto r = balance_entitlements(s, DrsConfig{});
  REQUIRE(r.migrations.size() == 1);
  CHECK(r.migrations[0].src == H("B"));
  CHECK(r.migrations[0].dst == H("A"));
  const auto e = compute_entitlements(r.snapshot);
  CHECK(sum_cpu_entitlement(r.snapshot, H("A"), e) == doctest::Approx(3000));
  CHECK(sum_cpu_entitlement(r.snapshot, H("B"), e) == doctest::Approx(2400));
  CHECK(r.final_imbalance < r.initial_imbalance);
}

TEST_CASE("balance_entitlements leaves balanced and trivial clusters alone") {
  CHECK(balance_entitlements(table1_cluster(3, 250, 1000, 10), DrsConfig{}).migrations.empty());
  ClusterSnapshot s;
  s.power_budget = 960;
  add(s, small_host("A", 480));
  add(s, vm("x", "A", 1000));
  CHECK(balance_entitlements(s, DrsConfig{}).migrations.empty());
}

TEST_CASE("balance_entitlements honors max moves, pins and the cost filter") {
  auto s = table1_cluster(2, 250, 100, 0);
  for (int i = 0; i < 12; ++i) add(s, vm("v" + std::to_string(i), "h0", 1500, 0, 1, 8192));
  DrsConfig cfg;
  cfg.max_moves_per_pass = 2;
  CHECK(balance_entitlements(s, cfg).migrations.size() == 2);

  cfg.max_moves_per_pass = 20;
  const auto full = balance_entitlements(s, cfg);
  CHECK(full.migrations.size() == 6);
  for (std::size_t k = 1; k < full.trajectory.size(); ++k) CHECK(full.trajectory[k] < full.trajectory[k - 1]);

  auto pinned = s;
  std::vector<VmId> all;
  for (const auto& [id, v] : pinned.vms) all.push_back(id);
  pinned.rules.push_back({"pin", RuleKind::VmHostPin, all, {H("h0")}});
  CHECK(balance_entitlements(pinned, cfg).migrations.empty());

  cfg.migration_cost.risk_factor = 1e9;
  CHECK(balance_entitlements(s, cfg).migrations.empty());
}

TEST_CASE("constraint correction in fixed and flexible modes") {
  ClusterSnapshot s;
  s.power_budget = 960;
  add(s, small_host("A", 480));
  add(s, small_host("B", 480));
  add(s, vm("x", "A", 1000, 1000));
  add(s, vm("y", "A", 1000, 1000));
  CHECK(correct_constraints(s).migrations.empty());

  s.rules.push_back({"apart", RuleKind::VmVmAntiAffinity, {V("x"), V("y")}, {}});
  const auto fixed = correct_constraints(s);
  REQUIRE(fixed.migrations.size() == 1);
  CHECK(fixed.migrations[0].vm == V("y"));
  CHECK(fixed.unresolved.empty());
  CHECK(rule_violations(fixed.corrected).empty());
  CHECK(fixed.required_caps.at(H("A")) == 480);

  // Combined reservations above any host's peak cannot be co-located.
  ClusterSnapshot t;
  t.power_budget = 1200;
  add(t, small_host("A", 600));
  add(t, small_host("B", 600));
  add(t, vm("p", "A", 3500, 3500));
  add(t, vm("q", "B", 3500, 3500));
  t.rules.push_back({"together", RuleKind::VmVmAffinity, {V("p"), V("q")}, {}});
  const auto flex = get_flexible_power(t);
  const auto c = correct_constraints(t, &flex.snapshot);
  CHECK(c.migrations.empty());
  REQUIRE(c.unresolved.size() == 1);
  CHECK(c.unresolved[0].rule_name == "together");
}

TEST_CASE("constraint correction resolves host pins") {
  ClusterSnapshot s;
  s.power_budget = 1440;
  for (const char* id : {"A", "B", "C"}) add(s, small_host(id, 480));
  add(s, vm("x", "A", 500));
  add(s, vm("y", "B", 3000));
  s.rules.push_back({"pin", RuleKind::VmHostPin, {V("x")}, {H("B"), H("C")}});
  const auto c = correct_constraints(s);
  REQUIRE(c.migrations.size() == 1);
  CHECK(c.migrations[0].dst == H("C"));  // C is less loaded than B
}

TEST_CASE("dpm consolidates a lightly loaded cluster") {
  auto s = table1_cluster(3, 250, 400, 10);
  s.time = 900;
  const auto r = dpm_evaluate(s, DpmConfig{}, fixed_cap_hooks(250.0));
  REQUIRE(r.power_off.has_value());
  CHECK(r.evacuations.size() == 10);
  const auto t = apply_actions(s, r.plan);
  CHECK(t.host(*r.power_off).state.power_state == PowerState::Off);
  CHECK(t.powered_on_hosts().size() == 2);

  const auto cpc = dpm_evaluate(s, DpmConfig{}, cloudpowercap_hooks());
  const auto u = apply_actions(s, cpc.plan);
  for (const auto& h : u.powered_on_hosts()) CHECK(u.host(h).state.cap.watts == doctest::Approx(320));
}

TEST_CASE("dpm respects the evaluation window and the middle band") {
  auto s = table1_cluster(3, 250, 400, 10);
  s.time = 900;
  s.host(H("h1")).state.last_power_change = 500;
  CHECK(dpm_evaluate(s, DpmConfig{}, fixed_cap_hooks(250.0)).plan.empty());

  auto mid = table1_cluster(3, 250, 1200, 10);
  mid.time = 900;
  CHECK(dpm_evaluate(mid, DpmConfig{}, fixed_cap_hooks(250.0)).plan.empty());
}

TEST_CASE("dpm power-on depends on the available capacity") {
  // Two hosts on, one off. 15 VMs at 1100 MHz per host.
  auto s = table1_cluster(2, 250, 1100, 15);
  auto off = table1_host("h2", 0);
  off.state.power_state = PowerState::Off;
  add(s, off);
  s.power_budget = 750;
  s.time = 1500;
  const auto r = dpm_evaluate(s, DpmConfig{}, fixed_cap_hooks(250.0));
  CHECK(r.power_on == H("h2"));
  const auto t = apply_actions(s, r.plan);
  CHECK(t.host(H("h2")).state.cap.watts == doctest::Approx(250));

  // With both survivors at 320 W the same load sits below the high threshold.
  for (const char* id : {"h0", "h1"}) s.host(H(id)).state.cap.watts = 320;
  s.power_budget = 750;
  CHECK_FALSE(dpm_evaluate(s, DpmConfig{}, cloudpowercap_hooks()).power_on.has_value());
}

TEST_CASE("dpm never strands reservations") {
  auto s = table1_cluster(2, 250, 100, 0);
  add(s, vm("r0", "h0", 100, 15000, 12, 8192));
  add(s, vm("r1", "h1", 100, 15000, 12, 8192));
  s.time = 5000;
  const auto r = dpm_evaluate(s, DpmConfig{}, fixed_cap_hooks(250.0));
  CHECK_FALSE(r.power_off.has_value());
}
