#include <cmath>

#include "cpc/drs.hpp"
#include "cpc/entitlement.hpp"
#include "cpc/powercap.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace cpc;
using namespace cpc::testing;

namespace {

// A holds VM1 (2.4 GHz reserved) and VM2 (1.2 GHz), B holds VM3 (3.0 GHz);
// a new affinity rule wants VM2 next to VM3.
ClusterSnapshot affinity_walkthrough() {
  ClusterSnapshot s;
  s.power_budget = 960;
  add(s, small_host("A", 480));
  add(s, small_host("B", 480));
  add(s, vm("VM1", "A", 2400, 2400));
  add(s, vm("VM2", "A", 1200, 1200));
  add(s, vm("VM3", "B", 3000, 3000));
  s.rules.push_back({"join", RuleKind::VmVmAffinity, {V("VM2"), V("VM3")}, {}});
  return s;
}

ClusterSnapshot with_caps(ClusterSnapshot s, const CapMap& caps) {
  for (const auto& [id, w] : caps) s.host(id).state.cap.watts = w;
  return s;
}

double sum_caps(const CapMap& caps) {
  double t = 0;
  for (const auto& [id, w] : caps) t += w;
  return t;
}

}  // namespace

TEST_CASE("get_flexible_power reserves caps for reservations") {
  ClusterSnapshot s;
  s.power_budget = 960;
  add(s, small_host("A", 480));
  add(s, small_host("B", 480));
  add(s, vm("VM1", "A", 2400, 2400));
  add(s, vm("VM2", "B", 1200, 1200));
  add(s, vm("VM3", "B", 3000, 3000));
  const auto f = get_flexible_power(s);
  CHECK(f.reserved_caps.at(H("A")) == doctest::Approx(240));
  CHECK(f.reserved_caps.at(H("B")) == doctest::Approx(420));
  CHECK(f.unreserved_budget == doctest::Approx(300));
  CHECK(f.snapshot.host(H("B")).state.cap.watts == doctest::Approx(420));

  ClusterSnapshot empty;
  empty.power_budget = 750;
  add(empty, table1_host("h1", 250));
  add(empty, table1_host("h2", 250));
  auto h3 = table1_host("h3", 0);
  h3.state.power_state = PowerState::Off;
  add(empty, h3);
  const auto g = get_flexible_power(empty);
  CHECK(g.reserved_caps.at(H("h1")) == doctest::Approx(160));
  CHECK(g.reserved_caps.at(H("h3")) == 0);
  CHECK(g.unreserved_budget == doctest::Approx(430));
}

TEST_CASE("constraint correction raises the destination's required cap") {
  const auto s = affinity_walkthrough();
  const auto flex = get_flexible_power(s);
  const auto c = correct_constraints(s, &flex.snapshot);
  REQUIRE(c.migrations.size() == 1);
  CHECK(c.migrations[0].vm == V("VM2"));
  CHECK(c.migrations[0].dst == H("B"));
  CHECK(c.required_caps.at(H("A")) == doctest::Approx(240));
  CHECK(c.required_caps.at(H("B")) == doctest::Approx(600));
  CHECK(c.unresolved.empty());
}

TEST_CASE("redivvy reproduces the affinity walkthrough") {
  const auto s = affinity_walkthrough();
  const auto f = with_caps(s, {{H("A"), 240}, {H("B"), 600}});
  const auto r = redivvy_power_cap(s, f);
  CHECK(r.feasible);
  CHECK(std::abs(r.caps.at(H("A")) - 360) <= 1e-6);
  CHECK(std::abs(r.caps.at(H("B")) - 600) <= 1e-6);
  // Decrease on A precedes the increase on B.
  REQUIRE(r.plan.size() == 2);
  CHECK(std::get<SetPowerCap>(r.plan.actions()[0].kind).host == H("A"));
  CHECK(r.plan.actions()[1].prerequisites == std::vector<ActionId>{0});
  CHECK_NOTHROW(apply_actions(s, r.plan));
}

TEST_CASE("redivvy conserves the budget and is idle when nothing is raised") {
  ClusterSnapshot s;
  s.power_budget = 900;
  for (const char* id : {"a", "b", "c"}) add(s, small_host(id, 300));
  CHECK(redivvy_power_cap(s, s).plan.empty());

  const auto f = with_caps(s, {{H("a"), 360}, {H("b"), 240}, {H("c"), 240}});
  const auto r = redivvy_power_cap(s, f);
  CHECK(r.caps.at(H("a")) == doctest::Approx(360));
  CHECK(r.caps.at(H("b")) == doctest::Approx(270));
  CHECK(r.caps.at(H("c")) == doctest::Approx(270));
  CHECK(sum_caps(r.caps) == doctest::Approx(900));

  const auto f2 = with_caps(s, {{H("a"), 390}, {H("b"), 240}, {H("c"), 240}});
  const auto amended = redivvy_power_cap(s, f2);
  CHECK(sum_caps(amended.caps) == doctest::Approx(900));
  CHECK(amended.caps.at(H("b")) == doctest::Approx(255));
  RedivvyOptions literal;
  literal.literal_ratio = true;
  const auto printed = redivvy_power_cap(s, f2, literal);
  CHECK(printed.caps.at(H("b")) == doctest::Approx(285));
  CHECK_FALSE(printed.feasible);
}

TEST_CASE("redivvy draws on free budget when slack runs out") {
  ClusterSnapshot s;
  s.power_budget = 1000;
  add(s, small_host("a", 300));
  add(s, small_host("b", 300));
  const auto f = with_caps(s, {{H("a"), 550}, {H("b"), 250}});
  const auto r = redivvy_power_cap(s, f);
  CHECK(r.feasible);
  CHECK(r.caps.at(H("a")) >= 550 - 1e-6);
  CHECK(sum_caps(r.caps) <= 1000 + 1e-6);

  s.power_budget = 620;
  const auto g = with_caps(s, {{H("a"), 600}, {H("b"), 290}});
  CHECK_FALSE(redivvy_power_cap(s, g).feasible);
}

TEST_CASE("balance_power_cap reproduces the headroom walkthrough") {
  ClusterSnapshot s;
  s.power_budget = 960;
  add(s, small_host("A", 480));
  add(s, small_host("B", 480));
  add(s, vm("a1", "A", 1800));
  for (int i = 0; i < 3; ++i) add(s, vm("b" + std::to_string(i), "B", 1200));
  const auto r = balance_power_cap(s, 0.05);
  CHECK(std::abs(r.caps.at(H("A")) - 360) <= 1e-6);
  CHECK(std::abs(r.caps.at(H("B")) - 600) <= 1e-6);
  CHECK(normalized_entitlement(r.snapshot, H("A")) == doctest::Approx(0.5));
  CHECK(normalized_entitlement(r.snapshot, H("B")) == doctest::Approx(0.6));
  CHECK_NOTHROW(apply_actions(s, r.plan));

  const auto again = balance_power_cap(r.snapshot, 0.05);
  CHECK(again.plan.empty());
}

TEST_CASE("balance_power_cap stops when the busiest host is at peak") {
  ClusterSnapshot s;
  s.power_budget = 1200;
  add(s, small_host("A", 600));
  add(s, small_host("B", 600));
  add(s, vm("a", "A", 6000));
  add(s, vm("b", "B", 600));
  const auto r = balance_power_cap(s, 0.05);
  CHECK(r.plan.empty());
  CHECK(r.final_imbalance == doctest::Approx(r.initial_imbalance));
}

TEST_CASE("balanced cluster needs no cap changes") {
  ClusterSnapshot s;
  s.power_budget = 960;
  add(s, small_host("A", 480));
  add(s, small_host("B", 480));
  add(s, vm("a", "A", 2000));
  add(s, vm("b", "B", 2000));
  CHECK(balance_power_cap(s, 0.05).plan.empty());
}

TEST_CASE("power-on redistribution splits the budget") {
  ClusterSnapshot s;
  s.power_budget = 960;
  add(s, small_host("A", 600));
  auto b = small_host("B", 0);
  b.state.power_state = PowerState::Off;
  add(s, b);
  add(s, vm("a", "A", 2400));
  const auto g = redistribute_for_power_on(s, H("B"), DpmConfig{});
  CHECK(g.feasible);
  CHECK(std::abs(g.cap_watts - 480) <= 1e-6);
  REQUIRE(g.plan.size() == 1);
  CHECK(std::abs(std::get<SetPowerCap>(g.plan.actions()[0].kind).watts - 480) <= 1e-6);

  s.power_budget = 1300;
  const auto rich = redistribute_for_power_on(s, H("B"), DpmConfig{});
  CHECK(rich.cap_watts == doctest::Approx(600));
  CHECK(rich.plan.empty());
}

TEST_CASE("power-on redistribution never overloads donors") {
  ClusterSnapshot s;
  s.power_budget = 700;
  add(s, small_host("A", 600));
  auto b = small_host("B", 0);
  b.state.power_state = PowerState::Off;
  add(s, b);
  // 0.81 x 6000 = 4860 MHz of demand keeps A exactly at the high threshold.
  add(s, vm("a", "A", 4860));
  const auto g = redistribute_for_power_on(s, H("B"), DpmConfig{});
  CHECK(g.plan.empty());
  CHECK(g.cap_watts == doctest::Approx(100));
}

TEST_CASE("power-off reclamation tops up the survivors") {
  ClusterSnapshot s;
  s.power_budget = 750;
  add(s, table1_host("h1", 250));
  add(s, table1_host("h2", 250));
  auto h3 = table1_host("h3", 0);
  h3.state.power_state = PowerState::Off;
  add(s, h3);
  const auto plan = reclaim_on_power_off(s, H("h3"));
  const auto t = apply_actions(s, plan);
  CHECK(std::abs(t.host(H("h1")).state.cap.watts - 320) <= 1e-6);
  CHECK(std::abs(t.host(H("h2")).state.cap.watts - 320) <= 1e-6);
  CHECK(t.power_budget - t.cap_sum() == doctest::Approx(110));

  ClusterSnapshot alone;
  alone.power_budget = 400;
  auto only = table1_host("x", 0);
  only.state.power_state = PowerState::Off;
  add(alone, only);
  CHECK(reclaim_on_power_off(alone, H("x")).empty());
}

TEST_CASE("transition plan orders decreases, increases and migrations") {
  const auto s = affinity_walkthrough();
  const auto t = build_transition_plan(s, {{H("A"), 360}, {H("B"), 600}},
                                       {MigrateVm{V("VM2"), H("A"), H("B")}});
  CHECK(t.feasible);
  REQUIRE(t.plan.size() == 3);
  CHECK(std::holds_alternative<SetPowerCap>(t.plan.actions()[0].kind));
  CHECK(t.plan.actions()[1].prerequisites == std::vector<ActionId>{0});
  CHECK(std::holds_alternative<MigrateVm>(t.plan.actions()[2].kind));
  CHECK(t.plan.actions()[2].prerequisites == std::vector<ActionId>{1});
  const auto r = apply_actions(s, t.plan);
  CHECK(r.vm(V("VM2")).host == H("B"));
  CHECK(rule_violations(r).empty());
}

TEST_CASE("transition plan needs several layers when caps are tight") {
  // B's target is below its current reservations: it can only shed part of
  // its cap before b2 leaves, so the plan needs a second round of changes.
  ClusterSnapshot s;
  s.power_budget = 900;
  add(s, small_host("A", 300));
  add(s, small_host("B", 600));
  add(s, vm("b1", "B", 2000, 2000));
  add(s, vm("b2", "B", 2500, 2500));
  const auto t = build_transition_plan(s, {{H("A"), 550}, {H("B"), 350}},
                                       {MigrateVm{V("b2"), H("B"), H("A")}});
  CHECK(t.feasible);
  const auto r = apply_actions(s, t.plan);
  CHECK(r.host(H("A")).state.cap.watts == doctest::Approx(550));
  CHECK(r.host(H("B")).state.cap.watts == doctest::Approx(350));
  CHECK(r.vm(V("b2")).host == H("A"));
}
