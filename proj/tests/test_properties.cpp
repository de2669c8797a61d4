#include <cmath>
#include <random>

#include "checks.hpp"
#include "cpc/powercap.hpp"
#include "doctest.h"

using namespace cpc;

// Smaller runs of the randomized checks the acceptance binary does at full size.

namespace {

void report(const checks::Outcome& o) {
  CHECK(o.cases > 0);
  for (const auto& f : o.failures) FAIL_CHECK(f);
}

}  // namespace

TEST_CASE("every pipeline step keeps the cluster valid") {
  std::mt19937_64 rng(0x51);
  checks::Outcome out;
  for (int i = 0; i < 200; ++i) {
    const auto s = checks::random_cluster(rng);
    for (const char* p : {"CPC", "Static", "StaticHigh"})
      checks::check_pipeline(s, Policy::parse(p), rng, out, "cluster " + std::to_string(i) + " " + p);
  }
  report(out);
}

TEST_CASE("power balancing ends at a pairwise optimum") {
  std::mt19937_64 rng(0x52);
  checks::Outcome out;
  for (int i = 0; i < 200; ++i) checks::check_power_balance(checks::random_cluster(rng), 1e-6, out, std::to_string(i));
  report(out);
}

TEST_CASE("simulation is deterministic on random scenarios") {
  std::mt19937_64 rng(0x53);
  checks::Outcome out;
  const char* policies[] = {"CPC", "Static", "StaticHigh"};
  for (int i = 0; i < 30; ++i)
    checks::check_determinism(checks::random_scenario(rng), Policy::parse(policies[i % 3]), out, std::to_string(i));
  report(out);
}

TEST_CASE("oracle normalized entitlement") {
  CHECK(checks::oracle_normalized(500, 1000) == 0.5);
  CHECK(checks::oracle_normalized(2000, 1000) == 1.0);
  CHECK(checks::oracle_normalized(0, 1000) == 0.0);
}

TEST_CASE("balancer reaches the exhaustive minimum on small grids") {
  std::mt19937_64 rng(0x54);
  for (int i = 0; i < 200; ++i) {
    CAPTURE(i);
    const auto s = checks::random_grid_cluster(rng, 2 + i % 2);
    const double got = balance_power_cap(s, 0.0).final_imbalance;
    const double want = checks::brute_force_min_imbalance(s);
    CHECK(std::abs(got - want) <= 1e-3);
  }
}
