// Acceptance run: one PASS/FAIL line per criterion, each with its wall time
// against the allowed budget. Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "checks.hpp"
#include "cpc/drs.hpp"
#include "cpc/power_model.hpp"
#include "cpc/powercap.hpp"
#include "cpc/presets.hpp"
#include "cpc/report.hpp"
#include "cpc/simulator.hpp"

using namespace cpc;

namespace {

struct Verdict {
  bool ok = true;
  std::vector<std::string> notes;

  void expect(bool cond, const std::string& what) {
    if (!cond) ok = false;
    notes.push_back(std::string(cond ? "" : "!") + what);
  }
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

bool within(double x, double target, double tol) { return std::abs(x - target) <= tol; }

const ReportRow& row(const ComparisonReport& r, PolicyKind kind) {
  for (const auto& x : r.rows) {
    if (Policy::parse(x.policy).kind == kind) return x;
  }
  throw std::runtime_error("missing row");
}

HostEntry worked_host(const std::string& id, double cap) {
  HostEntry h;
  h.spec.id = HostId(id);
  h.spec.cores = 6;
  h.spec.mhz_per_core = 1000.0;
  h.spec.memory_mb = 65536.0;
  h.spec.power = PowerModelParams{0.0, 600.0, 6000.0, 0.0, std::nullopt};
  h.state.cap = PowerCap{cap};
  if (cap == 0.0) h.state.power_state = PowerState::Off;
  return h;
}

VmEntry worked_vm(const std::string& id, const std::string& host, double demand, double reservation = 0.0) {
  VmEntry v;
  v.spec.id = VmId(id);
  v.spec.vcpus = 8;
  v.spec.memory_mb = 1024.0;
  v.spec.cpu.reservation = reservation;
  v.spec.demand = DemandTrace({{0.0, demand, 512.0}});
  v.host = HostId(host);
  v.estimate = {demand, 512.0};
  return v;
}

template <typename T>
void put(ClusterSnapshot& s, T entry) {
  if constexpr (std::is_same_v<T, HostEntry>) {
    s.hosts[entry.spec.id] = std::move(entry);
  } else {
    s.vms[entry.spec.id] = std::move(entry);
  }
}

// ---- criteria ----

Verdict table2() {
  Verdict v;
  const RackHostModel host{presets::table1_host("x").power, 96.0 * 1024};
  struct Want {
    double cap;
    int hosts;
    double ghz;
    double gb;
  };
  for (const Want& w : {Want{400, 20, 696, 1920}, Want{320, 25, 870, 2400}, Want{285, 28, 761, 2688},
                        Want{250, 32, 626, 3072}}) {
    const auto d = plan_rack_deployment(8000.0, host, PowerCap{w.cap});
    const double ghz = d.total_cpu_mhz / 1000.0;
    const double gb = d.total_memory_mb / 1024.0;
    v.expect(d.host_count == w.hosts && gb == w.gb && within(ghz, w.ghz, 1.0),
             fmt("%gW:", w.cap) + std::to_string(d.host_count) + "/" + fmt("%.2f", ghz) + "GHz/" + fmt("%g", gb) + "GB");
  }
  return v;
}

Verdict power_identities() {
  Verdict v;
  std::mt19937_64 rng(20241016);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int bad = 0;
  constexpr int kSets = 10000;
  for (int t = 0; t < kSets; ++t) {
    PowerModelParams p;
    p.p_idle = 500.0 * u(rng);
    p.p_peak = p.p_idle + 1.0 + 1000.0 * u(rng);
    p.c_peak = 100.0 + 200000.0 * u(rng);
    p.c_hypervisor = 0.1 * p.c_peak * u(rng);
    const double tol = 1e-6 * p.c_peak;
    bool ok = std::abs(capped_capacity(p, PowerCap{p.p_idle})) <= tol &&
              std::abs(capped_capacity(p, PowerCap{p.p_peak}) - p.c_peak) <= tol &&
              std::abs(power_consumed(p, 0.0) - p.p_idle) <= 1e-9 * p.p_peak &&
              std::abs(power_consumed(p, 1.0) - p.p_peak) <= 1e-9 * p.p_peak;
    double prev = -1.0;
    for (int k = 0; k <= 16 && ok; ++k) {
      const double c = p.c_peak * u(rng);
      ok = std::abs(capped_capacity(p, cap_for_capacity(p, c)) - c) <= tol;
      const double cap = p.p_idle + (p.p_peak - p.p_idle) * k / 16.0;
      const double cc = capped_capacity(p, PowerCap{cap});
      ok = ok && cc >= prev && std::abs(cc - p.c_peak * k / 16.0) <= tol;
      prev = cc;
    }
    if (!ok) ++bad;
  }
  v.expect(bad == 0, std::to_string(kSets) + " sets, " + std::to_string(bad) + " failing");
  return v;
}

Verdict worked_scenarios() {
  Verdict v;
  constexpr double kTol = 1e-6;

  {  // redivvy S=(480,480), F=(240,600)
    ClusterSnapshot s;
    s.power_budget = 960;
    put(s, worked_host("A", 480));
    put(s, worked_host("B", 480));
    put(s, worked_vm("VM1", "A", 2400, 2400));
    put(s, worked_vm("VM2", "A", 1200, 1200));
    put(s, worked_vm("VM3", "B", 3000, 3000));
    ClusterSnapshot f = s;
    f.host(HostId("A")).state.cap.watts = 240;
    f.host(HostId("B")).state.cap.watts = 600;
    const auto r = redivvy_power_cap(s, f);
    const double a = r.caps.at(HostId("A"));
    const double b = r.caps.at(HostId("B"));
    v.expect(within(a, 360, kTol) && within(b, 600, kTol), "redivvy (" + fmt("%g", a) + "," + fmt("%g", b) + ")");
  }
  {  // balance entitlements (1.8, 3.6) GHz on 4.8 GHz caps
    ClusterSnapshot s;
    s.power_budget = 960;
    put(s, worked_host("A", 480));
    put(s, worked_host("B", 480));
    put(s, worked_vm("a1", "A", 1800));
    for (int i = 0; i < 3; ++i) put(s, worked_vm("b" + std::to_string(i), "B", 1200));
    const auto r = balance_power_cap(s, 0.05);
    const double a = capped_capacity(s.host(HostId("A")).spec.power, PowerCap{r.caps.at(HostId("A"))});
    const double b = capped_capacity(s.host(HostId("B")).spec.power, PowerCap{r.caps.at(HostId("B"))});
    v.expect(within(a, 3600, 1e-6 * 600) && within(b, 6000, 1e-6 * 600),
             "balance (" + fmt("%g", a / 1000) + "," + fmt("%g", b / 1000) + ")GHz");
  }
  {  // power-on (600, 360 free) -> (480, 480)
    ClusterSnapshot s;
    s.power_budget = 960;
    put(s, worked_host("A", 600));
    put(s, worked_host("B", 0));
    put(s, worked_vm("a", "A", 2400));
    const auto g = redistribute_for_power_on(s, HostId("B"), DpmConfig{});
    double a = 600;
    for (const auto& act : g.plan.actions()) {
      if (const auto* c = std::get_if<SetPowerCap>(&act.kind); c && c->host == HostId("A")) a = c->watts;
    }
    v.expect(g.feasible && within(a, 480, kTol) && within(g.cap_watts, 480, kTol),
             "power-on (" + fmt("%g", a) + "," + fmt("%g", g.cap_watts) + ")");
  }
  {  // power-off 3x250 -> 2x320
    ClusterSnapshot s;
    s.power_budget = 750;
    for (const char* id : {"h1", "h2", "h3"}) {
      HostEntry h;
      h.spec = presets::table1_host(id);
      h.state.cap = PowerCap{250};
      put(s, std::move(h));
    }
    s.host(HostId("h3")).state = HostState{PowerState::Off, PowerCap{0}};
    const auto t = apply_actions(s, reclaim_on_power_off(s, HostId("h3")));
    const double a = t.host(HostId("h1")).state.cap.watts;
    const double b = t.host(HostId("h2")).state.cap.watts;
    v.expect(within(a, 320, kTol) && within(b, 320, kTol), "power-off (" + fmt("%g", a) + "," + fmt("%g", b) + ")");
  }
  return v;
}

ComparisonReport preset_report(const std::string& name) {
  return run_comparison(preset_cases(name), ComparisonOptions{false, std::nullopt, true});
}

Verdict experiment1() {
  Verdict v;
  const auto r = preset_report("exp1");
  const auto& cpc = row(r, PolicyKind::CloudPowerCap);
  const auto& st = row(r, PolicyKind::Static);
  const auto& hi = row(r, PolicyKind::StaticHigh);
  v.expect(cpc.vmotions == 0, "CPC vmotions " + std::to_string(cpc.vmotions));
  v.expect(cpc.cpu_payload_ratio >= 0.98, "CPC payload " + fmt("%.4f", cpc.cpu_payload_ratio));
  v.expect(st.vmotions >= 4 && st.vmotions <= 12, "Static vmotions " + std::to_string(st.vmotions));
  v.expect(within(st.cpu_payload_ratio, 0.89, 0.05), "Static payload " + fmt("%.4f", st.cpu_payload_ratio));
  v.expect(within(hi.cpu_payload_ratio, 1.0, 1e-12), "StaticHigh payload " + fmt("%.4f", hi.cpu_payload_ratio));
  return v;
}

Verdict experiment2() {
  Verdict v;
  const auto r = preset_report("exp2");
  const auto& cpc = row(r, PolicyKind::CloudPowerCap);
  const auto& st = row(r, PolicyKind::Static);
  const auto& hi = row(r, PolicyKind::StaticHigh);
  v.expect(within(st.power_ratio, 1.36, 0.10), "Static power " + fmt("%.3f", st.power_ratio));
  v.expect(within(cpc.power_ratio, 1.00, 0.02), "CPC power " + fmt("%.3f", cpc.power_ratio));
  v.expect(cpc.power_ons == 0 && st.power_ons >= 1,
           "power-ons CPC " + std::to_string(cpc.power_ons) + " Static " + std::to_string(st.power_ons));
  auto count_ok = [](int got, double want) { return got >= 0.6 * want && got <= 1.4 * want; };
  v.expect(count_ok(cpc.vmotions, 10) && count_ok(st.vmotions, 19) && count_ok(hi.vmotions, 10),
           "vmotions (" + std::to_string(cpc.vmotions) + "," + std::to_string(st.vmotions) + "," +
               std::to_string(hi.vmotions) + ")");
  return v;
}

Verdict experiment3() {
  Verdict v;
  const auto r = preset_report("exp3");
  const auto& cpc = row(r, PolicyKind::CloudPowerCap);
  const auto& st = row(r, PolicyKind::Static);
  const double cpc_trading = cpc.group_satisfaction.at("trading");
  const double st_trading = st.group_satisfaction.at("trading");
  v.expect(within(cpc_trading, 1.00, 0.01), "CPC trading " + fmt("%.4f", cpc_trading));
  v.expect(within(st_trading, 0.62, 0.05), "Static trading " + fmt("%.4f", st_trading));
  v.expect(cpc.cpu_payload_ratio >= 1.20, "CPC cpu " + fmt("%.3f", cpc.cpu_payload_ratio));
  v.expect(cpc.mem_payload_ratio >= 1.25, "CPC mem " + fmt("%.3f", cpc.mem_payload_ratio));
  return v;
}

Verdict properties() {
  Verdict v;
  std::mt19937_64 rng(0x5eed0007);
  checks::Outcome pipeline;
  checks::Outcome balance;
  checks::Outcome determinism;
  const std::vector<Policy> policies{{PolicyKind::CloudPowerCap, std::nullopt},
                                     {PolicyKind::Static, std::nullopt},
                                     {PolicyKind::StaticHigh, std::nullopt}};
  constexpr int kClusters = 1000;
  for (int i = 0; i < kClusters; ++i) {
    const std::string label = "cluster " + std::to_string(i);
    const auto s = checks::random_cluster(rng);
    for (const auto& p : policies) checks::check_pipeline(s, p, rng, pipeline, label);
    checks::check_power_balance(s, 1e-6, balance, label);
    const auto sc = checks::random_scenario(rng);
    checks::check_determinism(sc, policies[static_cast<std::size_t>(i % 3)], determinism, label);
  }
  auto report = [&](const char* name, const checks::Outcome& o) {
    v.expect(o.ok(), std::string(name) + " " + std::to_string(o.cases - static_cast<int>(o.failures.size())) + "/" +
                         std::to_string(o.cases));
    for (const auto& f : o.failures) std::printf("    %s\n", f.c_str());
  };
  report("pipeline", pipeline);
  report("balance", balance);
  report("determinism", determinism);
  return v;
}

Verdict oracle() {
  Verdict v;
  std::mt19937_64 rng(0x0a11ce);
  constexpr int kClusters = 1000;
  double worst = 0.0;
  int bad = 0;
  for (int i = 0; i < kClusters; ++i) {
    const auto s = checks::random_grid_cluster(rng, 2 + i % 2);
    const double got = balance_power_cap(s, 0.0).final_imbalance;
    const double want = checks::brute_force_min_imbalance(s);
    const double diff = std::abs(got - want);
    worst = std::max(worst, diff);
    if (diff > 1e-3) {
      ++bad;
      if (bad <= 5) std::printf("    cluster %d: balancer %.6f, exhaustive %.6f\n", i, got, want);
    }
  }
  v.expect(bad == 0, std::to_string(kClusters) + " clusters, worst gap " + fmt("%.2e", worst));
  return v;
}

}  // namespace

int main() {
  struct Criterion {
    int number;
    const char* name;
    double budget_s;
    std::function<Verdict()> check;
  };
  const std::vector<Criterion> criteria{
      {1, "rack deployment table", 1.0, table2},
      {2, "power model identities", 5.0, power_identities},
      {3, "worked cap scenarios", 10.0, worked_scenarios},
      {4, "experiment 1 headroom", 10.0, experiment1},
      {5, "experiment 2 standby", 10.0, experiment2},
      {6, "experiment 3 flexible capacity", 60.0, experiment3},
      {7, "randomized properties", 60.0, properties},
      {8, "exhaustive oracle", 30.0, oracle},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v.expect(false, std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = v.ok && in_time;
    if (!pass) ++failed;
    std::ostringstream notes;
    for (std::size_t i = 0; i < v.notes.size(); ++i) notes << (i ? "; " : "") << v.notes[i];
    std::printf("criterion %d %s: %s  [%s] (%.2f s of %.0f s%s)\n", c.number, c.name, pass ? "PASS" : "FAIL",
                notes.str().c_str(), secs, c.budget_s, in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
