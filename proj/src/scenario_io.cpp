#include "cpc/scenario_io.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace cpc {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string kind_name(const json& j) {
  switch (j.type()) {
    case json::value_t::null: return "null";
    case json::value_t::boolean: return "boolean";
    case json::value_t::string: return "string";
    case json::value_t::array: return "array";
    case json::value_t::object: return "object";
    case json::value_t::discarded: return "invalid value";
    default: return "number";
  }
}

class Reader;

/// Typed access to one JSON object. Every key read is remembered, and
/// `finish` reports the rest as unknown fields.
class Fields {
 public:
  Fields(Reader& reader, const json& j, std::string path);
  ~Fields() { finish(); }
  Fields(const Fields&) = delete;
  Fields& operator=(const Fields&) = delete;

  bool valid() const { return valid_; }
  const std::string& path() const { return path_; }
  bool has(const std::string& key) const { return valid_ && j_.contains(key); }
  const json* raw(const std::string& key, bool required);

  std::optional<double> number(const std::string& key, bool required);
  std::optional<int> integer(const std::string& key, bool required);
  std::optional<std::string> string(const std::string& key, bool required);
  std::optional<bool> boolean(const std::string& key, bool required);
  std::string child(const std::string& key) const { return path_ + "." + key; }

  void set(double& out, const std::string& key) {
    if (auto v = number(key, false)) out = *v;
  }
  void finish();
  /// Suppresses unknown-field reports, e.g. once the version is rejected.
  void abandon() { finished_ = true; }

 private:
  Reader& reader_;
  const json& j_;
  std::string path_;
  bool valid_ = false;
  bool finished_ = false;
  std::set<std::string> seen_;
};

class Reader {
 public:
  void error(const std::string& path, const std::string& message) { problems.push_back(path + ": " + message); }
  std::vector<std::string> problems;
};

Fields::Fields(Reader& reader, const json& j, std::string path) : reader_(reader), j_(j), path_(std::move(path)) {
  valid_ = j_.is_object();
  if (!valid_) reader_.error(path_, "expected object, got " + kind_name(j_));
}

void Fields::finish() {
  if (finished_ || !valid_) return;
  finished_ = true;
  for (const auto& [key, value] : j_.items()) {
    if (!seen_.count(key)) reader_.error(child(key), "unknown field");
  }
}

const json* Fields::raw(const std::string& key, bool required) {
  seen_.insert(key);
  if (!valid_) return nullptr;
  auto it = j_.find(key);
  if (it == j_.end()) {
    if (required) reader_.error(child(key), "missing required field");
    return nullptr;
  }
  return &*it;
}

std::optional<double> Fields::number(const std::string& key, bool required) {
  const json* v = raw(key, required);
  if (!v) return std::nullopt;
  if (!v->is_number()) {
    reader_.error(child(key), "expected number, got " + kind_name(*v));
    return std::nullopt;
  }
  return v->get<double>();
}

std::optional<int> Fields::integer(const std::string& key, bool required) {
  const json* v = raw(key, required);
  if (!v) return std::nullopt;
  if (!v->is_number_integer()) {
    reader_.error(child(key), "expected integer, got " + kind_name(*v));
    return std::nullopt;
  }
  const auto x = v->get<long long>();
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
    reader_.error(child(key), "integer out of range");
    return std::nullopt;
  }
  return static_cast<int>(x);
}

std::optional<std::string> Fields::string(const std::string& key, bool required) {
  const json* v = raw(key, required);
  if (!v) return std::nullopt;
  if (!v->is_string()) {
    reader_.error(child(key), "expected string, got " + kind_name(*v));
    return std::nullopt;
  }
  return v->get<std::string>();
}

std::optional<bool> Fields::boolean(const std::string& key, bool required) {
  const json* v = raw(key, required);
  if (!v) return std::nullopt;
  if (!v->is_boolean()) {
    reader_.error(child(key), "expected boolean, got " + kind_name(*v));
    return std::nullopt;
  }
  return v->get<bool>();
}

const json* array_field(Fields& f, Reader& r, const std::string& key, bool required) {
  const json* v = f.raw(key, required);
  if (v && !v->is_array()) {
    r.error(f.child(key), "expected array, got " + kind_name(*v));
    return nullptr;
  }
  return v;
}

std::string index_path(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

std::vector<std::string> string_list(Fields& f, Reader& r, const std::string& key, bool required) {
  std::vector<std::string> out;
  const json* arr = array_field(f, r, key, required);
  if (!arr) return out;
  for (std::size_t i = 0; i < arr->size(); ++i) {
    const auto& e = (*arr)[i];
    if (!e.is_string()) {
      r.error(index_path(f.child(key), i), "expected string, got " + kind_name(e));
      continue;
    }
    out.push_back(e.get<std::string>());
  }
  return out;
}

void read_controls(Reader& r, const json& j, const std::string& path, ResourceControls& c) {
  Fields f(r, j, path);
  f.set(c.reservation, "reservation");
  f.set(c.limit, "limit");
  f.set(c.shares, "shares");
}

std::optional<PowerState> parse_power_state(const std::string& s) {
  if (s == "on") return PowerState::On;
  if (s == "off") return PowerState::Off;
  return std::nullopt;
}

std::optional<RuleKind> parse_rule_kind(const std::string& s) {
  for (auto k : {RuleKind::VmVmAffinity, RuleKind::VmVmAntiAffinity, RuleKind::VmHostPin}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

void read_host(Reader& r, const json& j, const std::string& path, ScenarioHost& h) {
  Fields f(r, j, path);
  if (auto id = f.string("id", true)) h.spec.id = HostId(*id);
  if (auto v = f.integer("cores", true)) h.spec.cores = *v;
  if (auto v = f.number("mhz_per_core", true)) h.spec.mhz_per_core = *v;
  if (auto v = f.number("memory_mb", true)) h.spec.memory_mb = *v;
  if (const json* p = f.raw("power", true)) {
    Fields pf(r, *p, f.child("power"));
    if (auto v = pf.number("p_idle", true)) h.spec.power.p_idle = *v;
    if (auto v = pf.number("p_peak", true)) h.spec.power.p_peak = *v;
    pf.set(h.spec.power.c_hypervisor, "c_hypervisor");
    if (auto v = pf.number("p_nameplate", false)) h.spec.power.p_nameplate = *v;
  }
  h.spec.power.c_peak = h.spec.cores * h.spec.mhz_per_core;
  if (auto s = f.string("power_state", false)) {
    if (auto ps = parse_power_state(*s)) {
      h.power_state = *ps;
    } else {
      r.error(f.child("power_state"), "expected \"on\" or \"off\", got \"" + *s + "\"");
    }
  }
  if (auto v = f.number("power_cap", h.power_state == PowerState::On)) h.power_cap = *v;
}

void read_vm(Reader& r, const json& j, const std::string& path, ScenarioVm& v) {
  Fields f(r, j, path);
  if (auto id = f.string("id", true)) v.spec.id = VmId(*id);
  if (auto x = f.integer("vcpus", true)) v.spec.vcpus = *x;
  if (auto x = f.number("memory_mb", true)) v.spec.memory_mb = *x;
  if (auto g = f.string("group", false)) v.spec.group = *g;
  if (auto h = f.string("host", false)) v.host = HostId(*h);
  if (const json* c = f.raw("cpu", false)) read_controls(r, *c, f.child("cpu"), v.spec.cpu);
  if (const json* c = f.raw("mem", false)) read_controls(r, *c, f.child("mem"), v.spec.mem);
  if (const json* d = array_field(f, r, "demand", true)) {
    std::vector<DemandSegment> segs;
    for (std::size_t i = 0; i < d->size(); ++i) {
      Fields sf(r, (*d)[i], index_path(f.child("demand"), i));
      DemandSegment seg;
      if (auto x = sf.number("start", true)) seg.start = *x;
      if (auto x = sf.number("cpu_mhz", true)) seg.cpu_mhz = *x;
      if (auto x = sf.number("mem_mb", true)) seg.mem_mb = *x;
      segs.push_back(seg);
    }
    try {
      v.spec.demand = DemandTrace(std::move(segs));
    } catch (const std::exception& e) {
      r.error(f.child("demand"), e.what());
    }
  }
}

void read_rule(Reader& r, const json& j, const std::string& path, TimedRule& t) {
  Fields f(r, j, path);
  if (auto n = f.string("name", true)) t.rule.name = *n;
  if (auto k = f.string("kind", true)) {
    if (auto kind = parse_rule_kind(*k)) {
      t.rule.kind = *kind;
    } else {
      r.error(f.child("kind"), "expected affinity, anti_affinity or host_pin, got \"" + *k + "\"");
    }
  }
  for (auto& v : string_list(f, r, "vms", true)) t.rule.vms.emplace_back(v);
  for (auto& h : string_list(f, r, "hosts", false)) t.rule.hosts.emplace_back(h);
  f.set(t.active_from, "active_from");
  f.set(t.active_until, "active_until");
}

void read_sim(Reader& r, const json& j, SimSettings& s) {
  Fields f(r, j, "$.sim");
  f.set(s.tick, "tick");
  if (auto v = f.number("end_time", true)) s.end_time = *v;
  f.set(s.drs_period, "drs_period");
  f.set(s.powercap_latency, "powercap_latency");
  f.set(s.power_on_latency, "power_on_latency");
  f.set(s.power_off_latency, "power_off_latency");
  f.set(s.demand_window, "demand_window");
  if (const json* v = f.raw("vmotion", false)) {
    Fields vf(r, *v, f.child("vmotion"));
    vf.set(s.vmotion.bandwidth_mb_per_s, "bandwidth_mb_per_s");
    vf.set(s.vmotion.cpu_overhead_cores, "cpu_overhead_cores");
  }
  if (const json* w = f.raw("metrics_window", false)) {
    if (!w->is_array() || w->size() != 2 || !(*w)[0].is_number() || !(*w)[1].is_number()) {
      r.error(f.child("metrics_window"), "expected [start, end]");
    } else {
      s.metrics_window = std::make_pair((*w)[0].get<double>(), (*w)[1].get<double>());
    }
  }
}

void read_drs(Reader& r, const json& j, DrsConfig& d) {
  Fields f(r, j, "$.drs");
  f.set(d.imbalance_threshold, "imbalance_threshold");
  if (auto v = f.integer("max_moves_per_pass", false)) d.max_moves_per_pass = *v;
  if (auto v = f.boolean("costbenefit_enabled", false)) d.costbenefit_enabled = *v;
  f.set(d.migration_cost.risk_factor, "risk_factor");
}

void read_dpm(Reader& r, const json& j, DpmConfig& d) {
  Fields f(r, j, "$.dpm");
  if (auto v = f.boolean("enabled", false)) d.enabled = *v;
  f.set(d.high_utilization_threshold, "high_utilization_threshold");
  f.set(d.low_utilization_threshold, "low_utilization_threshold");
  f.set(d.evaluation_window, "evaluation_window");
}

Scenario read_scenario(Reader& r, const json& root) {
  Scenario s;
  Fields f(r, root, "$");
  if (!f.valid()) return s;
  if (const json* v = f.raw("version", true)) {
    if (!v->is_number_integer() || v->get<long long>() != Scenario::kVersion) {
      r.error("$.version", "unsupported version " + v->dump() + " (expected " + std::to_string(Scenario::kVersion) + ")");
      f.abandon();
      return s;
    }
  }
  if (auto v = f.string("name", false)) s.name = *v;
  if (auto v = f.string("description", false)) s.description = *v;
  if (auto v = f.number("cluster_power_budget", true)) s.power_budget = *v;
  if (auto v = f.number("static_cap_watts", false)) s.static_cap_watts = *v;
  if (const json* hosts = array_field(f, r, "hosts", true)) {
    for (std::size_t i = 0; i < hosts->size(); ++i) {
      read_host(r, (*hosts)[i], index_path("$.hosts", i), s.hosts.emplace_back());
    }
  }
  if (const json* vms = array_field(f, r, "vms", false)) {
    for (std::size_t i = 0; i < vms->size(); ++i) read_vm(r, (*vms)[i], index_path("$.vms", i), s.vms.emplace_back());
  }
  if (const json* rules = array_field(f, r, "rules", false)) {
    for (std::size_t i = 0; i < rules->size(); ++i) {
      read_rule(r, (*rules)[i], index_path("$.rules", i), s.rules.emplace_back());
    }
  }
  if (const json* v = f.raw("sim", true)) read_sim(r, *v, s.sim);
  if (const json* v = f.raw("drs", false)) read_drs(r, *v, s.drs);
  if (const json* v = f.raw("dpm", false)) read_dpm(r, *v, s.dpm);
  return s;
}

ojson controls_json(const ResourceControls& c) {
  ojson j = ojson::object();
  const ResourceControls def;
  if (c.reservation != def.reservation) j["reservation"] = c.reservation;
  if (std::isfinite(c.limit)) j["limit"] = c.limit;
  if (c.shares != def.shares) j["shares"] = c.shares;
  return j;
}

}  // namespace

Scenario parse_scenario(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError({std::string("$: malformed JSON at byte ") + std::to_string(e.byte) + ": " + e.what()});
  }
  Reader r;
  Scenario s = read_scenario(r, root);
  if (!r.problems.empty()) throw ScenarioError(std::move(r.problems));
  s.validate();
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError({path + ": cannot open file"});
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

std::string emit_scenario(const Scenario& s) {
  ojson root;
  root["version"] = Scenario::kVersion;
  root["name"] = s.name;
  root["description"] = s.description;
  root["cluster_power_budget"] = s.power_budget;
  if (s.static_cap_watts) root["static_cap_watts"] = *s.static_cap_watts;

  ojson hosts = ojson::array();
  for (const auto& h : s.hosts) {
    ojson j;
    j["id"] = h.spec.id.str();
    j["cores"] = h.spec.cores;
    j["mhz_per_core"] = h.spec.mhz_per_core;
    j["memory_mb"] = h.spec.memory_mb;
    ojson p;
    p["p_idle"] = h.spec.power.p_idle;
    p["p_peak"] = h.spec.power.p_peak;
    p["c_hypervisor"] = h.spec.power.c_hypervisor;
    if (h.spec.power.p_nameplate) p["p_nameplate"] = *h.spec.power.p_nameplate;
    j["power"] = std::move(p);
    j["power_state"] = to_string(h.power_state);
    j["power_cap"] = h.power_cap;
    hosts.push_back(std::move(j));
  }
  root["hosts"] = std::move(hosts);

  ojson vms = ojson::array();
  for (const auto& v : s.vms) {
    ojson j;
    j["id"] = v.spec.id.str();
    j["vcpus"] = v.spec.vcpus;
    j["memory_mb"] = v.spec.memory_mb;
    j["group"] = v.spec.group;
    if (v.host) j["host"] = v.host->str();
    if (auto c = controls_json(v.spec.cpu); !c.empty()) j["cpu"] = std::move(c);
    if (auto c = controls_json(v.spec.mem); !c.empty()) j["mem"] = std::move(c);
    ojson demand = ojson::array();
    for (const auto& seg : v.spec.demand.segments()) {
      demand.push_back(ojson{{"start", seg.start}, {"cpu_mhz", seg.cpu_mhz}, {"mem_mb", seg.mem_mb}});
    }
    j["demand"] = std::move(demand);
    vms.push_back(std::move(j));
  }
  root["vms"] = std::move(vms);

  ojson rules = ojson::array();
  for (const auto& t : s.rules) {
    ojson j;
    j["name"] = t.rule.name;
    j["kind"] = to_string(t.rule.kind);
    ojson members = ojson::array();
    for (const auto& v : t.rule.vms) members.push_back(v.str());
    j["vms"] = std::move(members);
    if (!t.rule.hosts.empty()) {
      ojson hs = ojson::array();
      for (const auto& h : t.rule.hosts) hs.push_back(h.str());
      j["hosts"] = std::move(hs);
    }
    if (t.active_from != 0.0) j["active_from"] = t.active_from;
    if (std::isfinite(t.active_until)) j["active_until"] = t.active_until;
    rules.push_back(std::move(j));
  }
  root["rules"] = std::move(rules);

  const auto& sim = s.sim;
  ojson js;
  js["tick"] = sim.tick;
  js["end_time"] = sim.end_time;
  js["drs_period"] = sim.drs_period;
  js["powercap_latency"] = sim.powercap_latency;
  js["power_on_latency"] = sim.power_on_latency;
  js["power_off_latency"] = sim.power_off_latency;
  js["demand_window"] = sim.demand_window;
  js["vmotion"] = ojson{{"bandwidth_mb_per_s", sim.vmotion.bandwidth_mb_per_s},
                        {"cpu_overhead_cores", sim.vmotion.cpu_overhead_cores}};
  if (sim.metrics_window) js["metrics_window"] = ojson::array({sim.metrics_window->first, sim.metrics_window->second});
  root["sim"] = std::move(js);

  ojson drs;
  drs["imbalance_threshold"] = s.drs.imbalance_threshold;
  drs["max_moves_per_pass"] = s.drs.max_moves_per_pass;
  drs["costbenefit_enabled"] = s.drs.costbenefit_enabled;
  drs["risk_factor"] = s.drs.migration_cost.risk_factor;
  root["drs"] = std::move(drs);

  ojson dpm;
  dpm["enabled"] = s.dpm.enabled;
  dpm["high_utilization_threshold"] = s.dpm.high_utilization_threshold;
  dpm["low_utilization_threshold"] = s.dpm.low_utilization_threshold;
  dpm["evaluation_window"] = s.dpm.evaluation_window;
  root["dpm"] = std::move(dpm);

  return root.dump(2) + "\n";
}

}  // namespace cpc
