#include "cpc/report.hpp"

#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>
#include <set>

#include "cpc/presets.hpp"
#include "json.hpp"

namespace cpc {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

double ratio(double x, double base) { return base > 0.0 ? x / base : 0.0; }

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

PowerState parse_state(const std::string& s) {
  for (auto st : {PowerState::On, PowerState::Off, PowerState::PoweringOn, PowerState::PoweringOff}) {
    if (to_string(st) == s) return st;
  }
  throw std::runtime_error("unknown power state \"" + s + "\"");
}

ReportRow make_row(const SimMetrics& m, const SimMetrics& base, bool timeline) {
  ReportRow r;
  r.policy = m.policy;
  r.cpu_payload_ratio = ratio(m.cpu_payload, base.cpu_payload);
  r.vmotions = m.vmotions;
  r.mem_payload_ratio = ratio(m.mem_payload, base.mem_payload);
  r.power_ratio = ratio(m.average_power_w, base.average_power_w);
  r.energy_wh = m.energy_wh;
  r.average_power_w = m.average_power_w;
  r.power_ons = m.power_ons;
  r.power_offs = m.power_offs;
  for (const auto& [g, gm] : m.groups) r.group_satisfaction[g] = gm.satisfaction();
  if (timeline) r.timeline = m.timeline;
  return r;
}

}  // namespace

ComparisonReport run_comparison(const std::vector<ComparisonCase>& cases, const ComparisonOptions& options) {
  if (cases.empty()) throw std::invalid_argument("run_comparison needs at least one case");
  std::vector<ComparisonCase> all = cases;
  std::optional<std::size_t> base_index;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i].policy.kind == PolicyKind::StaticHigh) {
      base_index = i;
      break;
    }
  }
  const bool implicit_base = !base_index;
  if (implicit_base) {
    base_index = all.size();
    all.push_back({Policy{PolicyKind::StaticHigh, std::nullopt}, cases.front().scenario});
  }

  std::vector<SimMetrics> metrics(all.size());
  auto one = [&](std::size_t i) {
    return run(all[i].scenario, RunOptions{all[i].policy, options.timeline, options.tick});
  };
  if (options.parallel && all.size() > 1) {
    std::vector<std::future<SimMetrics>> futures;
    for (std::size_t i = 0; i < all.size(); ++i) futures.push_back(std::async(std::launch::async, one, i));
    for (std::size_t i = 0; i < all.size(); ++i) metrics[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < all.size(); ++i) metrics[i] = one(i);
  }

  ComparisonReport report;
  report.scenario = cases.front().scenario.name;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    report.rows.push_back(make_row(metrics[i], metrics[*base_index], options.timeline));
  }
  return report;
}

ComparisonReport run_comparison(const Scenario& scenario, const std::vector<Policy>& policies,
                                const ComparisonOptions& options) {
  std::vector<ComparisonCase> cases;
  for (const auto& p : policies) cases.push_back({p, scenario});
  return run_comparison(cases, options);
}

std::vector<ComparisonCase> preset_cases(const std::string& name) {
  const Scenario s = presets::by_name(name);
  std::vector<ComparisonCase> cases{{Policy{PolicyKind::CloudPowerCap, std::nullopt}, s},
                                    {Policy{PolicyKind::Static, std::nullopt}, s},
                                    {Policy{PolicyKind::StaticHigh, std::nullopt}, s}};
  if (name == "exp3") cases[2].scenario = presets::exp3_static_high();
  return cases;
}

std::string report_csv(const ComparisonReport& report) {
  std::set<std::string> groups;
  for (const auto& r : report.rows) {
    for (const auto& [g, v] : r.group_satisfaction) groups.insert(g);
  }
  std::string out = "policy,cpu_payload_ratio,vmotions,mem_payload_ratio,power_ratio,energy_wh,average_power_w,power_ons,power_offs";
  for (const auto& g : groups) out += ",satisfaction_" + g;
  out += "\n";
  for (const auto& r : report.rows) {
    out += r.policy + "," + num(r.cpu_payload_ratio) + "," + std::to_string(r.vmotions) + "," +
           num(r.mem_payload_ratio) + "," + num(r.power_ratio) + "," + num(r.energy_wh) + "," +
           num(r.average_power_w) + "," + std::to_string(r.power_ons) + "," + std::to_string(r.power_offs);
    for (const auto& g : groups) {
      auto it = r.group_satisfaction.find(g);
      out += "," + (it == r.group_satisfaction.end() ? std::string() : num(it->second));
    }
    out += "\n";
  }
  return out;
}

std::string timeline_csv(const ComparisonReport& report) {
  std::string out = "policy,time,host,state,cap_w,power_w,delivered_mhz,demand_mhz\n";
  for (const auto& r : report.rows) {
    for (const auto& p : r.timeline) {
      for (const auto& h : p.hosts) {
        out += r.policy + "," + num(p.time) + "," + h.id + "," + to_string(h.state) + "," + num(h.cap_w) + "," +
               num(h.power_w) + "," + num(h.delivered_mhz) + "," + num(h.demand_mhz) + "\n";
      }
    }
  }
  return out;
}

std::string report_json(const ComparisonReport& report) {
  ojson root;
  root["scenario"] = report.scenario;
  ojson rows = ojson::array();
  for (const auto& r : report.rows) {
    ojson j;
    j["policy"] = r.policy;
    j["cpu_payload_ratio"] = r.cpu_payload_ratio;
    j["vmotions"] = r.vmotions;
    j["mem_payload_ratio"] = r.mem_payload_ratio;
    j["power_ratio"] = r.power_ratio;
    j["energy_wh"] = r.energy_wh;
    j["average_power_w"] = r.average_power_w;
    j["power_ons"] = r.power_ons;
    j["power_offs"] = r.power_offs;
    ojson groups = ojson::object();
    for (const auto& [g, v] : r.group_satisfaction) groups[g] = v;
    j["group_satisfaction"] = std::move(groups);
    if (!r.timeline.empty()) {
      ojson tl = ojson::array();
      for (const auto& p : r.timeline) {
        ojson hosts = ojson::array();
        for (const auto& h : p.hosts) {
          hosts.push_back(ojson{{"id", h.id},
                                {"state", to_string(h.state)},
                                {"cap_w", h.cap_w},
                                {"power_w", h.power_w},
                                {"delivered_mhz", h.delivered_mhz},
                                {"demand_mhz", h.demand_mhz},
                                {"overhead_mhz", h.overhead_mhz}});
        }
        tl.push_back(ojson{{"time", p.time}, {"total_power_w", p.total_power_w}, {"hosts", std::move(hosts)}});
      }
      j["timeline"] = std::move(tl);
    }
    rows.push_back(std::move(j));
  }
  root["rows"] = std::move(rows);
  return root.dump(2) + "\n";
}

ComparisonReport parse_report_json(std::string_view text) {
  const json root = json::parse(text);
  ComparisonReport report;
  report.scenario = root.at("scenario").get<std::string>();
  for (const auto& j : root.at("rows")) {
    ReportRow r;
    r.policy = j.at("policy").get<std::string>();
    r.cpu_payload_ratio = j.at("cpu_payload_ratio").get<double>();
    r.vmotions = j.at("vmotions").get<int>();
    r.mem_payload_ratio = j.at("mem_payload_ratio").get<double>();
    r.power_ratio = j.at("power_ratio").get<double>();
    r.energy_wh = j.at("energy_wh").get<double>();
    r.average_power_w = j.at("average_power_w").get<double>();
    r.power_ons = j.at("power_ons").get<int>();
    r.power_offs = j.at("power_offs").get<int>();
    for (const auto& [g, v] : j.at("group_satisfaction").items()) r.group_satisfaction[g] = v.get<double>();
    if (j.contains("timeline")) {
      for (const auto& p : j.at("timeline")) {
        TimelinePoint tp;
        tp.time = p.at("time").get<double>();
        tp.total_power_w = p.at("total_power_w").get<double>();
        for (const auto& h : p.at("hosts")) {
          HostTick ht;
          ht.id = h.at("id").get<std::string>();
          ht.state = parse_state(h.at("state").get<std::string>());
          ht.cap_w = h.at("cap_w").get<double>();
          ht.power_w = h.at("power_w").get<double>();
          ht.delivered_mhz = h.at("delivered_mhz").get<double>();
          ht.demand_mhz = h.at("demand_mhz").get<double>();
          ht.overhead_mhz = h.at("overhead_mhz").get<double>();
          tp.hosts.push_back(std::move(ht));
        }
        r.timeline.push_back(std::move(tp));
      }
    }
    report.rows.push_back(std::move(r));
  }
  return report;
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("error writing " + path);
}

}  // namespace cpc
