#pragma once

// obdtool command dispatch. JSON goes to `out`, diagnostics to `err`.
// Exit codes: 0 success, 1 domain error, 2 usage error.

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "obd/obd.hpp"

namespace obdtool {

using json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.1.0";

class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  std::ostringstream o;
  for (unsigned int i = 0; i < len; ++i) o << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return o.str();
}

struct Session {
  std::istream& in;
  std::ostream& out;
  std::ostream& err;
  std::string command;
  bool pretty = false;
  bool deterministic = false;
  json inputs = json::array();
  json config_digest = nullptr;

  /// Contents of `path`, or of standard input for "-"; recorded in the manifest.
  std::string read(const std::string& path) {
    std::string text;
    if (path == "-") {
      std::ostringstream s;
      s << in.rdbuf();
      text = s.str();
    } else {
      std::ifstream f(path, std::ios::binary);
      if (!f || std::filesystem::is_directory(path)) throw DomainError("cannot open '" + path + "': file not found or unreadable");
      std::ostringstream s;
      s << f.rdbuf();
      text = s.str();
    }
    inputs.push_back({{"path", path == "-" ? "<stdin>" : path}, {"sha256", sha256_hex(text)}});
    return text;
  }

  obd::device::DeviceConfig config(const std::string& path) {
    if (path.empty()) return obd::device::default_config();
    const std::string text = read(path);
    config_digest = inputs.back()["sha256"];
    inputs.erase(inputs.size() - 1);
    return obd::device::parse_config(text);
  }

  json manifest() const {
    json m;
    m["tool"] = "obdtool";
    m["version"] = kVersion;
    m["command"] = command;
    m["inputs"] = inputs;
    m["config_sha256"] = config_digest;
    if (deterministic) {
      m["timestamp"] = nullptr;
    } else {
      const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
      std::tm tm{};
      gmtime_r(&now, &tm);
      std::ostringstream o;
      o << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
      m["timestamp"] = o.str();
    }
    return m;
  }

  void emit(json body) {
    body["manifest"] = manifest();
    if (pretty)
      render(body, 0);
    else
      out << body.dump() << '\n';
  }

 private:
  void render(const json& j, int depth) {
    const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
    for (auto it = j.begin(); it != j.end(); ++it) {
      const json& v = it.value();
      if (v.is_object() && !v.empty()) {
        out << pad << it.key() << ":\n";
        render(v, depth + 1);
      } else if (v.is_array() && !v.empty() && (v.front().is_object() || v.front().is_array())) {
        out << pad << it.key() << ": " << v.size() << " entries\n";
        for (const auto& e : v) out << pad << "  - " << e.dump() << '\n';
      } else {
        out << pad << it.key() << ": " << (v.is_string() ? v.get<std::string>() : v.dump()) << '\n';
      }
    }
  }
};

inline json pair_json(const obd::VectorPair& p) { return {{"v1", p.v1.to_string()}, {"v2", p.v2.to_string()}}; }
inline json pair_json(const obd::LocalPair& p) { return {{"v1", p.v1.to_string()}, {"v2", p.v2.to_string()}}; }

template <typename Pairs>
json pairs_json(const Pairs& ps) {
  json a = json::array();
  for (const auto& p : ps) a.push_back(pair_json(p));
  return a;
}

inline std::vector<obd::VectorPair> parse_tests(const std::string& text, const obd::Netlist& nl) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DomainError(std::string("tests file is not valid JSON: ") + e.what());
  }
  if (j.is_object() && j.contains("tests")) j = j["tests"];
  if (!j.is_array()) throw DomainError("tests file must be a JSON array of {\"v1\", \"v2\"} objects");
  std::vector<obd::VectorPair> tests;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("v1") || !e.contains("v2") || !e["v1"].is_string() || !e["v2"].is_string())
      throw DomainError("each test needs string fields v1 and v2");
    obd::VectorPair p{obd::Vector::from_string(e["v1"].get<std::string>()),
                      obd::Vector::from_string(e["v2"].get<std::string>())};
    obd::check_pair(nl, p);
    tests.push_back(std::move(p));
  }
  return tests;
}

inline obd::GateKind parse_kind(const std::string& name) {
  const auto k = obd::GateKind::from_name(name);
  if (!k || !k->valid()) throw DomainError("unsupported gate kind '" + name + "'");
  return *k;
}

inline obd::LocalPair parse_local_pair(const std::string& text, obd::GateKind kind) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw DomainError("pair '" + text + "' must look like 01,11");
  obd::LocalPair p{obd::LocalVector::from_string(text.substr(0, comma)),
                   obd::LocalVector::from_string(text.substr(comma + 1))};
  if (p.v1.width != kind.arity || p.v2.width != kind.arity)
    throw DomainError("pair '" + text + "' does not have " + std::to_string(kind.arity) + " bits per vector");
  return p;
}

inline obd::TransistorRef parse_local_site(const std::string& label, obd::GateKind kind) {
  const auto s = obd::parse_site_label(label);
  if (!s || s->second >= kind.arity) throw DomainError("site '" + label + "' is not a transistor of " + kind.name());
  return {0, s->first, s->second};
}

inline obd::Stage parse_stage(const std::string& name) {
  const auto s = obd::stage_from_name(name);
  if (!s) throw DomainError("unknown stage '" + name + "' (fault-free, mbd1, mbd2, mbd3, hbd)");
  return *s;
}

inline std::vector<obd::TransistorRef> site_list(const obd::Netlist& nl, const std::vector<std::string>& kinds) {
  if (kinds.empty()) return obd::enumerate_defects(nl);
  std::set<obd::GateKind> ks;
  for (const auto& k : kinds) ks.insert(parse_kind(k));
  return obd::enumerate_defects(nl, ks);
}

inline json oracle_json(const obd::Netlist& nl, const obd::DetectMap& map) {
  json j;
  json names = json::array();
  for (auto n : nl.primary_inputs()) names.push_back(nl.net_name(n));
  j["inputs"] = names;
  j["universe_size"] = map.universe_size;
  j["testable"] = map.testable();
  json untestable = json::array();
  json sites = json::array();
  for (const auto& s : map.sites) {
    json e{{"id", s.id}, {"count", s.count}};
    if (map.has_pairs) e["pairs"] = pairs_json(s.pairs);
    sites.push_back(e);
    if (s.count == 0) untestable.push_back(s.id);
  }
  j["untestable"] = untestable;
  j["sites"] = sites;
  return j;
}

/// Rebuilds a detect map from `oracle` output.
inline obd::DetectMap detect_map_from_json(const json& j) {
  if (!j.is_object() || !j.contains("sites") || !j.contains("universe_size") || !j.contains("inputs"))
    throw DomainError("input is neither a netlist nor oracle output");
  obd::DetectMap map;
  map.input_count = j["inputs"].size();
  map.universe_size = j["universe_size"].get<std::uint64_t>();
  for (const auto& s : j["sites"]) {
    if (!s.contains("pairs")) throw DomainError("oracle output lacks pairs; rerun oracle without --counts-only");
    obd::SiteDetection d;
    d.id = s["id"].get<std::string>();
    for (const auto& p : s["pairs"])
      d.pairs.push_back({obd::Vector::from_string(p["v1"].get<std::string>()),
                         obd::Vector::from_string(p["v2"].get<std::string>())});
    d.count = d.pairs.size();
    map.sites.push_back(std::move(d));
  }
  return map;
}

inline std::string csv_cell(const obd::device::DelayCell& c) {
  return c.measurement ? c.measurement->to_string() : "n/a";
}

inline int run(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
  Session session{in, out, err, {}};
  for (int i = 1; i < argc; ++i) session.command += (i > 1 ? " " : "") + std::string(argv[i]);

  CLI::App app{"Oxide-breakdown defect analysis: netlists, excitation, ATPG, device delays, detection windows",
               "obdtool"};
  app.set_version_flag("--version", kVersion);
  app.add_flag("--pretty", session.pretty, "Human-readable output instead of JSON");
  app.add_flag("--deterministic", session.deterministic, "Omit the timestamp so output is byte-stable");
  app.require_subcommand(1);
  std::function<void()> action;

  std::string file, kind_name, tests_path, config_path, site, pair, stage_name = "mbd1", polarity = "nmos";
  std::string slack_text, t_window_text = "27h";
  std::vector<std::string> kinds, sites;
  std::size_t backtracks = obd::AtpgConfig{}.backtrack_limit, points = 121, samples = 32;
  bool counts_only = false;
  double margin = 0.5;
  std::optional<double> i_sbd, i_hbd;

  auto* parse = app.add_subcommand("parse", "Summarise a netlist");
  parse->add_option("file", file, "Netlist file")->required();
  parse->callback([&] {
    action = [&] {
      const auto nl = obd::parse_netlist(session.read(file));
      json counts = json::object();
      for (const auto& [k, n] : nl.counts_by_kind()) counts[k] = n;
      session.emit({{"gates", nl.gates().size()},
                    {"inputs", nl.primary_inputs().size()},
                    {"outputs", nl.primary_outputs().size()},
                    {"depth", nl.depth()},
                    {"counts_by_kind", counts}});
    };
  });

  auto* networks = app.add_subcommand("networks", "Pull-up and pull-down networks of a gate kind");
  networks->add_option("kind", kind_name, "Gate kind, e.g. nand2")->required();
  networks->callback([&] {
    action = [&] {
      const auto nets = obd::expand_gate(parse_kind(kind_name));
      session.emit({{"kind", nets.kind.name()},
                    {"pull_up", nets.pull_up.to_sexpr()},
                    {"pull_down", nets.pull_down.to_sexpr()}});
    };
  });

  auto* faults = app.add_subcommand("faults", "List breakdown sites of a netlist");
  faults->add_option("file", file, "Netlist file")->required();
  faults->add_option("--kinds", kinds, "Restrict to these gate kinds")->delimiter(',');
  faults->callback([&] {
    action = [&] {
      const auto nl = obd::parse_netlist(session.read(file));
      json ids = json::array();
      for (const auto& s : site_list(nl, kinds)) ids.push_back(obd::site_id(nl, s));
      session.emit({{"count", ids.size()}, {"sites", ids}});
    };
  });

  auto* localtests = app.add_subcommand("localtests", "Minimum local test set of a gate kind");
  localtests->add_option("kind", kind_name, "Gate kind, e.g. nand2")->required();
  localtests->callback([&] {
    action = [&] {
      const auto kind = parse_kind(kind_name);
      const auto set = obd::local_test_set(kind);
      json exc = json::object();
      for (std::size_t pin = 0; pin < kind.arity; ++pin)
        for (auto pol : {obd::Polarity::Nmos, obd::Polarity::Pmos})
          exc[obd::site_label(pol, pin)] = pairs_json(obd::excitation_pairs(kind, pol, pin));
      session.emit({{"kind", kind.name()}, {"size", set.size()}, {"pairs", pairs_json(set)}, {"excitation", exc}});
    };
  });

  auto* oracle = app.add_subcommand("oracle", "Exhaustive detectability of every site");
  oracle->add_option("file", file, "Netlist file")->required();
  oracle->add_option("--kinds", kinds, "Restrict to these gate kinds")->delimiter(',');
  oracle->add_flag("--counts-only", counts_only, "Report pair counts without listing pairs");
  oracle->callback([&] {
    action = [&] {
      const auto nl = obd::parse_netlist(session.read(file));
      const auto map = obd::oracle_all_pairs(nl, site_list(nl, kinds), {.collect_pairs = !counts_only});
      session.emit(oracle_json(nl, map));
    };
  });

  auto* minset = app.add_subcommand("minset", "Minimum set of pairs detecting every testable site");
  minset->add_option("file", file, "Netlist or oracle output; '-' or omitted reads standard input");
  minset->add_option("--kinds", kinds, "Restrict to these gate kinds (netlist input)")->delimiter(',');
  minset->callback([&] {
    action = [&] {
      const std::string text = session.read(file.empty() ? "-" : file);
      const auto first = text.find_first_not_of(" \t\r\n");
      obd::DetectMap map;
      if (first != std::string::npos && text[first] == '{') {
        json j;
        try {
          j = json::parse(text);
        } catch (const json::parse_error& e) {
          throw DomainError(std::string("oracle output is not valid JSON: ") + e.what());
        }
        map = detect_map_from_json(j);
      } else {
        const auto nl = obd::parse_netlist(text);
        map = obd::oracle_all_pairs(nl, site_list(nl, kinds));
      }
      const auto set = obd::minimal_test_set(map);
      session.emit({{"size", set.pairs.size()},
                    {"exact", set.exact},
                    {"testable", map.testable()},
                    {"pairs", pairs_json(set.pairs)}});
    };
  });

  auto* cover = app.add_subcommand("cover", "Coverage of a test set");
  cover->add_option("file", file, "Netlist file")->required();
  cover->add_option("--tests", tests_path, "JSON array of {\"v1\", \"v2\"} bit strings")->required();
  cover->add_option("--kinds", kinds, "Restrict to these gate kinds")->delimiter(',');
  cover->callback([&] {
    action = [&] {
      const auto nl = obd::parse_netlist(session.read(file));
      const auto tests = parse_tests(session.read(tests_path), nl);
      const auto r = obd::coverage(nl, site_list(nl, kinds), tests);
      json ss = json::array();
      for (const auto& s : r.sites)
        ss.push_back({{"id", s.id}, {"status", obd::site_status_name(s.status)}, {"detected_by", s.detected_by}});
      session.emit({{"tests", r.tests.size()},
                    {"testable", r.testable},
                    {"detected", r.detected},
                    {"fraction", r.fraction()},
                    {"testability_known", r.testability_known},
                    {"sites", ss}});
    };
  });

  auto* atpg = app.add_subcommand("atpg", "Generate two-pattern tests");
  atpg->add_option("file", file, "Netlist file")->required();
  atpg->add_option("--site", sites, "Site id such as g3.PA (repeatable; default all)");
  atpg->add_option("--kinds", kinds, "Restrict to these gate kinds")->delimiter(',');
  atpg->add_option("--backtracks", backtracks, "Backtrack limit per search")->check(CLI::PositiveNumber);
  atpg->add_option("--tests-out", tests_path, "Also write the compacted tests to this file");
  atpg->callback([&] {
    action = [&] {
      const auto nl = obd::parse_netlist(session.read(file));
      std::vector<obd::TransistorRef> targets;
      if (sites.empty()) {
        targets = site_list(nl, kinds);
      } else {
        for (const auto& id : sites) {
          const auto s = obd::parse_site_id(nl, id);
          if (!s) throw DomainError("unknown site '" + id + "'");
          targets.push_back(*s);
        }
      }
      obd::AtpgConfig cfg;
      cfg.backtrack_limit = backtracks;
      const auto run = obd::atpg_all(nl, targets, cfg);
      json results = json::array();
      for (const auto& r : run.results) {
        json e{{"id", r.id}, {"status", obd::atpg_status_name(r.status)}};
        e["pair"] = r.pair ? pair_json(*r.pair) : json(nullptr);
        e["local"] = r.local ? pair_json(*r.local) : json(nullptr);
        e["stats"] = {{"decisions", r.stats.decisions},
                      {"backtracks", r.stats.backtracks},
                      {"local_pairs_tried", r.stats.local_pairs_tried},
                      {"exhaustive_fallbacks", r.stats.exhaustive_fallbacks}};
        json cert = json::array();
        for (const auto& c : r.certificate)
          cert.push_back({{"local", pair_json(c.local)}, {"frame", c.frame}, {"by_enumeration", c.by_enumeration}});
        e["certificate"] = cert;
        results.push_back(e);
      }
      const json tests = pairs_json(run.tests);
      if (!tests_path.empty()) {
        std::ofstream f(tests_path);
        if (!f) throw DomainError("cannot write '" + tests_path + "'");
        f << tests.dump(2) << '\n';
      }
      session.emit({{"results", results}, {"tests", tests}});
    };
  });

  auto* device = app.add_subcommand("device", "Transistor-level delay and transfer-curve simulation (CSV)");
  device->require_subcommand(1);
  device->add_option("--config", config_path, "Flat key = value device configuration");
  auto* table = device->add_subcommand("table", "Delay table over stages and exciting pairs");
  table->add_option("--kind", kind_name, "Gate kind")->default_val("nand2");
  table->callback([&] {
    action = [&] {
      const auto cfg = session.config(config_path);
      const auto t = obd::device::delay_table(parse_kind(kind_name), cfg);
      out << "stage";
      for (const auto& [p, s] : t.columns) out << ",(" << p.v1.to_string() << "|" << p.v2.to_string() << ") "
                                               << obd::site_label(s.polarity, s.pin);
      out << '\n';
      for (obd::Stage st : t.stages) {
        out << obd::stage_name(st);
        for (std::size_t c = 0; c < t.columns.size(); ++c) out << ',' << csv_cell(t.at(st, c));
        out << '\n';
      }
    };
  });
  auto* wave = device->add_subcommand("wave", "Transient waveform of one breakdown stage");
  wave->add_option("--kind", kind_name, "Gate kind")->default_val("nand2");
  wave->add_option("--site", site, "Transistor label such as NA")->required();
  wave->add_option("--stage", stage_name, "fault-free, mbd1, mbd2, mbd3 or hbd")->default_val("mbd1");
  wave->add_option("--pair", pair, "Local pair such as 01,11")->required();
  wave->callback([&] {
    action = [&] {
      const auto cfg = session.config(config_path);
      const auto kind = parse_kind(kind_name);
      const auto sc = obd::device::build_stage_circuit(kind, parse_local_site(site, kind), parse_stage(stage_name), cfg);
      const auto st = obd::device::run_stage(sc, parse_local_pair(pair, kind), cfg, true);
      const auto& w = st.result.waveform;
      out << "time_s,net,volts\n";
      out << std::setprecision(9);
      for (std::size_t i = 0; i < w.time.size(); ++i)
        for (const auto& [net, vs] : w.volts) out << w.time[i] << ',' << net << ',' << vs[i] << '\n';
      err << "delay: " << st.delay.to_string() << '\n';
    };
  });
  auto* vtc = device->add_subcommand("vtc", "DC transfer curve of an inverter with a breakdown");
  vtc->add_option("--polarity", polarity, "nmos, pmos or none")->default_val("nmos");
  vtc->add_option("--stage", stage_name, "fault-free, mbd1, mbd2, mbd3 or hbd")->default_val("mbd1");
  vtc->add_option("--points", points, "Sweep points")->default_val(121)->check(CLI::Range(2, 100000));
  vtc->callback([&] {
    action = [&] {
      const auto cfg = session.config(config_path);
      std::optional<obd::Polarity> pol;
      if (polarity == "nmos")
        pol = obd::Polarity::Nmos;
      else if (polarity == "pmos")
        pol = obd::Polarity::Pmos;
      else if (polarity != "none")
        throw DomainError("polarity must be nmos, pmos or none");
      const auto sc = obd::device::build_vtc_circuit(pol, parse_stage(stage_name), cfg);
      out << "v_in,v_out\n" << std::setprecision(9);
      for (const auto& pt : obd::device::vtc_sweep(sc.circuit, cfg.sim, "in", obd::device::kOutputNet, points))
        out << pt.v_in << ',' << pt.v_out << '\n';
    };
  });

  auto* window = app.add_subcommand("window", "Detection window and test interval for a capture slack");
  window->add_option("--kind", kind_name, "Gate kind")->default_val("nand2");
  window->add_option("--site", site, "Transistor label such as NA")->required();
  window->add_option("--pair", pair, "Exciting local pair such as 01,11")->required();
  window->add_option("--slack", slack_text, "Capture slack, e.g. 150ps")->required();
  window->add_option("--config", config_path, "Flat key = value device configuration");
  window->add_option("--margin", margin, "Safety margin of the test interval")->default_val(0.5);
  window->add_option("--t-window", t_window_text, "Soft-to-hard breakdown span, e.g. 27h")->default_val("27h");
  window->add_option("--i-sbd", i_sbd, "Leakage at onset, A");
  window->add_option("--i-hbd", i_hbd, "Leakage at hard breakdown, A");
  window->add_option("--samples", samples, "Time samples")->default_val(32)->check(CLI::Range(2, 100000));
  window->callback([&] {
    action = [&] {
      const auto cfg = session.config(config_path);
      const auto kind = parse_kind(kind_name);
      const auto s = parse_local_site(site, kind);
      const auto p = parse_local_pair(pair, kind);
      auto model = obd::progression::model_for(s.polarity);
      model.t_window = obd::parse_time(t_window_text);
      if (i_sbd) model.i_sbd = *i_sbd;
      if (i_hbd) model.i_hbd = *i_hbd;
      obd::progression::DelayCurve curve(model, kind, s, p, cfg);
      const auto r = obd::progression::detection_window(curve, obd::parse_time(slack_text), samples);
      json j{{"kind", kind.name()},
             {"site", obd::site_label(s.polarity, s.pin)},
             {"pair", pair_json(p)},
             {"slack_s", r.slack},
             {"baseline_s", r.baseline},
             {"model", {{"t_window_s", model.t_window}, {"i_sbd", model.i_sbd}, {"i_hbd", model.i_hbd}}},
             {"empty", !r.window.has_value()}};
      if (r.window) {
        j["t_open_s"] = r.window->t_open;
        j["t_close_s"] = r.window->t_close;
        j["width_s"] = r.window->width();
        j["interval_s"] = obd::progression::schedule_tests(r.window, margin);
      } else {
        j["t_open_s"] = j["t_close_s"] = j["width_s"] = j["interval_s"] = nullptr;
      }
      session.emit(j);
    };
  });

  for (int i = 1; i < argc; ++i) {
    const std::string word = argv[i];
    if (word.empty() || word[0] == '-') continue;
    if (!app.get_subcommand_no_throw(word)) {
      err << "obdtool: unknown subcommand '" << word << "'\n\n" << app.help();
      return 2;
    }
    break;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "obdtool: " << e.what() << "\n\n" << app.help();
    return 2;
  }
  try {
    if (action) action();
  } catch (const std::exception& e) {
    err << "obdtool: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace obdtool
