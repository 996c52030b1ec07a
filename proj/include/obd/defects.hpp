#pragma once

// Oxide-breakdown defect sites, their local two-vector excitation conditions,
// minimum local test sets, and the per-stage diode/resistor parameters.

#include <array>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "obd/netlist.hpp"
#include "obd/set_cover.hpp"
#include "obd/xtor_net.hpp"

namespace obd {

enum class Stage { FaultFree, Mbd1, Mbd2, Mbd3, Hbd };

inline constexpr std::array<Stage, 5> kAllStages = {Stage::FaultFree, Stage::Mbd1, Stage::Mbd2, Stage::Mbd3,
                                                    Stage::Hbd};

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::FaultFree: return "fault-free";
    case Stage::Mbd1: return "mbd1";
    case Stage::Mbd2: return "mbd2";
    case Stage::Mbd3: return "mbd3";
    case Stage::Hbd: return "hbd";
  }
  return "?";
}

inline std::optional<Stage> stage_from_name(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (s == "fault-free" || s == "faultfree" || s == "ff") return Stage::FaultFree;
  if (s == "mbd1") return Stage::Mbd1;
  if (s == "mbd2") return Stage::Mbd2;
  if (s == "mbd3") return Stage::Mbd3;
  if (s == "hbd") return Stage::Hbd;
  return std::nullopt;
}

struct ObdDefect {
  TransistorRef site;
  Stage stage = Stage::Mbd1;
};

/// Ordered gate-input transition (v1 applied, then v2).
struct LocalPair {
  LocalVector v1;
  LocalVector v2;

  std::string to_string() const { return "(" + v1.to_string() + "," + v2.to_string() + ")"; }

  friend bool operator==(const LocalPair&, const LocalPair&) = default;
  friend bool operator<(const LocalPair& a, const LocalPair& b) {
    if (a.v1 == b.v1) return a.v2 < b.v2;
    return a.v1 < b.v1;
  }
};

/// "NA", "PB", ...
inline std::string site_label(Polarity p, std::size_t pin) { return {polarity_letter(p), pin_letter(pin)}; }

/// "<gate>.<N|P><pin-letter>", e.g. "g3.PA".
inline std::string site_id(const Netlist& nl, const TransistorRef& t) {
  return nl.gate(t.gate).id + "." + site_label(t.polarity, t.pin);
}

/// Parses "NA" / "pb" / "N0" into (polarity, pin).
inline std::optional<std::pair<Polarity, std::size_t>> parse_site_label(std::string_view s) {
  if (s.size() < 2) return std::nullopt;
  const char p = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  if (p != 'N' && p != 'P') return std::nullopt;
  const Polarity pol = p == 'N' ? Polarity::Nmos : Polarity::Pmos;
  if (s.size() == 2 && std::isalpha(static_cast<unsigned char>(s[1])))
    return std::pair{pol, static_cast<std::size_t>(std::toupper(static_cast<unsigned char>(s[1])) - 'A')};
  std::size_t pin = 0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return std::nullopt;
    pin = pin * 10 + static_cast<std::size_t>(s[i] - '0');
  }
  return std::pair{pol, pin};
}

/// Parses "g3.PA" against a netlist.
inline std::optional<TransistorRef> parse_site_id(const Netlist& nl, std::string_view id) {
  const auto dot = id.rfind('.');
  if (dot == std::string_view::npos) return std::nullopt;
  const auto gate = nl.find_gate(id.substr(0, dot));
  const auto label = parse_site_label(id.substr(dot + 1));
  if (!gate || !label || label->second >= nl.gate(*gate).kind.arity) return std::nullopt;
  return TransistorRef{*gate, label->first, label->second};
}

/// Every transistor of every gate: gate order, then pin, NMOS before PMOS.
inline std::vector<TransistorRef> enumerate_defects(const Netlist& nl,
                                                    const std::optional<std::set<GateKind>>& kinds = std::nullopt) {
  std::vector<TransistorRef> sites;
  for (GateIndex g = 0; g < nl.gates().size(); ++g) {
    const auto& gate = nl.gate(g);
    if (kinds && !kinds->count(gate.kind)) continue;
    for (std::size_t pin = 0; pin < gate.kind.arity; ++pin) {
      sites.push_back({g, Polarity::Nmos, pin});
      sites.push_back({g, Polarity::Pmos, pin});
    }
  }
  return sites;
}

/// True iff (v1, v2) excites the transistor (polarity, pin) of a gate of `kind`:
/// (a) the gate output switches; (b) the transistor and its network conduct
/// under v2, so that network establishes the new output value; (c) no
/// transistor in parallel with it conducts under v2.
inline bool excites(const GateNetworks& nets, Polarity polarity, std::size_t pin, const LocalPair& p) {
  const GateKind kind = nets.kind;
  if (p.v1.width != kind.arity || p.v2.width != kind.arity)
    throw std::invalid_argument("pair width does not match " + kind.name());
  if (kind.eval(p.v1.bits) == kind.eval(p.v2.bits)) return false;
  const NetworkExpr& net = nets.network(polarity);
  if (!detail::conducts_unchecked(net, p.v2)) return false;
  const bool leaf_on = polarity == Polarity::Nmos ? p.v2[pin] : !p.v2[pin];
  if (!leaf_on) return false;
  return parallel_siblings_off(net, polarity, pin, p.v2);
}

/// All local pairs over the 2^k * (2^k - 1) ordered distinct input vectors, sorted.
inline std::vector<LocalPair> local_pair_universe(GateKind kind) {
  std::vector<LocalVector> vecs;
  for (std::uint32_t b = 0; b < (1u << kind.arity); ++b) vecs.push_back({b, kind.arity});
  std::sort(vecs.begin(), vecs.end());
  std::vector<LocalPair> pairs;
  for (const auto& a : vecs)
    for (const auto& b : vecs)
      if (!(a == b)) pairs.push_back({a, b});
  return pairs;
}

inline std::vector<LocalPair> excitation_pairs(GateKind kind, Polarity polarity, std::size_t pin) {
  if (!kind.valid()) throw std::invalid_argument("unsupported gate kind " + kind.name());
  if (pin >= kind.arity)
    throw std::invalid_argument("pin " + std::to_string(pin) + " out of range for " + kind.name());
  const GateNetworks nets = expand_gate(kind);
  std::vector<LocalPair> out;
  for (const auto& p : local_pair_universe(kind))
    if (excites(nets, polarity, pin, p)) out.push_back(p);
  return out;
}

inline std::vector<LocalPair> excitation_pairs(const Netlist& nl, const TransistorRef& site) {
  return excitation_pairs(nl.gate(site.gate).kind, site.polarity, site.pin);
}

/// Minimum set of local pairs exciting every transistor of the gate; ties are
/// resolved towards the lexicographically smallest sorted pair list.
inline std::vector<LocalPair> local_test_set(GateKind kind) {
  const auto universe = local_pair_universe(kind);
  const GateNetworks nets = expand_gate(kind);
  CoverProblem problem;
  problem.element_count = 2 * kind.arity;
  problem.covers.resize(universe.size());
  for (std::size_t i = 0; i < universe.size(); ++i)
    for (std::size_t pin = 0; pin < kind.arity; ++pin) {
      if (excites(nets, Polarity::Nmos, pin, universe[i])) problem.covers[i].push_back(2 * pin);
      if (excites(nets, Polarity::Pmos, pin, universe[i])) problem.covers[i].push_back(2 * pin + 1);
    }
  CoverOptions opts;
  opts.lexicographic = true;
  const auto result = minimum_cover(problem, opts);
  std::vector<LocalPair> out;
  for (std::size_t i : result.chosen) out.push_back(universe[i]);
  return out;
}

/// Diode saturation current and breakdown resistance of one progression stage.
struct StageEntry {
  double i_sat = 0.0;  // A
  double r_bd = 0.0;   // ohm
};

class NoStageData : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Per-stage breakdown parameters. There is no PMOS hard-breakdown entry.
inline StageEntry stage_params(Polarity polarity, Stage stage) {
  if (polarity == Polarity::Nmos) {
    switch (stage) {
      case Stage::FaultFree: return {1e-30, 10e3};
      case Stage::Mbd1: return {2e-28, 500.0};
      case Stage::Mbd2: return {1e-27, 100.0};
      case Stage::Mbd3: return {5e-27, 20.0};
      case Stage::Hbd: return {2e-24, 0.05};
    }
  } else {
    switch (stage) {
      case Stage::FaultFree: return {1e-30, 10e3};
      case Stage::Mbd1: return {1e-29, 1e3};
      case Stage::Mbd2: return {1.1e-29, 900.0};
      case Stage::Mbd3: return {1.2e-29, 830.0};
      case Stage::Hbd: break;
    }
  }
  throw NoStageData(std::string("no breakdown parameters for ") + polarity_name(polarity) + " at " +
                    stage_name(stage));
}

inline bool has_stage_params(Polarity polarity, Stage stage) {
  return !(polarity == Polarity::Pmos && stage == Stage::Hbd);
}

}  // namespace obd
