#pragma once

// Zero-delay two-frame simulation of whole netlists: logic and stuck-at
// simulation, the circuit-level detection predicate for breakdown sites,
// the exhaustive pair oracle, minimum test sets and coverage reports.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "obd/defects.hpp"
#include "obd/netlist.hpp"
#include "obd/set_cover.hpp"
#include "obd/xtor_net.hpp"

namespace obd {

/// Assignment to the primary inputs, in declaration order.
class Vector {
 public:
  Vector() = default;
  explicit Vector(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {}

  /// Index i maps to the bit string of i with the first primary input as MSB,
  /// so index order equals string order.
  static Vector from_index(std::uint64_t index, std::size_t width) {
    std::vector<std::uint8_t> b(width);
    for (std::size_t i = 0; i < width; ++i) b[i] = static_cast<std::uint8_t>((index >> (width - 1 - i)) & 1u);
    return Vector(std::move(b));
  }

  static Vector from_string(const std::string& s) {
    std::vector<std::uint8_t> b;
    for (char c : s) {
      if (c != '0' && c != '1') throw std::invalid_argument("vector '" + s + "' may contain only 0 and 1");
      b.push_back(c == '1');
    }
    return Vector(std::move(b));
  }

  std::uint64_t index() const {
    std::uint64_t idx = 0;
    for (auto b : bits_) idx = (idx << 1) | b;
    return idx;
  }

  std::string to_string() const {
    std::string s;
    for (auto b : bits_) s += b ? '1' : '0';
    return s;
  }

  std::size_t width() const { return bits_.size(); }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  std::uint8_t& at(std::size_t i) { return bits_.at(i); }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  friend bool operator==(const Vector&, const Vector&) = default;
  friend auto operator<=>(const Vector&, const Vector&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

struct VectorPair {
  Vector v1;
  Vector v2;

  friend bool operator==(const VectorPair&, const VectorPair&) = default;
  friend auto operator<=>(const VectorPair&, const VectorPair&) = default;
};

inline void check_vector(const Netlist& nl, const Vector& v) {
  if (v.width() != nl.primary_inputs().size())
    throw std::invalid_argument("vector width " + std::to_string(v.width()) + " does not match " +
                                std::to_string(nl.primary_inputs().size()) + " primary inputs");
}

inline void check_pair(const Netlist& nl, const VectorPair& p) {
  check_vector(nl, p.v1);
  check_vector(nl, p.v2);
  if (p.v1 == p.v2) throw std::invalid_argument("vector pair " + p.v1.to_string() + " repeats the same vector");
}

/// Values of every net (indexed by NetIndex) under a primary-input vector.
/// `forced_net`, when set, is held at `forced_value` (single stuck-at fault).
inline std::vector<std::uint8_t> logic_sim(const Netlist& nl, const Vector& v,
                                           std::optional<NetIndex> forced_net = std::nullopt,
                                           bool forced_value = false) {
  check_vector(nl, v);
  std::vector<std::uint8_t> val(nl.net_count(), 0);
  const auto& pis = nl.primary_inputs();
  for (std::size_t i = 0; i < pis.size(); ++i) val[pis[i]] = v[i];
  if (forced_net) val[*forced_net] = forced_value;
  for (GateIndex g : nl.topo_order()) {
    const Gate& gate = nl.gate(g);
    if (forced_net && gate.output == *forced_net) continue;
    std::uint32_t local = 0;
    for (std::size_t pin = 0; pin < gate.inputs.size(); ++pin)
      if (val[gate.inputs[pin]]) local |= 1u << pin;
    val[gate.output] = gate.kind.eval(local);
  }
  return val;
}

inline std::map<std::string, bool> logic_sim_named(const Netlist& nl, const Vector& v) {
  const auto val = logic_sim(nl, v);
  std::map<std::string, bool> out;
  for (NetIndex n = 0; n < nl.net_count(); ++n) out[nl.net_name(n)] = val[n];
  return out;
}

inline LocalVector local_inputs(const Netlist& nl, GateIndex g, const std::vector<std::uint8_t>& values) {
  const Gate& gate = nl.gate(g);
  LocalVector lv{0, gate.inputs.size()};
  for (std::size_t pin = 0; pin < gate.inputs.size(); ++pin)
    if (values[gate.inputs[pin]]) lv.bits |= 1u << pin;
  return lv;
}

inline bool outputs_differ(const Netlist& nl, const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  for (NetIndex po : nl.primary_outputs())
    if (a[po] != b[po]) return true;
  return false;
}

/// The pair detects the site iff the site's gate sees an exciting local pair and
/// the gate output, held at its v1 value, is observed at a primary output under v2.
inline bool detects(const Netlist& nl, const TransistorRef& site, const VectorPair& pair) {
  check_pair(nl, pair);
  const Gate& gate = nl.gate(site.gate);
  const auto good1 = logic_sim(nl, pair.v1);
  const auto good2 = logic_sim(nl, pair.v2);
  const LocalPair local{local_inputs(nl, site.gate, good1), local_inputs(nl, site.gate, good2)};
  if (!excites(expand_gate(gate.kind), site.polarity, site.pin, local)) return false;
  const bool held = good1[gate.output];
  const auto faulty = logic_sim(nl, pair.v2, gate.output, held);
  return outputs_differ(nl, good2, faulty);
}

struct SiteDetection {
  TransistorRef site;
  std::string id;
  std::uint64_t count = 0;         // number of detecting pairs
  std::vector<VectorPair> pairs;   // sorted; empty when only counts were requested
};

/// Detectability of each site over all ordered pairs of distinct input vectors.
struct DetectMap {
  std::size_t input_count = 0;
  std::uint64_t universe_size = 0;
  bool has_pairs = true;
  std::vector<SiteDetection> sites;

  std::size_t testable() const {
    return static_cast<std::size_t>(std::count_if(sites.begin(), sites.end(), [](const auto& s) { return s.count > 0; }));
  }
};

inline constexpr std::size_t kOracleMaxInputs = 16;

class TooManyInputs : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct OracleOptions {
  bool collect_pairs = true;
};

/// Exhaustive oracle. Detection factors into a local excitation test on (v1, v2)
/// and a stuck-at observation under v2 alone, which keeps the sweep cheap.
inline DetectMap oracle_all_pairs(const Netlist& nl, const std::vector<TransistorRef>& sites,
                                  OracleOptions opts = {}) {
  const std::size_t k = nl.primary_inputs().size();
  if (k > kOracleMaxInputs)
    throw TooManyInputs("exhaustive oracle supports at most " + std::to_string(kOracleMaxInputs) +
                        " primary inputs, netlist has " + std::to_string(k));
  const std::uint64_t nvec = std::uint64_t{1} << k;

  std::vector<Vector> vectors;
  std::vector<std::vector<std::uint8_t>> good;
  vectors.reserve(nvec);
  good.reserve(nvec);
  for (std::uint64_t i = 0; i < nvec; ++i) {
    vectors.push_back(Vector::from_index(i, k));
    good.push_back(logic_sim(nl, vectors.back()));
  }

  // observed[g][v]: gate g's output, held at the complement of its value under v, flips a PO.
  std::map<GateIndex, std::vector<std::uint8_t>> observed;
  for (const auto& s : sites) {
    if (observed.count(s.gate)) continue;
    const NetIndex out = nl.gate(s.gate).output;
    std::vector<std::uint8_t> obs(nvec, 0);
    for (std::uint64_t v = 0; v < nvec; ++v)
      obs[v] = outputs_differ(nl, good[v], logic_sim(nl, vectors[v], out, !good[v][out]));
    observed.emplace(s.gate, std::move(obs));
  }

  DetectMap map;
  map.input_count = k;
  map.universe_size = nvec * (nvec - 1);
  map.has_pairs = opts.collect_pairs;
  for (const auto& s : sites) {
    const Gate& gate = nl.gate(s.gate);
    const std::size_t width = gate.kind.arity;
    const std::uint32_t nloc = 1u << width;
    std::vector<std::uint8_t> ok(static_cast<std::size_t>(nloc) * nloc, 0);
    for (const auto& lp : excitation_pairs(gate.kind, s.polarity, s.pin))
      ok[static_cast<std::size_t>(lp.v1.bits) * nloc + lp.v2.bits] = 1;
    std::vector<std::vector<std::uint64_t>> by_local(nloc);
    for (std::uint64_t v = 0; v < nvec; ++v) by_local[local_inputs(nl, s.gate, good[v]).bits].push_back(v);

    SiteDetection det{s, site_id(nl, s), 0, {}};
    const auto& obs = observed.at(s.gate);
    std::vector<std::pair<std::uint64_t, std::uint64_t>> found;
    for (std::uint64_t v2 = 0; v2 < nvec; ++v2) {
      if (!obs[v2]) continue;
      const std::uint32_t l2 = local_inputs(nl, s.gate, good[v2]).bits;
      for (std::uint32_t l1 = 0; l1 < nloc; ++l1) {
        if (!ok[static_cast<std::size_t>(l1) * nloc + l2]) continue;
        det.count += by_local[l1].size();
        if (opts.collect_pairs)
          for (std::uint64_t v1 : by_local[l1]) found.emplace_back(v1, v2);
      }
    }
    std::sort(found.begin(), found.end());
    for (auto [a, b] : found) det.pairs.push_back({vectors[a], vectors[b]});
    map.sites.push_back(std::move(det));
  }
  return map;
}

struct MinimalTestSet {
  std::vector<VectorPair> pairs;
  bool exact = false;
};

inline constexpr std::uint64_t kExactCoverMaxUniverse = 4096;

/// Minimum set of pairs detecting every testable site of the map.
inline MinimalTestSet minimal_test_set(const DetectMap& map, CoverOptions opts = {}) {
  if (!map.has_pairs) throw std::invalid_argument("detect map carries counts only; pairs are required");
  std::vector<VectorPair> candidates;
  for (const auto& s : map.sites) candidates.insert(candidates.end(), s.pairs.begin(), s.pairs.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  CoverProblem problem;
  problem.element_count = map.sites.size();
  problem.covers.resize(candidates.size());
  for (std::size_t e = 0; e < map.sites.size(); ++e)
    for (const auto& p : map.sites[e].pairs) {
      const auto it = std::lower_bound(candidates.begin(), candidates.end(), p);
      problem.covers[static_cast<std::size_t>(it - candidates.begin())].push_back(e);
    }

  CoverResult result;
  if (map.universe_size <= kExactCoverMaxUniverse)
    result = minimum_cover(problem, opts);
  else
    result = greedy_cover(problem);

  MinimalTestSet out;
  out.exact = result.exact;
  for (std::size_t c : result.chosen) out.pairs.push_back(candidates[c]);
  return out;
}

enum class SiteStatus { Detected, Undetected, Untestable };

inline const char* site_status_name(SiteStatus s) {
  switch (s) {
    case SiteStatus::Detected: return "detected";
    case SiteStatus::Undetected: return "undetected";
    case SiteStatus::Untestable: return "untestable";
  }
  return "?";
}

struct SiteCoverage {
  TransistorRef site;
  std::string id;
  SiteStatus status = SiteStatus::Undetected;
  std::vector<std::size_t> detected_by;  // indices into the test list
};

struct CoverageReport {
  std::vector<VectorPair> tests;
  std::vector<SiteCoverage> sites;
  std::size_t detected = 0;
  std::size_t testable = 0;
  /// False when the netlist is too wide for the exhaustive oracle; then every
  /// site counts as testable.
  bool testability_known = false;

  /// detected / testable; a report with no testable site is complete.
  double fraction() const { return testable == 0 ? 1.0 : static_cast<double>(detected) / static_cast<double>(testable); }
};

inline CoverageReport coverage(const Netlist& nl, const std::vector<TransistorRef>& sites,
                               const std::vector<VectorPair>& tests) {
  for (const auto& t : tests) check_pair(nl, t);
  CoverageReport report;
  report.tests = tests;

  std::vector<bool> testable(sites.size(), true);
  if (nl.primary_inputs().size() <= kOracleMaxInputs) {
    const auto map = oracle_all_pairs(nl, sites, {.collect_pairs = false});
    for (std::size_t i = 0; i < sites.size(); ++i) testable[i] = map.sites[i].count > 0;
    report.testability_known = true;
  }

  for (std::size_t i = 0; i < sites.size(); ++i) {
    SiteCoverage sc{sites[i], site_id(nl, sites[i]), SiteStatus::Undetected, {}};
    for (std::size_t t = 0; t < tests.size(); ++t)
      if (detects(nl, sites[i], tests[t])) sc.detected_by.push_back(t);
    if (!sc.detected_by.empty()) {
      sc.status = SiteStatus::Detected;
      ++report.detected;
    } else if (!testable[i]) {
      sc.status = SiteStatus::Untestable;
    }
    if (testable[i] || !sc.detected_by.empty()) ++report.testable;
    report.sites.push_back(std::move(sc));
  }
  return report;
}

}  // namespace obd
