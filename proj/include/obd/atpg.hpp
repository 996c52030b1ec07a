#pragma once

// Two-frame test generation for breakdown sites. Frame 2 is a PODEM search for
// the gate-local final vector plus observation of the gate output held at its
// initial value; frame 1 justifies the gate-local initial vector inside the
// gate's input cone. Untestability is only reported after every exciting local
// pair has been exhausted.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "obd/defects.hpp"
#include "obd/netlist.hpp"
#include "obd/simulate.hpp"

namespace obd {

struct AtpgConfig {
  std::size_t backtrack_limit = 10000;
  /// Aborted searches on netlists with at most this many inputs are settled by enumeration.
  std::size_t exhaustive_fallback_max_inputs = 16;

  void validate() const {
    if (backtrack_limit == 0 || exhaustive_fallback_max_inputs == 0)
      throw std::invalid_argument("ATPG limits must be positive");
  }
};

enum class AtpgStatus { Found, Untestable, Aborted };

inline const char* atpg_status_name(AtpgStatus s) {
  switch (s) {
    case AtpgStatus::Found: return "found";
    case AtpgStatus::Untestable: return "untestable";
    case AtpgStatus::Aborted: return "aborted";
  }
  return "?";
}

struct AtpgStats {
  std::size_t decisions = 0;
  std::size_t backtracks = 0;
  std::size_t local_pairs_tried = 0;
  std::size_t exhaustive_fallbacks = 0;
};

/// Why one exciting local pair cannot be realised.
struct FrameExhaustion {
  LocalPair local;
  int frame = 2;  // 1: initial vector not justifiable; 2: final vector not observable
  bool by_enumeration = false;
};

struct AtpgResult {
  TransistorRef site;
  std::string id;
  AtpgStatus status = AtpgStatus::Aborted;
  std::optional<VectorPair> pair;
  std::optional<LocalPair> local;
  AtpgStats stats;
  std::vector<FrameExhaustion> certificate;  // filled for untestable sites
};

namespace detail {

enum Tri : std::uint8_t { k0 = 0, k1 = 1, kX = 2 };

inline Tri eval_tri(const Gate& g, const std::vector<Tri>& val) {
  const bool nand_like = g.kind.type != GateType::Nor;
  if (g.kind.type == GateType::Inv) {
    const Tri a = val[g.inputs[0]];
    return a == kX ? kX : static_cast<Tri>(a == k0);
  }
  // NAND: any 0 -> 1, all 1 -> 0.  NOR: any 1 -> 0, all 0 -> 1.
  const Tri controlling = nand_like ? k0 : k1;
  bool any_x = false;
  for (NetIndex n : g.inputs) {
    if (val[n] == controlling) return nand_like ? k1 : k0;
    if (val[n] == kX) any_x = true;
  }
  if (any_x) return kX;
  return nand_like ? k0 : k1;
}

enum class SearchOutcome { Success, Exhausted, Aborted };

/// PODEM over primary-input assignments. In justify mode the goal is a fixed
/// value on every input of `target`; in detect mode the target's output is also
/// held at `stuck_value` in the faulty machine and the effect must reach a PO.
class Podem {
 public:
  Podem(const Netlist& nl, GateIndex target, LocalVector required, std::optional<bool> stuck_value,
        std::size_t backtrack_limit)
      : nl_(nl), target_(target), required_(required), stuck_(stuck_value), limit_(backtrack_limit) {
    const std::size_t nets = nl.net_count();
    good_.assign(nets, kX);
    faulty_.assign(nets, kX);
    pi_.assign(nl.primary_inputs().size(), kX);
    pi_pos_.assign(nets, static_cast<std::size_t>(-1));
    for (std::size_t i = 0; i < nl.primary_inputs().size(); ++i) pi_pos_[nl.primary_inputs()[i]] = i;

    // Controllability proxy: distance from the primary inputs.
    cost_.assign(nets, 0);
    for (GateIndex g : nl.topo_order()) cost_[nl.gate(g).output] = nl.gate_levels()[g];

    // Observability proxy: gate distance to the nearest primary output.
    const std::size_t far = static_cast<std::size_t>(-1) / 2;
    obs_dist_.assign(nets, far);
    for (NetIndex po : nl.primary_outputs()) obs_dist_[po] = 0;
    const auto& topo = nl.topo_order();
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
      const Gate& g = nl.gate(*it);
      for (NetIndex in : g.inputs) obs_dist_[in] = std::min(obs_dist_[in], obs_dist_[g.output] + 1);
    }

    // Primary inputs in the target's fan-in cone.
    in_cone_.assign(nl.primary_inputs().size(), false);
    std::vector<bool> seen(nets, false);
    std::vector<NetIndex> work(nl.gate(target).inputs.begin(), nl.gate(target).inputs.end());
    while (!work.empty()) {
      const NetIndex n = work.back();
      work.pop_back();
      if (seen[n]) continue;
      seen[n] = true;
      if (const auto d = nl.driver(n))
        for (NetIndex in : nl.gate(*d).inputs) work.push_back(in);
      else
        in_cone_[pi_pos_[n]] = true;
    }
  }

  SearchOutcome run(AtpgStats& stats) {
    struct Decision {
      std::size_t pi;
      bool flipped;
    };
    std::vector<Decision> stack;
    std::size_t backtracks = 0;
    for (;;) {
      imply();
      const Step step = evaluate();
      if (step.kind == Step::Kind::Success) return SearchOutcome::Success;
      if (step.kind == Step::Kind::Conflict) {
        while (!stack.empty() && stack.back().flipped) {
          pi_[stack.back().pi] = kX;
          stack.pop_back();
        }
        if (stack.empty()) return SearchOutcome::Exhausted;
        auto& top = stack.back();
        pi_[top.pi] = pi_[top.pi] == k0 ? k1 : k0;
        top.flipped = true;
        ++stats.backtracks;
        if (++backtracks > limit_) return SearchOutcome::Aborted;
        continue;
      }
      const auto [pi, value] = backtrace(step.net, step.value);
      pi_[pi] = value ? k1 : k0;
      stack.push_back({pi, false});
      ++stats.decisions;
    }
  }

  /// Assigned primary inputs; unassigned ones are kX.
  const std::vector<Tri>& assignment() const { return pi_; }
  const std::vector<bool>& input_cone() const { return in_cone_; }

 private:
  struct Step {
    enum class Kind { Success, Conflict, Objective } kind;
    NetIndex net = 0;
    bool value = false;
  };

  void imply() {
    const auto& pis = nl_.primary_inputs();
    for (std::size_t i = 0; i < pis.size(); ++i) good_[pis[i]] = faulty_[pis[i]] = pi_[i];
    const NetIndex fault_net = nl_.gate(target_).output;
    for (GateIndex g : nl_.topo_order()) {
      const Gate& gate = nl_.gate(g);
      good_[gate.output] = eval_tri(gate, good_);
      faulty_[gate.output] = eval_tri(gate, faulty_);
      if (stuck_ && gate.output == fault_net) faulty_[gate.output] = *stuck_ ? k1 : k0;
    }
  }

  bool carries_effect(NetIndex n) const { return good_[n] != kX && faulty_[n] != kX && good_[n] != faulty_[n]; }
  bool undetermined(NetIndex n) const { return good_[n] == kX || faulty_[n] == kX; }

  // A path of undetermined nets from n to some primary output.
  bool x_path(NetIndex n, std::vector<std::uint8_t>& memo) const {
    if (memo[n]) return memo[n] == 1;
    memo[n] = 2;
    if (nl_.is_primary_output(n)) {
      memo[n] = 1;
      return true;
    }
    for (GateIndex g : nl_.fanout(n)) {
      const NetIndex out = nl_.gate(g).output;
      if (undetermined(out) && x_path(out, memo)) {
        memo[n] = 1;
        return true;
      }
    }
    return false;
  }

  Step evaluate() const {
    const Gate& target = nl_.gate(target_);
    for (std::size_t pin = 0; pin < target.inputs.size(); ++pin) {
      const Tri v = good_[target.inputs[pin]];
      if (v != kX && (v == k1) != required_[pin]) return {Step::Kind::Conflict};
    }
    for (std::size_t pin = 0; pin < target.inputs.size(); ++pin)
      if (good_[target.inputs[pin]] == kX) return {Step::Kind::Objective, target.inputs[pin], required_[pin]};
    if (!stuck_) return {Step::Kind::Success};

    for (NetIndex po : nl_.primary_outputs())
      if (carries_effect(po)) return {Step::Kind::Success};

    // D-frontier, nearest to an output first.
    std::vector<GateIndex> frontier;
    for (GateIndex g : nl_.topo_order()) {
      const Gate& gate = nl_.gate(g);
      if (!undetermined(gate.output)) continue;
      if (std::any_of(gate.inputs.begin(), gate.inputs.end(), [&](NetIndex n) { return carries_effect(n); }))
        frontier.push_back(g);
    }
    if (frontier.empty()) return {Step::Kind::Conflict};
    std::vector<std::uint8_t> memo(nl_.net_count(), 0);
    frontier.erase(std::remove_if(frontier.begin(), frontier.end(),
                                  [&](GateIndex g) { return !x_path(nl_.gate(g).output, memo); }),
                   frontier.end());
    if (frontier.empty()) return {Step::Kind::Conflict};
    std::stable_sort(frontier.begin(), frontier.end(), [&](GateIndex a, GateIndex b) {
      return obs_dist_[nl_.gate(a).output] < obs_dist_[nl_.gate(b).output];
    });

    for (GateIndex g : frontier) {
      const Gate& gate = nl_.gate(g);
      const bool non_controlling = gate.kind.type != GateType::Nor;
      for (NetIndex in : gate.inputs)
        if (good_[in] == kX) return {Step::Kind::Objective, in, non_controlling};
    }
    // Only faulty-machine values are open: decide any free input in their cone.
    for (GateIndex g : frontier)
      for (NetIndex in : nl_.gate(g).inputs)
        if (faulty_[in] == kX)
          if (const auto pi = free_input_below(in)) return {Step::Kind::Objective, nl_.primary_inputs()[*pi], false};
    return {Step::Kind::Conflict};
  }

  std::optional<std::size_t> free_input_below(NetIndex n) const {
    std::vector<bool> seen(nl_.net_count(), false);
    std::vector<NetIndex> work{n};
    std::optional<std::size_t> best;
    while (!work.empty()) {
      const NetIndex x = work.back();
      work.pop_back();
      if (seen[x]) continue;
      seen[x] = true;
      if (const auto d = nl_.driver(x)) {
        for (NetIndex in : nl_.gate(*d).inputs) work.push_back(in);
      } else if (pi_[pi_pos_[x]] == kX && (!best || pi_pos_[x] < *best)) {
        best = pi_pos_[x];
      }
    }
    return best;
  }

  // Walk the objective back to an unassigned primary input.
  std::pair<std::size_t, bool> backtrace(NetIndex net, bool value) const {
    for (;;) {
      const auto d = nl_.driver(net);
      if (!d) {
        if (good_[net] != kX) break;
        return {pi_pos_[net], value};
      }
      const Gate& g = nl_.gate(*d);
      if (g.kind.type == GateType::Inv) {
        net = g.inputs[0];
        value = !value;
        continue;
      }
      const bool nand_like = g.kind.type == GateType::Nand;
      const bool controlling = !nand_like;  // NAND: 0, NOR: 1
      // NAND output 1 / NOR output 0 needs one controlling input: take the easiest.
      const bool need_one_controlling = nand_like ? value : !value;
      std::optional<NetIndex> pick;
      for (NetIndex in : g.inputs) {
        if (good_[in] != kX) continue;
        if (!pick) {
          pick = in;
          continue;
        }
        if (need_one_controlling ? cost_[in] < cost_[*pick] : cost_[in] > cost_[*pick]) pick = in;
      }
      if (!pick) break;
      net = *pick;
      value = need_one_controlling ? controlling : !controlling;
    }
    // Only reachable through inconsistent objectives; fall back to the first free input.
    for (std::size_t i = 0; i < pi_.size(); ++i)
      if (pi_[i] == kX) return {i, false};
    throw std::logic_error("PODEM backtrace found no free primary input");
  }

  const Netlist& nl_;
  GateIndex target_;
  LocalVector required_;
  std::optional<bool> stuck_;
  std::size_t limit_;
  std::vector<Tri> good_, faulty_, pi_;
  std::vector<std::size_t> pi_pos_;
  std::vector<std::size_t> cost_, obs_dist_;
  std::vector<bool> in_cone_;
};

struct FrameResult {
  SearchOutcome outcome = SearchOutcome::Exhausted;
  Vector vector;
  bool by_enumeration = false;
};

inline Vector fill_free(const std::vector<Tri>& assignment, const Vector* defaults) {
  std::vector<std::uint8_t> bits(assignment.size());
  for (std::size_t i = 0; i < assignment.size(); ++i)
    bits[i] = assignment[i] == kX ? (defaults ? (*defaults)[i] : 0) : assignment[i] == k1;
  return Vector(std::move(bits));
}

// Final vector: gate inputs equal `required` and the output held at `held` is observed.
inline FrameResult solve_frame2(const Netlist& nl, GateIndex gate, LocalVector required, bool held,
                                const AtpgConfig& cfg, AtpgStats& stats) {
  Podem podem(nl, gate, required, held, cfg.backtrack_limit);
  FrameResult r;
  r.outcome = podem.run(stats);
  if (r.outcome == SearchOutcome::Success) r.vector = fill_free(podem.assignment(), nullptr);
  if (r.outcome != SearchOutcome::Aborted || nl.primary_inputs().size() > cfg.exhaustive_fallback_max_inputs)
    return r;
  ++stats.exhaustive_fallbacks;
  r.by_enumeration = true;
  const std::size_t k = nl.primary_inputs().size();
  const NetIndex out = nl.gate(gate).output;
  for (std::uint64_t i = 0; i < (std::uint64_t{1} << k); ++i) {
    const Vector v = Vector::from_index(i, k);
    const auto good = logic_sim(nl, v);
    if (!(local_inputs(nl, gate, good) == required)) continue;
    if (outputs_differ(nl, good, logic_sim(nl, v, out, held))) {
      r.outcome = SearchOutcome::Success;
      r.vector = v;
      return r;
    }
  }
  r.outcome = SearchOutcome::Exhausted;
  return r;
}

// Initial vector: gate inputs equal `required`; inputs outside the decided cone copy `final_vector`.
inline FrameResult solve_frame1(const Netlist& nl, GateIndex gate, LocalVector required, const Vector& final_vector,
                                const AtpgConfig& cfg, AtpgStats& stats) {
  Podem podem(nl, gate, required, std::nullopt, cfg.backtrack_limit);
  FrameResult r;
  r.outcome = podem.run(stats);
  if (r.outcome == SearchOutcome::Success) r.vector = fill_free(podem.assignment(), &final_vector);
  if (r.outcome != SearchOutcome::Aborted || nl.primary_inputs().size() > cfg.exhaustive_fallback_max_inputs)
    return r;
  ++stats.exhaustive_fallbacks;
  r.by_enumeration = true;
  const std::size_t k = nl.primary_inputs().size();
  const auto& cone = podem.input_cone();
  for (std::uint64_t i = 0; i < (std::uint64_t{1} << k); ++i) {
    Vector v = Vector::from_index(i, k);
    if (!(local_inputs(nl, gate, logic_sim(nl, v)) == required)) continue;
    for (std::size_t p = 0; p < k; ++p)
      if (!cone[p]) v.at(p) = final_vector[p];
    r.outcome = SearchOutcome::Success;
    r.vector = v;
    return r;
  }
  r.outcome = SearchOutcome::Exhausted;
  return r;
}

}  // namespace detail

inline AtpgResult atpg_for_defect(const Netlist& nl, const TransistorRef& site, const AtpgConfig& cfg = {}) {
  cfg.validate();
  if (site.gate >= nl.gates().size() || site.pin >= nl.gate(site.gate).kind.arity)
    throw std::invalid_argument("site is not part of the netlist");
  const Gate& gate = nl.gate(site.gate);
  AtpgResult result{site, site_id(nl, site), AtpgStatus::Untestable, std::nullopt, std::nullopt, {}, {}};

  std::map<std::uint32_t, detail::FrameResult> frame2_cache, frame1_cache;
  bool aborted = false;
  for (const LocalPair& lp : excitation_pairs(gate.kind, site.polarity, site.pin)) {
    ++result.stats.local_pairs_tried;
    const bool held = gate.kind.eval(lp.v1.bits);
    auto f2 = frame2_cache.find(lp.v2.bits);
    if (f2 == frame2_cache.end())
      f2 = frame2_cache.emplace(lp.v2.bits, detail::solve_frame2(nl, site.gate, lp.v2, held, cfg, result.stats)).first;
    if (f2->second.outcome == detail::SearchOutcome::Aborted) {
      aborted = true;
      continue;
    }
    if (f2->second.outcome == detail::SearchOutcome::Exhausted) {
      result.certificate.push_back({lp, 2, f2->second.by_enumeration});
      continue;
    }
    auto f1 = frame1_cache.find(lp.v1.bits);
    if (f1 == frame1_cache.end())
      f1 = frame1_cache
               .emplace(lp.v1.bits, detail::solve_frame1(nl, site.gate, lp.v1, f2->second.vector, cfg, result.stats))
               .first;
    if (f1->second.outcome == detail::SearchOutcome::Aborted) {
      aborted = true;
      continue;
    }
    if (f1->second.outcome == detail::SearchOutcome::Exhausted) {
      result.certificate.push_back({lp, 1, f1->second.by_enumeration});
      continue;
    }
    // Outside the cone the cached initial vector may hold another final vector's values.
    Vector v1 = f1->second.vector;
    {
      detail::Podem cone_probe(nl, site.gate, lp.v1, std::nullopt, cfg.backtrack_limit);
      const auto& cone = cone_probe.input_cone();
      for (std::size_t p = 0; p < v1.width(); ++p)
        if (!cone[p]) v1.at(p) = f2->second.vector[p];
    }
    VectorPair pair{v1, f2->second.vector};
    if (!detects(nl, site, pair))
      throw std::logic_error("ATPG produced a pair that does not detect " + result.id);
    result.status = AtpgStatus::Found;
    result.pair = pair;
    result.local = lp;
    result.certificate.clear();
    return result;
  }
  if (aborted) {
    result.status = AtpgStatus::Aborted;
    result.certificate.clear();
  }
  return result;
}

struct AtpgRun {
  std::vector<AtpgResult> results;  // one per requested site, in request order
  std::vector<VectorPair> tests;    // compacted
};

/// Per-site generation with fault-simulation compaction: a pattern is kept only
/// if it detects a site no earlier pattern detects, then a reverse pass drops
/// patterns made redundant by later ones.
inline AtpgRun atpg_all(const Netlist& nl, const std::vector<TransistorRef>& sites, const AtpgConfig& cfg = {}) {
  AtpgRun run;
  std::map<TransistorRef, std::size_t> first_index;
  std::vector<TransistorRef> unique_sites;
  for (const auto& s : sites)
    if (first_index.emplace(s, unique_sites.size()).second) unique_sites.push_back(s);

  std::vector<AtpgResult> unique_results;
  std::vector<bool> covered(unique_sites.size(), false);
  for (std::size_t i = 0; i < unique_sites.size(); ++i) {
    unique_results.push_back(atpg_for_defect(nl, unique_sites[i], cfg));
    const auto& r = unique_results.back();
    if (r.status != AtpgStatus::Found || covered[i]) continue;
    run.tests.push_back(*r.pair);
    for (std::size_t j = 0; j < unique_sites.size(); ++j)
      if (!covered[j] && (j == i || detects(nl, unique_sites[j], *r.pair))) covered[j] = true;
  }

  // Reverse-order pass over the detection matrix.
  std::vector<std::vector<bool>> hit(run.tests.size(), std::vector<bool>(unique_sites.size(), false));
  for (std::size_t t = 0; t < run.tests.size(); ++t)
    for (std::size_t j = 0; j < unique_sites.size(); ++j)
      hit[t][j] = unique_results[j].status == AtpgStatus::Found && detects(nl, unique_sites[j], run.tests[t]);
  std::vector<bool> keep(run.tests.size(), true);
  for (std::size_t t = run.tests.size(); t-- > 0;) {
    bool needed = false;
    for (std::size_t j = 0; j < unique_sites.size() && !needed; ++j) {
      if (!hit[t][j]) continue;
      bool elsewhere = false;
      for (std::size_t u = 0; u < run.tests.size() && !elsewhere; ++u) elsewhere = u != t && keep[u] && hit[u][j];
      needed = !elsewhere;
    }
    keep[t] = needed;
  }
  std::vector<VectorPair> compacted;
  for (std::size_t t = 0; t < run.tests.size(); ++t)
    if (keep[t]) compacted.push_back(run.tests[t]);
  run.tests = std::move(compacted);

  for (const auto& s : sites) run.results.push_back(unique_results[first_index.at(s)]);
  return run;
}

}  // namespace obd
