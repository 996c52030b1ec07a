#include <gtest/gtest.h>

#include <random>
#include <set>

#include "obd/simulate.hpp"
#include "random_netlist.hpp"

using namespace obd;

namespace {

const char* kNand2 = "input A\ninput B\noutput Y\nnand2 g1 A B Y\n";

// Net values of a vector, with gate `held` (if any) frozen at `value`.
std::vector<int> eval_net(const Netlist& nl, const Vector& v, int held = -1, bool value = false) {
  std::vector<int> val(nl.net_count(), -1);
  for (std::size_t i = 0; i < nl.primary_inputs().size(); ++i) val[nl.primary_inputs()[i]] = v[i];
  bool changed = true;
  while (changed) {
    changed = false;
    for (GateIndex g = 0; g < nl.gates().size(); ++g) {
      const Gate& gate = nl.gate(g);
      if (val[gate.output] != -1) continue;
      if (static_cast<int>(g) == held) {
        val[gate.output] = value;
        changed = true;
        continue;
      }
      std::uint32_t bits = 0;
      bool ready = true;
      for (std::size_t p = 0; p < gate.inputs.size(); ++p) {
        if (val[gate.inputs[p]] == -1) ready = false;
        if (val[gate.inputs[p]] == 1) bits |= 1u << p;
      }
      if (!ready) continue;
      val[gate.output] = gate.kind.eval(bits);
      changed = true;
    }
  }
  return val;
}

std::uint32_t local_bits(const Netlist& nl, GateIndex g, const std::vector<int>& val) {
  std::uint32_t bits = 0;
  for (std::size_t p = 0; p < nl.gate(g).inputs.size(); ++p)
    if (val[nl.gate(g).inputs[p]] == 1) bits |= 1u << p;
  return bits;
}

// Independent reference for detects(): excitation by closed form, observation by
// simulating the faulty circuit with the gate output held at its v1 value.
bool reference_detects(const Netlist& nl, const TransistorRef& s, const VectorPair& p) {
  const Gate& gate = nl.gate(s.gate);
  const auto a = eval_net(nl, p.v1), b = eval_net(nl, p.v2);
  const std::uint32_t l1 = local_bits(nl, s.gate, a), l2 = local_bits(nl, s.gate, b);
  const std::uint32_t all = (1u << gate.kind.arity) - 1u;
  if (gate.kind.eval(l1) == gate.kind.eval(l2)) return false;
  const bool series = gate.kind.type == GateType::Inv || ((gate.kind.type == GateType::Nand) == (s.polarity == Polarity::Nmos));
  bool excited;
  if (series)
    excited = l2 == (s.polarity == Polarity::Nmos ? all : 0u);
  else
    excited = l2 == (s.polarity == Polarity::Nmos ? (1u << s.pin) : (all & ~(1u << s.pin)));
  if (!excited) return false;
  const bool w = a[gate.output] == 1;
  const auto faulty = eval_net(nl, p.v2, static_cast<int>(s.gate), w);
  for (NetIndex po : nl.primary_outputs())
    if (faulty[po] != b[po]) return true;
  return false;
}

}  // namespace

TEST(LogicSim, FullAdderVectors) {
  const auto fa = builtin_full_adder();
  EXPECT_FALSE(logic_sim_named(fa, Vector::from_string("000")).at("S"));
  EXPECT_TRUE(logic_sim_named(fa, Vector::from_string("111")).at("S"));
}

TEST(LogicSim, MatchesReferenceEvaluator) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const auto nl = obd::testing::random_netlist(rng);
    for (int k = 0; k < 8; ++k) {
      const auto v = Vector::from_index(rng() % (1u << nl.primary_inputs().size()), nl.primary_inputs().size());
      const auto got = logic_sim(nl, v);
      const auto want = eval_net(nl, v);
      for (NetIndex n = 0; n < nl.net_count(); ++n) EXPECT_EQ(got[n], want[n]);
    }
  }
}

TEST(LogicSim, WidthMismatch) {
  const auto nl = parse_netlist(kNand2);
  EXPECT_THROW(logic_sim(nl, Vector::from_string("1")), std::invalid_argument);
  EXPECT_THROW(check_pair(nl, {Vector::from_string("11"), Vector::from_string("011")}), std::invalid_argument);
}

TEST(Detects, LoneNandEqualsExcitation) {
  const auto nl = parse_netlist(kNand2);
  const auto g = expand_gate(GateKind::nand(2));
  for (const auto& s : enumerate_defects(nl))
    for (std::uint64_t a = 0; a < 4; ++a)
      for (std::uint64_t b = 0; b < 4; ++b) {
        if (a == b) continue;
        const VectorPair p{Vector::from_index(a, 2), Vector::from_index(b, 2)};
        // PI order A, B is pin order, but the vector string is MSB first.
        const LocalPair local{LocalVector::from_string(p.v1.to_string()), LocalVector::from_string(p.v2.to_string())};
        EXPECT_EQ(detects(nl, s, p), excites(g, s.polarity, s.pin, local)) << site_id(nl, s) << " " << local.to_string();
      }
}

TEST(Detects, NoTransitionNoDetection) {
  const auto fa = builtin_full_adder();
  const auto v = Vector::from_string("011");
  EXPECT_THROW(detects(fa, enumerate_defects(fa)[0], {v, v}), std::invalid_argument);
  // Distinct input vectors that leave a gate's inputs unchanged.
  for (const auto& s : enumerate_defects(fa))
    for (std::uint64_t a = 0; a < 8; ++a)
      for (std::uint64_t b = 0; b < 8; ++b) {
        const VectorPair p{Vector::from_index(a, 3), Vector::from_index(b, 3)};
        if (a == b || local_inputs(fa, s.gate, logic_sim(fa, p.v1)) != local_inputs(fa, s.gate, logic_sim(fa, p.v2)))
          continue;
        EXPECT_FALSE(detects(fa, s, p)) << site_id(fa, s);
      }
}

TEST(Detects, AgreesWithReferenceOnRandomNetlists) {
  std::mt19937 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const auto nl = obd::testing::random_netlist(rng, 6, 20);
    const std::size_t k = nl.primary_inputs().size();
    for (const auto& s : enumerate_defects(nl))
      for (int n = 0; n < 30; ++n) {
        const VectorPair p{Vector::from_index(rng() % (1u << k), k), Vector::from_index(rng() % (1u << k), k)};
        if (p.v1 == p.v2) continue;
        ASSERT_EQ(detects(nl, s, p), reference_detects(nl, s, p)) << site_id(nl, s);
      }
  }
}

TEST(Oracle, LoneNandMatchesExcitation) {
  const auto nl = parse_netlist(kNand2);
  const auto map = oracle_all_pairs(nl, enumerate_defects(nl));
  EXPECT_EQ(map.universe_size, 12u);
  for (const auto& s : map.sites) {
    std::set<std::string> got, want;
    for (const auto& p : s.pairs) got.insert("(" + p.v1.to_string() + "," + p.v2.to_string() + ")");
    for (const auto& p : excitation_pairs(GateKind::nand(2), s.site.polarity, s.site.pin)) want.insert(p.to_string());
    EXPECT_EQ(got, want) << s.id;
    EXPECT_EQ(s.count, s.pairs.size());
  }
}

TEST(Oracle, InverterChainMiddle) {
  const auto nl = parse_netlist("input A\noutput D\ninv g1 A B\ninv g2 B C\ninv g3 C D\n");
  const auto map = oracle_all_pairs(nl, enumerate_defects(nl));
  for (const auto& s : map.sites) {
    ASSERT_EQ(s.pairs.size(), 1u) << s.id;
    // g2's input is the complement of A.
    if (s.id == "g2.NA") EXPECT_EQ(s.pairs[0].v1.to_string() + s.pairs[0].v2.to_string(), "10");
    if (s.id == "g2.PA") EXPECT_EQ(s.pairs[0].v1.to_string() + s.pairs[0].v2.to_string(), "01");
  }
}

TEST(Oracle, ExhaustiveAgreementWithReference) {
  const auto fa = builtin_full_adder();
  const auto sites = enumerate_defects(fa);
  const auto map = oracle_all_pairs(fa, sites);
  EXPECT_EQ(map.universe_size, 56u);
  for (std::size_t i = 0; i < sites.size(); ++i) {
    std::set<std::pair<std::uint64_t, std::uint64_t>> want, got;
    for (std::uint64_t a = 0; a < 8; ++a)
      for (std::uint64_t b = 0; b < 8; ++b)
        if (a != b && reference_detects(fa, sites[i], {Vector::from_index(a, 3), Vector::from_index(b, 3)}))
          want.insert({a, b});
    for (const auto& p : map.sites[i].pairs) got.insert({p.v1.index(), p.v2.index()});
    EXPECT_EQ(got, want) << map.sites[i].id;
  }
}

TEST(Oracle, FullAdderCensus) {
  const auto fa = builtin_full_adder();
  const auto map = oracle_all_pairs(fa, enumerate_defects(fa, std::set<GateKind>{GateKind::nand(2)}));
  ASSERT_EQ(map.sites.size(), 56u);
  // Frozen from the exhaustive reference above.
  EXPECT_EQ(map.testable(), 46u);
  for (const auto& s : map.sites)
    if (s.count == 0)
      for (std::uint64_t a = 0; a < 8; ++a)
        for (std::uint64_t b = 0; b < 8; ++b)
          if (a != b) EXPECT_FALSE(detects(fa, s.site, {Vector::from_index(a, 3), Vector::from_index(b, 3)}));
}

TEST(Oracle, CountsOnlyMatchesPairs) {
  const auto fa = builtin_full_adder();
  const auto sites = enumerate_defects(fa);
  const auto full = oracle_all_pairs(fa, sites);
  const auto counts = oracle_all_pairs(fa, sites, {.collect_pairs = false});
  EXPECT_FALSE(counts.has_pairs);
  for (std::size_t i = 0; i < sites.size(); ++i) EXPECT_EQ(full.sites[i].count, counts.sites[i].count);
  EXPECT_THROW(minimal_test_set(counts), std::invalid_argument);
}

TEST(Oracle, TooManyInputs) {
  std::string text;
  for (int i = 0; i < 17; ++i) text += "input i" + std::to_string(i) + "\n";
  text += "output Y\ninv g1 i0 Y\n";
  const auto nl = parse_netlist(text);
  EXPECT_THROW(oracle_all_pairs(nl, enumerate_defects(nl)), TooManyInputs);
}

TEST(MinimalSet, LoneGates) {
  const auto nand = parse_netlist(kNand2);
  EXPECT_EQ(minimal_test_set(oracle_all_pairs(nand, enumerate_defects(nand))).pairs.size(), 3u);
  const auto inv = parse_netlist("input A\noutput Y\ninv g1 A Y\n");
  EXPECT_EQ(minimal_test_set(oracle_all_pairs(inv, enumerate_defects(inv))).pairs.size(), 2u);
}

TEST(MinimalSet, FullAdder) {
  const auto fa = builtin_full_adder();
  const auto sites = enumerate_defects(fa, std::set<GateKind>{GateKind::nand(2)});
  const auto map = oracle_all_pairs(fa, sites);
  const auto set = minimal_test_set(map);
  EXPECT_TRUE(set.exact);
  EXPECT_EQ(set.pairs.size(), 16u);
  const auto report = coverage(fa, sites, set.pairs);
  EXPECT_EQ(report.detected, report.testable);
  EXPECT_DOUBLE_EQ(report.fraction(), 1.0);
}

TEST(MinimalSet, NoSmallerSetOnRandomNetlists) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 15; ++trial) {
    const auto nl = obd::testing::random_netlist(rng, 3, 6);
    const auto sites = enumerate_defects(nl);
    const auto map = oracle_all_pairs(nl, sites);
    const auto set = minimal_test_set(map);
    ASSERT_TRUE(set.exact);
    EXPECT_DOUBLE_EQ(coverage(nl, sites, set.pairs).fraction(), 1.0);
    if (set.pairs.empty()) continue;
    // Brute force over all (size - 1)-subsets of the universe.
    std::vector<VectorPair> universe;
    const std::size_t k = nl.primary_inputs().size();
    for (std::uint64_t a = 0; a < (1u << k); ++a)
      for (std::uint64_t b = 0; b < (1u << k); ++b)
        if (a != b) universe.push_back({Vector::from_index(a, k), Vector::from_index(b, k)});
    std::vector<std::uint64_t> mask(universe.size(), 0);
    std::uint64_t full = 0;
    ASSERT_LE(sites.size(), 64u);
    for (std::size_t s = 0; s < sites.size(); ++s)
      if (map.sites[s].count > 0) full |= std::uint64_t{1} << s;
    for (std::size_t u = 0; u < universe.size(); ++u)
      for (std::size_t s = 0; s < sites.size(); ++s)
        if (detects(nl, sites[s], universe[u])) mask[u] |= std::uint64_t{1} << s;
    std::function<bool(std::size_t, std::size_t, std::uint64_t)> search = [&](std::size_t from, std::size_t left,
                                                                              std::uint64_t acc) {
      if (acc == full) return true;
      if (left == 0) return false;
      for (std::size_t i = from; i < universe.size(); ++i)
        if ((mask[i] & ~acc) && search(i + 1, left - 1, acc | mask[i])) return true;
      return false;
    };
    EXPECT_FALSE(search(0, set.pairs.size() - 1, 0));
  }
}

TEST(Coverage, EmptyAndTraditional) {
  const auto nand = parse_netlist(kNand2);
  const auto sites = enumerate_defects(nand);
  EXPECT_EQ(coverage(nand, sites, {}).detected, 0u);
  EXPECT_DOUBLE_EQ(coverage(nand, sites, {}).fraction(), 0.0);
  const std::vector<VectorPair> traditional = {{Vector::from_string("11"), Vector::from_string("00")},
                                               {Vector::from_string("11"), Vector::from_string("01")},
                                               {Vector::from_string("11"), Vector::from_string("10")}};
  const auto r = coverage(nand, sites, traditional);
  for (const auto& s : r.sites)
    EXPECT_EQ(s.status, s.site.polarity == Polarity::Pmos ? SiteStatus::Detected : SiteStatus::Undetected) << s.id;
}

TEST(Coverage, MonotoneInTests) {
  std::mt19937 rng(9);
  const auto fa = builtin_full_adder();
  const auto sites = enumerate_defects(fa);
  std::vector<VectorPair> tests;
  std::size_t last = 0;
  for (int i = 0; i < 20; ++i) {
    tests.push_back({Vector::from_index(rng() % 8, 3), Vector::from_index(rng() % 8, 3)});
    const auto r = coverage(fa, sites, tests);
    EXPECT_GE(r.detected, last);
    last = r.detected;
  }
}

TEST(Coverage, UntestableMarked) {
  const auto fa = builtin_full_adder();
  const auto sites = enumerate_defects(fa);
  const auto map = oracle_all_pairs(fa, sites, {.collect_pairs = false});
  const auto r = coverage(fa, sites, {});
  EXPECT_TRUE(r.testability_known);
  for (std::size_t i = 0; i < sites.size(); ++i)
    EXPECT_EQ(r.sites[i].status == SiteStatus::Untestable, map.sites[i].count == 0);
}
