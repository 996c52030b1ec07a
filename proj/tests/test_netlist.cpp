#include <gtest/gtest.h>

#include <random>
#include <set>

#include "obd/netlist.hpp"
#include "obd/simulate.hpp"
#include "random_netlist.hpp"

using namespace obd;

namespace {

NetlistError::Kind error_kind(std::string_view text) {
  try {
    parse_netlist(text);
  } catch (const NetlistError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error for:\n" << text;
  return NetlistError::Kind::Syntax;
}

}  // namespace

TEST(Netlist, MinimalFile) {
  const auto nl = parse_netlist("input A\ninput B\noutput Y\nnand2 g1 A B Y");
  ASSERT_EQ(nl.gates().size(), 1u);
  EXPECT_EQ(nl.primary_inputs().size(), 2u);
  EXPECT_EQ(nl.net_name(nl.primary_inputs()[0]), "A");
  EXPECT_EQ(nl.net_name(nl.primary_inputs()[1]), "B");
  ASSERT_EQ(nl.primary_outputs().size(), 1u);
  EXPECT_EQ(nl.net_name(nl.primary_outputs()[0]), "Y");
  EXPECT_EQ(nl.gate(0).kind, GateKind::nand(2));
  EXPECT_EQ(nl.depth(), 1u);
}

TEST(Netlist, CommentsAndBlankLines) {
  const auto nl = parse_netlist("# header\n\ninput A   # trailing\noutput Y\n  inv g1 A Y\n");
  EXPECT_EQ(nl.gates().size(), 1u);
}

TEST(Netlist, DistinctErrorKinds) {
  EXPECT_EQ(error_kind("input A\noutput Y\ninv g1 A Y\ninv g2 A Y\n"), NetlistError::Kind::DuplicateDriver);
  EXPECT_EQ(error_kind("input A\noutput Y\nnand2 g1 A B Y\n"), NetlistError::Kind::UndrivenNet);
  EXPECT_EQ(error_kind("input A\noutput Y\nnand2 g1 A Z Y\ninv g2 Y Z\n"), NetlistError::Kind::CombinationalCycle);
  EXPECT_EQ(error_kind("input A\noutput Y\nxor2 g1 A A Y\n"), NetlistError::Kind::Syntax);
  EXPECT_EQ(error_kind("input A\noutput Y\ndff r1 A Y\n"), NetlistError::Kind::Sequential);
  EXPECT_EQ(error_kind("input A\noutput Y\ninv g1 A Y\ninv g1 Y Z\n"), NetlistError::Kind::DuplicateName);
  EXPECT_EQ(error_kind("input A\noutput Z\ninv g1 A Y\n"), NetlistError::Kind::UndrivenNet);
}

TEST(Netlist, SyntaxErrorReportsPosition) {
  try {
    parse_netlist("input A\noutput Y\nnand2 g1 A Y\n");
    FAIL();
  } catch (const NetlistError& e) {
    EXPECT_EQ(e.kind(), NetlistError::Kind::Syntax);
    EXPECT_EQ(e.line(), 3u);
    EXPECT_GE(e.column(), 1u);
    EXPECT_NE(std::string(e.what()).find("3:"), std::string::npos);
  }
}

TEST(Netlist, InverterChainDepth) {
  const auto nl = parse_netlist("input A\noutput D\ninv g1 A B\ninv g2 B C\ninv g3 C D\n");
  EXPECT_EQ(nl.depth(), 3u);
}

TEST(Netlist, FullAdderShape) {
  const auto fa = builtin_full_adder();
  const auto counts = fa.counts_by_kind();
  EXPECT_EQ(counts.at("nand2"), 14u);
  EXPECT_EQ(counts.at("inv"), 11u);
  EXPECT_EQ(counts.size(), 2u);
  EXPECT_EQ(fa.depth(), 9u);
  ASSERT_EQ(fa.primary_inputs().size(), 3u);
  ASSERT_EQ(fa.primary_outputs().size(), 1u);
  EXPECT_EQ(fa.net_name(fa.primary_outputs()[0]), "S");
}

TEST(Netlist, FullAdderIsParity) {
  const auto fa = builtin_full_adder();
  const NetIndex s = fa.primary_outputs()[0];
  for (std::uint64_t i = 0; i < 8; ++i) {
    const auto v = Vector::from_index(i, 3);
    const bool parity = (v[0] + v[1] + v[2]) % 2 == 1;
    EXPECT_EQ(logic_sim(fa, v)[s] != 0, parity) << v.to_string();
  }
  EXPECT_EQ(logic_sim(fa, Vector::from_string("000"))[s], 0);
  EXPECT_EQ(logic_sim(fa, Vector::from_string("100"))[s], 1);
}

TEST(Netlist, LevelizationOrdersDrivers) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto nl = obd::testing::random_netlist(rng);
    const auto lv = levelize(nl);
    ASSERT_EQ(lv.order.size(), nl.gates().size());
    std::set<GateIndex> seen(lv.order.begin(), lv.order.end());
    EXPECT_EQ(seen.size(), nl.gates().size());
    std::vector<bool> done(nl.gates().size(), false);
    for (GateIndex g : lv.order) {
      for (NetIndex in : nl.gate(g).inputs) {
        if (auto d = nl.driver(in)) EXPECT_TRUE(done[*d]);
      }
      done[g] = true;
    }
  }
}

TEST(Netlist, SerializeRoundTrip) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto nl = obd::testing::random_netlist(rng);
    const auto again = parse_netlist(serialize_netlist(nl));
    EXPECT_TRUE(nl == again);
  }
  const auto fa = builtin_full_adder();
  EXPECT_TRUE(parse_netlist(serialize_netlist(fa)) == fa);
}

TEST(GateKindNames, RoundTrip) {
  for (auto k : {GateKind::inv(), GateKind::nand(2), GateKind::nand(4), GateKind::nor(3)}) {
    const auto back = GateKind::from_name(k.name());
    ASSERT_TRUE(back);
    EXPECT_EQ(*back, k);
  }
  EXPECT_FALSE(GateKind::from_name("xor2"));
}
