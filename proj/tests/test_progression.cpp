#include <gtest/gtest.h>

#include <cmath>

#include "obd/progression.hpp"
#include "obd/units.hpp"

using namespace obd;
using namespace obd::progression;

namespace {

LocalPair lp(const char* a, const char* b) { return {LocalVector::from_string(a), LocalVector::from_string(b)}; }

const TransistorRef kNA{0, Polarity::Nmos, 0};
const TransistorRef kPA{0, Polarity::Pmos, 0};

DelayCurve& na_curve() {
  static DelayCurve c(model_for(Polarity::Nmos), GateKind::nand(2), kNA, lp("01", "11"), device::default_config());
  return c;
}

}  // namespace

TEST(Units, Times) {
  EXPECT_DOUBLE_EQ(parse_time("150ps"), 150e-12);
  EXPECT_DOUBLE_EQ(parse_time("27h"), 27 * 3600.0);
  EXPECT_DOUBLE_EQ(parse_time("2.5 ns"), 2.5e-9);
  EXPECT_DOUBLE_EQ(parse_time("1e-12"), 1e-12);
  EXPECT_DOUBLE_EQ(parse_time("3min"), 180.0);
  EXPECT_THROW(parse_time("fast"), std::invalid_argument);
  EXPECT_THROW(parse_time("3 weeks"), std::invalid_argument);
}

TEST(Leakage, Endpoints) {
  const ProgressionModel m;
  EXPECT_DOUBLE_EQ(leakage_at(m, 0), m.i_sbd);
  EXPECT_NEAR(leakage_at(m, m.t_window), m.i_hbd, 1e-12 * m.i_hbd);
  EXPECT_THROW(leakage_at(m, -1), std::out_of_range);
  EXPECT_THROW(leakage_at(m, m.t_window + 1), std::out_of_range);
  ProgressionModel bad;
  bad.i_hbd = bad.i_sbd / 2;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Leakage, ExponentialSelfSimilarity) {
  const ProgressionModel m;
  // Equal time steps multiply the leakage by the same factor.
  for (double t : {0.0, 3600.0, 20000.0, 50000.0}) {
    const double d = 7200.0;
    const double r1 = leakage_at(m, t + d) / leakage_at(m, t);
    const double r2 = leakage_at(m, t + 2 * d) / leakage_at(m, t + d);
    EXPECT_NEAR(r1, r2, 1e-9 * r1);
  }
  for (double t = 0; t + 60 <= m.t_window; t += 1000) EXPECT_LT(leakage_at(m, t), leakage_at(m, t + 60));
}

TEST(Resistance, Anchors) {
  for (auto pol : {Polarity::Nmos, Polarity::Pmos})
    for (Stage s : kAllStages) {
      if (!has_stage_params(pol, s)) continue;
      const auto e = stage_params(pol, s);
      EXPECT_NEAR(breakdown_resistance(pol, e.i_sat), e.r_bd, 1e-9 * e.r_bd);
    }
  EXPECT_DOUBLE_EQ(breakdown_resistance(Polarity::Nmos, 1e-40), 10e3);
  EXPECT_DOUBLE_EQ(breakdown_resistance(Polarity::Nmos, 1e-10), 0.05);
  // Geometric midpoint in current maps to the geometric midpoint in resistance.
  EXPECT_NEAR(breakdown_resistance(Polarity::Nmos, std::sqrt(2e-28 * 1e-27)), std::sqrt(500.0 * 100.0), 1e-6);
  EXPECT_THROW(breakdown_resistance(Polarity::Nmos, 0), std::invalid_argument);
}

TEST(Resistance, NonincreasingInLeakage) {
  for (auto pol : {Polarity::Nmos, Polarity::Pmos}) {
    double last = 1e300;
    for (double e = -31; e <= -23; e += 0.05) {
      const double r = breakdown_resistance(pol, std::pow(10.0, e));
      EXPECT_LE(r, last);
      last = r;
    }
  }
}

TEST(Models, PerPolarity) {
  const auto n = model_for(Polarity::Nmos), p = model_for(Polarity::Pmos);
  EXPECT_DOUBLE_EQ(n.t_window, 27 * kHour);
  EXPECT_DOUBLE_EQ(n.i_sbd, 2e-28);
  EXPECT_DOUBLE_EQ(n.i_hbd, 2e-24);
  EXPECT_DOUBLE_EQ(p.i_sbd, 1e-29);
  EXPECT_DOUBLE_EQ(p.i_hbd, 1.2e-29);
}

TEST(Curve, RejectsNonExcitingPair) {
  EXPECT_THROW(DelayCurve(ProgressionModel{}, GateKind::nand(2), kPA, lp("11", "10"), device::default_config()),
               std::invalid_argument);
}

TEST(Curve, NmosDelayNondecreasingUntilStuck) {
  const auto samples = na_curve().sample(32);
  ASSERT_EQ(samples.size(), 32u);
  EXPECT_DOUBLE_EQ(samples.front().t, 0.0);
  EXPECT_DOUBLE_EQ(samples.back().t, 27 * kHour);
  bool stuck = false;
  double last = 0;
  for (const auto& s : samples) {
    if (s.delay.outcome == device::Outcome::Stuck) {
      stuck = true;
      EXPECT_TRUE(s.delay.stuck_high);
      continue;
    }
    EXPECT_FALSE(stuck) << "switching again after stuck at t = " << s.t;
    EXPECT_GE(s.delay.delay, last * (1 - 1e-3));
    last = s.delay.delay;
  }
  EXPECT_TRUE(stuck);
  EXPECT_EQ(samples.front().delay.outcome, device::Outcome::Transition);
}

TEST(Curve, OnsetMatchesFirstStage) {
  const auto cfg = device::default_config();
  const auto onset = na_curve().at(0.0);
  const auto st = device::run_stage(device::build_stage_circuit(GateKind::nand(2), kNA, Stage::Mbd1, cfg),
                                    lp("01", "11"), cfg);
  EXPECT_NEAR(onset.delay.delay, st.delay.delay, 1e-15);
}

TEST(Curve, CachesEvaluations) {
  DelayCurve c(model_for(Polarity::Nmos), GateKind::nand(2), kNA, lp("10", "11"), device::default_config());
  c.at(100.0);
  c.at(100.0);
  EXPECT_EQ(c.evaluations(), 1u);
}

TEST(Window, OpensWhenSlackExceeded) {
  auto& c = na_curve();
  const auto r = detection_window(c, 150e-12);
  ASSERT_TRUE(r.window);
  EXPECT_LE(r.window->t_open, 27 * kHour);
  EXPECT_DOUBLE_EQ(r.window->t_close, 27 * kHour);
  EXPECT_TRUE(exceeds(c.at(r.window->t_open).delay, 150e-12));
  EXPECT_FALSE(exceeds(c.at(std::max(0.0, r.window->t_open - 60)).delay, 150e-12));
}

TEST(Window, TOpenMonotoneInSlack) {
  auto& c = na_curve();
  const double base = c.at(0).delay.delay;
  double last = 1e300;
  // Decreasing slack: the window may only open earlier.
  for (double slack = 400e-12; slack >= base; slack -= 10e-12) {
    const auto r = detection_window(c, slack);
    ASSERT_TRUE(r.window) << slack;
    EXPECT_LE(r.window->t_open, last);
    last = r.window->t_open;
  }
}

TEST(Window, IntervalShorterThanWindow) {
  auto& c = na_curve();
  for (double slack : {120e-12, 150e-12, 250e-12}) {
    const auto r = detection_window(c, slack);
    ASSERT_TRUE(r.window);
    for (double margin : {0.1, 0.5, 0.9}) {
      const double iv = schedule_tests(r.window, margin);
      EXPECT_GT(iv, 0);
      EXPECT_LT(iv, 27 * kHour);
      EXPECT_LT(iv, r.window->width());
    }
  }
}

TEST(Window, Errors) {
  auto& c = na_curve();
  EXPECT_THROW(detection_window(c, 1e-12), std::invalid_argument);
  EXPECT_THROW(schedule_tests(DetectionWindow{5, 5}, 0.5), EmptyWindow);
  EXPECT_THROW(schedule_tests(std::optional<DetectionWindow>{}, 0.5), EmptyWindow);
  EXPECT_THROW(schedule_tests(DetectionWindow{0, 5}, 1.0), std::invalid_argument);
  EXPECT_THROW(schedule_tests(DetectionWindow{0, 5}, 0.0), std::invalid_argument);
}

TEST(Window, PmosSite) {
  DelayCurve c(model_for(Polarity::Pmos), GateKind::nand(2), kPA, lp("11", "01"), device::default_config());
  const auto r = detection_window(c, 1e-9);
  ASSERT_TRUE(r.window);
  EXPECT_GT(r.window->t_open, 0);
  EXPECT_LT(schedule_tests(r.window, 0.5), 27 * kHour);
}

TEST(Window, StuckAtOnsetIsDomainError) {
  ProgressionModel m = model_for(Polarity::Nmos);
  m.i_sbd = 1e-24;
  m.i_hbd = 2e-24;
  DelayCurve c(m, GateKind::nand(2), kNA, lp("01", "11"), device::default_config());
  EXPECT_THROW(detection_window(c, 1e-9), std::domain_error);
}
