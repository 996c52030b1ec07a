#pragma once

// Time evolution of a breakdown from soft to hard breakdown, the resulting
// delay curve of an excited gate, and the detection window for a capture slack.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "obd/defects.hpp"
#include "obd/device.hpp"

namespace obd::progression {

inline constexpr double kHour = 3600.0;

/// Leakage grows exponentially in time between onset and hard breakdown.
struct ProgressionModel {
  double t_window = 27.0 * kHour;  // s
  double i_sbd = 2e-28;            // A
  double i_hbd = 2e-24;            // A

  void validate() const {
    if (!(t_window > 0)) throw std::invalid_argument("t_window must be positive");
    if (!(i_sbd > 0) || !(i_hbd > i_sbd)) throw std::invalid_argument("need 0 < i_sbd < i_hbd");
  }
};

/// Onset and end points taken from the stage table of the polarity: NMOS runs
/// from MBD1 to HBD, PMOS (no hard-breakdown entry) from MBD1 to MBD3.
inline ProgressionModel model_for(Polarity polarity) {
  ProgressionModel m;
  m.i_sbd = stage_params(polarity, Stage::Mbd1).i_sat;
  m.i_hbd = stage_params(polarity, polarity == Polarity::Nmos ? Stage::Hbd : Stage::Mbd3).i_sat;
  return m;
}

inline double leakage_at(const ProgressionModel& m, double t) {
  m.validate();
  if (!(t >= 0 && t <= m.t_window))
    throw std::out_of_range("time " + std::to_string(t) + " s is outside the progression window");
  return m.i_sbd * std::pow(m.i_hbd / m.i_sbd, t / m.t_window);
}

/// Breakdown resistance for a saturation current, interpolated linearly in
/// (log i_sat, log r) between the stage anchors and clamped outside them.
inline double breakdown_resistance(Polarity polarity, double i_sat) {
  if (!(i_sat > 0)) throw std::invalid_argument("i_sat must be positive");
  std::vector<StageEntry> anchors;
  for (Stage s : kAllStages)
    if (has_stage_params(polarity, s)) anchors.push_back(stage_params(polarity, s));
  std::sort(anchors.begin(), anchors.end(), [](const StageEntry& a, const StageEntry& b) { return a.i_sat < b.i_sat; });
  if (i_sat <= anchors.front().i_sat) return anchors.front().r_bd;
  if (i_sat >= anchors.back().i_sat) return anchors.back().r_bd;
  for (std::size_t k = 1; k < anchors.size(); ++k) {
    const StageEntry& lo = anchors[k - 1];
    const StageEntry& hi = anchors[k];
    if (i_sat > hi.i_sat) continue;
    const double f = std::log(i_sat / lo.i_sat) / std::log(hi.i_sat / lo.i_sat);
    return std::exp(std::log(lo.r_bd) + f * std::log(hi.r_bd / lo.r_bd));
  }
  return anchors.back().r_bd;
}

struct DelaySample {
  double t = 0.0;      // s
  double i_sat = 0.0;  // A
  double r_bd = 0.0;   // ohm
  device::DelayMeasurement delay;
};

/// Delay of one excited (site, pair) as a function of elapsed time, with
/// every evaluated time point cached.
class DelayCurve {
 public:
  DelayCurve(ProgressionModel model, GateKind kind, TransistorRef site, LocalPair pair, device::DeviceConfig cfg)
      : model_(model), kind_(kind), site_(site), pair_(pair), cfg_(std::move(cfg)) {
    model_.validate();
    cfg_.validate();
    if (!excites(expand_gate(kind_), site_.polarity, site_.pin, pair_))
      throw std::invalid_argument("pair " + pair_.to_string() + " does not excite " +
                                  site_label(site_.polarity, site_.pin) + " of " + kind_.name());
  }

  const ProgressionModel& model() const { return model_; }

  DelaySample at(double t) {
    const double i = leakage_at(model_, t);
    const double r = breakdown_resistance(site_.polarity, i);
    if (auto it = cache_.find(t); it != cache_.end()) return {t, i, r, it->second};
    device::ObdParams p = device::obd_params(cfg_, site_.polarity, Stage::Mbd1);
    p.i_sat = i;
    p.r_bd = r;
    const auto st = device::run_stage(device::build_stage_circuit(kind_, site_, p, cfg_), pair_, cfg_);
    cache_.emplace(t, st.delay);
    return {t, i, r, st.delay};
  }

  /// `n` time points spread evenly over [0, t_window], which is a
  /// log-uniform spread of leakage.
  std::vector<double> grid(std::size_t n) const {
    if (n < 2) throw std::invalid_argument("a delay curve needs at least two samples");
    std::vector<double> ts;
    for (std::size_t k = 0; k < n; ++k)
      ts.push_back(k + 1 == n ? model_.t_window : model_.t_window * static_cast<double>(k) / static_cast<double>(n - 1));
    return ts;
  }

  std::vector<DelaySample> sample(std::size_t n = 32) {
    std::vector<DelaySample> out;
    for (double t : grid(n)) out.push_back(at(t));
    return out;
  }

  std::size_t evaluations() const { return cache_.size(); }

 private:
  ProgressionModel model_;
  GateKind kind_;
  TransistorRef site_;
  LocalPair pair_;
  device::DeviceConfig cfg_;
  std::map<double, device::DelayMeasurement> cache_;
};

inline std::vector<DelaySample> delay_vs_time(const ProgressionModel& model, GateKind kind, const TransistorRef& site,
                                              const LocalPair& pair, const device::DeviceConfig& cfg,
                                              std::size_t samples = 32) {
  DelayCurve curve(model, kind, site, pair, cfg);
  return curve.sample(samples);
}

/// A delay is observable at capture slack `slack` if it exceeds it or the
/// output never switches.
inline bool exceeds(const device::DelayMeasurement& m, double slack) {
  return m.outcome == device::Outcome::Stuck || m.delay > slack;
}

struct DetectionWindow {
  double t_open = 0.0;   // s
  double t_close = 0.0;  // s

  double width() const { return t_close - t_open; }
};

struct WindowResult {
  double slack = 0.0;
  double baseline = 0.0;                  // delay at onset, s
  std::optional<DetectionWindow> window;  // empty when the delay never exceeds the slack
};

/// First time the delay exceeds `slack`: the first sample over it, refined by
/// bisection against the previous sample down to `resolution`.
inline WindowResult detection_window(DelayCurve& curve, double slack, std::size_t samples = 32,
                                     double resolution = 60.0) {
  if (!(resolution > 0)) throw std::invalid_argument("resolution must be positive");
  const DelaySample onset = curve.at(0.0);
  if (onset.delay.outcome == device::Outcome::Stuck)
    throw std::domain_error("the gate output does not switch at breakdown onset");
  WindowResult r;
  r.slack = slack;
  r.baseline = onset.delay.delay;
  if (slack < r.baseline)
    throw std::invalid_argument("slack " + device::DelayMeasurement{device::Outcome::Transition, slack}.to_string() +
                                " is below the onset delay " + onset.delay.to_string());
  const auto ts = curve.grid(samples);
  for (std::size_t k = 1; k < ts.size(); ++k) {
    if (!exceeds(curve.at(ts[k]).delay, slack)) continue;
    double lo = ts[k - 1], hi = ts[k];
    while (hi - lo > resolution) {
      const double mid = 0.5 * (lo + hi);
      (exceeds(curve.at(mid).delay, slack) ? hi : lo) = mid;
    }
    r.window = DetectionWindow{hi, curve.model().t_window};
    return r;
  }
  return r;
}

inline WindowResult detection_window(const ProgressionModel& model, GateKind kind, const TransistorRef& site,
                                     const LocalPair& pair, double slack, const device::DeviceConfig& cfg) {
  DelayCurve curve(model, kind, site, pair, cfg);
  return detection_window(curve, slack);
}

class EmptyWindow : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Periodic test interval that places at least one test inside the window.
inline double schedule_tests(const DetectionWindow& w, double margin) {
  if (!(margin > 0 && margin < 1)) throw std::invalid_argument("margin must lie strictly between 0 and 1");
  if (!(w.width() > 0)) throw EmptyWindow("detection window is empty");
  return w.width() * (1.0 - margin);
}

inline double schedule_tests(const std::optional<DetectionWindow>& w, double margin) {
  if (!w) throw EmptyWindow("delay never exceeds the slack before hard breakdown");
  return schedule_tests(*w, margin);
}

}  // namespace obd::progression
