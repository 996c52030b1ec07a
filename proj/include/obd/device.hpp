#pragma once

// Transistor-level model of a gate with a diode-resistor breakdown network:
// square-law MOSFETs, junction diodes, nodal analysis with backward Euler and
// damped Newton, DC transfer sweeps and transition-delay measurement.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "obd/defects.hpp"
#include "obd/xtor_net.hpp"

namespace obd::device {

inline constexpr double kThermalVoltage = 0.02585;  // V at 300 K
inline constexpr double kDiodeLinearAbove = 0.9;    // V

struct MosParams {
  double vth = 0.4;     // V, magnitude for PMOS
  double beta = 4e-4;   // A/V^2
  double lambda = 0.05; // 1/V

  void validate(const char* what) const {
    if (!(beta > 0) || !(vth > 0) || !(lambda >= 0))
      throw std::invalid_argument(std::string(what) + ": beta and vth must be positive, lambda non-negative");
  }
};

struct MosEval {
  double id = 0.0;   // drain-to-source current
  double gm = 0.0;   // d id / d vgs
  double gds = 0.0;  // d id / d vds
};

/// Level-1 NMOS-convention drain current with derivatives. The channel-length
/// factor (1 + lambda * vds) multiplies both regions so the current is
/// continuous at vds = vgs - vth. Negative vds swaps drain and source.
inline MosEval mos_eval(const MosParams& p, double vgs, double vds) {
  if (vds < 0) {
    const MosEval r = mos_eval(p, vgs - vds, -vds);
    return {-r.id, -r.gm, r.gm + r.gds};
  }
  const double vov = vgs - p.vth;
  if (vov <= 0) return {};
  const double clm = 1.0 + p.lambda * vds;
  if (vds < vov) {
    const double base = p.beta * (vov * vds - 0.5 * vds * vds);
    return {base * clm, p.beta * vds * clm, p.beta * (vov - vds) * clm + base * p.lambda};
  }
  const double base = 0.5 * p.beta * vov * vov;
  return {base * clm, p.beta * vov * clm, base * p.lambda};
}

inline double mos_current(const MosParams& p, double v_gs, double v_ds) { return mos_eval(p, v_gs, v_ds).id; }

struct DiodeEval {
  double i = 0.0;
  double g = 0.0;
};

/// i_sat * (exp(v / (n V_T)) - 1), continued along its tangent above 0.9 V.
inline DiodeEval diode_eval(double i_sat, double n, double v) {
  const double nvt = n * kThermalVoltage;
  if (v <= kDiodeLinearAbove) {
    const double e = std::exp(v / nvt);
    return {i_sat * (e - 1.0), i_sat * e / nvt};
  }
  const double e = std::exp(kDiodeLinearAbove / nvt);
  return {i_sat * (e * (1.0 + (v - kDiodeLinearAbove) / nvt) - 1.0), i_sat * e / nvt};
}

inline double diode_current(double i_sat, double n, double v) { return diode_eval(i_sat, n, v).i; }

/// Breakdown network of one stage. The diodes conduct i_sat * junction_area.
struct ObdParams {
  double i_sat = 1e-30;
  double r_bd = 10e3;
  double r_sub = 1e6;
  double n_ideality = 1.0;
  double junction_area = 1.0;

  double effective_i_sat() const { return i_sat * junction_area; }
};

struct SimConfig {
  double vdd = 1.2;
  double c_node = 5e-15;
  double dt = 0.5e-12;
  double newton_tol = 1e-6;
  std::size_t max_newton_iters = 100;
  double t_end = 5e-9;
  double t_switch = 50e-12;  // start of the input ramp
  double t_rise = 10e-12;
  double gmin = 1e-12;
  double c_internal = 1e-15;  // series-stack diffusion nodes inside a gate

  void validate() const {
    if (!(dt > 0) || !(newton_tol > 0) || !(vdd > 0) || !(c_node > 0) || !(t_end > t_switch + t_rise) ||
        !(t_rise > 0) || !(t_switch >= 0) || max_newton_iters == 0 || !(gmin >= 0) || !(c_internal >= 0))
      throw std::invalid_argument("invalid simulation settings");
  }
};

/// Everything the device module can be configured with.
struct DeviceConfig {
  SimConfig sim;
  MosParams nmos{0.4, 4e-4, 0.05};
  MosParams pmos{0.4, 2e-4, 0.05};
  double r_sub = 1e6;
  // Diode ideality and junction-area multiplier on the tabulated saturation
  // currents, calibrated so the NAND2 delay table has the tabulated shape.
  double n_nmos = 3.25;
  double n_pmos = 3.5;
  double area_nmos = 1e19;
  double area_pmos = 2.05e22;
  double series_beta_scale = 2.0;  // beta multiplier for transistors in a series stack

  void validate() const {
    sim.validate();
    nmos.validate("nmos");
    pmos.validate("pmos");
    if (!(r_sub > 0) || !(n_nmos > 0) || !(n_pmos > 0) || !(area_nmos > 0) || !(area_pmos > 0) ||
        !(series_beta_scale > 0))
      throw std::invalid_argument("breakdown network parameters must be positive");
  }
};

inline DeviceConfig default_config() { return {}; }

inline ObdParams obd_params(const DeviceConfig& cfg, Polarity polarity, Stage stage) {
  const StageEntry e = stage_params(polarity, stage);
  const bool n = polarity == Polarity::Nmos;
  return {e.i_sat, e.r_bd, cfg.r_sub, n ? cfg.n_nmos : cfg.n_pmos, n ? cfg.area_nmos : cfg.area_pmos};
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::map<std::string, double*> config_fields(DeviceConfig& c) {
  return {{"vdd", &c.sim.vdd},
          {"c_node", &c.sim.c_node},
          {"dt", &c.sim.dt},
          {"newton_tol", &c.sim.newton_tol},
          {"t_end", &c.sim.t_end},
          {"t_switch", &c.sim.t_switch},
          {"t_rise", &c.sim.t_rise},
          {"gmin", &c.sim.gmin},
          {"c_internal", &c.sim.c_internal},
          {"nmos.vth", &c.nmos.vth},
          {"nmos.beta", &c.nmos.beta},
          {"nmos.lambda", &c.nmos.lambda},
          {"pmos.vth", &c.pmos.vth},
          {"pmos.beta", &c.pmos.beta},
          {"pmos.lambda", &c.pmos.lambda},
          {"r_sub", &c.r_sub},
          {"nmos.n_ideality", &c.n_nmos},
          {"pmos.n_ideality", &c.n_pmos},
          {"nmos.junction_area", &c.area_nmos},
          {"pmos.junction_area", &c.area_pmos},
          {"series_beta_scale", &c.series_beta_scale}};
}

}  // namespace detail

/// Flat `key = value` lines; '#' starts a comment. Unknown keys are errors.
inline DeviceConfig parse_config(std::string_view text, DeviceConfig base = default_config()) {
  auto fields = detail::config_fields(base);
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(std::string_view(t).substr(0, eq));
    const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
    double v = 0;
    std::size_t used = 0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size())
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": '" + value + "' is not a number");
    if (key == "max_newton_iters") {
      if (v < 1 || v != std::floor(v))
        throw std::invalid_argument("config line " + std::to_string(lineno) + ": max_newton_iters must be a positive integer");
      base.sim.max_newton_iters = static_cast<std::size_t>(v);
      continue;
    }
    const auto it = fields.find(key);
    if (it == fields.end())
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    *it->second = v;
  }
  base.validate();
  return base;
}

inline DeviceConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

/// Canonical `key = value` dump, also used for digests.
inline std::string format_config(const DeviceConfig& c) {
  DeviceConfig copy = c;
  std::ostringstream out;
  for (const auto& [k, v] : detail::config_fields(copy)) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, *v);
    out << k << " = " << std::string_view(buf, r.ptr) << '\n';
  }
  out << "max_newton_iters = " << c.sim.max_newton_iters << '\n';
  return out.str();
}

using NodeId = std::size_t;

enum class NodeKind { Ground, Supply, Source, Free };

/// Ideal voltage source ramping linearly from `initial` to `final`.
struct StepSource {
  double initial = 0.0;
  double final = 0.0;

  double at(double t, const SimConfig& s) const {
    const double x = std::clamp((t - s.t_switch) / s.t_rise, 0.0, 1.0);
    return initial + (final - initial) * x;
  }
};

struct MosElement {
  std::string name;
  Polarity polarity;
  NodeId drain, gate, source;
  MosParams params;
};

struct DiodeElement {
  NodeId anode, cathode;
  double i_sat, n;
};

struct ResistorElement {
  NodeId a, b;
  double r;
};

class Circuit {
 public:
  static constexpr NodeId kGround = 0;
  static constexpr NodeId kSupply = 1;

  Circuit() {
    names_ = {"gnd", "vdd"};
    kinds_ = {NodeKind::Ground, NodeKind::Supply};
    capacitance_ = {0.0, 0.0};
    sources_.resize(2);
  }

  /// Free nodes carry the lumped net capacitance unless `capacitance` is given.
  NodeId add_node(const std::string& name, std::optional<double> capacitance = std::nullopt) {
    if (index_.count(name) || name == "gnd" || name == "vdd") throw std::invalid_argument("duplicate node " + name);
    index_[name] = names_.size();
    names_.push_back(name);
    kinds_.push_back(NodeKind::Free);
    capacitance_.push_back(capacitance);
    sources_.emplace_back();
    return names_.size() - 1;
  }

  NodeId add_source(const std::string& name, StepSource s) {
    const NodeId n = add_node(name);
    kinds_[n] = NodeKind::Source;
    capacitance_[n] = 0.0;
    sources_[n] = s;
    return n;
  }

  void add_mos(std::string name, Polarity p, NodeId d, NodeId g, NodeId s, MosParams params) {
    mos_.push_back({std::move(name), p, d, g, s, params});
  }
  void add_diode(NodeId anode, NodeId cathode, double i_sat, double n) { diodes_.push_back({anode, cathode, i_sat, n}); }
  void add_resistor(NodeId a, NodeId b, double r) {
    if (!(r > 0)) throw std::invalid_argument("resistance must be positive");
    resistors_.push_back({a, b, r});
  }

  std::size_t node_count() const { return names_.size(); }
  const std::string& node_name(NodeId n) const { return names_.at(n); }
  NodeKind kind(NodeId n) const { return kinds_.at(n); }
  /// Capacitance to ground of a free node; `net_default` unless set explicitly.
  double capacitance(NodeId n, double net_default) const {
    if (kinds_.at(n) != NodeKind::Free) return 0.0;
    return capacitance_[n] ? *capacitance_[n] : net_default;
  }
  NodeId node(const std::string& name) const {
    if (name == "gnd") return kGround;
    if (name == "vdd") return kSupply;
    const auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("no node named " + name);
    return it->second;
  }
  bool has_node(const std::string& name) const { return name == "gnd" || name == "vdd" || index_.count(name) > 0; }
  StepSource& source(NodeId n) {
    if (kinds_.at(n) != NodeKind::Source) throw std::invalid_argument(names_[n] + " is not a source");
    return sources_[n];
  }
  const StepSource& source(NodeId n) const { return const_cast<Circuit*>(this)->source(n); }

  const std::vector<MosElement>& mosfets() const { return mos_; }
  const std::vector<DiodeElement>& diodes() const { return diodes_; }
  const std::vector<ResistorElement>& resistors() const { return resistors_; }

 private:
  std::vector<std::string> names_;
  std::vector<NodeKind> kinds_;
  std::vector<std::optional<double>> capacitance_;
  std::vector<StepSource> sources_;
  std::map<std::string, NodeId> index_;
  std::vector<MosElement> mos_;
  std::vector<DiodeElement> diodes_;
  std::vector<ResistorElement> resistors_;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double t) : std::runtime_error(what), time_(t) {}
  double time() const { return time_; }

 private:
  double time_;
};

struct NewtonStats {
  std::size_t iterations = 0;
  double residual = 0.0;  // max |KCL residual| at convergence, A
};

/// Nodal equations over the free nodes of a circuit.
class NodalSolver {
 public:
  NodalSolver(const Circuit& c, const SimConfig& s) : c_(c), s_(s) {
    unknown_.assign(c.node_count(), kFixed);
    for (NodeId n = 0; n < c.node_count(); ++n)
      if (c.kind(n) == NodeKind::Free) {
        unknown_[n] = free_.size();
        free_.push_back(n);
      }
  }

  std::size_t unknowns() const { return free_.size(); }
  double current_tolerance(double h) const { return s_.newton_tol * s_.c_node / (h > 0 ? h : s_.dt); }

  /// Sets the fixed nodes of `v` at time t, with sources scaled by `scale`.
  void apply_fixed(std::vector<double>& v, double t, double scale = 1.0) const {
    v[Circuit::kGround] = 0.0;
    v[Circuit::kSupply] = s_.vdd * scale;
    for (NodeId n = 0; n < c_.node_count(); ++n)
      if (c_.kind(n) == NodeKind::Source) v[n] = c_.source(n).at(t, s_) * scale;
  }

  /// KCL residual (current leaving each free node) and its Jacobian. h = 0 is DC.
  void assemble(const std::vector<double>& v, const std::vector<double>& v_prev, double h, Eigen::VectorXd& f,
                Eigen::MatrixXd& j) const {
    const std::size_t m = free_.size();
    f.setZero(static_cast<Eigen::Index>(m));
    j.setZero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    auto add_f = [&](NodeId n, double i) {
      if (unknown_[n] != kFixed) f[static_cast<Eigen::Index>(unknown_[n])] += i;
    };
    auto add_j = [&](NodeId row, NodeId col, double g) {
      if (unknown_[row] != kFixed && unknown_[col] != kFixed)
        j(static_cast<Eigen::Index>(unknown_[row]), static_cast<Eigen::Index>(unknown_[col])) += g;
    };
    for (std::size_t k = 0; k < m; ++k) {
      const NodeId n = free_[k];
      const auto ki = static_cast<Eigen::Index>(k);
      f[ki] += s_.gmin * v[n];
      j(ki, ki) += s_.gmin;
      const double cap = c_.capacitance(n, s_.c_node);
      if (h > 0 && cap > 0) {
        const double g = cap / h;
        f[ki] += g * (v[n] - v_prev[n]);
        j(ki, ki) += g;
      }
    }
    for (const auto& r : c_.resistors()) {
      const double g = 1.0 / r.r;
      const double i = g * (v[r.a] - v[r.b]);
      add_f(r.a, i);
      add_f(r.b, -i);
      add_j(r.a, r.a, g);
      add_j(r.a, r.b, -g);
      add_j(r.b, r.a, -g);
      add_j(r.b, r.b, g);
    }
    for (const auto& d : c_.diodes()) {
      const DiodeEval e = diode_eval(d.i_sat, d.n, v[d.anode] - v[d.cathode]);
      add_f(d.anode, e.i);
      add_f(d.cathode, -e.i);
      add_j(d.anode, d.anode, e.g);
      add_j(d.anode, d.cathode, -e.g);
      add_j(d.cathode, d.anode, -e.g);
      add_j(d.cathode, d.cathode, e.g);
    }
    for (const auto& t : c_.mosfets()) {
      if (t.polarity == Polarity::Nmos) {
        const MosEval e = mos_eval(t.params, v[t.gate] - v[t.source], v[t.drain] - v[t.source]);
        add_f(t.drain, e.id);
        add_f(t.source, -e.id);
        add_j(t.drain, t.drain, e.gds);
        add_j(t.drain, t.gate, e.gm);
        add_j(t.drain, t.source, -e.gm - e.gds);
        add_j(t.source, t.drain, -e.gds);
        add_j(t.source, t.gate, -e.gm);
        add_j(t.source, t.source, e.gm + e.gds);
      } else {
        // Source-to-drain current from the mirrored NMOS expression.
        const MosEval e = mos_eval(t.params, v[t.source] - v[t.gate], v[t.source] - v[t.drain]);
        add_f(t.source, e.id);
        add_f(t.drain, -e.id);
        add_j(t.source, t.source, e.gm + e.gds);
        add_j(t.source, t.gate, -e.gm);
        add_j(t.source, t.drain, -e.gds);
        add_j(t.drain, t.source, -e.gm - e.gds);
        add_j(t.drain, t.gate, e.gm);
        add_j(t.drain, t.drain, e.gds);
      }
    }
  }

  /// Damped Newton on the free nodes of `v`; fixed nodes must already be set.
  std::optional<NewtonStats> newton(std::vector<double>& v, const std::vector<double>& v_prev, double h,
                                    std::size_t max_iters) const {
    Eigen::VectorXd f;
    Eigen::MatrixXd j;
    const double itol = current_tolerance(h);
    const double max_step = 0.2 * s_.vdd;
    for (std::size_t it = 1; it <= max_iters; ++it) {
      assemble(v, v_prev, h, f, j);
      const Eigen::VectorXd dx = j.partialPivLu().solve(-f);
      if (!dx.allFinite()) return std::nullopt;
      const double step = dx.cwiseAbs().maxCoeff();
      double scale = step > max_step ? max_step / step : 1.0;
      // Junction limiting: a forward-biased diode moves at most 2 n V_T per iteration.
      for (const auto& d : c_.diodes()) {
        const double dv = delta(dx, d.anode) - delta(dx, d.cathode);
        const double nvt = d.n * kThermalVoltage;
        const double vcrit = nvt * std::log(nvt / (std::sqrt(2.0) * d.i_sat));
        const double vnew = v[d.anode] - v[d.cathode] + dv;
        if (dv > 2 * nvt && vnew > vcrit) scale = std::min(scale, 2 * nvt / dv);
      }
      for (std::size_t k = 0; k < free_.size(); ++k) v[free_[k]] += scale * dx[static_cast<Eigen::Index>(k)];
      if (scale == 1.0 && step < s_.newton_tol) {
        assemble(v, v_prev, h, f, j);
        const double res = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;
        if (res < itol) return NewtonStats{it, res};
      }
    }
    return std::nullopt;
  }

 private:
  double delta(const Eigen::VectorXd& dx, NodeId n) const {
    return unknown_[n] == kFixed ? 0.0 : dx[static_cast<Eigen::Index>(unknown_[n])];
  }

  static constexpr std::size_t kFixed = static_cast<std::size_t>(-1);
  const Circuit& c_;
  const SimConfig& s_;
  std::vector<std::size_t> unknown_;
  std::vector<NodeId> free_;
};

/// DC solution at time t: plain Newton from `guess`, then source stepping.
inline std::vector<double> dc_operating_point(const Circuit& c, const SimConfig& s, double t = 0.0,
                                              std::optional<std::vector<double>> guess = std::nullopt) {
  const NodalSolver solver(c, s);
  const std::size_t iters = std::max<std::size_t>(s.max_newton_iters, 200);
  std::vector<double> v = guess ? *guess : std::vector<double>(c.node_count(), 0.5 * s.vdd);
  solver.apply_fixed(v, t);
  if (solver.newton(v, v, 0.0, iters)) return v;

  v.assign(c.node_count(), 0.0);
  double scale = 0.0, step = 0.1;
  while (scale < 1.0) {
    const double next = std::min(1.0, scale + step);
    std::vector<double> trial = v;
    solver.apply_fixed(trial, t, next);
    if (solver.newton(trial, trial, 0.0, iters)) {
      v = std::move(trial);
      scale = next;
      step = std::min(0.2, step * 1.5);
    } else {
      step *= 0.5;
      if (step < 1e-6) throw ConvergenceError("DC operating point did not converge", t);
    }
  }
  return v;
}

struct Waveform {
  std::vector<double> time;
  std::map<std::string, std::vector<double>> volts;
};

struct TransientStats {
  std::size_t steps = 0;
  std::size_t newton_iterations = 0;
  std::size_t step_retries = 0;
  double max_residual = 0.0;  // A, over accepted steps
};

struct TransientResult {
  Waveform waveform;
  TransientStats stats;
};

struct TransientOptions {
  std::vector<std::string> probes;  // empty: every node except the rails
  /// Stop once `stop_net` has crossed vdd/2 towards `stop_rising`.
  std::optional<std::string> stop_net;
  bool stop_rising = false;
  double stop_margin = 10e-12;
};

/// Backward-Euler integration from the DC point at t = 0. A failed Newton
/// solve halves the local step, down to dt / 2^20.
inline TransientResult transient(const Circuit& c, const SimConfig& s, const TransientOptions& opts = {}) {
  s.validate();
  const NodalSolver solver(c, s);
  std::vector<double> v = dc_operating_point(c, s, 0.0);

  std::vector<NodeId> probes;
  if (opts.probes.empty()) {
    for (NodeId n = 2; n < c.node_count(); ++n) probes.push_back(n);
  } else {
    for (const auto& p : opts.probes) probes.push_back(c.node(p));
  }
  TransientResult out;
  auto record = [&](double t) {
    out.waveform.time.push_back(t);
    for (NodeId n : probes) out.waveform.volts[c.node_name(n)].push_back(v[n]);
  };
  record(0.0);

  const std::optional<NodeId> stop = opts.stop_net ? std::optional<NodeId>(c.node(*opts.stop_net)) : std::nullopt;
  std::optional<double> stop_at;
  const double half = 0.5 * s.vdd;
  const double min_h = s.dt / 1048576.0;
  const auto total = static_cast<std::size_t>(std::llround(s.t_end / s.dt));

  double t = 0.0;
  for (std::size_t k = 1; k <= total; ++k) {
    const double target = static_cast<double>(k) * s.dt;
    double h = target - t;
    while (t < target - 1e-3 * min_h) {
      h = std::min(h, target - t);
      std::vector<double> trial = v;
      solver.apply_fixed(trial, t + h);
      const auto st = solver.newton(trial, v, h, s.max_newton_iters);
      if (!st) {
        ++out.stats.step_retries;
        h *= 0.5;
        if (h < min_h)
          throw ConvergenceError("time step underflow: Newton failed at t = " + std::to_string(t) + " s", t);
        continue;
      }
      out.stats.newton_iterations += st->iterations;
      out.stats.max_residual = std::max(out.stats.max_residual, st->residual);
      const double before = stop ? v[*stop] : 0.0;
      v = std::move(trial);
      t += h;
      if (stop && !stop_at && t > s.t_switch) {
        const bool crossed = opts.stop_rising ? (before < half && v[*stop] >= half) : (before > half && v[*stop] <= half);
        if (crossed) stop_at = t;
      }
    }
    t = target;
    ++out.stats.steps;
    record(t);
    if (stop_at && t >= *stop_at + opts.stop_margin) break;
  }
  return out;
}

enum class Outcome { Transition, Stuck };

struct DelayMeasurement {
  Outcome outcome = Outcome::Transition;
  double delay = 0.0;      // s, for transitions
  bool stuck_high = false; // for stuck outcomes

  std::string to_string() const {
    if (outcome == Outcome::Stuck) return stuck_high ? "sa-1" : "sa-0";
    std::ostringstream o;
    o.precision(4);
    o << delay * 1e12 << "ps";
    return o.str();
  }
};

/// First vdd/2 crossing of `net` towards `rising` after the input starts
/// switching, measured from the input's own vdd/2 crossing.
inline DelayMeasurement measure_delay(const Waveform& w, const std::string& net, bool rising, const SimConfig& s) {
  const auto& y = w.volts.at(net);
  const double half = 0.5 * s.vdd;
  const double t_in = s.t_switch + 0.5 * s.t_rise;
  for (std::size_t i = 1; i < y.size(); ++i) {
    if (w.time[i] <= s.t_switch) continue;
    const bool crossed = rising ? (y[i - 1] < half && y[i] >= half) : (y[i - 1] > half && y[i] <= half);
    if (!crossed) continue;
    const double frac = (half - y[i - 1]) / (y[i] - y[i - 1]);
    const double t = w.time[i - 1] + frac * (w.time[i] - w.time[i - 1]);
    return {Outcome::Transition, t - t_in, false};
  }
  return {Outcome::Stuck, 0.0, y.back() > half};
}

/// Net names used by the stage circuit.
inline std::string input_net(std::size_t pin) { return std::string(1, pin_letter(pin)); }
inline std::string driver_source(std::size_t pin) { return "in_" + input_net(pin); }
inline constexpr const char* kOutputNet = "Y";
inline constexpr const char* kFanoutNet = "Z";
inline constexpr const char* kBreakdownNode = "X";

struct StageCircuit {
  Circuit circuit;
  GateKind kind;
  std::optional<TransistorRef> site;
  Stage stage = Stage::FaultFree;
  ObdParams obd;
};

namespace detail {

inline void add_inverter(Circuit& c, const std::string& name, NodeId in, NodeId out, const DeviceConfig& cfg) {
  c.add_mos(name + ".n", Polarity::Nmos, out, in, Circuit::kGround, cfg.nmos);
  c.add_mos(name + ".p", Polarity::Pmos, out, in, Circuit::kSupply, cfg.pmos);
}

inline void attach_obd(Circuit& c, const MosElement& t, const ObdParams& p) {
  const NodeId x = c.add_node(kBreakdownNode, 0.0);
  c.add_resistor(t.gate, x, p.r_bd);
  const double is = p.effective_i_sat();
  if (t.polarity == Polarity::Nmos) {
    c.add_diode(x, t.source, is, p.n_ideality);
    c.add_diode(x, t.drain, is, p.n_ideality);
    c.add_resistor(x, Circuit::kGround, p.r_sub);
  } else {
    c.add_diode(t.source, x, is, p.n_ideality);
    c.add_diode(t.drain, x, is, p.n_ideality);
    c.add_resistor(x, Circuit::kSupply, p.r_sub);
  }
}

// Gate under test. Series stacks put pin 0 nearest the output.
inline void add_gate(Circuit& c, GateKind kind, const std::vector<NodeId>& in, NodeId out, const DeviceConfig& cfg) {
  const std::size_t k = kind.arity;
  auto name = [](Polarity p, std::size_t pin) { return std::string("dut.") + polarity_letter(p) + pin_letter(pin); };
  if (kind.type == GateType::Inv) {
    c.add_mos(name(Polarity::Nmos, 0), Polarity::Nmos, out, in[0], Circuit::kGround, cfg.nmos);
    c.add_mos(name(Polarity::Pmos, 0), Polarity::Pmos, out, in[0], Circuit::kSupply, cfg.pmos);
    return;
  }
  const bool nand = kind.type == GateType::Nand;
  const Polarity series = nand ? Polarity::Nmos : Polarity::Pmos;
  const Polarity parallel = nand ? Polarity::Pmos : Polarity::Nmos;
  const NodeId rail_series = nand ? Circuit::kGround : Circuit::kSupply;
  const NodeId rail_parallel = nand ? Circuit::kSupply : Circuit::kGround;
  MosParams ps = nand ? cfg.nmos : cfg.pmos;
  ps.beta *= cfg.series_beta_scale;
  const MosParams& pp = nand ? cfg.pmos : cfg.nmos;
  NodeId upper = out;
  for (std::size_t pin = 0; pin < k; ++pin) {
    const NodeId lower = pin + 1 == k ? rail_series : c.add_node("s" + std::to_string(pin + 1), cfg.sim.c_internal);
    // The drain is on the output side for both polarities.
    c.add_mos(name(series, pin), series, upper, in[pin], lower, ps);
    upper = lower;
  }
  for (std::size_t pin = 0; pin < k; ++pin) c.add_mos(name(parallel, pin), parallel, out, in[pin], rail_parallel, pp);
}

}  // namespace detail

namespace detail {

inline StageCircuit stage_skeleton(GateKind kind, const DeviceConfig& cfg) {
  if (!kind.valid()) throw std::invalid_argument("unsupported gate kind " + kind.name());
  cfg.validate();
  StageCircuit sc;
  sc.kind = kind;
  Circuit& c = sc.circuit;
  std::vector<NodeId> gate_in;
  for (std::size_t pin = 0; pin < kind.arity; ++pin) {
    const NodeId src = c.add_source(driver_source(pin), {});
    const NodeId net = c.add_node(input_net(pin));
    add_inverter(c, "drv" + input_net(pin), src, net, cfg);
    gate_in.push_back(net);
  }
  const NodeId y = c.add_node(kOutputNet);
  add_gate(c, kind, gate_in, y, cfg);
  add_inverter(c, "load", y, c.add_node(kFanoutNet), cfg);
  return sc;
}

}  // namespace detail

/// Driver inverter per gate input (fed by ideal step sources), the gate under
/// test with breakdown network `obd` on `site`, and one fanout inverter.
inline StageCircuit build_stage_circuit(GateKind kind, const TransistorRef& site, const ObdParams& obd,
                                        const DeviceConfig& cfg) {
  if (site.pin >= kind.arity) throw std::invalid_argument("site pin out of range for " + kind.name());
  StageCircuit sc = detail::stage_skeleton(kind, cfg);
  sc.site = site;
  sc.obd = obd;
  const std::string want = std::string("dut.") + polarity_letter(site.polarity) + pin_letter(site.pin);
  const auto& ms = sc.circuit.mosfets();
  const MosElement target = *std::find_if(ms.begin(), ms.end(), [&](const MosElement& m) { return m.name == want; });
  detail::attach_obd(sc.circuit, target, obd);
  return sc;
}

/// Same circuit with the tabulated parameters of `stage`; without a site the
/// gate is defect-free.
inline StageCircuit build_stage_circuit(GateKind kind, std::optional<TransistorRef> site, Stage stage,
                                        const DeviceConfig& cfg) {
  StageCircuit sc = site ? build_stage_circuit(kind, *site, obd_params(cfg, site->polarity, stage), cfg)
                         : detail::stage_skeleton(kind, cfg);
  sc.stage = stage;
  return sc;
}

/// Programs the driver sources so the gate inputs go from pair.v1 to pair.v2.
inline void apply_stimulus(StageCircuit& sc, const LocalPair& pair, const SimConfig& s) {
  if (pair.v1.width != sc.kind.arity || pair.v2.width != sc.kind.arity)
    throw std::invalid_argument("pair width does not match " + sc.kind.name());
  for (std::size_t pin = 0; pin < sc.kind.arity; ++pin) {
    auto& src = sc.circuit.source(sc.circuit.node(driver_source(pin)));
    src.initial = pair.v1[pin] ? 0.0 : s.vdd;
    src.final = pair.v2[pin] ? 0.0 : s.vdd;
  }
}

struct StageTransient {
  TransientResult result;
  DelayMeasurement delay;
};

/// Transient of the stage circuit for a local pair whose output switches.
inline StageTransient run_stage(StageCircuit sc, const LocalPair& pair, const DeviceConfig& cfg, bool full = false) {
  const bool y1 = sc.kind.eval(pair.v1.bits), y2 = sc.kind.eval(pair.v2.bits);
  if (y1 == y2) throw std::invalid_argument("pair " + pair.to_string() + " does not switch the gate output");
  apply_stimulus(sc, pair, cfg.sim);
  TransientOptions opts;
  if (!full) {
    opts.probes = {kOutputNet};
    opts.stop_net = kOutputNet;
    opts.stop_rising = y2;
  }
  StageTransient st;
  st.result = transient(sc.circuit, cfg.sim, opts);
  st.delay = measure_delay(st.result.waveform, kOutputNet, y2, cfg.sim);
  return st;
}

/// Quasi-static output level reached under pair.v2: the driver sources are
/// walked from v1 to v2 with a DC solve at each step, so a bistable stage
/// settles on the branch a slow transition would follow.
inline double settled_output(StageCircuit sc, const LocalPair& pair, const DeviceConfig& cfg,
                             std::size_t steps = 40) {
  apply_stimulus(sc, pair, cfg.sim);
  Circuit& c = sc.circuit;
  std::vector<std::pair<double, double>> ends;
  for (std::size_t pin = 0; pin < sc.kind.arity; ++pin) {
    const auto& src = c.source(c.node(driver_source(pin)));
    ends.emplace_back(src.initial, src.final);
  }
  std::optional<std::vector<double>> v;
  for (std::size_t i = 0; i <= steps; ++i) {
    const double a = static_cast<double>(i) / static_cast<double>(steps);
    for (std::size_t pin = 0; pin < sc.kind.arity; ++pin) {
      auto& src = c.source(c.node(driver_source(pin)));
      src.initial = src.final = ends[pin].first + a * (ends[pin].second - ends[pin].first);
    }
    v = dc_operating_point(c, cfg.sim, 0.0, v);
  }
  return (*v)[c.node(kOutputNet)];
}

struct DelayCell {
  TransistorRef site{0, Polarity::Nmos, 0};
  LocalPair pair;
  Stage stage = Stage::FaultFree;
  bool excited = false;
  std::optional<DelayMeasurement> measurement;  // empty when the stage has no parameters
  TransientStats stats;
};

struct DelayTable {
  GateKind kind;
  /// Column order: per polarity (NMOS first), pairs then sites.
  std::vector<std::pair<LocalPair, TransistorRef>> columns;
  std::vector<Stage> stages;
  std::vector<DelayCell> cells;  // row-major: stage, then column

  const DelayCell& at(Stage s, std::size_t column) const {
    const auto row = static_cast<std::size_t>(std::find(stages.begin(), stages.end(), s) - stages.begin());
    return cells.at(row * columns.size() + column);
  }
  std::optional<std::size_t> column(const LocalPair& p, const TransistorRef& t) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i].first == p && columns[i].second.polarity == t.polarity && columns[i].second.pin == t.pin) return i;
    return std::nullopt;
  }
};

/// Single-input-switch pairs exciting some transistor of each polarity, every
/// site of that polarity measured under each of them.
inline std::vector<std::pair<LocalPair, TransistorRef>> delay_columns(GateKind kind) {
  std::vector<std::pair<LocalPair, TransistorRef>> cols;
  for (Polarity pol : {Polarity::Nmos, Polarity::Pmos}) {
    std::vector<LocalPair> pairs;
    for (std::size_t pin = 0; pin < kind.arity; ++pin)
      for (const auto& p : excitation_pairs(kind, pol, pin))
        if (std::popcount(p.v1.bits ^ p.v2.bits) == 1 && std::find(pairs.begin(), pairs.end(), p) == pairs.end())
          pairs.push_back(p);
    std::sort(pairs.begin(), pairs.end(), [](const LocalPair& a, const LocalPair& b) {
      if (!(a.v1 == b.v1)) return a.v1 < b.v1;
      return b.v2 < a.v2;
    });
    for (const auto& p : pairs)
      for (std::size_t pin = 0; pin < kind.arity; ++pin) cols.push_back({p, TransistorRef{0, pol, pin}});
  }
  return cols;
}

inline DelayTable delay_table(GateKind kind, const DeviceConfig& cfg) {
  DelayTable table;
  table.kind = kind;
  table.columns = delay_columns(kind);
  table.stages.assign(kAllStages.begin(), kAllStages.end());
  const GateNetworks nets = expand_gate(kind);
  for (Stage stage : table.stages)
    for (const auto& [pair, site] : table.columns) {
      DelayCell cell{site, pair, stage, excites(nets, site.polarity, site.pin, pair), std::nullopt, {}};
      if (has_stage_params(site.polarity, stage)) {
        const StageTransient st = run_stage(build_stage_circuit(kind, site, stage, cfg), pair, cfg);
        cell.measurement = st.delay;
        cell.stats = st.result.stats;
      }
      table.cells.push_back(cell);
    }
  return table;
}

/// Inverter driven directly by an ideal source "in", loaded by a fanout inverter.
inline StageCircuit build_vtc_circuit(std::optional<Polarity> polarity, Stage stage, const DeviceConfig& cfg) {
  cfg.validate();
  StageCircuit sc;
  sc.kind = GateKind::inv();
  sc.stage = stage;
  Circuit& c = sc.circuit;
  const NodeId in = c.add_source("in", {});
  const NodeId y = c.add_node(kOutputNet);
  detail::add_gate(c, sc.kind, {in}, y, cfg);
  detail::add_inverter(c, "load", y, c.add_node(kFanoutNet), cfg);
  if (polarity) {
    sc.site = TransistorRef{0, *polarity, 0};
    sc.obd = obd_params(cfg, *polarity, stage);
    const std::string want = std::string("dut.") + polarity_letter(*polarity) + 'A';
    for (const auto& m : c.mosfets())
      if (m.name == want) {
        const MosElement target = m;
        detail::attach_obd(c, target, sc.obd);
        break;
      }
  }
  return sc;
}

struct VtcPoint {
  double v_in = 0.0;
  double v_out = 0.0;
};

/// DC sweep of source `input` over [0, vdd], continuing from the previous point.
inline std::vector<VtcPoint> vtc_sweep(const Circuit& circuit, const SimConfig& s, const std::string& input = "in",
                                       const std::string& output = kOutputNet, std::size_t points = 121) {
  if (points < 2) throw std::invalid_argument("a sweep needs at least two points");
  Circuit c = circuit;
  auto& src = c.source(c.node(input));
  const NodeId out = c.node(output);
  std::vector<VtcPoint> curve;
  std::optional<std::vector<double>> guess;
  for (std::size_t i = 0; i < points; ++i) {
    const double vin = s.vdd * static_cast<double>(i) / static_cast<double>(points - 1);
    src.initial = src.final = vin;
    guess = dc_operating_point(c, s, 0.0, guess);
    curve.push_back({vin, (*guess)[out]});
  }
  return curve;
}

}  // namespace obd::device
