#pragma once

// Series-parallel pull-up / pull-down transistor networks of static CMOS gates
// and their switch-level conduction semantics.

#include <bit>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "obd/netlist.hpp"

namespace obd {

enum class Polarity { Nmos, Pmos };

inline const char* polarity_name(Polarity p) { return p == Polarity::Nmos ? "nmos" : "pmos"; }
inline char polarity_letter(Polarity p) { return p == Polarity::Nmos ? 'N' : 'P'; }

/// Bit-packed input vector of a single gate; bit i holds pin i.
struct LocalVector {
  std::uint32_t bits = 0;
  std::size_t width = 0;

  bool operator[](std::size_t pin) const { return (bits >> pin) & 1u; }

  /// Pin 0 first, e.g. A=0,B=1 -> "01".
  std::string to_string() const {
    std::string s(width, '0');
    for (std::size_t i = 0; i < width; ++i)
      if ((*this)[i]) s[i] = '1';
    return s;
  }

  static LocalVector from_string(const std::string& s) {
    LocalVector v{0, s.size()};
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '1')
        v.bits |= 1u << i;
      else if (s[i] != '0')
        throw std::invalid_argument("bit string '" + s + "' may contain only 0 and 1");
    }
    return v;
  }

  friend bool operator==(const LocalVector&, const LocalVector&) = default;
  /// Ordered like the strings returned by to_string().
  friend bool operator<(const LocalVector& a, const LocalVector& b) {
    if (a.width != b.width) return a.width < b.width;
    const std::uint32_t diff = a.bits ^ b.bits;
    return diff != 0 && ((a.bits >> std::countr_zero(diff)) & 1u) == 0;
  }
};

/// One transistor of a gate: which network (by polarity) and which input pin drives it.
struct TransistorRef {
  GateIndex gate = 0;
  Polarity polarity = Polarity::Nmos;
  std::size_t pin = 0;

  friend bool operator==(const TransistorRef&, const TransistorRef&) = default;
  friend auto operator<=>(const TransistorRef& a, const TransistorRef& b) {
    if (a.gate != b.gate) return a.gate <=> b.gate;
    if (a.pin != b.pin) return a.pin <=> b.pin;
    return static_cast<int>(a.polarity) <=> static_cast<int>(b.polarity);
  }
};

/// Series-parallel tree of transistors. Leaves name (polarity, pin).
struct NetworkExpr {
  enum class Op { Leaf, Series, Parallel };

  Op op = Op::Leaf;
  Polarity polarity = Polarity::Nmos;  // leaves only
  std::size_t pin = 0;                 // leaves only
  std::vector<NetworkExpr> children;

  static NetworkExpr leaf(Polarity p, std::size_t pin) { return {Op::Leaf, p, pin, {}}; }
  static NetworkExpr series(std::vector<NetworkExpr> c) { return combine(Op::Series, std::move(c)); }
  static NetworkExpr parallel(std::vector<NetworkExpr> c) { return combine(Op::Parallel, std::move(c)); }

  bool is_leaf() const { return op == Op::Leaf; }

  /// Series <-> Parallel and NMOS <-> PMOS exchanged.
  NetworkExpr dual() const {
    if (is_leaf()) return leaf(polarity == Polarity::Nmos ? Polarity::Pmos : Polarity::Nmos, pin);
    std::vector<NetworkExpr> c;
    for (const auto& ch : children) c.push_back(ch.dual());
    return {op == Op::Series ? Op::Parallel : Op::Series, polarity, 0, std::move(c)};
  }

  /// Nested s-expression, e.g. (parallel PA PB).
  std::string to_sexpr() const {
    if (is_leaf()) return std::string{polarity_letter(polarity), pin_letter(pin)};
    std::string s = op == Op::Series ? "(series" : "(parallel";
    for (const auto& ch : children) s += " " + ch.to_sexpr();
    return s + ")";
  }

  void collect_leaves(std::vector<const NetworkExpr*>& out) const {
    if (is_leaf()) {
      out.push_back(this);
      return;
    }
    for (const auto& ch : children) ch.collect_leaves(out);
  }

  friend bool operator==(const NetworkExpr& a, const NetworkExpr& b) {
    if (a.op != b.op) return false;
    if (a.is_leaf()) return a.polarity == b.polarity && a.pin == b.pin;
    return a.children == b.children;
  }

 private:
  static NetworkExpr combine(Op op, std::vector<NetworkExpr> c) {
    if (c.size() < 2) throw std::invalid_argument("series/parallel node needs at least two children");
    return {op, Polarity::Nmos, 0, std::move(c)};
  }
};

struct GateNetworks {
  GateKind kind;
  NetworkExpr pull_up;    // PMOS, connects output to VDD
  NetworkExpr pull_down;  // NMOS, connects output to GND

  const NetworkExpr& network(Polarity p) const { return p == Polarity::Pmos ? pull_up : pull_down; }
};

inline GateNetworks expand_gate(GateKind kind) {
  if (!kind.valid()) throw std::invalid_argument("unsupported gate kind " + kind.name());
  if (kind.type == GateType::Inv)
    return {kind, NetworkExpr::leaf(Polarity::Pmos, 0), NetworkExpr::leaf(Polarity::Nmos, 0)};
  std::vector<NetworkExpr> n, p;
  for (std::size_t pin = 0; pin < kind.arity; ++pin) {
    n.push_back(NetworkExpr::leaf(Polarity::Nmos, pin));
    p.push_back(NetworkExpr::leaf(Polarity::Pmos, pin));
  }
  if (kind.type == GateType::Nand)
    return {kind, NetworkExpr::parallel(std::move(p)), NetworkExpr::series(std::move(n))};
  return {kind, NetworkExpr::series(std::move(p)), NetworkExpr::parallel(std::move(n))};
}

namespace detail {

inline bool conducts_unchecked(const NetworkExpr& e, LocalVector v) {
  switch (e.op) {
    case NetworkExpr::Op::Leaf: return e.polarity == Polarity::Nmos ? v[e.pin] : !v[e.pin];
    case NetworkExpr::Op::Series:
      for (const auto& c : e.children)
        if (!conducts_unchecked(c, v)) return false;
      return true;
    case NetworkExpr::Op::Parallel:
      for (const auto& c : e.children)
        if (conducts_unchecked(c, v)) return true;
      return false;
  }
  return false;
}

inline std::size_t max_pin(const NetworkExpr& e) {
  if (e.is_leaf()) return e.pin;
  std::size_t m = 0;
  for (const auto& c : e.children) m = std::max(m, max_pin(c));
  return m;
}

// Path of child indices from the root down to the leaf (polarity, pin).
inline bool find_leaf(const NetworkExpr& e, Polarity p, std::size_t pin, std::vector<std::size_t>& path) {
  if (e.is_leaf()) return e.polarity == p && e.pin == pin;
  for (std::size_t i = 0; i < e.children.size(); ++i) {
    path.push_back(i);
    if (find_leaf(e.children[i], p, pin, path)) return true;
    path.pop_back();
  }
  return false;
}

}  // namespace detail

/// Switch-level conduction: NMOS leaf on at 1, PMOS at 0; series = AND, parallel = OR.
inline bool conducts(const NetworkExpr& net, LocalVector v) {
  if (detail::max_pin(net) >= v.width)
    throw std::invalid_argument("input vector of width " + std::to_string(v.width) + " too narrow for network");
  return detail::conducts_unchecked(net, v);
}

/// Conduction with the vector width checked against the gate arity.
inline bool conducts(const GateNetworks& g, Polarity which, LocalVector v) {
  if (v.width != g.kind.arity)
    throw std::invalid_argument("input vector width " + std::to_string(v.width) + " does not match " + g.kind.name());
  return detail::conducts_unchecked(g.network(which), v);
}

/// True iff, for every parallel ancestor of the leaf (polarity, pin), none of the
/// sibling subtrees conducts under v.
inline bool parallel_siblings_off(const NetworkExpr& net, Polarity polarity, std::size_t pin, LocalVector v) {
  std::vector<std::size_t> path;
  if (!detail::find_leaf(net, polarity, pin, path))
    throw std::invalid_argument(std::string("transistor ") + polarity_letter(polarity) + pin_letter(pin) +
                                " is not part of the network");
  if (detail::max_pin(net) >= v.width) throw std::invalid_argument("input vector too narrow for network");
  const NetworkExpr* node = &net;
  for (std::size_t step : path) {
    if (node->op == NetworkExpr::Op::Parallel)
      for (std::size_t i = 0; i < node->children.size(); ++i)
        if (i != step && detail::conducts_unchecked(node->children[i], v)) return false;
    node = &node->children[step];
  }
  return true;
}

}  // namespace obd
