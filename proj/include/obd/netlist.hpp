#pragma once

// Combinational netlists of static CMOS primitive gates (INV, NANDk, NORk),
// the line-oriented netlist format, and levelization.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace obd {

using NetIndex = std::size_t;
using GateIndex = std::size_t;

enum class GateType { Inv, Nand, Nor };

/// Gate kind: logic type plus arity. INV is always 1-input; NAND/NOR take k >= 2.
struct GateKind {
  GateType type = GateType::Inv;
  std::size_t arity = 1;

  static constexpr GateKind inv() { return {GateType::Inv, 1}; }
  static constexpr GateKind nand(std::size_t k = 2) { return {GateType::Nand, k}; }
  static constexpr GateKind nor(std::size_t k = 2) { return {GateType::Nor, k}; }

  bool valid() const {
    return type == GateType::Inv ? arity == 1 : arity >= 2;
  }

  /// Lower-case keyword used in netlist files: "inv", "nand2", "nor3", ...
  std::string name() const {
    switch (type) {
      case GateType::Inv: return "inv";
      case GateType::Nand: return "nand" + std::to_string(arity);
      case GateType::Nor: return "nor" + std::to_string(arity);
    }
    return "?";
  }

  /// Parses a keyword produced by name(); returns nullopt for anything else.
  static std::optional<GateKind> from_name(std::string_view word) {
    std::string w(word);
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (w == "inv") return inv();
    auto with_arity = [&](std::string_view prefix, GateType t) -> std::optional<GateKind> {
      if (w.size() <= prefix.size() || w.compare(0, prefix.size(), prefix) != 0) return std::nullopt;
      std::size_t k = 0;
      for (std::size_t i = prefix.size(); i < w.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(w[i]))) return std::nullopt;
        k = k * 10 + static_cast<std::size_t>(w[i] - '0');
        if (k > 16) return std::nullopt;
      }
      if (k < 2) return std::nullopt;
      return GateKind{t, k};
    };
    if (auto k = with_arity("nand", GateType::Nand)) return k;
    if (auto k = with_arity("nor", GateType::Nor)) return k;
    return std::nullopt;
  }

  /// Boolean function of the gate on a bit-packed local input vector (bit i = pin i).
  bool eval(std::uint32_t inputs) const {
    const std::uint32_t all = (arity >= 32) ? ~0u : ((1u << arity) - 1u);
    const std::uint32_t v = inputs & all;
    switch (type) {
      case GateType::Inv: return (v & 1u) == 0;
      case GateType::Nand: return v != all;
      case GateType::Nor: return v == 0;
    }
    return false;
  }

  friend bool operator==(const GateKind&, const GateKind&) = default;
  friend auto operator<=>(const GateKind& a, const GateKind& b) {
    if (a.type != b.type) return static_cast<int>(a.type) <=> static_cast<int>(b.type);
    return a.arity <=> b.arity;
  }
};

struct Gate {
  std::string id;
  GateKind kind;
  std::vector<NetIndex> inputs;
  NetIndex output = 0;
};

/// Error raised while reading or validating a netlist. Each kind is distinct so
/// callers (and tests) can tell a syntax slip from a structural defect.
class NetlistError : public std::runtime_error {
 public:
  enum class Kind { Syntax, DuplicateDriver, UndrivenNet, CombinationalCycle, Sequential, DuplicateName };

  NetlistError(Kind kind, std::string message, std::size_t line = 0, std::size_t column = 0)
      : std::runtime_error(format(kind, message, line, column)),
        kind_(kind), line_(line), column_(column) {}

  Kind kind() const { return kind_; }
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

  static const char* kind_name(Kind k) {
    switch (k) {
      case Kind::Syntax: return "syntax error";
      case Kind::DuplicateDriver: return "duplicate driver";
      case Kind::UndrivenNet: return "undriven net";
      case Kind::CombinationalCycle: return "combinational cycle";
      case Kind::Sequential: return "sequential element";
      case Kind::DuplicateName: return "duplicate name";
    }
    return "error";
  }

 private:
  static std::string format(Kind k, const std::string& msg, std::size_t line, std::size_t col) {
    std::string out = kind_name(k);
    if (line > 0) out += " at " + std::to_string(line) + ":" + std::to_string(col);
    return out + ": " + msg;
  }

  Kind kind_;
  std::size_t line_;
  std::size_t column_;
};

/// Immutable, validated combinational netlist. Construct through NetlistBuilder,
/// parse_netlist(), or builtin_full_adder().
class Netlist {
 public:
  const std::vector<std::string>& net_names() const { return net_names_; }
  const std::string& net_name(NetIndex n) const { return net_names_.at(n); }
  std::size_t net_count() const { return net_names_.size(); }

  const std::vector<NetIndex>& primary_inputs() const { return inputs_; }
  const std::vector<NetIndex>& primary_outputs() const { return outputs_; }
  const std::vector<Gate>& gates() const { return gates_; }
  const Gate& gate(GateIndex g) const { return gates_.at(g); }

  std::optional<NetIndex> find_net(std::string_view name) const {
    auto it = net_index_.find(std::string(name));
    if (it == net_index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<GateIndex> find_gate(std::string_view id) const {
    for (GateIndex g = 0; g < gates_.size(); ++g)
      if (gates_[g].id == id) return g;
    return std::nullopt;
  }

  /// Gate driving net n, or nullopt when n is a primary input.
  std::optional<GateIndex> driver(NetIndex n) const {
    const auto d = drivers_.at(n);
    if (d == kPrimaryInput) return std::nullopt;
    return d;
  }

  /// Gates reading net n, in gate order.
  const std::vector<GateIndex>& fanout(NetIndex n) const { return fanout_.at(n); }

  bool is_primary_output(NetIndex n) const {
    return std::find(outputs_.begin(), outputs_.end(), n) != outputs_.end();
  }

  /// Gates in topological order (stable with respect to file order).
  const std::vector<GateIndex>& topo_order() const { return topo_; }
  /// Level of each gate: 1 + max level of its input drivers (primary inputs are level 0).
  const std::vector<std::size_t>& gate_levels() const { return levels_; }
  /// Longest gate path from a primary input to a primary output.
  std::size_t depth() const { return depth_; }

  std::map<std::string, std::size_t> counts_by_kind() const {
    std::map<std::string, std::size_t> counts;
    for (const auto& g : gates_) ++counts[g.kind.name()];
    return counts;
  }

  friend bool operator==(const Netlist& a, const Netlist& b) {
    if (a.net_names_ != b.net_names_ || a.inputs_ != b.inputs_ || a.outputs_ != b.outputs_) return false;
    if (a.gates_.size() != b.gates_.size()) return false;
    for (std::size_t i = 0; i < a.gates_.size(); ++i) {
      const auto& x = a.gates_[i];
      const auto& y = b.gates_[i];
      if (x.id != y.id || x.kind != y.kind || x.inputs != y.inputs || x.output != y.output) return false;
    }
    return true;
  }

 private:
  friend class NetlistBuilder;
  static constexpr std::size_t kPrimaryInput = static_cast<std::size_t>(-1);

  std::vector<std::string> net_names_;
  std::unordered_map<std::string, NetIndex> net_index_;
  std::vector<NetIndex> inputs_;
  std::vector<NetIndex> outputs_;
  std::vector<Gate> gates_;
  std::vector<std::size_t> drivers_;
  std::vector<std::vector<GateIndex>> fanout_;
  std::vector<GateIndex> topo_;
  std::vector<std::size_t> levels_;
  std::size_t depth_ = 0;
};

/// Position of a statement in a netlist file (1-based; 0 when built in code).
struct SourceLocation {
  std::size_t line = 0;
  std::size_t column = 0;
};

/// Incremental construction with full validation in build().
class NetlistBuilder {
 public:
  using Location = SourceLocation;

  NetlistBuilder& input(const std::string& net, Location at = {}) {
    inputs_.push_back({net, at});
    return *this;
  }

  NetlistBuilder& output(const std::string& net, Location at = {}) {
    outputs_.push_back({net, at});
    return *this;
  }

  NetlistBuilder& gate(const std::string& id, GateKind kind, std::vector<std::string> ins,
                       const std::string& out, Location at = {}) {
    gates_.push_back({id, kind, std::move(ins), out, at});
    return *this;
  }

  Netlist build() const {
    Netlist nl;
    auto intern = [&](const std::string& name) {
      auto [it, fresh] = nl.net_index_.try_emplace(name, nl.net_names_.size());
      if (fresh) nl.net_names_.push_back(name);
      return it->second;
    };
    // Net numbering follows first mention: inputs, gate nets in file order, outputs.
    for (const auto& in : inputs_) intern(in.net);
    for (const auto& g : gates_) {
      for (const auto& n : g.inputs) intern(n);
      intern(g.output);
    }
    for (const auto& out : outputs_) intern(out.net);

    const std::size_t none = static_cast<std::size_t>(-2);
    nl.drivers_.assign(nl.net_names_.size(), none);
    nl.fanout_.assign(nl.net_names_.size(), {});

    for (const auto& in : inputs_) {
      const NetIndex n = nl.net_index_.at(in.net);
      if (nl.drivers_[n] != none)
        throw NetlistError(NetlistError::Kind::DuplicateDriver,
                           "net '" + in.net + "' declared as input more than once", in.at.line, in.at.column);
      nl.drivers_[n] = Netlist::kPrimaryInput;
      nl.inputs_.push_back(n);
    }

    std::unordered_map<std::string, std::size_t> gate_ids;
    for (const auto& g : gates_) {
      if (!g.kind.valid())
        throw NetlistError(NetlistError::Kind::Syntax, "invalid gate kind for '" + g.id + "'", g.at.line, g.at.column);
      if (g.inputs.size() != g.kind.arity)
        throw NetlistError(NetlistError::Kind::Syntax,
                           "gate '" + g.id + "' of kind " + g.kind.name() + " expects " +
                               std::to_string(g.kind.arity) + " inputs, got " + std::to_string(g.inputs.size()),
                           g.at.line, g.at.column);
      if (!gate_ids.emplace(g.id, nl.gates_.size()).second)
        throw NetlistError(NetlistError::Kind::DuplicateName, "gate id '" + g.id + "' reused", g.at.line, g.at.column);
      Gate gate{g.id, g.kind, {}, nl.net_index_.at(g.output)};
      for (const auto& n : g.inputs) gate.inputs.push_back(nl.net_index_.at(n));
      if (nl.drivers_[gate.output] != none)
        throw NetlistError(NetlistError::Kind::DuplicateDriver, "net '" + g.output + "' already driven",
                           g.at.line, g.at.column);
      nl.drivers_[gate.output] = nl.gates_.size();
      nl.gates_.push_back(std::move(gate));
    }

    for (GateIndex gi = 0; gi < nl.gates_.size(); ++gi) {
      for (NetIndex n : nl.gates_[gi].inputs) {
        if (nl.drivers_[n] == none)
          throw NetlistError(NetlistError::Kind::UndrivenNet,
                             "net '" + nl.net_names_[n] + "' read by gate '" + nl.gates_[gi].id + "' has no driver",
                             gates_[gi].at.line, gates_[gi].at.column);
        auto& fo = nl.fanout_[n];
        if (fo.empty() || fo.back() != gi) fo.push_back(gi);
      }
    }

    for (const auto& out : outputs_) {
      const NetIndex n = nl.net_index_.at(out.net);
      if (nl.drivers_[n] == none)
        throw NetlistError(NetlistError::Kind::UndrivenNet, "output '" + out.net + "' has no driver",
                           out.at.line, out.at.column);
      if (std::find(nl.outputs_.begin(), nl.outputs_.end(), n) != nl.outputs_.end())
        throw NetlistError(NetlistError::Kind::DuplicateName, "output '" + out.net + "' declared twice",
                           out.at.line, out.at.column);
      nl.outputs_.push_back(n);
    }

    levelize_into(nl);
    return nl;
  }

 private:
  struct PortDecl {
    std::string net;
    Location at;
  };
  struct GateDecl {
    std::string id;
    GateKind kind;
    std::vector<std::string> inputs;
    std::string output;
    Location at;
  };

  // Kahn's algorithm, always releasing the lowest-numbered ready gate so the
  // order is a deterministic function of the file.
  void levelize_into(Netlist& nl) const {
    const std::size_t count = nl.gates_.size();
    std::vector<std::size_t> pending(count, 0);
    for (GateIndex g = 0; g < count; ++g)
      for (NetIndex n : nl.gates_[g].inputs)
        if (nl.drivers_[n] != Netlist::kPrimaryInput) ++pending[g];

    std::vector<GateIndex> ready;
    for (GateIndex g = 0; g < count; ++g)
      if (pending[g] == 0) ready.push_back(g);
    std::make_heap(ready.begin(), ready.end(), std::greater<>{});

    nl.levels_.assign(count, 0);
    while (!ready.empty()) {
      std::pop_heap(ready.begin(), ready.end(), std::greater<>{});
      const GateIndex g = ready.back();
      ready.pop_back();
      std::size_t level = 0;
      for (NetIndex n : nl.gates_[g].inputs) {
        const auto d = nl.drivers_[n];
        if (d != Netlist::kPrimaryInput) level = std::max(level, nl.levels_[d]);
      }
      nl.levels_[g] = level + 1;
      nl.topo_.push_back(g);
      for (GateIndex succ : nl.fanout_[nl.gates_[g].output]) {
        // A gate may read the same net on several pins; count every pin.
        for (NetIndex n : nl.gates_[succ].inputs)
          if (n == nl.gates_[g].output && --pending[succ] == 0) {
            ready.push_back(succ);
            std::push_heap(ready.begin(), ready.end(), std::greater<>{});
          }
      }
    }

    if (nl.topo_.size() != count) {
      std::string where;
      std::size_t line = 0;
      std::size_t col = 0;
      for (GateIndex g = 0; g < count; ++g)
        if (pending[g] != 0) {
          where = nl.gates_[g].id;
          line = gates_[g].at.line;
          col = gates_[g].at.column;
          break;
        }
      throw NetlistError(NetlistError::Kind::CombinationalCycle, "cycle through gate '" + where + "'", line, col);
    }

    nl.depth_ = 0;
    for (NetIndex po : nl.outputs_) {
      const auto d = nl.drivers_[po];
      if (d != Netlist::kPrimaryInput) nl.depth_ = std::max(nl.depth_, nl.levels_[d]);
    }
  }

  std::vector<PortDecl> inputs_;
  std::vector<PortDecl> outputs_;
  std::vector<GateDecl> gates_;
};

namespace detail {

inline bool is_token(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) || c == '_'; });
}

inline bool is_sequential_keyword(const std::string& lower) {
  static const char* const kWords[] = {"dff", "latch", "ff", "dffr", "dffs", "sdff", "flop", "reg"};
  return std::any_of(std::begin(kWords), std::end(kWords), [&](const char* w) { return lower == w; });
}

}  // namespace detail

/// Reads the line-oriented netlist format:
///
///   input <net> | output <net> | <kind> <gate-id> <in-net>... <out-net>
///
/// where kind is inv, nand2, nor2 (or nandK / norK). '#' starts a comment.
inline Netlist parse_netlist(std::string_view text) {
  NetlistBuilder builder;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    ++line_no;
    pos = eol + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);

    struct Word {
      std::string_view text;
      std::size_t column;
    };
    std::vector<Word> words;
    for (std::size_t i = 0; i < line.size();) {
      if (std::isspace(static_cast<unsigned char>(line[i]))) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
      words.push_back({line.substr(i, j - i), i + 1});
      i = j;
    }
    if (words.empty()) {
      if (eol == text.size()) break;
      continue;
    }

    const SourceLocation at{line_no, words[0].column};
    std::string keyword(words[0].text);
    std::transform(keyword.begin(), keyword.end(), keyword.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });

    for (const auto& w : words)
      if (!detail::is_token(w.text))
        throw NetlistError(NetlistError::Kind::Syntax, "invalid token '" + std::string(w.text) + "'", line_no,
                           w.column);

    if (keyword == "input" || keyword == "output") {
      if (words.size() != 2)
        throw NetlistError(NetlistError::Kind::Syntax, keyword + " takes exactly one net name", line_no,
                           words.size() > 2 ? words[2].column : words[0].column);
      if (keyword == "input")
        builder.input(std::string(words[1].text), at);
      else
        builder.output(std::string(words[1].text), at);
    } else if (auto kind = GateKind::from_name(keyword)) {
      const std::size_t expected = 2 + kind->arity + 1;
      if (words.size() != expected)
        throw NetlistError(NetlistError::Kind::Syntax,
                           keyword + " needs a gate id, " + std::to_string(kind->arity) + " input nets and an output net",
                           line_no, words.size() > expected ? words[expected].column : words.back().column);
      std::vector<std::string> ins;
      for (std::size_t i = 2; i + 1 < words.size(); ++i) ins.emplace_back(words[i].text);
      builder.gate(std::string(words[1].text), *kind, std::move(ins), std::string(words.back().text), at);
    } else if (detail::is_sequential_keyword(keyword)) {
      throw NetlistError(NetlistError::Kind::Sequential,
                         "'" + keyword + "': only combinational gates are supported", line_no, words[0].column);
    } else {
      throw NetlistError(NetlistError::Kind::Syntax, "unknown statement '" + std::string(words[0].text) + "'",
                         line_no, words[0].column);
    }
    if (eol == text.size()) break;
  }
  return builder.build();
}

/// Writes a netlist in the format read by parse_netlist().
inline std::string serialize_netlist(const Netlist& nl) {
  std::ostringstream out;
  for (NetIndex n : nl.primary_inputs()) out << "input " << nl.net_name(n) << '\n';
  for (NetIndex n : nl.primary_outputs()) out << "output " << nl.net_name(n) << '\n';
  for (const auto& g : nl.gates()) {
    out << g.kind.name() << ' ' << g.id;
    for (NetIndex n : g.inputs) out << ' ' << nl.net_name(n);
    out << ' ' << nl.net_name(g.output) << '\n';
  }
  return out.str();
}

struct Levelization {
  std::vector<GateIndex> order;
  std::size_t depth = 0;
};

inline Levelization levelize(const Netlist& nl) { return {nl.topo_order(), nl.depth()}; }

/// Letter naming a gate input pin: 0 -> 'A', 1 -> 'B', ...
inline char pin_letter(std::size_t pin) { return static_cast<char>('A' + pin); }

// Sum bit of a full adder from NAND2 and INV only, without logic optimisation.
// Each on-set minterm is a NAND3 built as NAND2 -> INV -> NAND2, and the ABC
// product is instantiated twice (redundant logic). The five minterm outputs
// are combined by a NAND5 tree. 14 NAND2, 11 INV, logic depth 9; n12 is the
// only NAND at level 5, with four gate stages before and after it.
inline constexpr std::string_view kFullAdderSumNetlist = R"(# full adder sum bit S = A xor B xor C
input A
input B
input C
output S
inv   i1  A   An
inv   i2  B   Bn
inv   i3  C   Cn
# An.Bn.C
nand2 n1  An  Bn  t1
inv   i4  t1  u1
nand2 n2  u1  C   m1
# An.B.Cn
nand2 n3  An  B   t2
inv   i5  t2  u2
nand2 n4  u2  Cn  m2
# A.Bn.Cn
nand2 n5  A   Bn  t3
inv   i6  t3  u3
nand2 n6  u3  Cn  m3
# A.B.C
nand2 n7  A   B   t4
inv   i7  t4  u4
nand2 n8  u4  C   m4
# A.B.C again
nand2 n9  A   B   t5
inv   i8  t5  u5
nand2 n10 u5  C   m5
# NAND5(m1, m2, m4, m5, m3)
nand2 n11 m4  m5  s2
inv   i9  s2  r2
nand2 n12 m1  m2  s1
inv   i10 s1  r1
nand2 n13 r1  r2  s3
inv   i11 s3  r3
nand2 n14 r3  m3  S
)";

inline Netlist builtin_full_adder() { return parse_netlist(kFullAdderSumNetlist); }

}  // namespace obd
