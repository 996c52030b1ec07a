#pragma once

// Minimum-cardinality set cover: exact branch-and-bound with a disjoint-packing
// lower bound, plus a greedy cover with redundancy elimination for instances
// too large to solve exactly.

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace obd {

class DynamicBitset {
 public:
  DynamicBitset() = default;
  explicit DynamicBitset(std::size_t size) : size_(size), words_((size + 63) / 64, 0) {}

  std::size_t size() const { return size_; }
  bool test(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1u; }
  void set(std::size_t i) { words_[i / 64] |= std::uint64_t{1} << (i % 64); }
  void reset(std::size_t i) { words_[i / 64] &= ~(std::uint64_t{1} << (i % 64)); }

  std::size_t count() const {
    std::size_t c = 0;
    for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
    return c;
  }

  bool intersects(const DynamicBitset& o) const {
    for (std::size_t i = 0; i < words_.size(); ++i)
      if (words_[i] & o.words_[i]) return true;
    return false;
  }

  /// |other \ this|
  std::size_t count_new(const DynamicBitset& o) const {
    std::size_t c = 0;
    for (std::size_t i = 0; i < words_.size(); ++i) c += static_cast<std::size_t>(std::popcount(o.words_[i] & ~words_[i]));
    return c;
  }

  DynamicBitset& operator|=(const DynamicBitset& o) {
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= o.words_[i];
    return *this;
  }

  bool contains(const DynamicBitset& o) const {
    for (std::size_t i = 0; i < words_.size(); ++i)
      if (o.words_[i] & ~words_[i]) return false;
    return true;
  }

  friend bool operator==(const DynamicBitset&, const DynamicBitset&) = default;

 private:
  std::size_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Candidate i covers the elements listed in covers[i]. Elements no candidate
/// covers are ignored: the cover targets every coverable element.
struct CoverProblem {
  std::size_t element_count = 0;
  std::vector<std::vector<std::size_t>> covers;
};

struct CoverResult {
  std::vector<std::size_t> chosen;  // ascending candidate indices
  bool exact = false;
  std::size_t nodes = 0;
};

struct CoverOptions {
  std::size_t node_limit = 5'000'000;
  /// Among minimum covers, return the one whose ascending index list is
  /// lexicographically smallest.
  bool lexicographic = false;
};

namespace detail {

class CoverSolver {
 public:
  explicit CoverSolver(const CoverProblem& p) : problem_(p) {
    const std::size_t n = p.covers.size();
    sets_.assign(n, DynamicBitset(p.element_count));
    by_element_.assign(p.element_count, {});
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t e : p.covers[c]) {
        if (!sets_[c].test(e)) by_element_[e].push_back(c);
        sets_[c].set(e);
      }
    element_mask_.assign(p.element_count, DynamicBitset(n));
    target_ = DynamicBitset(p.element_count);
    for (std::size_t e = 0; e < p.element_count; ++e) {
      if (by_element_[e].empty()) continue;
      target_.set(e);
      for (std::size_t c : by_element_[e]) element_mask_[e].set(c);
    }
  }

  const DynamicBitset& target() const { return target_; }

  std::vector<std::size_t> greedy() const {
    DynamicBitset covered(problem_.element_count);
    std::vector<std::size_t> chosen;
    while (!covered.contains(target_)) {
      std::size_t best = 0, gain = 0;
      for (std::size_t c = 0; c < sets_.size(); ++c) {
        const std::size_t g = covered.count_new(sets_[c]);
        if (g > gain) {
          gain = g;
          best = c;
        }
      }
      chosen.push_back(best);
      covered |= sets_[best];
    }
    return improve(std::move(chosen));
  }

  // Drop redundant members, then try replacing any two members by one candidate.
  std::vector<std::size_t> improve(std::vector<std::size_t> chosen) const {
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::size_t i = chosen.size(); i-- > 0;) {
        if (covers_without(chosen, i, chosen.size())) {
          chosen.erase(chosen.begin() + static_cast<std::ptrdiff_t>(i));
          changed = true;
        }
      }
      for (std::size_t i = 0; i < chosen.size() && !changed; ++i)
        for (std::size_t j = i + 1; j < chosen.size() && !changed; ++j) {
          DynamicBitset rest(problem_.element_count);
          for (std::size_t k = 0; k < chosen.size(); ++k)
            if (k != i && k != j) rest |= sets_[chosen[k]];
          for (std::size_t c = 0; c < sets_.size(); ++c) {
            DynamicBitset trial = rest;
            trial |= sets_[c];
            if (trial.contains(target_)) {
              chosen.erase(chosen.begin() + static_cast<std::ptrdiff_t>(j));
              chosen[i] = c;
              changed = true;
              break;
            }
          }
        }
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
  }

  /// Exact minimum; returns false if the node budget ran out (best so far kept).
  bool branch_and_bound(std::vector<std::size_t>& best, std::size_t node_limit) {
    best = greedy();
    best_ = best;
    limit_ = node_limit;
    nodes_ = 0;
    aborted_ = false;
    std::vector<std::size_t> chosen;
    DynamicBitset covered(problem_.element_count);
    DynamicBitset excluded(sets_.size());
    search(chosen, covered, excluded);
    std::sort(best_.begin(), best_.end());
    best = best_;
    return !aborted_;
  }

  /// Lexicographically first cover of exactly `size` candidates, or empty if none.
  bool lexicographic_first(std::size_t size, std::vector<std::size_t>& out, std::size_t node_limit) {
    limit_ = node_limit;
    nodes_ = 0;
    aborted_ = false;
    std::vector<std::size_t> chosen;
    DynamicBitset covered(problem_.element_count);
    const bool found = lex_search(0, size, chosen, covered);
    if (found) out = chosen;
    return found && !aborted_;
  }

  std::size_t nodes() const { return nodes_; }
  bool aborted() const { return aborted_; }

 private:
  bool covers_without(const std::vector<std::size_t>& chosen, std::size_t skip, std::size_t n) const {
    DynamicBitset cov(problem_.element_count);
    for (std::size_t k = 0; k < n; ++k)
      if (k != skip) cov |= sets_[chosen[k]];
    return cov.contains(target_);
  }

  // Elements whose candidate sets are pairwise disjoint each need their own pick.
  std::size_t packing_bound(const DynamicBitset& covered, const DynamicBitset& excluded) const {
    std::vector<std::pair<std::size_t, std::size_t>> order;
    for (std::size_t e = 0; e < problem_.element_count; ++e)
      if (target_.test(e) && !covered.test(e)) {
        std::size_t avail = 0;
        for (std::size_t c : by_element_[e]) avail += excluded.test(c) ? 0 : 1;
        order.emplace_back(avail, e);
      }
    std::sort(order.begin(), order.end());
    DynamicBitset used(sets_.size());
    std::size_t bound = 0;
    for (auto [avail, e] : order) {
      (void)avail;
      if (element_mask_[e].intersects(used)) continue;
      used |= element_mask_[e];
      ++bound;
    }
    return bound;
  }

  void search(std::vector<std::size_t>& chosen, DynamicBitset& covered, DynamicBitset& excluded) {
    if (aborted_) return;
    if (++nodes_ > limit_) {
      aborted_ = true;
      return;
    }
    if (covered.contains(target_)) {
      if (chosen.size() < best_.size()) best_ = chosen;
      return;
    }
    if (chosen.size() + 1 >= best_.size()) return;
    if (chosen.size() + packing_bound(covered, excluded) >= best_.size()) return;

    // Branch on the uncovered element with the fewest remaining candidates.
    std::size_t pick = problem_.element_count;
    std::size_t fewest = std::numeric_limits<std::size_t>::max();
    for (std::size_t e = 0; e < problem_.element_count; ++e) {
      if (!target_.test(e) || covered.test(e)) continue;
      std::size_t avail = 0;
      for (std::size_t c : by_element_[e]) avail += excluded.test(c) ? 0 : 1;
      if (avail == 0) return;
      if (avail < fewest) {
        fewest = avail;
        pick = e;
      }
    }

    std::vector<std::size_t> local_excluded;
    for (std::size_t c : by_element_[pick]) {
      if (excluded.test(c)) continue;
      DynamicBitset next = covered;
      next |= sets_[c];
      chosen.push_back(c);
      search(chosen, next, excluded);
      chosen.pop_back();
      if (aborted_) break;
      // Every cover containing c has been explored below this node.
      excluded.set(c);
      local_excluded.push_back(c);
    }
    for (std::size_t c : local_excluded) excluded.reset(c);
  }

  bool lex_search(std::size_t start, std::size_t size, std::vector<std::size_t>& chosen, DynamicBitset& covered) {
    if (covered.contains(target_)) return true;
    if (chosen.size() == size || aborted_) return false;
    if (++nodes_ > limit_) {
      aborted_ = true;
      return false;
    }
    DynamicBitset excluded(sets_.size());
    for (std::size_t c = 0; c < start; ++c) excluded.set(c);
    if (chosen.size() + packing_bound(covered, excluded) > size) return false;
    for (std::size_t e = 0; e < problem_.element_count; ++e) {
      if (!target_.test(e) || covered.test(e)) continue;
      if (by_element_[e].empty() || by_element_[e].back() < start) return false;
    }
    for (std::size_t c = start; c < sets_.size(); ++c) {
      if (covered.count_new(sets_[c]) == 0) continue;
      DynamicBitset next = covered;
      next |= sets_[c];
      chosen.push_back(c);
      if (lex_search(c + 1, size, chosen, next)) {
        covered = next;
        return true;
      }
      chosen.pop_back();
      if (aborted_) return false;
    }
    return false;
  }

  const CoverProblem& problem_;
  std::vector<DynamicBitset> sets_;
  std::vector<std::vector<std::size_t>> by_element_;
  std::vector<DynamicBitset> element_mask_;
  DynamicBitset target_;
  std::vector<std::size_t> best_;
  std::size_t limit_ = 0;
  std::size_t nodes_ = 0;
  bool aborted_ = false;
};

}  // namespace detail

inline CoverResult minimum_cover(const CoverProblem& problem, CoverOptions opts = {}) {
  detail::CoverSolver solver(problem);
  CoverResult result;
  result.exact = solver.branch_and_bound(result.chosen, opts.node_limit);
  result.nodes = solver.nodes();
  if (result.exact && opts.lexicographic && !result.chosen.empty()) {
    std::vector<std::size_t> lex;
    if (solver.lexicographic_first(result.chosen.size(), lex, opts.node_limit)) result.chosen = lex;
    result.nodes += solver.nodes();
  }
  return result;
}

inline CoverResult greedy_cover(const CoverProblem& problem) {
  detail::CoverSolver solver(problem);
  return {solver.greedy(), false, 0};
}

/// True iff the chosen candidates cover every coverable element.
inline bool is_cover(const CoverProblem& problem, const std::vector<std::size_t>& chosen) {
  std::vector<bool> coverable(problem.element_count, false), covered(problem.element_count, false);
  for (const auto& set : problem.covers)
    for (std::size_t e : set) coverable[e] = true;
  for (std::size_t c : chosen)
    for (std::size_t e : problem.covers.at(c)) covered[e] = true;
  for (std::size_t e = 0; e < problem.element_count; ++e)
    if (coverable[e] && !covered[e]) return false;
  return true;
}

}  // namespace obd
