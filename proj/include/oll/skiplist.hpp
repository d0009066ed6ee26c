#pragma once

// Skip-list gradation of a key set and the interval tree it induces.
//
// Level l holds the keys X_l (every key of level >= l). The open intervals of
// R \ X_l are the level-l intervals; a level-(l+1) interval is the parent of
// the level-l intervals it contains. The root is (-inf, +inf) on the lowest
// level r with X_r empty. Every node caches its key count and its weight, the
// number of intervals in its subtree.

#include <algorithm>
#include <bit>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "oll/errors.hpp"

namespace oll {

inline constexpr int kMaxLevel = 64;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

/// Draws a level with Pr[level = i] = 2^-i, capped at kMaxLevel.
template <class Rng>
int sample_level(Rng& rng) {
  static_assert(Rng::max() == std::numeric_limits<std::uint64_t>::max() && Rng::min() == 0,
                "sample_level needs a full-width 64-bit generator");
  const std::uint64_t bits = rng();
  return std::min(kMaxLevel, 1 + std::countr_zero(bits));
}

/// A key as stored in the tree: it is the separator of exactly one interval,
/// the level-(level+1) interval that contains it.
struct KeyRecord {
  double value = 0.0;
  int level = 1;
  double position = 0.0;    // fractional allocation alpha(x)
  std::int64_t slot = 0;    // integral slot, 0 when never placed
};

template <class Payload>
struct IntervalNode {
  int level = 1;
  double lo = kNegInf;
  double hi = kPosInf;
  IntervalNode* parent = nullptr;
  std::vector<std::unique_ptr<IntervalNode>> children;
  // separators[i] lies between children[i] and children[i + 1].
  std::vector<KeyRecord> separators;
  std::int64_t keyCount = 0;
  std::int64_t weight = 1;
  Payload state{};

  bool is_leaf() const noexcept { return level == 1; }
  bool is_root() const noexcept { return parent == nullptr; }
  std::size_t fanout() const noexcept { return children.size(); }

  bool contains(double x) const noexcept { return lo < x && x < hi; }

  /// Index of the child containing x, or the separator index if x is a separator
  /// (reported through `isSeparator`).
  std::size_t locate(double x, bool& isSeparator) const noexcept {
    auto it = std::lower_bound(separators.begin(), separators.end(), x,
                               [](const KeyRecord& k, double v) { return k.value < v; });
    isSeparator = it != separators.end() && it->value == x;
    return static_cast<std::size_t>(it - separators.begin());
  }

  void recompute_counts() noexcept {
    if (level == 1) {
      weight = 1;
      keyCount = 0;
      return;
    }
    std::int64_t w = 1;
    std::int64_t n = static_cast<std::int64_t>(separators.size());
    for (const auto& c : children) {
      w += c->weight;
      n += c->keyCount;
    }
    weight = w;
    keyCount = n;
  }
};

enum class ChangeKind { insert, erase };

struct TouchedInterval {
  int level;
  double lo;
  double hi;
};

template <class Payload>
struct StructuralChange {
  double key = 0.0;
  int keyLevel = 1;
  ChangeKind kind = ChangeKind::insert;
  // The intervals split (insert) or produced by merging (erase), one per level 1..keyLevel.
  std::vector<TouchedInterval> touched;
  // Deepest unchanged interval containing the key: level keyLevel + 1 or the root.
  IntervalNode<Payload>* anchor = nullptr;
  int rootLevelBefore = 1;
  int rootLevelAfter = 1;
};

struct TreeAudit {
  bool ok = true;
  std::string firstViolation;

  void fail(std::string what) {
    if (ok) {
      ok = false;
      firstViolation = std::move(what);
    }
  }
};

inline std::string format_bound(double v) {
  if (v == kNegInf) return "-inf";
  if (v == kPosInf) return "+inf";
  std::string s = std::to_string(v);
  // trim trailing zeros of the fixed representation
  if (s.find('.') != std::string::npos) {
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
  }
  return s;
}

template <class Payload>
class SkipTree {
 public:
  using Node = IntervalNode<Payload>;

  SkipTree() : root_(std::make_unique<Node>()) {}

  SkipTree(const SkipTree&) = delete;
  SkipTree& operator=(const SkipTree&) = delete;
  SkipTree(SkipTree&&) noexcept = default;
  SkipTree& operator=(SkipTree&&) noexcept = default;

  Node& root() noexcept { return *root_; }
  const Node& root() const noexcept { return *root_; }

  std::size_t size() const noexcept { return static_cast<std::size_t>(root_->keyCount); }
  bool empty() const noexcept { return root_->keyCount == 0; }
  int levels() const noexcept { return root_->level; }

  /// Total number of open intervals, (2r + 2 * sum of levels) / 2.
  std::int64_t interval_count() const noexcept { return root_->weight; }

  /// Node whose separator list holds `value`, or nullptr.
  const Node* owner_of(double value, std::size_t* index = nullptr) const noexcept {
    const Node* cur = root_.get();
    while (!cur->is_leaf()) {
      bool sep = false;
      std::size_t i = cur->locate(value, sep);
      if (sep) {
        if (index) *index = i;
        return cur;
      }
      cur = cur->children[i].get();
    }
    return nullptr;
  }

  bool contains(double value) const noexcept { return owner_of(value) != nullptr; }

  int level_of(double value) const {
    std::size_t i = 0;
    const Node* n = owner_of(value, &i);
    if (!n) throw MissingKey(value);
    return n->separators[i].level;
  }

  /// Intervals containing `value` from the root down. Stops at level 1 or at the
  /// interval in which `value` is a separator.
  std::vector<Node*> path_to(double value) {
    std::vector<Node*> path;
    Node* cur = root_.get();
    for (;;) {
      path.push_back(cur);
      if (cur->is_leaf()) break;
      bool sep = false;
      std::size_t i = cur->locate(value, sep);
      if (sep) break;
      cur = cur->children[i].get();
    }
    return path;
  }

  /// Deepest interval containing `value` for which every interval on the way
  /// down satisfies `pred`. Returns nullptr when the root fails `pred`.
  template <class Pred>
  Node* lowest_containing(double value, Pred&& pred) {
    Node* best = nullptr;
    Node* cur = root_.get();
    while (cur && pred(*cur)) {
      best = cur;
      if (cur->is_leaf()) break;
      bool sep = false;
      std::size_t i = cur->locate(value, sep);
      if (sep) break;
      cur = cur->children[i].get();
    }
    return best;
  }

  StructuralChange<Payload> insert(double value, int level) {
    if (!std::isfinite(value)) throw ConfigError("keys must be finite");
    if (level < 1 || level > kMaxLevel) throw ConfigError("key level out of range");

    // Descend first so a duplicate leaves the tree untouched.
    std::vector<Node*> path;
    std::vector<std::size_t> index;
    Node* cur = root_.get();
    for (;;) {
      path.push_back(cur);
      if (cur->is_leaf()) break;
      bool sep = false;
      std::size_t i = cur->locate(value, sep);
      if (sep) throw DuplicateKey(value);
      index.push_back(i);
      cur = cur->children[i].get();
    }

    StructuralChange<Payload> change;
    change.key = value;
    change.keyLevel = level;
    change.kind = ChangeKind::insert;
    change.rootLevelBefore = root_->level;

    while (root_->level <= level) grow_root(path, index);
    change.rootLevelAfter = root_->level;

    // path[k] has level r - k; translate to per-level access.
    const int r = root_->level;
    auto at = [&](int lvl) -> Node* { return path[static_cast<std::size_t>(r - lvl)]; };
    auto idx = [&](int lvl) -> std::size_t { return index[static_cast<std::size_t>(r - lvl)]; };

    // Split bottom-up. The existing node keeps the left half.
    std::unique_ptr<Node> rightHalf;
    for (int lvl = 1; lvl <= level; ++lvl) {
      Node* p = at(lvl);
      change.touched.push_back({lvl, p->lo, p->hi});
      auto right = std::make_unique<Node>();
      right->level = lvl;
      right->lo = value;
      right->hi = p->hi;
      p->hi = value;
      if (lvl > 1) {
        const std::size_t i = idx(lvl);
        right->children.reserve(p->children.size() - i);
        right->children.push_back(std::move(rightHalf));
        for (std::size_t c = i + 1; c < p->children.size(); ++c)
          right->children.push_back(std::move(p->children[c]));
        p->children.resize(i + 1);
        right->separators.assign(p->separators.begin() + static_cast<std::ptrdiff_t>(i),
                                 p->separators.end());
        p->separators.resize(i);
        for (auto& c : right->children) c->parent = right.get();
      }
      p->recompute_counts();
      right->recompute_counts();
      rightHalf = std::move(right);
    }

    Node* q = at(level + 1);
    const std::size_t qi = idx(level + 1);
    rightHalf->parent = q;
    q->children.insert(q->children.begin() + static_cast<std::ptrdiff_t>(qi + 1),
                       std::move(rightHalf));
    q->separators.insert(q->separators.begin() + static_cast<std::ptrdiff_t>(qi),
                         KeyRecord{value, level, 0.0, 0});
    for (Node* a = q; a; a = a->parent) {
      a->weight += level;
      a->keyCount += 1;
    }
    change.anchor = q;
    return change;
  }

  StructuralChange<Payload> erase(double value) {
    Node* q = root_.get();
    std::size_t j = 0;
    for (;;) {
      if (q->is_leaf()) throw MissingKey(value);
      bool sep = false;
      std::size_t i = q->locate(value, sep);
      if (sep) {
        j = i;
        break;
      }
      q = q->children[i].get();
    }

    StructuralChange<Payload> change;
    change.key = value;
    change.kind = ChangeKind::erase;
    change.keyLevel = q->separators[j].level;
    change.rootLevelBefore = root_->level;
    const int level = change.keyLevel;

    auto merged = merge(std::move(q->children[j]), std::move(q->children[j + 1]), change.touched);
    merged->parent = q;
    q->children[j] = std::move(merged);
    q->children.erase(q->children.begin() + static_cast<std::ptrdiff_t>(j + 1));
    q->separators.erase(q->separators.begin() + static_cast<std::ptrdiff_t>(j));
    for (Node* a = q; a; a = a->parent) {
      a->weight -= level;
      a->keyCount -= 1;
    }

    change.anchor = q;
    while (root_->level > 1 && root_->separators.empty()) {
      if (root_.get() == change.anchor) change.anchor = nullptr;
      std::unique_ptr<Node> child = std::move(root_->children.front());
      child->parent = nullptr;
      root_ = std::move(child);
    }
    if (!change.anchor) change.anchor = root_.get();
    change.rootLevelAfter = root_->level;
    return change;
  }

  template <class F>
  void for_each_node(F&& f) const {
    visit(*root_, 0, f);
  }

  template <class F>
  void for_each_node(F&& f) {
    visit_mut(*root_, 0, f);
  }

  /// Keys in increasing order.
  template <class F>
  void for_each_key(F&& f) const {
    keys_in_order(*root_, f);
  }

  template <class F>
  void for_each_key(F&& f) {
    keys_in_order_mut(*root_, f);
  }

  /// Keys of the subtree rooted at `n`, in increasing order.
  template <class F>
  static void for_each_key_below(Node& n, F&& f) {
    keys_in_order_mut(n, f);
  }

  template <class F>
  static void for_each_key_below(const Node& n, F&& f) {
    keys_in_order(n, f);
  }

  /// Full structural audit: weights, counts, bounds, separator levels, parent links,
  /// and the single empty top level.
  TreeAudit audit() const {
    TreeAudit report;
    if (root_->parent) report.fail("root has a parent");
    if (root_->lo != kNegInf || root_->hi != kPosInf) report.fail("root bounds are not (-inf,+inf)");
    if (root_->level > 1 && root_->separators.empty())
      report.fail("more than one empty top level");
    audit_node(*root_, report);
    return report;
  }

  /// Indented text dump: `level (lo,hi) keyCount weight[ suffix]`.
  void dump(std::ostream& os,
            const std::function<std::string(const Node&)>& suffix = nullptr) const {
    dump_node(os, *root_, 0, suffix);
  }

 private:
  void grow_root(std::vector<Node*>& path, std::vector<std::size_t>& index) {
    auto top = std::make_unique<Node>();
    top->level = root_->level + 1;
    top->lo = kNegInf;
    top->hi = kPosInf;
    root_->parent = top.get();
    top->children.push_back(std::move(root_));
    top->recompute_counts();
    root_ = std::move(top);
    path.insert(path.begin(), root_.get());
    index.insert(index.begin(), 0);
  }

  // Merge two adjacent same-level intervals whose common boundary key is removed.
  static std::unique_ptr<Node> merge(std::unique_ptr<Node> left, std::unique_ptr<Node> right,
                                     std::vector<TouchedInterval>& touched) {
    left->hi = right->hi;
    if (left->level > 1) {
      std::unique_ptr<Node> lastLeft = std::move(left->children.back());
      left->children.pop_back();
      std::unique_ptr<Node> mid =
          merge(std::move(lastLeft), std::move(right->children.front()), touched);
      mid->parent = left.get();
      left->children.push_back(std::move(mid));
      for (std::size_t c = 1; c < right->children.size(); ++c) {
        right->children[c]->parent = left.get();
        left->children.push_back(std::move(right->children[c]));
      }
      left->separators.insert(left->separators.end(), right->separators.begin(),
                              right->separators.end());
    }
    left->recompute_counts();
    touched.push_back({left->level, left->lo, left->hi});
    return left;
  }

  template <class F>
  static void visit(const Node& n, int depth, F& f) {
    f(n, depth);
    for (const auto& c : n.children) visit(*c, depth + 1, f);
  }

  template <class F>
  static void visit_mut(Node& n, int depth, F& f) {
    f(n, depth);
    for (auto& c : n.children) visit_mut(*c, depth + 1, f);
  }

  template <class F>
  static void keys_in_order(const Node& n, F& f) {
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      keys_in_order(*n.children[i], f);
      if (i < n.separators.size()) f(n.separators[i]);
    }
  }

  template <class F>
  static void keys_in_order_mut(Node& n, F& f) {
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      keys_in_order_mut(*n.children[i], f);
      if (i < n.separators.size()) f(n.separators[i]);
    }
  }

  static void audit_node(const Node& n, TreeAudit& report) {
    if (!report.ok) return;
    auto where = [&] {
      return "interval level " + std::to_string(n.level) + " (" + format_bound(n.lo) + "," +
             format_bound(n.hi) + ")";
    };
    if (!(n.lo < n.hi)) report.fail(where() + ": empty bounds");
    if (n.level == 1) {
      if (!n.children.empty() || !n.separators.empty())
        report.fail(where() + ": leaf with children");
      if (n.weight != 1 || n.keyCount != 0) report.fail(where() + ": leaf weight/count");
      return;
    }
    if (n.children.empty()) {
      report.fail(where() + ": inner interval without children");
      return;
    }
    if (n.separators.size() + 1 != n.children.size())
      report.fail(where() + ": separator count != children - 1");
    std::int64_t w = 1;
    std::int64_t cnt = static_cast<std::int64_t>(n.separators.size());
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      const Node& c = *n.children[i];
      if (c.parent != &n) report.fail(where() + ": broken parent link");
      if (c.level + 1 != n.level) report.fail(where() + ": child level mismatch");
      const double expectLo = i == 0 ? n.lo : n.separators[i - 1].value;
      const double expectHi = i + 1 == n.children.size() ? n.hi : n.separators[i].value;
      if (c.lo != expectLo || c.hi != expectHi) report.fail(where() + ": child bounds mismatch");
      w += c.weight;
      cnt += c.keyCount;
      if (i < n.separators.size()) {
        if (n.separators[i].level != n.level - 1)
          report.fail(where() + ": separator level is not one below the interval");
        if (i > 0 && !(n.separators[i - 1].value < n.separators[i].value))
          report.fail(where() + ": separators out of order");
      }
      audit_node(c, report);
    }
    if (w != n.weight) report.fail(where() + ": weight recurrence violated");
    if (cnt != n.keyCount) report.fail(where() + ": key count mismatch");
    if (n.weight <= n.keyCount) report.fail(where() + ": weight not above key count");
  }

  static void dump_node(std::ostream& os, const Node& n, int depth,
                        const std::function<std::string(const Node&)>& suffix) {
    os << std::string(static_cast<std::size_t>(depth) * 2, ' ') << n.level << " ("
       << format_bound(n.lo) << "," << format_bound(n.hi) << ") " << n.keyCount << " "
       << n.weight;
    if (suffix) {
      std::string s = suffix(n);
      if (!s.empty()) os << " " << s;
    }
    os << "\n";
    for (const auto& c : n.children) dump_node(os, *c, depth + 1, suffix);
  }

  std::unique_ptr<Node> root_;
};

}  // namespace oll
