#pragma once

// Top-down smooth allocation of array budgets over the interval tree.
//
// An allocated interval U with budget (a, b] and slack D = b - a - |X(U)| hands
// each child I the budget |X(I)| + c * w(I) with c = (D - 1) / (w(U) - 1),
// places its separators between consecutive child budgets, and keeps the last
// slot of (a, b] unused. If some child would get less than one slot of slack,
// U instead stores all of X(U) as one run at the left end of its budget and
// everything below U becomes non-allocated.

#include <concepts>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "oll/errors.hpp"
#include "oll/label_array.hpp"
#include "oll/skiplist.hpp"

namespace oll {

inline constexpr double kSlackTolerance = 1e-9;

/// Half-open fractional index range (lo, hi].
struct Budget {
  double lo = 0.0;
  double hi = 0.0;

  double size() const noexcept { return hi - lo; }
  bool operator==(const Budget&) const = default;
};

/// Bookkeeping recorded when an interval receives its budget.
struct AllocSnapshot {
  double nBar = 0.0;          // key count at allocation
  double wBar = 0.0;          // weight at allocation
  double deltaBar = 0.0;      // slack at allocation, |budget| - nBar
  double updateWeight = 0.0;  // sum of levels of updates inside since allocation

  double relative_slack() const noexcept { return wBar > 0 ? deltaBar / wBar : 0.0; }
};

/// Per-interval allocation state. Engine payloads derive from this.
struct AllocState {
  bool allocated = false;
  bool runOwner = false;
  Budget budget{};
  AllocSnapshot snapshot{};
  // Coefficient of the middle term of the split that produced `budget`.
  double splitCoefficient = 0.0;
};

template <class Payload>
concept AllocPayload = std::derived_from<Payload, AllocState>;

template <class Payload>
double slack_of(const IntervalNode<Payload>& u) {
  return u.state.budget.size() - static_cast<double>(u.keyCount);
}

template <class Payload>
double relative_slack_of(const IntervalNode<Payload>& u) {
  return slack_of(u) / static_cast<double>(u.weight);
}

struct ChildShape {
  std::int64_t keys = 0;
  std::int64_t weight = 1;
};

struct SplitPlan {
  double coefficient = 0.0;
  double bonusPerChild = 0.0;
  bool terminates = false;  // some child would get less than one slot of slack
  std::vector<double> separators;
  std::vector<Budget> children;
  std::vector<double> childSlack;
};

/// Lays out child budgets left to right inside `budget`: child i receives
/// keys_i + coefficient * weight_i + bonusPerChild slots, followed by one
/// separator slot; the last child ends one slot before the budget's end.
inline SplitPlan layout_children(Budget budget, std::span<const ChildShape> children,
                                 double coefficient, double bonusPerChild) {
  SplitPlan plan;
  plan.coefficient = coefficient;
  plan.bonusPerChild = bonusPerChild;
  double cur = budget.lo;
  for (std::size_t i = 0; i < children.size(); ++i) {
    const double slack = coefficient * static_cast<double>(children[i].weight) + bonusPerChild;
    plan.childSlack.push_back(slack);
    if (slack < 1.0) plan.terminates = true;
    if (i + 1 == children.size()) {
      plan.children.push_back({cur, budget.hi - 1.0});
    } else {
      const double size = static_cast<double>(children[i].keys) + slack;
      plan.children.push_back({cur, cur + size});
      cur = cur + size + 1.0;
      plan.separators.push_back(cur);
    }
  }
  return plan;
}

/// Smooth split of an interval's budget among its children, proportional to weight.
inline SplitPlan smooth_split(Budget budget, std::int64_t keyCount, std::int64_t weight,
                              std::span<const ChildShape> children) {
  const double slack = budget.size() - static_cast<double>(keyCount);
  if (slack < 1.0 - kSlackTolerance)
    throw AllocationOverflow("smooth split needs slack >= 1, got " + std::to_string(slack));
  if (children.empty() || weight < 2)
    throw InvariantViolation("smooth split of an interval without children");
  const double coefficient = (slack - 1.0) / static_cast<double>(weight - 1);
  return layout_children(budget, children, coefficient, 0.0);
}

struct AllocationResult {
  std::int64_t keysWritten = 0;
  std::int64_t keysMoved = 0;
  std::int64_t allocatedIntervals = 0;
  std::int64_t runs = 0;
  std::int64_t runKeys = 0;
  std::int64_t splits = 0;  // intervals whose children received budgets
  std::int64_t audits = 0;  // Allocation-Invariant checks performed

  AllocationResult& operator+=(const AllocationResult& o) {
    keysWritten += o.keysWritten;
    keysMoved += o.keysMoved;
    allocatedIntervals += o.allocatedIntervals;
    runs += o.runs;
    runKeys += o.runKeys;
    splits += o.splits;
    audits += o.audits;
    return *this;
  }
};

/// Writes subtree allocations into a LabelArray.
template <AllocPayload Payload>
class TopDownAllocator {
 public:
  using Node = IntervalNode<Payload>;
  using Hook = std::function<void(Node&)>;

  explicit TopDownAllocator(LabelArray& array) : array_(&array) {}

  /// Called for every interval that (re)receives a budget, after its split/run
  /// decision is made.
  void on_allocated(Hook h) { onAllocated_ = std::move(h); }
  /// Called for every interval that loses its budget because an ancestor became a run.
  void on_released(Hook h) { onReleased_ = std::move(h); }

  /// Test hook: shifts every separator slot by `bias` (fault injection).
  void set_rounding_bias_for_testing(std::int64_t bias) { roundingBias_ = bias; }

  /// Re-lays out the whole subtree of `u` inside `budget`, snapshotting every
  /// allocated interval afresh.
  AllocationResult allocate_td(Node& u, Budget budget) {
    AllocationResult res;
    allocate(u, budget, res);
    flush(res);
    return res;
  }

  /// Re-lays out the children of an allocated `u` with the given middle-term
  /// coefficient and per-child bonus, keeping u's own budget and snapshot.
  AllocationResult resplit(Node& u, double coefficient, double bonusPerChild) {
    if (!u.state.allocated) throw InvariantViolation("resplit of a non-allocated interval");
    AllocationResult res;
    if (!u.is_leaf()) place_children(u, coefficient, bonusPerChild, res);
    flush(res);
    return res;
  }

 private:
  void allocate(Node& u, Budget budget, AllocationResult& res) {
    const double slack = budget.size() - static_cast<double>(u.keyCount);
    ++res.audits;
    if (slack < 1.0 - kSlackTolerance)
      throw AllocationOverflow("allocation of level-" + std::to_string(u.level) + " interval (" +
                               format_bound(u.lo) + "," + format_bound(u.hi) +
                               ") with slack " + std::to_string(slack));
    auto& st = u.state;
    st.allocated = true;
    st.runOwner = false;
    st.budget = budget;
    st.snapshot = AllocSnapshot{static_cast<double>(u.keyCount), static_cast<double>(u.weight),
                                slack, 0.0};
    ++res.allocatedIntervals;
    if (!u.is_leaf()) {
      const double coefficient = (slack - 1.0) / static_cast<double>(u.weight - 1);
      place_children(u, coefficient, 0.0, res);
    }
    if (onAllocated_) onAllocated_(u);
  }

  void place_children(Node& u, double coefficient, double bonus, AllocationResult& res) {
    bool terminate = false;
    for (const auto& c : u.children)
      if (coefficient * static_cast<double>(c->weight) + bonus < 1.0) {
        terminate = true;
        break;
      }
    if (terminate) {
      write_run(u, res);
      return;
    }
    u.state.runOwner = false;
    ++res.splits;
    const Budget b = u.state.budget;
    double cur = b.lo;
    const std::size_t d = u.children.size();
    for (std::size_t i = 0; i < d; ++i) {
      Node& child = *u.children[i];
      child.state.splitCoefficient = coefficient;
      if (i + 1 == d) {
        allocate(child, Budget{cur, b.hi - 1.0}, res);
      } else {
        const double size = static_cast<double>(child.keyCount) +
                            coefficient * static_cast<double>(child.weight) + bonus;
        allocate(child, Budget{cur, cur + size}, res);
        cur = cur + size + 1.0;
        place_key(u.separators[i], cur, round_to_slot(cur) + roundingBias_);
      }
    }
  }

  void write_run(Node& u, AllocationResult& res) {
    u.state.runOwner = true;
    ++res.runs;
    const double a = u.state.budget.lo;
    const std::int64_t base = round_to_slot(a);
    std::int64_t i = 0;
    for (auto& c : u.children) release(*c);
    auto emit = [&](KeyRecord& k) {
      ++i;
      place_key(k, a + static_cast<double>(i), base + i);
    };
    SkipTree<Payload>::template for_each_key_below(u, emit);
    res.runKeys += i;
  }

  void release(Node& n) {
    // no early exit: a grown tree can leave allocated intervals below a non-allocated one
    const bool held = n.state.allocated || n.state.runOwner;
    n.state.allocated = false;
    n.state.runOwner = false;
    if (held && onReleased_) onReleased_(n);
    for (auto& c : n.children) release(*c);
  }

  void place_key(KeyRecord& k, double position, std::int64_t slot) {
    pending_.push_back(WriteTarget{k.value, slot, k.slot});
    k.position = position;
    k.slot = slot;
  }

  void flush(AllocationResult& res) {
    WriteStats ws = array_->write_keys(pending_);
    res.keysWritten += ws.written;
    res.keysMoved += ws.moved;
    pending_.clear();
  }

  LabelArray* array_;
  Hook onAllocated_;
  Hook onReleased_;
  std::int64_t roundingBias_ = 0;
  std::vector<WriteTarget> pending_;
};

}  // namespace oll
