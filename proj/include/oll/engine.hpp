#pragma once

// Online list labeling engine: keeps the keys of a dynamic set in sorted order
// inside an array of m = N + ceil(eps * N) slots.
//
// Each update runs, in order:
//   1. a periodic rebuild if floor(eps * nBar / 4) updates happened since the last one,
//   2. the skip-list change,
//   3. update-weight increments on the allocated intervals containing the key,
//   4. the parent reallocation,
//   5. proactive triggers and adaptive round splits, deepest interval first.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "oll/allocator.hpp"
#include "oll/errors.hpp"
#include "oll/label_array.hpp"
#include "oll/op.hpp"
#include "oll/proactive.hpp"
#include "oll/skiplist.hpp"

namespace oll {

struct NodeState : AllocState {
  // Adaptive mode only: rounds of the current budget phase, built on first use.
  bool scheduled = false;
  std::optional<RoundSchedule> schedule;
};

struct EngineConfig {
  std::int64_t capacity = 1024;  // N
  double epsilon = 1.0;
  ProactiveConfig proactive{};
  std::uint64_t seed = 1;
  std::int64_t metricsEvery = 64;  // eta sampling stride, 0 disables sampling
  bool auditEveryStep = false;

  void validate() const {
    if (!(epsilon > 0.0 && epsilon <= 1.0))
      throw ConfigError("epsilon must lie in (0, 1], got " + std::to_string(epsilon));
    if (capacity < 1) throw ConfigError("capacity must be positive");
    if (metricsEvery < 0) throw ConfigError("metricsEvery must be non-negative");
    proactive.validate();
  }

  /// m = N + ceil(eps * N).
  std::int64_t array_size() const {
    return capacity +
           static_cast<std::int64_t>(std::ceil(epsilon * static_cast<double>(capacity) - 1e-9));
  }
};

struct PhaseState {
  std::int64_t nBar = 0;
  std::int64_t updatesSinceRebuild = 0;
  std::int64_t mPrime = 0;
  double gamma = 0.5;
  double epsilon = 1.0;

  /// floor(eps * nBar / 4).
  std::int64_t rebuild_threshold() const {
    return static_cast<std::int64_t>(std::floor(epsilon * static_cast<double>(nBar) / 4.0 + 1e-9));
  }
};

/// m' = min{m, ceil((1 + eps)(1 + eps/4) nBar)}, raised to nBar + 2 for tiny
/// phases so the next insert still leaves one slot of root slack.
inline std::int64_t phase_array_size(std::int64_t m, double epsilon, std::int64_t nBar) {
  const double want = (1.0 + epsilon) * (1.0 + epsilon / 4.0) *
                      static_cast<double>(std::max<std::int64_t>(nBar, 1));
  const auto size = std::max(static_cast<std::int64_t>(std::ceil(want - 1e-9)), nBar + 2);
  return std::min(m, size);
}

enum class EventKind { parent, trigger, resplit, round, rebuild };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::parent: return "parent";
    case EventKind::trigger: return "trigger";
    case EventKind::resplit: return "resplit";
    case EventKind::round: return "round";
    case EventKind::rebuild: return "rebuild";
  }
  return "?";
}

/// One reallocation. `delta`/`deltaBar` belong to the interval whose counter
/// caused it (the triggering child for triggers, otherwise the reallocated one);
/// eps values are the minimum relative slack over allocated intervals of the
/// reallocated subtree before and after.
struct ReallocEvent {
  std::int64_t step = 0;
  EventKind kind = EventKind::parent;
  int level = 0;
  std::int64_t subtreeKeys = 0;
  double delta = 0.0;
  double deltaBar = 0.0;
  double epsBefore = 0.0;
  double epsAfter = 0.0;
};

struct Metrics {
  std::int64_t updates = 0;
  std::int64_t writesTotal = 0;
  std::int64_t writesMoved = 0;
  std::int64_t parentReallocCount = 0;
  std::int64_t triggerReallocCount = 0;
  std::int64_t resplitCount = 0;
  std::int64_t roundSplitCount = 0;
  std::int64_t rebuildCount = 0;
  std::int64_t fallbackSplits = 0;
  std::int64_t allocationAudits = 0;
  std::int64_t runsWritten = 0;
  std::int64_t runKeysWritten = 0;
  std::int64_t splits = 0;
  std::int64_t parentWrites = 0;
  std::int64_t triggerWrites = 0;
  std::int64_t splitWrites = 0;
  std::int64_t rebuildWrites = 0;
  double etaMin = std::numeric_limits<double>::infinity();
};

struct AuditReport {
  bool ok = true;
  std::string firstViolation;

  void fail(std::string what) {
    if (ok) {
      ok = false;
      firstViolation = std::move(what);
    }
  }
  explicit operator bool() const noexcept { return ok; }
};

/// Key with its fractional position and slot.
struct Placement {
  double key = 0.0;
  double position = 0.0;
  std::int64_t slot = 0;
};

class Engine {
 public:
  using Tree = SkipTree<NodeState>;
  using Node = Tree::Node;
  using EventSink = std::function<void(const ReallocEvent&)>;

  explicit Engine(EngineConfig config)
      : config_(std::move(config)), rng_(config_.seed), allocator_(array_) {
    config_.validate();
    m_ = config_.array_size();
    phase_.epsilon = config_.epsilon;
    phase_.gamma = config_.proactive.effective_gamma(0);
    allocator_.on_allocated([this](Node& n) { on_allocated(n); });
    allocator_.on_released([](Node& n) {
      n.state.scheduled = false;
      n.state.schedule.reset();
    });
  }

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const EngineConfig& config() const noexcept { return config_; }
  const PhaseState& phase() const noexcept { return phase_; }
  const Metrics& metrics() const noexcept { return metrics_; }
  const Tree& tree() const noexcept { return tree_; }
  const LabelArray& array() const noexcept { return array_; }
  std::size_t size() const noexcept { return tree_.size(); }
  std::int64_t array_size() const noexcept { return m_; }
  double gamma() const noexcept { return phase_.gamma; }
  std::int64_t step() const noexcept { return step_; }

  void set_event_sink(EventSink sink) { events_ = std::move(sink); }

  WriteStats apply(const WorkloadOp& op) {
    return op.kind == OpKind::insert ? insert(op.key) : erase(op.key);
  }

  WriteStats insert(double key) {
    if (tree_.contains(key)) throw DuplicateKey(key);
    if (static_cast<std::int64_t>(size()) >= config_.capacity)
      throw CapacityError("insert beyond capacity N = " + std::to_string(config_.capacity));
    const Counters before = counters();
    array_.clear_journal();
    ++step_;
    const double n = static_cast<double>(size());
    if (!rebuilt_ || phase_.updatesSinceRebuild >= phase_.rebuild_threshold() ||
        n >= (1.0 + config_.epsilon / 4.0) * static_cast<double>(phase_.nBar))
      rebuild_all();

    const int level = sample_level(rng_);
    Node* lowest = lowest_allocated(key);
    const int lowestLevel = lowest->level;
    auto change = tree_.insert(key, level);
    finish_update(change, lowest, lowestLevel);
    return since(before);
  }

  WriteStats erase(double key) {
    if (!tree_.contains(key)) throw MissingKey(key);
    const Counters before = counters();
    array_.clear_journal();
    ++step_;
    const double n = static_cast<double>(size());
    if (!rebuilt_ || phase_.updatesSinceRebuild >= phase_.rebuild_threshold() ||
        n <= (1.0 - config_.epsilon / 4.0) * static_cast<double>(phase_.nBar))
      rebuild_all();

    const int level = tree_.level_of(key);
    Node* lowest = lowest_allocated(key);
    int lowestLevel = lowest->level;
    // The key separates two children of `lowest`; if those are allocated the
    // merge happens inside allocated territory.
    if (lowestLevel == level + 1 && !lowest->state.runOwner) lowestLevel = level;

    std::size_t idx = 0;
    const Node* owner = tree_.owner_of(key, &idx);
    array_.vacate(owner->separators[idx].slot, key);
    auto change = tree_.erase(key);
    finish_update(change, lowest, lowestLevel);
    return since(before);
  }

  /// Rewrites every key into a fresh allocation of (0, m'] and starts a new phase.
  WriteStats rebuild_all() {
    const Counters before = counters();
    const double epsBefore = events_ ? subtree_eta(tree_.root()) : 0.0;
    phase_.nBar = static_cast<std::int64_t>(size());
    phase_.updatesSinceRebuild = 0;
    phase_.mPrime = phase_array_size(m_, config_.epsilon, phase_.nBar);
    phase_.gamma = config_.proactive.effective_gamma(phase_.nBar);
    rebuilt_ = true;
    array_.reset(phase_.mPrime);
    auto res = allocator_.allocate_td(tree_.root(), Budget{0.0, static_cast<double>(phase_.mPrime)});
    account(res);
    metrics_.rebuildWrites += res.keysWritten;
    ++metrics_.rebuildCount;
    if (events_)
      events_(ReallocEvent{step_, EventKind::rebuild, tree_.root().level, tree_.root().keyCount,
                           0.0, tree_.root().state.snapshot.deltaBar, epsBefore,
                           subtree_eta(tree_.root())});
    return since(before);
  }

  /// Smallest relative slack over allocated intervals; also folds it into etaMin.
  double compute_eta() {
    const double eta = subtree_eta(tree_.root());
    metrics_.etaMin = std::min(metrics_.etaMin, eta);
    return eta;
  }

  /// Minimum relative slack of allocated intervals by depth below the root.
  std::vector<double> relative_slack_by_depth() const {
    std::vector<double> out;
    collect_depth(tree_.root(), 0, out);
    return out;
  }

  const Node* lowest_allocated_containing(double key) const {
    return const_cast<Engine*>(this)->lowest_allocated(key);
  }

  /// Keys in order with their fractional positions and slots.
  std::vector<Placement> placements() const {
    std::vector<Placement> out;
    out.reserve(size());
    tree_.for_each_key([&](const KeyRecord& k) { out.push_back({k.value, k.position, k.slot}); });
    return out;
  }

  /// Current consecutive runs: (number of run-owning intervals, keys stored in runs).
  std::pair<std::int64_t, std::int64_t> run_stats() const {
    std::int64_t runs = 0, keys = 0;
    tree_.for_each_node([&](const Node& n, int) {
      if (n.state.allocated && n.state.runOwner) {
        ++runs;
        keys += n.keyCount;
      }
    });
    return {runs, keys};
  }

  /// Every audit: tree structure, array order and contents, budget nesting,
  /// snapshots, slack of allocated intervals, trigger quiescence.
  AuditReport verify() const {
    AuditReport report;
    TreeAudit ta = tree_.audit();
    if (!ta.ok) report.fail("tree: " + ta.firstViolation);
    if (!rebuilt_) {
      if (size() != 0) report.fail("keys present before the first allocation");
      return report;
    }
    verify_array(report);
    const Node& root = tree_.root();
    if (!root.state.allocated) report.fail("root is not allocated");
    if (!(root.state.budget == Budget{0.0, static_cast<double>(phase_.mPrime)}))
      report.fail("root budget differs from (0, m']");
    verify_node(root, report);
    return report;
  }

  /// Cheap audit of the last update: key count, slot range and order around
  /// every slot written during it. Sufficient when the array was sorted before.
  AuditReport verify_step() const {
    AuditReport report;
    if (!rebuilt_) return report;
    if (array_.capacity() != phase_.mPrime) report.fail("array size differs from m'");
    if (array_.occupied() != static_cast<std::int64_t>(size()))
      report.fail("array holds " + std::to_string(array_.occupied()) + " keys, set has " +
                  std::to_string(size()));
    if (const std::int64_t bad = array_.first_local_inversion())
      report.fail("order: slot " + std::to_string(bad) + " is out of order or out of range");
    return report;
  }

  LabelArray& array_for_testing() { return array_; }
  void set_rounding_bias_for_testing(std::int64_t bias) {
    allocator_.set_rounding_bias_for_testing(bias);
  }

 private:
  struct Counters {
    std::int64_t total;
    std::int64_t moved;
  };

  Counters counters() const { return {array_.writes_total(), array_.writes_moved()}; }
  WriteStats since(Counters c) const {
    return {array_.writes_total() - c.total, array_.writes_moved() - c.moved};
  }

  Node* lowest_allocated(double key) {
    Node* n = tree_.lowest_containing(key, [](const Node& u) { return u.state.allocated; });
    if (!n) throw InvariantViolation("root is not allocated");
    return n;
  }

  void finish_update(const StructuralChange<NodeState>& change, Node* lowest, int lowestLevel) {
    const int level = change.keyLevel;
    for (Node* a = change.anchor; a; a = a->parent)
      if (a->state.allocated) a->state.snapshot.updateWeight += level;

    Node* target;
    if (change.rootLevelAfter != change.rootLevelBefore) {
      target = &tree_.root();
    } else if (lowestLevel <= level) {
      target = change.anchor;
    } else {
      target = lowest->is_root() ? lowest : lowest->parent;
    }
    ++metrics_.parentReallocCount;
    metrics_.parentWrites += reallocate(*target, EventKind::parent, target->state.snapshot);
    process_proactive(target->parent);

    ++phase_.updatesSinceRebuild;
    ++metrics_.updates;
    metrics_.writesTotal = array_.writes_total();
    metrics_.writesMoved = array_.writes_moved();
    if (config_.metricsEvery > 0 && metrics_.updates % config_.metricsEvery == 0) compute_eta();
    if (config_.auditEveryStep) {
      AuditReport r = verify();
      if (!r.ok) throw InvariantViolation("audit failed after step " + std::to_string(step_) +
                                          ": " + r.firstViolation);
    }
  }

  std::int64_t reallocate(Node& u, EventKind kind, AllocSnapshot cause) {
    const double epsBefore = events_ ? subtree_eta(u) : 0.0;
    const Budget budget =
        u.is_root() ? Budget{0.0, static_cast<double>(phase_.mPrime)} : u.state.budget;
    if (!u.is_root() && !u.state.allocated)
      throw InvariantViolation("reallocation of a non-allocated interval");
    auto res = allocator_.allocate_td(u, budget);
    account(res);
    if (events_)
      events_(ReallocEvent{step_, kind, u.level, u.keyCount, cause.updateWeight, cause.deltaBar,
                           epsBefore, subtree_eta(u)});
    return res.keysWritten;
  }

  void process_proactive(Node* start) {
    const bool adaptive = config_.proactive.split == SplitMode::adaptive;
    for (Node* a = start; a;) {
      auto& st = a->state;
      if (!st.allocated) {
        a = a->parent;
        continue;
      }
      if (should_trigger(st.snapshot, phase_.gamma)) {
        if (a->is_root()) {
          rebuild_all();
          return;
        }
        Node* p = a->parent;
        const AllocSnapshot cause = st.snapshot;
        ++metrics_.triggerReallocCount;
        metrics_.triggerWrites += reallocate(*p, EventKind::trigger, cause);
        a = p->parent;
        continue;
      }
      if (adaptive && st.scheduled && !st.runOwner) {
        if (!st.schedule)
          st.schedule = build_round_schedule(st.snapshot.deltaBar, phase_.gamma,
                                             static_cast<int>(a->fanout()), config_.capacity,
                                             config_.proactive.kappa);
        RoundAction act = advance_round(*st.schedule, st.snapshot.updateWeight);
        if (act.kind == RoundActionKind::resplit || act.kind == RoundActionKind::round_boundary)
          split_children(*a, act);
      }
      a = a->parent;
    }
  }

  void split_children(Node& u, const RoundAction& act) {
    const double epsBefore = events_ ? subtree_eta(u) : 0.0;
    const double slack = slack_of(u);
    double bonus = act.fair ? 0.0 : act.bonus;
    if (slack - bonus < 1.0) {
      bonus = 0.0;
      ++metrics_.fallbackSplits;
    }
    const double coefficient = ((slack - bonus) - 1.0) / static_cast<double>(u.weight - 1);
    auto res = allocator_.resplit(u, coefficient, bonus / static_cast<double>(u.fanout()));
    account(res);
    metrics_.splitWrites += res.keysWritten;
    const EventKind kind =
        act.kind == RoundActionKind::resplit ? EventKind::resplit : EventKind::round;
    if (kind == EventKind::resplit)
      ++metrics_.resplitCount;
    else
      ++metrics_.roundSplitCount;
    if (events_)
      events_(ReallocEvent{step_, kind, u.level, u.keyCount, u.state.snapshot.updateWeight,
                           u.state.snapshot.deltaBar, epsBefore, subtree_eta(u)});
  }

  void on_allocated(Node& n) {
    auto& st = n.state;
    st.scheduled =
        config_.proactive.split == SplitMode::adaptive && !st.runOwner && n.fanout() >= 2;
    st.schedule.reset();
  }

  void account(const AllocationResult& res) {
    metrics_.allocationAudits += res.audits;
    metrics_.runsWritten += res.runs;
    metrics_.runKeysWritten += res.runKeys;
    metrics_.splits += res.splits;
    metrics_.writesTotal = array_.writes_total();
    metrics_.writesMoved = array_.writes_moved();
  }

  static double subtree_eta(const Node& u) {
    if (!u.state.allocated) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : u.children) best = std::min(best, subtree_eta(*c));
      return best;
    }
    double best = relative_slack_of(u);
    if (!u.state.runOwner)
      for (const auto& c : u.children) best = std::min(best, subtree_eta(*c));
    return best;
  }

  static void collect_depth(const Node& u, std::size_t depth, std::vector<double>& out) {
    if (!u.state.allocated) return;
    if (out.size() <= depth) out.resize(depth + 1, std::numeric_limits<double>::infinity());
    out[depth] = std::min(out[depth], relative_slack_of(u));
    if (!u.state.runOwner)
      for (const auto& c : u.children) collect_depth(*c, depth + 1, out);
  }

  void verify_array(AuditReport& report) const {
    if (array_.capacity() != phase_.mPrime) report.fail("array size differs from m'");
    if (array_.occupied() != static_cast<std::int64_t>(size()))
      report.fail("array holds " + std::to_string(array_.occupied()) + " keys, set has " +
                  std::to_string(size()));
    bool first = true;
    double prevKey = 0.0, prevPos = 0.0;
    std::int64_t prevSlot = 0;
    tree_.for_each_key([&](const KeyRecord& k) {
      if (!report.ok) return;
      const std::string at = "key " + format_double(k.value);
      if (k.slot < 1 || k.slot > phase_.mPrime) {
        report.fail(at + ": slot " + std::to_string(k.slot) + " outside [1, m']");
        return;
      }
      const auto& cell = array_.at(k.slot);
      if (!cell || *cell != k.value)
        report.fail("order: slot " + std::to_string(k.slot) + " does not hold " + at);
      if (k.slot != round_to_slot(k.position)) report.fail(at + ": slot is not ceil(position)");
      if (!first) {
        if (!(prevKey < k.value)) report.fail(at + ": keys out of order");
        if (k.slot <= prevSlot) report.fail("order: slot " + std::to_string(k.slot) + " of " + at +
                                            " not after slot " + std::to_string(prevSlot));
        if (k.position - prevPos < 1.0 - kSlackTolerance)
          report.fail(at + ": fractional positions closer than one slot");
      }
      first = false;
      prevKey = k.value;
      prevPos = k.position;
      prevSlot = k.slot;
    });
  }

  void verify_node(const Node& u, AuditReport& report) const {
    if (!report.ok) return;
    const auto& st = u.state;
    auto where = [&] {
      return "interval level " + std::to_string(u.level) + " (" + format_bound(u.lo) + "," +
             format_bound(u.hi) + ")";
    };
    if (!st.allocated) {
      for (const auto& c : u.children)
        if (c->state.allocated || c->state.runOwner)
          report.fail(where() + ": allocated interval below a run or a non-allocated interval");
      for (const auto& c : u.children) verify_node(*c, report);
      return;
    }
    const double slack = slack_of(u);
    if (slack < 1.0 - kSlackTolerance) report.fail(where() + ": slack below one slot (overflow)");
    if (st.snapshot.deltaBar < 1.0 - kSlackTolerance)
      report.fail(where() + ": Allocation-Invariant violated");
    if (std::abs(st.budget.size() - st.snapshot.nBar - st.snapshot.deltaBar) > 1e-6)
      report.fail(where() + ": snapshot slack inconsistent with budget");
    if (st.snapshot.updateWeight < 0.0) report.fail(where() + ": negative update weight");
    if (should_trigger(st.snapshot, phase_.gamma)) report.fail(where() + ": pending trigger");
    if (u.is_leaf()) return;

    const Budget b = st.budget;
    if (st.runOwner) {
      for (const auto& c : u.children)
        if (c->state.allocated) report.fail(where() + ": allocated interval below a run");
      for (const auto& c : u.children) verify_node(*c, report);
      if (!report.ok) return;
      std::int64_t i = 0;
      const std::int64_t base = round_to_slot(b.lo);
      Tree::for_each_key_below(u, [&](const KeyRecord& k) {
        ++i;
        if (k.slot != base + i) report.fail(where() + ": run is not consecutive and leftmost");
      });
      return;
    }
    const std::size_t d = u.fanout();
    for (std::size_t i = 0; i < d; ++i) {
      const Node& c = *u.children[i];
      if (!c.state.allocated) {
        report.fail(where() + ": non-allocated child of a split interval");
        return;
      }
      const double lo = i == 0 ? b.lo : u.separators[i - 1].position;
      const double hi = i + 1 == d ? b.hi - 1.0 : u.separators[i].position - 1.0;
      if (std::abs(c.state.budget.lo - lo) > 1e-6 || std::abs(c.state.budget.hi - hi) > 1e-6)
        report.fail(where() + ": child budgets do not partition the budget");
    }
    for (const auto& c : u.children) verify_node(*c, report);
  }

  EngineConfig config_;
  std::mt19937_64 rng_;
  Tree tree_;
  LabelArray array_;
  TopDownAllocator<NodeState> allocator_;
  PhaseState phase_;
  Metrics metrics_;
  std::int64_t m_ = 0;
  std::int64_t step_ = 0;
  bool rebuilt_ = false;
  EventSink events_;
};

}  // namespace oll
