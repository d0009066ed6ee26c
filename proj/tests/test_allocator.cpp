#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>
#include <vector>

#include "oll/allocator.hpp"

namespace {

using Tree = oll::SkipTree<oll::AllocState>;
using Node = Tree::Node;

TEST(SmoothSplit, WorkedExample) {
  const std::vector<oll::ChildShape> kids{{1, 2}, {0, 1}, {2, 3}};
  const auto plan = oll::smooth_split({0.0, 12.0}, 5, 7, kids);
  EXPECT_DOUBLE_EQ(plan.coefficient, 1.0);
  EXPECT_FALSE(plan.terminates);
  ASSERT_EQ(plan.separators.size(), 2u);
  EXPECT_DOUBLE_EQ(plan.separators[0], 4.0);
  EXPECT_DOUBLE_EQ(plan.separators[1], 6.0);
  ASSERT_EQ(plan.children.size(), 3u);
  EXPECT_EQ(plan.children[0], (oll::Budget{0.0, 3.0}));
  EXPECT_EQ(plan.children[1], (oll::Budget{4.0, 5.0}));
  EXPECT_EQ(plan.children[2], (oll::Budget{6.0, 11.0}));
  EXPECT_EQ(plan.childSlack, (std::vector<double>{2.0, 1.0, 3.0}));
}

TEST(SmoothSplit, SingleChildGetsBudgetMinusReservedSlot) {
  const std::vector<oll::ChildShape> kid{{3, 4}};
  const auto plan = oll::layout_children({2.0, 10.0}, kid, 1.0, 0.0);
  EXPECT_TRUE(plan.separators.empty());
  ASSERT_EQ(plan.children.size(), 1u);
  EXPECT_EQ(plan.children[0], (oll::Budget{2.0, 9.0}));
}

TEST(SmoothSplit, RejectsSlackBelowOne) {
  const std::vector<oll::ChildShape> kids{{1, 1}, {1, 1}};
  EXPECT_THROW(oll::smooth_split({0.0, 3.5}, 3, 3, kids), oll::AllocationOverflow);
}

TEST(SmoothSplit, SlackConservedAndEqualRelative) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    const int d = 2 + static_cast<int>(rng() % 6);
    std::vector<oll::ChildShape> kids;
    std::int64_t keys = d - 1, weight = 1;
    for (int i = 0; i < d; ++i) {
      oll::ChildShape c{static_cast<std::int64_t>(rng() % 50), 0};
      c.weight = c.keys + 1 + static_cast<std::int64_t>(rng() % 40);
      keys += c.keys;
      weight += c.weight;
      kids.push_back(c);
    }
    const double slack = 1.0 + static_cast<double>(rng() % 100000) / 97.0;
    const double lo = static_cast<double>(rng() % 1000) / 7.0;
    const auto plan = oll::smooth_split({lo, lo + static_cast<double>(keys) + slack}, keys, weight, kids);
    double sum = 0.0, rmin = 1e300, rmax = 0.0;
    for (int i = 0; i < d; ++i) {
      const double s = plan.children[static_cast<std::size_t>(i)].size() - static_cast<double>(kids[static_cast<std::size_t>(i)].keys);
      sum += s;
      const double rel = s / static_cast<double>(kids[static_cast<std::size_t>(i)].weight);
      rmin = std::min(rmin, rel);
      rmax = std::max(rmax, rel);
    }
    ASSERT_NEAR(sum, slack - 1.0, 1e-9 * std::max(1.0, slack));
    ASSERT_NEAR(rmax, rmin, 1e-9 * std::max(1.0, rmax));
  }
}

TEST(Rounding, CeilingOfPositions) {
  const std::vector<double> a{4.0, 6.0};
  EXPECT_EQ(oll::round_to_slots(a), (std::vector<std::int64_t>{4, 6}));
  const std::vector<double> b{3.2, 4.7};
  EXPECT_EQ(oll::round_to_slots(b), (std::vector<std::int64_t>{4, 5}));
  const std::vector<double> bad{3.2, 3.9};
  EXPECT_THROW(oll::round_to_slots(bad), oll::InvariantViolation);
}

TEST(LabelArray, WriteCounters) {
  oll::LabelArray arr(20);
  std::vector<oll::WriteTarget> first;
  for (int i = 1; i <= 5; ++i) first.push_back({static_cast<double>(i), 2 * i, 0});
  arr.write_keys(first);
  const auto tot = arr.writes_total();
  const auto mov = arr.writes_moved();
  std::vector<oll::WriteTarget> again;
  for (int i = 1; i <= 5; ++i) again.push_back({static_cast<double>(i), i <= 2 ? 2 * i : 2 * i + 5, 2 * i});
  const auto ws = arr.write_keys(again);
  EXPECT_EQ(ws.written, 5);
  EXPECT_EQ(ws.moved, 3);
  EXPECT_EQ(arr.writes_total() - tot, 5);
  EXPECT_EQ(arr.writes_moved() - mov, 3);
  const auto none = arr.write_keys({});
  EXPECT_EQ(none.written, 0);
  EXPECT_EQ(arr.writes_total() - tot, 5);
}

TEST(LabelArray, CollisionAndRangeAreFatal) {
  oll::LabelArray arr(4);
  std::vector<oll::WriteTarget> w{{1.0, 2, 0}, {2.0, 2, 0}};
  EXPECT_THROW(arr.write_keys(w), oll::InvariantViolation);
  oll::LabelArray arr2(4);
  std::vector<oll::WriteTarget> out{{1.0, 5, 0}};
  EXPECT_THROW(arr2.write_keys(out), oll::InvariantViolation);
}

TEST(LabelArray, CsvExport) {
  oll::LabelArray arr(5);
  std::vector<oll::WriteTarget> w{{-1.5, 2, 0}, {7.0, 4, 0}};
  arr.write_keys(w);
  std::ostringstream os;
  arr.export_csv(os);
  EXPECT_EQ(os.str(), "slot_index,key_value\n2,-1.5\n4,7\n");
}

TEST(LabelArray, LocalInversionDetection) {
  oll::LabelArray arr(10);
  std::vector<oll::WriteTarget> w{{1.0, 2, 0}, {2.0, 5, 0}, {3.0, 8, 0}};
  arr.write_keys(w);
  EXPECT_EQ(arr.first_local_inversion(), 0);
  arr.clear_journal();
  std::vector<oll::WriteTarget> bad{{2.0, 9, 5}};
  arr.write_keys(bad);
  EXPECT_EQ(arr.first_local_inversion(), 9);
}

// Tree with keys 1, 2, 3 all at level 1: root level 2, weight 5, four leaves.
void fill_flat(Tree& t) {
  t.insert(1.0, 1);
  t.insert(2.0, 1);
  t.insert(3.0, 1);
}

TEST(AllocateTd, TerminationWritesLeftmostRun) {
  Tree t;
  fill_flat(t);
  ASSERT_EQ(t.root().weight, 5);
  oll::LabelArray arr(11);
  oll::TopDownAllocator<oll::AllocState> alloc(arr);
  // slack 2, coefficient (2-1)/(5-1) = 0.25 per leaf: below one slot -> run
  const auto res = alloc.allocate_td(t.root(), {6.0, 11.0});
  EXPECT_EQ(res.runs, 1);
  EXPECT_EQ(res.keysWritten, 3);
  EXPECT_TRUE(t.root().state.runOwner);
  std::vector<std::int64_t> slots;
  t.for_each_key([&](const oll::KeyRecord& k) { slots.push_back(k.slot); });
  EXPECT_EQ(slots, (std::vector<std::int64_t>{7, 8, 9}));
  for (const auto& c : t.root().children) EXPECT_FALSE(c->state.allocated);
}

TEST(AllocateTd, TerminationCriterionFromCoefficient) {
  // delta 2, w 9, child weight 3: 0.375 < 1
  const std::vector<oll::ChildShape> kids{{2, 3}, {2, 3}, {0, 2}};
  const auto plan = oll::smooth_split({0.0, 8.0}, 6, 9, kids);
  EXPECT_DOUBLE_EQ(plan.childSlack[0], 0.375);
  EXPECT_TRUE(plan.terminates);
}

TEST(AllocateTd, EmptyIntervalWritesNothing) {
  Tree t;
  oll::LabelArray arr(4);
  oll::TopDownAllocator<oll::AllocState> alloc(arr);
  const auto res = alloc.allocate_td(t.root(), {0.0, 4.0});
  EXPECT_EQ(res.keysWritten, 0);
  EXPECT_EQ(arr.writes_total(), 0);
  EXPECT_TRUE(t.root().state.allocated);
}

TEST(AllocateTd, RootAllocationKeepsAllocationInvariant) {
  std::mt19937_64 rng(8);
  Tree t;
  for (int i = 0; i < 3000; ++i) {
    const double v = static_cast<double>(rng() % 10000000);
    if (!t.contains(v)) t.insert(v, oll::sample_level(rng));
  }
  const auto n = static_cast<std::int64_t>(t.size());
  oll::LabelArray arr(2 * n);
  oll::TopDownAllocator<oll::AllocState> alloc(arr);
  const auto res = alloc.allocate_td(t.root(), {0.0, static_cast<double>(2 * n)});
  EXPECT_EQ(res.keysWritten, n);
  t.for_each_node([&](const Node& u, int) {
    if (!u.state.allocated) return;
    EXPECT_GE(u.state.budget.size() - u.state.snapshot.nBar, 1.0 - 1e-9);
    EXPECT_EQ(u.state.snapshot.updateWeight, 0.0);
    if (u.state.runOwner || u.is_leaf()) return;
    const double c = (oll::slack_of(u) - 1.0) / static_cast<double>(u.weight - 1);
    for (const auto& ch : u.children)
      EXPECT_NEAR(oll::relative_slack_of(*ch), c, 1e-9 * std::max(1.0, c));
  });
  // order and spacing
  double prev = -1e300;
  std::int64_t prevSlot = 0;
  t.for_each_key([&](const oll::KeyRecord& k) {
    EXPECT_GE(k.position - prev, 1.0 - 1e-9);
    EXPECT_GT(k.slot, prevSlot);
    EXPECT_EQ(k.slot, oll::round_to_slot(k.position));
    EXPECT_EQ(arr.at(k.slot), k.value);
    prev = k.position;
    prevSlot = k.slot;
  });
}

TEST(AllocateTd, ReallocationCountsUnmovedKeys) {
  Tree t;
  fill_flat(t);
  oll::LabelArray arr(40);
  oll::TopDownAllocator<oll::AllocState> alloc(arr);
  alloc.allocate_td(t.root(), {0.0, 40.0});
  const auto res = alloc.allocate_td(t.root(), {0.0, 40.0});
  EXPECT_EQ(res.keysWritten, 3);
  EXPECT_EQ(res.keysMoved, 0);
}

}  // namespace
