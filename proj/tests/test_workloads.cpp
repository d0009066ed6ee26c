#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include "oll/engine.hpp"
#include "oll/workloads.hpp"

namespace {

std::int64_t final_size(const oll::Trace& t) {
  std::int64_t n = 0;
  for (const auto& op : t) n += op.kind == oll::OpKind::insert ? 1 : -1;
  return n;
}

TEST(FrontInsert, StrictlyDecreasingInserts) {
  const auto t = oll::gen_front_insert(3);
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t[0], (oll::WorkloadOp{oll::OpKind::insert, 0.0}));
  EXPECT_EQ(t[1], (oll::WorkloadOp{oll::OpKind::insert, -1.0}));
  EXPECT_EQ(t[2], (oll::WorkloadOp{oll::OpKind::insert, -2.0}));
  EXPECT_EQ(oll::gen_front_insert(500), oll::gen_front_insert(500));
  EXPECT_THROW(oll::gen_front_insert(0), oll::ConfigError);
}

TEST(FrontInsert, WindowAlternatesDeleteMaxAndInsertMin) {
  const auto t = oll::gen_front_insert(20, 5);
  EXPECT_EQ(oll::first_invalid_op(t), t.size());
  std::set<double> live;
  for (const auto& op : t) {
    if (op.kind == oll::OpKind::insert) {
      if (!live.empty()) {
        EXPECT_LT(op.key, *live.begin());
      }
      live.insert(op.key);
    } else {
      EXPECT_EQ(op.key, *live.rbegin());
      live.erase(op.key);
    }
    EXPECT_LE(live.size(), 5u);
  }
}

TEST(FrontInsert, KeysLandOnTheLeftSpine) {
  oll::EngineConfig c;
  c.capacity = 256;
  c.proactive.split = oll::SplitMode::smooth;
  oll::Engine e(c);
  for (const auto& op : oll::gen_front_insert(200)) {
    e.apply(op);
    // the new minimum closes the leftmost interval of every level it occupies
    const int level = e.tree().level_of(op.key);
    e.tree().for_each_node([&](const oll::Engine::Node& u, int) {
      if (u.lo == oll::kNegInf && u.level <= level) {
        ASSERT_EQ(u.hi, op.key);
      }
    });
  }
}

TEST(DelMax, AlternationRestoresSize) {
  oll::WorkloadRng rng(1);
  const auto t = oll::gen_delete_max_insert_random(4, 2, rng);
  ASSERT_EQ(t.size(), 6u);
  EXPECT_EQ(final_size(t), 4);
  EXPECT_EQ(t[4].kind, oll::OpKind::erase);
  EXPECT_EQ(t[5].kind, oll::OpKind::insert);
  double maxKey = -1e300;
  for (int i = 0; i < 4; ++i) maxKey = std::max(maxKey, t[static_cast<std::size_t>(i)].key);
  EXPECT_EQ(t[4].key, maxKey);
}

TEST(DelMax, FixedSeedIdenticalTrace) {
  oll::WorkloadRng a(9), b(9);
  EXPECT_EQ(oll::gen_delete_max_insert_random(100, 1000, a),
            oll::gen_delete_max_insert_random(100, 1000, b));
}

// Pearson chi-square over the n + 1 gaps; 10^5 draws, 11 gaps, 10 dof.
TEST(DelMax, UniformRankInsertsPassChiSquare) {
  constexpr int n = 10;
  constexpr int draws = 100000;
  oll::WorkloadRng rng(2024);
  const auto t = oll::gen_delete_max_insert_random(n + 1, 2 * draws, rng);
  std::vector<double> live;
  std::vector<int> counts(n + 1, 0);
  for (const auto& op : t) {
    if (op.kind == oll::OpKind::insert) {
      auto it = std::lower_bound(live.begin(), live.end(), op.key);
      if (live.size() == static_cast<std::size_t>(n)) ++counts[static_cast<std::size_t>(it - live.begin())];
      live.insert(it, op.key);
    } else {
      live.erase(std::find(live.begin(), live.end(), op.key));
    }
  }
  double chi2 = 0.0;
  const double expected = static_cast<double>(draws) / (n + 1);
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 99.9th percentile of chi-square with 10 degrees of freedom
  EXPECT_LT(chi2, 29.59);
}

TEST(UniformMix, InsertOnlyAtProbabilityOne) {
  oll::WorkloadRng rng(3);
  const auto t = oll::gen_uniform_mix(10, 200, 1.0, rng, 1000);
  for (const auto& op : t) EXPECT_EQ(op.kind, oll::OpKind::insert);
  EXPECT_EQ(oll::first_invalid_op(t), t.size());
}

TEST(UniformMix, DeleteOnlyExhaustsThenClamps) {
  oll::WorkloadRng rng(4);
  const auto t = oll::gen_uniform_mix(50, 60, 0.0, rng, 1000);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(t[50 + static_cast<std::size_t>(i)].kind, oll::OpKind::erase);
  // empty set forces an insert, which is deleted next
  EXPECT_EQ(t[100].kind, oll::OpKind::insert);
  EXPECT_EQ(t[101].kind, oll::OpKind::erase);
  EXPECT_EQ(oll::first_invalid_op(t), t.size());
}

TEST(UniformMix, BalancedWalkStaysNearWarmup) {
  constexpr std::int64_t warmup = 5000, steps = 100000;
  oll::WorkloadRng rng(5);
  const auto t = oll::gen_uniform_mix(warmup, steps, 0.5, rng, 2 * warmup);
  EXPECT_EQ(oll::first_invalid_op(t), t.size());
  // +-1 random walk of 10^5 steps: sigma = sqrt(10^5)
  const double sigma = std::sqrt(static_cast<double>(steps));
  EXPECT_LE(std::abs(static_cast<double>(final_size(t) - warmup)), 3 * sigma);
}

TEST(UniformMix, CapacityClampsSize) {
  oll::WorkloadRng rng(6);
  const auto t = oll::gen_uniform_mix(8, 100, 1.0, rng, 10);
  std::int64_t n = 0;
  for (const auto& op : t) {
    n += op.kind == oll::OpKind::insert ? 1 : -1;
    EXPECT_LE(n, 10);
  }
}

TEST(Hammer, RankZeroBehavesLikeFrontInsert) {
  oll::WorkloadRng rng(7);
  const auto t = oll::gen_hammer(0, 0.0, 200, rng, 1000);
  double prev = 1e300;
  for (const auto& op : t) {
    if (op.kind != oll::OpKind::insert) continue;
    EXPECT_LT(op.key, prev);
    prev = op.key;
  }
  oll::WorkloadRng rng2(8);
  const auto t2 = oll::gen_hammer(100, 0.0, 200, rng2, 1000);
  std::set<double> live;
  for (const auto& op : t2) {
    if (op.kind == oll::OpKind::insert) {
      if (!live.empty() && &op - t2.data() >= 100) {
        EXPECT_LT(op.key, *live.begin());
      }
      live.insert(op.key);
    } else {
      live.erase(op.key);
    }
  }
}

TEST(Hammer, HalfTargetsMedianRegion) {
  oll::WorkloadRng rng(9);
  constexpr std::int64_t warmup = 1000;
  const auto t = oll::gen_hammer(warmup, 0.5, 500, rng, 100);
  EXPECT_EQ(oll::first_invalid_op(t), t.size());
  std::vector<double> base;
  for (std::int64_t i = 0; i < warmup; ++i) base.push_back(t[static_cast<std::size_t>(i)].key);
  std::sort(base.begin(), base.end());
  for (std::size_t i = warmup; i < t.size(); ++i) {
    if (t[i].kind != oll::OpKind::insert) continue;
    // rank among the warmup keys is exactly floor(0.5 * warmup)
    const auto rank = std::lower_bound(base.begin(), base.end(), t[i].key) - base.begin();
    EXPECT_EQ(rank, warmup / 2);
  }
  std::int64_t n = 0, maxN = 0;
  for (const auto& op : t) {
    n += op.kind == oll::OpKind::insert ? 1 : -1;
    maxN = std::max(maxN, n);
  }
  EXPECT_LE(maxN, warmup + 100);
}

TEST(Hammer, FixedSeedIdenticalTrace) {
  oll::WorkloadRng a(10), b(10);
  EXPECT_EQ(oll::gen_hammer(50, 0.3, 400, a, 20), oll::gen_hammer(50, 0.3, 400, b, 20));
  oll::WorkloadRng c(1);
  EXPECT_THROW(oll::gen_hammer(50, 1.5, 10, c, 20), oll::ConfigError);
}

TEST(Traces, ReplayWithoutValidityErrors) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    oll::WorkloadRng r1(seed), r2(seed), r3(seed);
    const std::vector<oll::Trace> traces{
        oll::gen_front_insert(300, 100), oll::gen_delete_max_insert_random(100, 300, r1),
        oll::gen_uniform_mix(100, 300, 0.4, r2, 200), oll::gen_hammer(100, 0.7, 300, r3, 100)};
    for (const auto& t : traces) {
      ASSERT_EQ(oll::first_invalid_op(t), t.size());
      oll::EngineConfig c;
      c.capacity = 200;
      c.seed = seed;
      oll::Engine e(c);
      for (const auto& op : t) ASSERT_NO_THROW(e.apply(op));
      EXPECT_TRUE(e.verify().ok);
    }
  }
}

TEST(Traces, CsvRoundTrip) {
  oll::WorkloadRng rng(12);
  const auto t = oll::gen_uniform_mix(20, 50, 0.5, rng, 100);
  std::stringstream ss;
  oll::write_trace_csv(ss, t);
  EXPECT_EQ(ss.str().rfind("step,kind,value\n1,insert,", 0), 0u);
  EXPECT_EQ(oll::read_trace_csv(ss), t);
  std::stringstream bad("step,kind,value\n1,upsert,3\n");
  EXPECT_THROW(oll::read_trace_csv(bad), oll::ConfigError);
}

TEST(UniformBelow, StaysInRange) {
  oll::WorkloadRng rng(13);
  for (std::uint64_t bound : {1ULL, 2ULL, 7ULL, 1000003ULL})
    for (int i = 0; i < 1000; ++i) ASSERT_LT(oll::uniform_below(rng, bound), bound);
}

}  // namespace
