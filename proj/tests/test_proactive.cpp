#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "oll/proactive.hpp"

namespace {

oll::AllocSnapshot snap(double deltaBar, double delta) {
  oll::AllocSnapshot s;
  s.deltaBar = deltaBar;
  s.updateWeight = delta;
  return s;
}

TEST(Trigger, SingleSlotFiresOnFirstUpdate) {
  EXPECT_FALSE(oll::should_trigger(snap(1.0, 0.0), 0.5));
  EXPECT_TRUE(oll::should_trigger(snap(1.0, 1.0), 0.5));
}

TEST(Trigger, FiresExactlyAtGammaTimesDeltaBar) {
  EXPECT_FALSE(oll::should_trigger(snap(40.0, 9.0), 0.25));
  EXPECT_TRUE(oll::should_trigger(snap(40.0, 10.0), 0.25));
}

TEST(Config, GammaAboveHalfRejected) {
  oll::ProactiveConfig c;
  c.gamma = 0.6;
  EXPECT_THROW(c.validate(), oll::ConfigError);
  c.gamma = 0.5;
  EXPECT_NO_THROW(c.validate());
  c.kappa = 1.0;
  EXPECT_THROW(c.validate(), oll::ConfigError);
}

TEST(Config, InverseLogGamma) {
  oll::ProactiveConfig c;
  c.gammaMode = oll::GammaMode::inverse_log;
  EXPECT_DOUBLE_EQ(c.effective_gamma(1 << 16), 1.0 / 16.0);
  EXPECT_DOUBLE_EQ(c.effective_gamma(2), 0.5);
  EXPECT_DOUBLE_EQ(c.effective_gamma(0), 0.5);
}

// kappa * log2 N = 2 * 3 = 6, so J = ceil(log2 6) = 3
oll::RoundSchedule example_schedule(int d = 2) { return oll::build_round_schedule(64.0, 0.5, d, 8, 2.0); }

TEST(RoundSchedule, WidthsDoubleTowardsTheCenter) {
  const auto s = example_schedule();
  EXPECT_DOUBLE_EQ(s.deltaDagger, 32.0);
  std::vector<double> widths, bonus;
  for (const auto& r : s.rounds) {
    widths.push_back(r.width);
    bonus.push_back(r.bonus);
  }
  EXPECT_EQ(widths, (std::vector<double>{4, 4, 8, 8, 4, 4}));
  EXPECT_EQ(bonus, (std::vector<double>{8, 8, 16, 16, 8, 8}));
  EXPECT_DOUBLE_EQ(std::accumulate(bonus.begin(), bonus.end(), 0.0), 64.0);
  EXPECT_TRUE(s.rounds.front().fair);
  EXPECT_TRUE(s.rounds.back().fair);
  for (std::size_t j = 1; j + 1 < s.rounds.size(); ++j) EXPECT_FALSE(s.rounds[j].fair);
}

TEST(RoundSchedule, PerChildBonusAndResplitStep) {
  const auto s = example_schedule(4);
  const auto& r = s.rounds[2];
  EXPECT_DOUBLE_EQ(r.bonus, 16.0);
  EXPECT_DOUBLE_EQ(r.bonus / 4.0, 4.0);
  EXPECT_DOUBLE_EQ(r.resplitStep, 1.0);
}

TEST(RoundSchedule, AuditAcrossParameters) {
  for (double deltaBar : {1.0, 3.0, 17.5, 100.0, 1e4, 3.3e6})
    for (double gamma : {0.05, 0.25, 0.5})
      for (std::int64_t cap : {16, 1024, 1 << 20}) {
        const auto s = oll::build_round_schedule(deltaBar, gamma, 3, cap, 8.0);
        const double wsum = std::accumulate(s.rounds.begin(), s.rounds.end(), 0.0,
                                            [](double a, const oll::Round& r) { return a + r.width; });
        const double bsum = std::accumulate(s.rounds.begin(), s.rounds.end(), 0.0,
                                            [](double a, const oll::Round& r) { return a + r.bonus; });
        EXPECT_NEAR(wsum, s.deltaDagger, 1e-9 * deltaBar);
        EXPECT_NEAR(bsum, deltaBar, 1e-9 * deltaBar);
        const int J = static_cast<int>(std::ceil(std::log2(8.0 * std::log2(static_cast<double>(cap)))));
        EXPECT_LE(static_cast<int>(s.rounds.size()), 2 * J);
        for (const auto& r : s.rounds) EXPECT_GE(r.bonus, r.width);
      }
}

TEST(RoundSchedule, SmallPhaseCollapsesToTwoRounds) {
  const auto s = oll::build_round_schedule(4.0, 0.5, 2, 1 << 10, 8.0);
  ASSERT_EQ(s.rounds.size(), 2u);
  EXPECT_DOUBLE_EQ(s.rounds[0].width, 1.0);
  EXPECT_TRUE(s.rounds[0].fair);
  EXPECT_TRUE(s.rounds[1].fair);
}

TEST(AdvanceRound, BoundaryResplitAndPhaseEnd) {
  auto s = example_schedule(2);
  EXPECT_EQ(oll::advance_round(s, 3.0).kind, oll::RoundActionKind::none);
  auto a = oll::advance_round(s, 4.0);
  EXPECT_EQ(a.kind, oll::RoundActionKind::round_boundary);
  EXPECT_EQ(a.round, 1u);
  EXPECT_FALSE(a.fair);
  EXPECT_DOUBLE_EQ(a.bonus, 8.0);

  // round index 2 spans [8, 16) with width 8: resplit every 8 / (2 * 2) = 2
  EXPECT_EQ(oll::advance_round(s, 8.0).kind, oll::RoundActionKind::round_boundary);
  EXPECT_EQ(oll::advance_round(s, 9.0).kind, oll::RoundActionKind::none);
  EXPECT_EQ(oll::advance_round(s, 10.0).kind, oll::RoundActionKind::resplit);
  EXPECT_EQ(oll::advance_round(s, 11.5).kind, oll::RoundActionKind::none);
  EXPECT_EQ(oll::advance_round(s, 12.0).kind, oll::RoundActionKind::resplit);

  const auto last = oll::advance_round(s, 29.0);
  EXPECT_EQ(last.kind, oll::RoundActionKind::round_boundary);
  EXPECT_TRUE(last.fair);
  EXPECT_EQ(oll::advance_round(s, 32.0).kind, oll::RoundActionKind::phase_end);
}

TEST(AdaptiveSplit, WorkedExample) {
  const std::vector<oll::ChildShape> kids{{3, 4}, {7, 6}};
  // |X(U)| = 3 + 7 + 1 separator = 11, slack 21
  bool fellBack = true;
  const auto plan = oll::adaptive_split({0.0, 32.0}, 11, 11, kids, 5.0, &fellBack);
  EXPECT_FALSE(fellBack);
  EXPECT_DOUBLE_EQ(plan.coefficient, 1.5);
  EXPECT_DOUBLE_EQ(plan.children[0].size(), 11.5);
  EXPECT_DOUBLE_EQ(plan.children[1].size(), 18.5);
  EXPECT_DOUBLE_EQ(plan.children[0].size() + 1.0 + plan.children[1].size() + 1.0, 32.0);
}

TEST(AdaptiveSplit, ZeroBonusIsTheSmoothSplit) {
  const std::vector<oll::ChildShape> kids{{2, 5}, {0, 1}, {4, 9}};
  const auto a = oll::adaptive_split({3.0, 40.0}, 8, 16, kids, 0.0);
  const auto s = oll::smooth_split({3.0, 40.0}, 8, 16, kids);
  EXPECT_EQ(a.children, s.children);
  EXPECT_EQ(a.separators, s.separators);
}

TEST(AdaptiveSplit, FallsBackWhenBonusExhaustsSlack) {
  const std::vector<oll::ChildShape> kids{{1, 2}, {1, 2}};
  bool fellBack = false;
  const auto plan = oll::adaptive_split({0.0, 10.0}, 3, 5, kids, 7.5, &fellBack);
  EXPECT_TRUE(fellBack);
  EXPECT_DOUBLE_EQ(plan.bonusPerChild, 0.0);
  EXPECT_DOUBLE_EQ(plan.coefficient, (7.0 - 1.0) / 4.0);
}

}  // namespace
