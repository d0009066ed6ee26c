#pragma once

// Proactive reallocation: per-interval update weight, the gamma-trigger, and the
// round schedule of the adaptive split.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "oll/allocator.hpp"
#include "oll/errors.hpp"

namespace oll {

enum class SplitMode { smooth, adaptive };
enum class GammaMode { constant, inverse_log };

inline const char* to_string(SplitMode m) { return m == SplitMode::smooth ? "smooth" : "adaptive"; }
inline const char* to_string(GammaMode m) { return m == GammaMode::constant ? "const" : "invlog"; }

struct ProactiveConfig {
  double gamma = 0.5;
  SplitMode split = SplitMode::adaptive;
  double kappa = 8.0;
  GammaMode gammaMode = GammaMode::constant;
  double gammaScale = 1.0;  // c in gamma = min(1/2, c / log2 n) for inverse_log

  void validate() const {
    if (gammaMode == GammaMode::constant && !(gamma > 0.0 && gamma <= 0.5))
      throw ConfigError("gamma must lie in (0, 1/2], got " + std::to_string(gamma));
    if (gammaMode == GammaMode::inverse_log && !(gammaScale > 0.0))
      throw ConfigError("inverse-log gamma scale must be positive");
    if (split == SplitMode::adaptive && !(kappa > 1.0))
      throw ConfigError("kappa must exceed 1");
  }

  /// Gamma in force for a phase whose rebuild saw `nBar` keys.
  double effective_gamma(std::int64_t nBar) const {
    if (gammaMode == GammaMode::constant) return gamma;
    const double lg = nBar > 1 ? std::log2(static_cast<double>(nBar)) : 0.0;
    if (lg <= 0.0) return 0.5;
    return std::min(0.5, gammaScale / lg);
  }
};

/// Fires once delta / gamma >= deltaBar.
inline bool should_trigger(const AllocSnapshot& s, double gamma) {
  return s.updateWeight / gamma >= s.deltaBar;
}

struct Round {
  double width = 0.0;        // update weight covered by the round
  double bonus = 0.0;        // reserved slack B_j = width / gamma
  double resplitStep = 0.0;  // width / (2d)
  bool fair = false;         // first and last rounds use the smooth split
};

struct RoundSchedule {
  double deltaDagger = 0.0;  // phase length gamma * deltaBar in update weight
  int children = 1;
  std::vector<Round> rounds;
  std::vector<double> starts;  // update weight at which each round begins
  std::size_t current = 0;
  std::int64_t resplitsInRound = 0;

  std::size_t round_of(double delta) const {
    auto it = std::upper_bound(starts.begin(), starts.end(), delta);
    return static_cast<std::size_t>(it - starts.begin()) - 1;
  }
};

/// Splits the phase [0, gamma * deltaBar] into rounds whose widths double from
/// each edge towards the center: (D/2^J, D/2^J, D/2^(J-1), ..., D/4) followed by
/// its mirror image, with J = ceil(log2(kappa * log2 N)).
inline RoundSchedule build_round_schedule(double deltaBar, double gamma, int d,
                                          std::int64_t capacity, double kappa) {
  if (!(deltaBar >= 1.0 - kSlackTolerance)) throw ConfigError("round schedule needs deltaBar >= 1");
  if (d < 1) throw ConfigError("round schedule needs at least one child");
  RoundSchedule s;
  s.children = d;
  s.deltaDagger = gamma * deltaBar;
  const double lgN = std::log2(static_cast<double>(std::max<std::int64_t>(capacity, 2)));
  const int J = std::max(2, static_cast<int>(std::ceil(std::log2(kappa * lgN) - 1e-12)));

  std::vector<double> widths;
  if (s.deltaDagger < 2.0 * J) {
    widths = {s.deltaDagger / 2.0, s.deltaDagger / 2.0};
  } else {
    std::vector<double> half;
    half.push_back(std::ldexp(s.deltaDagger, -J));
    for (int e = J; e >= 2; --e) half.push_back(std::ldexp(s.deltaDagger, -e));
    widths = half;
    widths.insert(widths.end(), half.rbegin(), half.rend());
    double sum = 0.0;
    for (double w : widths) sum += w;
    widths.front() += s.deltaDagger - sum;
  }

  s.rounds.reserve(widths.size());
  s.starts.reserve(widths.size());
  double start = 0.0;
  for (std::size_t j = 0; j < widths.size(); ++j) {
    Round r;
    r.width = widths[j];
    r.bonus = widths[j] / gamma;
    r.resplitStep = widths[j] / (2.0 * d);
    r.fair = j == 0 || j + 1 == widths.size();
    s.rounds.push_back(r);
    s.starts.push_back(start);
    start += widths[j];
  }
  return s;
}

enum class RoundActionKind { none, resplit, round_boundary, phase_end };

struct RoundAction {
  RoundActionKind kind = RoundActionKind::none;
  std::size_t round = 0;
  bool fair = false;
  double bonus = 0.0;
};

/// Moves the schedule to cumulative update weight `delta` and reports what the
/// interval has to do: a resplit every width/(2d) inside a non-edge round, a
/// split on entering a new round, or the phase end at delta >= deltaDagger.
inline RoundAction advance_round(RoundSchedule& s, double delta) {
  RoundAction a;
  if (delta >= s.deltaDagger) {
    a.kind = RoundActionKind::phase_end;
    a.round = s.rounds.size();
    return a;
  }
  const std::size_t j = s.round_of(delta);
  const Round& r = s.rounds[j];
  a.round = j;
  a.fair = r.fair;
  a.bonus = r.fair ? 0.0 : r.bonus;
  if (j > s.current) {
    s.current = j;
    s.resplitsInRound = 0;
    a.kind = RoundActionKind::round_boundary;
    return a;
  }
  if (r.fair || r.resplitStep <= 0.0) return a;
  const auto steps = static_cast<std::int64_t>(std::floor((delta - s.starts[j]) / r.resplitStep));
  if (steps > s.resplitsInRound) {
    s.resplitsInRound = steps;
    a.kind = RoundActionKind::resplit;
  }
  return a;
}

/// Child budgets under the adaptive split with bonus B for an interval with
/// budget `budget`, current key count and weight:
///   |budget(I_i)| = n(I_i) + ((D - B) - 1) / (w - 1) * w(I_i) + B / d.
/// Falls back to the smooth split when D - B < 1 (`fellBack` is set).
inline SplitPlan adaptive_split(Budget budget, std::int64_t keyCount, std::int64_t weight,
                                std::span<const ChildShape> children, double bonus,
                                bool* fellBack = nullptr) {
  const double slack = budget.size() - static_cast<double>(keyCount);
  if (slack < 1.0 - kSlackTolerance)
    throw AllocationOverflow("adaptive split needs slack >= 1, got " + std::to_string(slack));
  if (children.empty() || weight < 2)
    throw InvariantViolation("adaptive split of an interval without children");
  if (fellBack) *fellBack = false;
  if (slack - bonus < 1.0) {
    if (fellBack) *fellBack = true;
    bonus = 0.0;
  }
  const double coefficient = ((slack - bonus) - 1.0) / static_cast<double>(weight - 1);
  return layout_children(budget, children, coefficient,
                         bonus / static_cast<double>(children.size()));
}

}  // namespace oll
