#pragma once

// Seed-replayable request generators. Every generator is a pure function of its
// parameters and the generator state passed in; none uses std distributions, so
// traces are identical across standard libraries.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <deque>
#include <istream>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "oll/errors.hpp"
#include "oll/label_array.hpp"
#include "oll/op.hpp"

namespace oll {

using WorkloadRng = std::mt19937_64;

/// Distance between neighbouring warmup keys; gaps are later split at midpoints.
inline constexpr double kKeySpacing = 1048576.0;

/// Uniform integer in [0, bound) by rejection sampling.
inline std::uint64_t uniform_below(WorkloadRng& rng, std::uint64_t bound) {
  if (bound == 0) throw ConfigError("uniform_below(0)");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  for (;;) {
    const std::uint64_t x = rng();
    if (x < limit) return x % bound;
  }
}

inline double uniform01(WorkloadRng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

namespace detail {

inline std::vector<double> shuffled_warmup(std::int64_t count, WorkloadRng& rng) {
  std::vector<double> keys;
  keys.reserve(static_cast<std::size_t>(count));
  for (std::int64_t k = 1; k <= count; ++k) keys.push_back(static_cast<double>(k) * kKeySpacing);
  for (std::size_t i = keys.size(); i > 1; --i)
    std::swap(keys[i - 1], keys[uniform_below(rng, i)]);
  return keys;
}

/// Key in gap `g` of the sorted `keys` (gap 0 is below the minimum).
inline double key_in_gap(const std::vector<double>& keys, std::size_t g) {
  if (keys.empty()) return 0.0;
  if (g == 0) return keys.front() - kKeySpacing;
  if (g == keys.size()) return keys.back() + kKeySpacing;
  const double lo = keys[g - 1], hi = keys[g];
  const double mid = lo + (hi - lo) / 2.0;
  if (!(lo < mid && mid < hi)) throw InvariantViolation("key precision exhausted in gap");
  return mid;
}

inline void insert_sorted(std::vector<double>& keys, double v) {
  keys.insert(std::lower_bound(keys.begin(), keys.end(), v), v);
}

}  // namespace detail

/// Insert-only, strictly decreasing keys 0, -1, -2, ...
/// With `window > 0`, once `window` keys are present each further step alternates
/// between deleting the largest key and inserting a new smallest one.
inline Trace gen_front_insert(std::int64_t steps, std::int64_t window = 0) {
  if (steps < 1) throw ConfigError("front-insert needs steps >= 1");
  Trace t;
  t.reserve(static_cast<std::size_t>(steps));
  std::deque<double> live;  // front = smallest
  double next = 0.0;
  bool deleteTurn = true;
  for (std::int64_t s = 0; s < steps; ++s) {
    if (window > 0 && static_cast<std::int64_t>(live.size()) >= window && deleteTurn) {
      t.push_back({OpKind::erase, live.back()});
      live.pop_back();
      deleteTurn = false;
      continue;
    }
    deleteTurn = true;
    t.push_back({OpKind::insert, next});
    live.push_front(next);
    next -= 1.0;
  }
  return t;
}

/// `warmup` inserts of distinct keys in random order, then `steps` operations
/// alternating between deleting the maximum and inserting a key whose rank is
/// uniform over the gaps of the remaining set.
inline Trace gen_delete_max_insert_random(std::int64_t warmup, std::int64_t steps,
                                          WorkloadRng& rng) {
  if (warmup < 1) throw ConfigError("delete-max/insert-random needs warmup >= 1");
  Trace t;
  auto keys = detail::shuffled_warmup(warmup, rng);
  for (double k : keys) t.push_back({OpKind::insert, k});
  std::sort(keys.begin(), keys.end());
  for (std::int64_t s = 0; s < steps; ++s) {
    if (s % 2 == 0) {
      t.push_back({OpKind::erase, keys.back()});
      keys.pop_back();
    } else {
      const double k = detail::key_in_gap(keys, uniform_below(rng, keys.size() + 1));
      detail::insert_sorted(keys, k);
      t.push_back({OpKind::insert, k});
    }
  }
  return t;
}

/// `warmup` random-order inserts, then per step an insert at a uniform gap with
/// probability `pInsert`, else a delete of a uniformly chosen key. The set size
/// is clamped to [0, capacity]: an empty set forces an insert, a full one a delete.
inline Trace gen_uniform_mix(std::int64_t warmup, std::int64_t steps, double pInsert,
                             WorkloadRng& rng, std::int64_t capacity) {
  if (!(pInsert >= 0.0 && pInsert <= 1.0)) throw ConfigError("p_insert must lie in [0, 1]");
  if (warmup < 0 || warmup > capacity) throw ConfigError("warmup must lie in [0, capacity]");
  Trace t;
  auto keys = detail::shuffled_warmup(warmup, rng);
  for (double k : keys) t.push_back({OpKind::insert, k});
  std::sort(keys.begin(), keys.end());
  for (std::int64_t s = 0; s < steps; ++s) {
    bool insert = uniform01(rng) < pInsert;
    if (keys.empty()) insert = true;
    if (static_cast<std::int64_t>(keys.size()) >= capacity) insert = false;
    if (insert) {
      const double k = detail::key_in_gap(keys, uniform_below(rng, keys.size() + 1));
      detail::insert_sorted(keys, k);
      t.push_back({OpKind::insert, k});
    } else {
      const auto i = static_cast<std::ptrdiff_t>(uniform_below(rng, keys.size()));
      t.push_back({OpKind::erase, keys[static_cast<std::size_t>(i)]});
      keys.erase(keys.begin() + i);
    }
  }
  return t;
}

/// `warmup` random-order inserts, then inserts concentrated just below the key at
/// rank `rankFraction * warmup`, each one a new smallest key of that cluster.
/// Clustered keys are deleted oldest first: always once `maxCluster` are live,
/// otherwise with probability 1/4 per step.
inline Trace gen_hammer(std::int64_t warmup, double rankFraction, std::int64_t steps,
                        WorkloadRng& rng, std::int64_t maxCluster) {
  if (!(rankFraction >= 0.0 && rankFraction <= 1.0))
    throw ConfigError("rank_fraction must lie in [0, 1]");
  if (maxCluster < 1) throw ConfigError("hammer needs maxCluster >= 1");
  Trace t;
  auto keys = detail::shuffled_warmup(warmup, rng);
  for (double k : keys) t.push_back({OpKind::insert, k});
  std::sort(keys.begin(), keys.end());

  const auto rank = std::min<std::int64_t>(
      warmup, static_cast<std::int64_t>(std::floor(rankFraction * static_cast<double>(warmup))));
  const double anchor = keys.empty() ? 0.0
                        : rank < warmup ? keys[static_cast<std::size_t>(rank)]
                                        : keys.back() + kKeySpacing;
  // power-of-two unit so anchor - j * unit stays exact and above the predecessor
  const double unit =
      kKeySpacing / std::exp2(std::ceil(std::log2(static_cast<double>(steps) + 2.0)));

  std::deque<double> cluster;  // oldest first
  std::int64_t j = 0;
  for (std::int64_t s = 0; s < steps; ++s) {
    const bool full = static_cast<std::int64_t>(cluster.size()) >= maxCluster;
    const bool evict = full || (!cluster.empty() && uniform01(rng) < 0.25);
    if (evict) {
      t.push_back({OpKind::erase, cluster.front()});
      cluster.pop_front();
    } else {
      const double k = anchor - static_cast<double>(++j) * unit;
      t.push_back({OpKind::insert, k});
      cluster.push_back(k);
    }
  }
  return t;
}

/// Replays `trace` against a plain set; returns the index of the first invalid
/// op (duplicate insert or missing delete), or trace.size() if all are valid.
inline std::size_t first_invalid_op(const Trace& trace) {
  std::set<double> live;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& op = trace[i];
    if (op.kind == OpKind::insert ? !live.insert(op.key).second : live.erase(op.key) == 0)
      return i;
  }
  return trace.size();
}

/// CSV `step,kind,value`, header row, LF endings, round-trip exact values.
inline void write_trace_csv(std::ostream& os, const Trace& trace) {
  os << "step,kind,value\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    os << (i + 1) << ',' << to_string(trace[i].kind) << ',' << format_double(trace[i].key) << '\n';
}

inline Trace read_trace_csv(std::istream& is) {
  Trace t;
  std::string line;
  if (!std::getline(is, line) || line.rfind("step,kind,value", 0) != 0)
    throw ConfigError("trace: missing header `step,kind,value`");
  std::size_t lineNo = 1;
  while (std::getline(is, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos) throw ConfigError("trace line " + std::to_string(lineNo) + ": expected 3 fields");
    const std::string kind = line.substr(c1 + 1, c2 - c1 - 1);
    WorkloadOp op;
    if (kind == "insert")
      op.kind = OpKind::insert;
    else if (kind == "delete")
      op.kind = OpKind::erase;
    else
      throw ConfigError("trace line " + std::to_string(lineNo) + ": unknown kind " + kind);
    const char* first = line.data() + c2 + 1;
    const char* last = line.data() + line.size();
    auto [ptr, ec] = std::from_chars(first, last, op.key);
    if (ec != std::errc{} || ptr != last)
      throw ConfigError("trace line " + std::to_string(lineNo) + ": bad value");
    t.push_back(op);
  }
  return t;
}

}  // namespace oll
