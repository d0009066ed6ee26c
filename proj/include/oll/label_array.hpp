#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oll/errors.hpp"

namespace oll {

/// Fractional positions within this distance above an integer round down to it.
inline constexpr double kRoundingTolerance = 1e-9;

/// alpha -> slot: ceiling, with values within tolerance of an integer snapped to it.
inline std::int64_t round_to_slot(double alpha) {
  return static_cast<std::int64_t>(std::ceil(alpha - kRoundingTolerance));
}

/// Integral slots for a sorted run of fractional positions. Throws on a spacing
/// violation (two positions closer than one slot) since the ceilings would collide.
inline std::vector<std::int64_t> round_to_slots(std::span<const double> positions) {
  std::vector<std::int64_t> slots;
  slots.reserve(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (i > 0 && positions[i] - positions[i - 1] < 1.0 - kRoundingTolerance)
      throw InvariantViolation("spacing violated between positions " +
                               std::to_string(positions[i - 1]) + " and " +
                               std::to_string(positions[i]));
    slots.push_back(round_to_slot(positions[i]));
  }
  return slots;
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

struct WriteStats {
  std::int64_t written = 0;
  std::int64_t moved = 0;

  WriteStats& operator+=(const WriteStats& o) {
    written += o.written;
    moved += o.moved;
    return *this;
  }
};

struct WriteTarget {
  double key = 0.0;
  std::int64_t slot = 0;      // destination, 1-based
  std::int64_t previous = 0;  // slot currently holding the key, 0 if none
};

/// The physical array of m' slots, 1-based, with cumulative write counters.
class LabelArray {
 public:
  LabelArray() = default;
  explicit LabelArray(std::int64_t capacity) { reset(capacity); }

  /// Drops all contents and resizes to `capacity` slots. Counters are kept.
  void reset(std::int64_t capacity) {
    if (capacity < 0) throw ConfigError("negative array capacity");
    slots_.assign(static_cast<std::size_t>(capacity), std::nullopt);
    occupied_ = 0;
    journal_.clear();
  }

  std::int64_t capacity() const noexcept { return static_cast<std::int64_t>(slots_.size()); }
  std::int64_t occupied() const noexcept { return occupied_; }
  std::int64_t writes_total() const noexcept { return writesTotal_; }
  std::int64_t writes_moved() const noexcept { return writesMoved_; }

  const std::optional<double>& at(std::int64_t slot) const {
    check_range(slot);
    return slots_[static_cast<std::size_t>(slot - 1)];
  }

  /// Empties `slot` if it currently holds `key`.
  void vacate(std::int64_t slot, double key) {
    if (slot < 1 || slot > capacity()) return;
    auto& s = slots_[static_cast<std::size_t>(slot - 1)];
    if (s && *s == key) {
      s.reset();
      --occupied_;
    }
  }

  /// Places every target. Each key's previous slot is vacated first, so keys may
  /// move past each other; a destination still occupied afterwards is a collision.
  WriteStats write_keys(std::span<const WriteTarget> targets) {
    WriteStats stats;
    for (const auto& t : targets) vacate(t.previous, t.key);
    for (const auto& t : targets) {
      check_range(t.slot);
      auto& s = slots_[static_cast<std::size_t>(t.slot - 1)];
      if (s)
        throw InvariantViolation("slot collision at " + std::to_string(t.slot) + " between " +
                                 format_double(*s) + " and " + format_double(t.key));
      s = t.key;
      ++occupied_;
      ++stats.written;
      journal_.push_back(t.slot);
      if (t.slot != t.previous) ++stats.moved;
    }
    writesTotal_ += stats.written;
    writesMoved_ += stats.moved;
    return stats;
  }

  /// Destination slots written since the last clear_journal().
  std::span<const std::int64_t> journal() const noexcept { return journal_; }
  void clear_journal() noexcept { journal_.clear(); }

  /// Checks each journaled slot against its nearest occupied neighbours. If the
  /// array was sorted before the journaled writes, every inversion now involves a
  /// journaled key, so this detects any ordering violation. Returns the first
  /// offending slot, or 0.
  std::int64_t first_local_inversion() const {
    for (std::int64_t slot : journal_) {
      if (slot < 1 || slot > capacity()) return slot;
      const auto& s = slots_[static_cast<std::size_t>(slot - 1)];
      if (!s) continue;  // moved again later in the same update
      for (std::int64_t j = slot - 1; j >= 1; --j)
        if (const auto& p = slots_[static_cast<std::size_t>(j - 1)]) {
          if (!(*p < *s)) return slot;
          break;
        }
      for (std::int64_t j = slot + 1; j <= capacity(); ++j)
        if (const auto& q = slots_[static_cast<std::size_t>(j - 1)]) {
          if (!(*s < *q)) return slot;
          break;
        }
    }
    return 0;
  }

  /// Occupied slots as (slot, key), in slot order.
  std::vector<std::pair<std::int64_t, double>> snapshot() const {
    std::vector<std::pair<std::int64_t, double>> out;
    out.reserve(static_cast<std::size_t>(occupied_));
    for (std::size_t i = 0; i < slots_.size(); ++i)
      if (slots_[i]) out.emplace_back(static_cast<std::int64_t>(i + 1), *slots_[i]);
    return out;
  }

  /// CSV `slot_index,key_value`, one line per occupied slot.
  void export_csv(std::ostream& os) const {
    os << "slot_index,key_value\n";
    for (const auto& [slot, key] : snapshot()) os << slot << ',' << format_double(key) << '\n';
  }

  /// Test hook: overwrite a slot without touching the counters.
  void corrupt_for_testing(std::int64_t slot, std::optional<double> value) {
    check_range(slot);
    auto& s = slots_[static_cast<std::size_t>(slot - 1)];
    if (s && !value) --occupied_;
    if (!s && value) ++occupied_;
    s = value;
  }

 private:
  void check_range(std::int64_t slot) const {
    if (slot < 1 || slot > capacity())
      throw InvariantViolation("slot " + std::to_string(slot) + " outside [1, " +
                               std::to_string(capacity()) + "]");
  }

  std::vector<std::optional<double>> slots_;
  std::int64_t occupied_ = 0;
  std::vector<std::int64_t> journal_;
  std::int64_t writesTotal_ = 0;
  std::int64_t writesMoved_ = 0;
};

}  // namespace oll
