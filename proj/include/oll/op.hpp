#pragma once

#include <vector>

namespace oll {

enum class OpKind { insert, erase };

/// One request of a replayable trace.
struct WorkloadOp {
  OpKind kind = OpKind::insert;
  double key = 0.0;

  bool operator==(const WorkloadOp&) const = default;
};

using Trace = std::vector<WorkloadOp>;

inline const char* to_string(OpKind k) { return k == OpKind::insert ? "insert" : "delete"; }

}  // namespace oll
