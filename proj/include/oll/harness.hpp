#pragma once

// Experiment runner: builds traces, drives engines, audits every step, and
// aggregates results into CSV rows and scaling tables.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "oll/engine.hpp"
#include "oll/errors.hpp"
#include "oll/label_array.hpp"
#include "oll/workloads.hpp"

namespace oll {

enum class WorkloadKind { front, delmax, uniform, hammer };

inline const char* to_string(WorkloadKind k) {
  switch (k) {
    case WorkloadKind::front: return "front";
    case WorkloadKind::delmax: return "delmax";
    case WorkloadKind::uniform: return "uniform";
    case WorkloadKind::hammer: return "hammer";
  }
  return "?";
}

inline WorkloadKind parse_workload(const std::string& s) {
  if (s == "front") return WorkloadKind::front;
  if (s == "delmax") return WorkloadKind::delmax;
  if (s == "uniform") return WorkloadKind::uniform;
  if (s == "hammer") return WorkloadKind::hammer;
  throw ConfigError("unknown workload " + s);
}

inline SplitMode parse_split(const std::string& s) {
  if (s == "smooth") return SplitMode::smooth;
  if (s == "adaptive") return SplitMode::adaptive;
  throw ConfigError("unknown split mode " + s);
}

inline GammaMode parse_gamma_mode(const std::string& s) {
  if (s == "const") return GammaMode::constant;
  if (s == "invlog") return GammaMode::inverse_log;
  throw ConfigError("unknown gamma mode " + s);
}

/// `n` is the working-set size: the warmup size for delmax/uniform/hammer and the
/// sliding window for front. `steps` counts operations after the warmup.
struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::front;
  std::int64_t n = 1024;
  std::int64_t steps = 0;  // 0: same as n
  double pInsert = 0.5;
  double rankFraction = 0.5;

  std::int64_t effective_steps() const { return steps > 0 ? steps : n; }
};

struct ExperimentSpec {
  WorkloadSpec workload{};
  std::int64_t capacity = 0;  // N; 0: twice the working-set size
  double epsilon = 1.0;
  ProactiveConfig proactive{};
  std::int64_t metricsEvery = 64;
  std::vector<std::uint64_t> seeds{1};
  std::int64_t fullAuditEvery = 1024;  // full verify() stride, 0: only at the end
  bool auditEveryStep = false;         // full verify() after every update
  std::string out;                     // results CSV
  std::string events;                  // event log CSV

  std::int64_t effective_capacity() const {
    return capacity > 0 ? capacity : 2 * std::max<std::int64_t>(workload.n, 1);
  }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Workload and engine draw from separate streams derived from the run seed.
inline std::uint64_t workload_seed(std::uint64_t seed) { return splitmix64(2 * seed); }
inline std::uint64_t engine_seed(std::uint64_t seed) { return splitmix64(2 * seed + 1); }

inline EngineConfig engine_config(const ExperimentSpec& spec, std::uint64_t seed) {
  EngineConfig c;
  c.capacity = spec.effective_capacity();
  c.epsilon = spec.epsilon;
  c.proactive = spec.proactive;
  c.seed = engine_seed(seed);
  c.metricsEvery = spec.metricsEvery;
  c.auditEveryStep = false;
  return c;
}

inline Trace make_trace(const WorkloadSpec& w, std::int64_t capacity, std::uint64_t seed) {
  WorkloadRng rng(workload_seed(seed));
  const std::int64_t steps = w.effective_steps();
  switch (w.kind) {
    case WorkloadKind::front: return gen_front_insert(steps, w.n);
    case WorkloadKind::delmax: return gen_delete_max_insert_random(w.n, steps, rng);
    case WorkloadKind::uniform: return gen_uniform_mix(w.n, steps, w.pInsert, rng, capacity);
    case WorkloadKind::hammer:
      return gen_hammer(w.n, w.rankFraction, steps, rng,
                        std::max<std::int64_t>(1, capacity - w.n));
  }
  throw ConfigError("unknown workload");
}

// ---- serialization -------------------------------------------------------

inline void to_json(nlohmann::json& j, const ExperimentSpec& s) {
  j = nlohmann::json{
      {"workload",
       {{"kind", to_string(s.workload.kind)},
        {"n", s.workload.n},
        {"steps", s.workload.steps},
        {"p_insert", s.workload.pInsert},
        {"rank_fraction", s.workload.rankFraction}}},
      {"capacity", s.capacity},
      {"epsilon", s.epsilon},
      {"proactive",
       {{"gamma", s.proactive.gamma},
        {"gamma_mode", to_string(s.proactive.gammaMode)},
        {"gamma_scale", s.proactive.gammaScale},
        {"split", to_string(s.proactive.split)},
        {"kappa", s.proactive.kappa}}},
      {"metrics_every", s.metricsEvery},
      {"seeds", s.seeds},
      {"full_audit_every", s.fullAuditEvery},
      {"audit_every_step", s.auditEveryStep},
      {"out", s.out},
      {"events", s.events}};
}

inline void from_json(const nlohmann::json& j, ExperimentSpec& s) {
  s = ExperimentSpec{};
  if (auto w = j.find("workload"); w != j.end()) {
    if (w->contains("kind")) s.workload.kind = parse_workload(w->at("kind").get<std::string>());
    s.workload.n = w->value("n", s.workload.n);
    s.workload.steps = w->value("steps", s.workload.steps);
    s.workload.pInsert = w->value("p_insert", s.workload.pInsert);
    s.workload.rankFraction = w->value("rank_fraction", s.workload.rankFraction);
  }
  s.capacity = j.value("capacity", s.capacity);
  s.epsilon = j.value("epsilon", s.epsilon);
  if (auto p = j.find("proactive"); p != j.end()) {
    s.proactive.gamma = p->value("gamma", s.proactive.gamma);
    if (p->contains("gamma_mode"))
      s.proactive.gammaMode = parse_gamma_mode(p->at("gamma_mode").get<std::string>());
    s.proactive.gammaScale = p->value("gamma_scale", s.proactive.gammaScale);
    if (p->contains("split")) s.proactive.split = parse_split(p->at("split").get<std::string>());
    s.proactive.kappa = p->value("kappa", s.proactive.kappa);
  }
  s.metricsEvery = j.value("metrics_every", s.metricsEvery);
  if (j.contains("seeds")) s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  s.fullAuditEvery = j.value("full_audit_every", s.fullAuditEvery);
  s.auditEveryStep = j.value("audit_every_step", s.auditEveryStep);
  s.out = j.value("out", std::string{});
  s.events = j.value("events", std::string{});
}

// ---- single runs ---------------------------------------------------------

struct ResultRow {
  std::int64_t n = 0;
  double epsilon = 0.0;
  double gamma = 0.0;
  SplitMode splitMode = SplitMode::adaptive;
  std::uint64_t seed = 0;
  std::int64_t steps = 0;
  std::int64_t writesTotal = 0;
  std::int64_t writesMoved = 0;
  double amortizedWrites = 0.0;
  double etaMin = 0.0;
  int rLevels = 0;
  std::string reallocBreakdown;
};

inline std::string realloc_breakdown(const Metrics& m) {
  return "parent=" + std::to_string(m.parentReallocCount) +
         ";trigger=" + std::to_string(m.triggerReallocCount) +
         ";resplit=" + std::to_string(m.resplitCount) +
         ";round=" + std::to_string(m.roundSplitCount) +
         ";rebuild=" + std::to_string(m.rebuildCount);
}

inline void write_result_header(std::ostream& os) {
  os << "n,epsilon,gamma,splitMode,seed,steps,writesTotal,writesMoved,amortizedWrites,etaMin,"
        "rLevels,reallocBreakdown\n";
}

inline void write_result_row(std::ostream& os, const ResultRow& r) {
  os << r.n << ',' << format_double(r.epsilon) << ',' << format_double(r.gamma) << ','
     << to_string(r.splitMode) << ',' << r.seed << ',' << r.steps << ',' << r.writesTotal << ','
     << r.writesMoved << ',' << format_double(r.amortizedWrites) << ','
     << format_double(r.etaMin) << ',' << r.rLevels << ',' << r.reallocBreakdown << '\n';
}

inline void write_event_header(std::ostream& os) {
  os << "step,kind,interval_level,subtree_keys,delta,deltaBar,eps_before,eps_after\n";
}

inline void write_event(std::ostream& os, const ReallocEvent& e) {
  os << e.step << ',' << to_string(e.kind) << ',' << e.level << ',' << e.subtreeKeys << ','
     << format_double(e.delta) << ',' << format_double(e.deltaBar) << ','
     << format_double(e.epsBefore) << ',' << format_double(e.epsAfter) << '\n';
}

/// Raised by run_trace when an audit fails; carries the step and the report.
class RunFailure : public Error {
 public:
  RunFailure(std::int64_t step, const std::string& what, bool overflow = false)
      : Error("invariant failure at step " + std::to_string(step) + ": " + what),
        step_(step),
        overflow_(overflow) {}
  std::int64_t step() const noexcept { return step_; }
  /// The failure was an allocation with less than one slot of slack.
  bool overflow() const noexcept { return overflow_; }

 private:
  std::int64_t step_;
  bool overflow_;
};

struct RunOutcome {
  ResultRow row;
  Metrics metrics;
  std::int64_t fullAudits = 0;
};

/// Replays `trace` on a fresh engine, auditing the writes of every update and
/// running the full audit every `spec.fullAuditEvery` steps and at the end.
inline RunOutcome run_trace(const ExperimentSpec& spec, std::uint64_t seed, const Trace& trace,
                            const Engine::EventSink& sink = {}) {
  Engine engine(engine_config(spec, seed));
  if (sink) engine.set_event_sink(sink);
  RunOutcome out;
  auto full_audit = [&](std::int64_t step) {
    ++out.fullAudits;
    AuditReport r = engine.verify();
    if (!r.ok) throw RunFailure(step, r.firstViolation);
  };
  std::int64_t step = 0;
  for (const auto& op : trace) {
    ++step;
    try {
      engine.apply(op);
    } catch (const AllocationOverflow& e) {
      throw RunFailure(step, e.what(), true);
    } catch (const InvariantViolation& e) {
      throw RunFailure(step, e.what());
    }
    AuditReport r = engine.verify_step();
    if (!r.ok) throw RunFailure(step, r.firstViolation);
    if (spec.auditEveryStep || (spec.fullAuditEvery > 0 && step % spec.fullAuditEvery == 0))
      full_audit(step);
  }
  full_audit(step);
  if (!trace.empty()) engine.compute_eta();

  const Metrics& m = engine.metrics();
  out.metrics = m;
  ResultRow& row = out.row;
  row.n = spec.workload.n;
  row.epsilon = spec.epsilon;
  row.gamma = engine.gamma();
  row.splitMode = spec.proactive.split;
  row.seed = seed;
  row.steps = static_cast<std::int64_t>(trace.size());
  row.writesTotal = m.writesTotal;
  row.writesMoved = m.writesMoved;
  row.amortizedWrites =
      row.steps > 0 ? static_cast<double>(m.writesTotal) / static_cast<double>(row.steps) : 0.0;
  row.etaMin = std::isfinite(m.etaMin) ? m.etaMin : 0.0;
  row.rLevels = engine.tree().levels();
  row.reallocBreakdown = realloc_breakdown(m);
  return out;
}

inline RunOutcome run_one(const ExperimentSpec& spec, std::uint64_t seed,
                          const Engine::EventSink& sink = {}) {
  return run_trace(spec, seed, make_trace(spec.workload, spec.effective_capacity(), seed), sink);
}

/// One row per seed.
inline std::vector<ResultRow> run(const ExperimentSpec& spec, std::ostream* events = nullptr) {
  std::vector<ResultRow> rows;
  if (events) write_event_header(*events);
  for (std::uint64_t seed : spec.seeds) {
    Engine::EventSink sink;
    if (events) sink = [events](const ReallocEvent& e) { write_event(*events, e); };
    rows.push_back(run_one(spec, seed, sink).row);
  }
  return rows;
}

// ---- scaling sweeps --------------------------------------------------------

struct SweepRow {
  std::int64_t n = 0;
  double medianAmortized = 0.0;
  double minAmortized = 0.0;
  double maxAmortized = 0.0;
  double ratioLogLogLog = 0.0;  // median / (log2 n * log2 log2 n)
  double ratioLogSquared = 0.0;  // median / (log2 n)^2
};

struct SweepTable {
  std::vector<SweepRow> rows;
  bool fitted = false;  // false for a single n
  double spreadLogLogLog = std::numeric_limits<double>::quiet_NaN();   // max/min ratio
  double spreadLogSquared = std::numeric_limits<double>::quiet_NaN();
};

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : (v[h - 1] + v[h]) / 2.0;
}

inline double spread(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *hi / *lo;
}

inline SweepTable sweep(const ExperimentSpec& base, const std::vector<std::int64_t>& ns) {
  if (ns.empty()) throw ConfigError("sweep needs at least one n");
  for (std::size_t i = 1; i < ns.size(); ++i)
    if (ns[i] <= ns[i - 1]) throw ConfigError("sweep n list must be ascending");
  SweepTable t;
  std::vector<double> r1, r2;
  for (std::int64_t n : ns) {
    ExperimentSpec spec = base;
    spec.workload.n = n;
    if (base.capacity > 0 && base.capacity < n) spec.capacity = 0;
    std::vector<double> amortized;
    for (const auto& row : run(spec)) amortized.push_back(row.amortizedWrites);
    SweepRow r;
    r.n = n;
    r.medianAmortized = median(amortized);
    r.minAmortized = *std::min_element(amortized.begin(), amortized.end());
    r.maxAmortized = *std::max_element(amortized.begin(), amortized.end());
    const double lg = std::log2(static_cast<double>(n));
    r.ratioLogLogLog = r.medianAmortized / (lg * std::log2(lg));
    r.ratioLogSquared = r.medianAmortized / (lg * lg);
    r1.push_back(r.ratioLogLogLog);
    r2.push_back(r.ratioLogSquared);
    t.rows.push_back(r);
  }
  if (ns.size() > 1) {
    t.fitted = true;
    t.spreadLogLogLog = spread(r1);
    t.spreadLogSquared = spread(r2);
  }
  return t;
}

inline void write_sweep_csv(std::ostream& os, const SweepTable& t) {
  os << "n,median_amortized,min_amortized,max_amortized,ratio_log_loglog,ratio_log_squared\n";
  for (const auto& r : t.rows)
    os << r.n << ',' << format_double(r.medianAmortized) << ',' << format_double(r.minAmortized)
       << ',' << format_double(r.maxAmortized) << ',' << format_double(r.ratioLogLogLog) << ','
       << format_double(r.ratioLogSquared) << '\n';
}

// ---- brute-force oracle ----------------------------------------------------

struct OracleReport {
  bool ok = true;
  std::int64_t stepsChecked = 0;
  std::int64_t failedStep = 0;  // 1-based, 0 when ok
  std::string detail;
};

/// Replays `trace`; after every step rebuilds the sorted key sequence from a
/// plain set and checks that the engine's array is an order-preserving injection
/// of it into [1, m'], that slots are the ceilings of the fractional positions,
/// and that no two positions satisfy alpha(x') in (alpha(x) - 1, alpha(x)].
/// `prepare` may adjust the engine before the first update (fault injection).
inline OracleReport oracle_verify(const Trace& trace, const EngineConfig& config,
                                  const std::function<void(Engine&)>& prepare = {}) {
  constexpr double tol = 1e-9;
  OracleReport rep;
  Engine engine(config);
  if (prepare) prepare(engine);
  std::set<double> oracle;
  auto fail = [&](std::int64_t step, std::string what) {
    rep.ok = false;
    rep.failedStep = step;
    rep.detail = std::move(what);
    return rep;
  };
  std::int64_t step = 0;
  for (const auto& op : trace) {
    ++step;
    try {
      engine.apply(op);
    } catch (const Error& e) {
      return fail(step, std::string("engine raised: ") + e.what());
    }
    if (op.kind == OpKind::insert)
      oracle.insert(op.key);
    else
      oracle.erase(op.key);

    const auto cells = engine.array().snapshot();
    const std::int64_t mPrime = engine.array().capacity();
    if (cells.size() != oracle.size())
      return fail(step, "array holds " + std::to_string(cells.size()) + " keys, expected " +
                            std::to_string(oracle.size()));
    auto it = oracle.begin();
    for (std::size_t i = 0; i < cells.size(); ++i, ++it) {
      const auto [slot, key] = cells[i];
      if (slot < 1 || slot > mPrime)
        return fail(step, "slot " + std::to_string(slot) + " outside [1, " +
                              std::to_string(mPrime) + "]");
      if (key != *it)
        return fail(step, "rank " + std::to_string(i + 1) + ": slot " + std::to_string(slot) +
                              " holds " + format_double(key) + ", expected " +
                              format_double(*it));
    }
    const auto placed = engine.placements();
    for (std::size_t i = 0; i < placed.size(); ++i) {
      const auto& p = placed[i];
      if (p.slot != static_cast<std::int64_t>(std::ceil(p.position - tol)))
        return fail(step, "key " + format_double(p.key) + " at slot " + std::to_string(p.slot) +
                              " but ceil(alpha) = " +
                              std::to_string(static_cast<std::int64_t>(std::ceil(p.position - tol))));
      if (i > 0 && placed[i - 1].position > p.position - 1.0 + tol)
        return fail(step, "spacing: alpha(" + format_double(placed[i - 1].key) + ") = " +
                              format_double(placed[i - 1].position) + " lies within one of alpha(" +
                              format_double(p.key) + ") = " + format_double(p.position));
    }
    rep.stepsChecked = step;
  }
  return rep;
}

// ---- drift -----------------------------------------------------------------

struct DriftMode {
  std::string name;
  SplitMode split = SplitMode::smooth;
  GammaMode gammaMode = GammaMode::constant;
  double gamma = 0.5;
  double effectiveGamma = 0.0;
  double etaAfterRebuild = 0.0;
  double minEta = std::numeric_limits<double>::infinity();
  std::int64_t argminStep = 0;
  int rLevels = 0;
  std::vector<double> minByDepth;  // min relative slack per depth over the phase
  // same minimum restricted to intervals of weight >= kDriftLargeWeight
  double minEtaLarge = std::numeric_limits<double>::infinity();
};

inline constexpr std::int64_t kDriftLargeWeight = 64;

struct DriftReport {
  std::int64_t nBar = 0;
  std::int64_t phaseLength = 0;
  double epsilon = 1.0;
  std::vector<DriftMode> modes;
};

/// Front-inserts nBar keys, forces a rebuild, then front-inserts one phase of
/// floor(eps * nBar / 4) keys while sampling relative slack per depth after every
/// update. Runs the smooth split with gamma = 1/2, the smooth split with
/// gamma = min(1/2, 1/log2 nBar), and the adaptive split with gamma = 1/2.
inline DriftReport drift_report(std::int64_t nBar, double epsilon, std::uint64_t seed,
                                double kappa = 8.0) {
  if (nBar < 4) throw ConfigError("drift report needs nBar >= 4");
  DriftReport rep;
  rep.nBar = nBar;
  rep.epsilon = epsilon;
  rep.phaseLength = static_cast<std::int64_t>(std::floor(epsilon * static_cast<double>(nBar) / 4.0));

  std::vector<DriftMode> modes(3);
  modes[0].name = "smooth-const";
  modes[1].name = "smooth-invlog";
  modes[1].gammaMode = GammaMode::inverse_log;
  modes[2].name = "adaptive";
  modes[2].split = SplitMode::adaptive;

  for (auto& mode : modes) {
    EngineConfig c;
    c.capacity = 2 * nBar;
    c.epsilon = epsilon;
    c.proactive.split = mode.split;
    c.proactive.gammaMode = mode.gammaMode;
    c.proactive.gamma = mode.gamma;
    c.proactive.kappa = kappa;
    c.seed = engine_seed(seed);
    c.metricsEvery = 0;
    Engine engine(c);
    double next = 0.0;
    for (std::int64_t i = 0; i < nBar; ++i) engine.insert(next--);
    engine.rebuild_all();
    mode.effectiveGamma = engine.gamma();
    mode.etaAfterRebuild = engine.compute_eta();
    auto sample = [&](std::int64_t step) {
      const auto byDepth = engine.relative_slack_by_depth();
      if (mode.minByDepth.size() < byDepth.size())
        mode.minByDepth.resize(byDepth.size(), std::numeric_limits<double>::infinity());
      for (std::size_t d = 0; d < byDepth.size(); ++d) {
        mode.minByDepth[d] = std::min(mode.minByDepth[d], byDepth[d]);
        if (byDepth[d] < mode.minEta) {
          mode.minEta = byDepth[d];
          mode.argminStep = step;
        }
      }
      engine.tree().for_each_node([&](const Engine::Node& u, int) {
        if (u.state.allocated && u.weight >= kDriftLargeWeight)
          mode.minEtaLarge = std::min(mode.minEtaLarge, relative_slack_of(u));
      });
    };
    sample(0);
    for (std::int64_t s = 1; s <= rep.phaseLength; ++s) {
      engine.insert(next--);
      if (!engine.verify_step().ok) throw RunFailure(s, engine.verify_step().firstViolation);
      sample(s);
    }
    mode.rLevels = engine.tree().levels();
  }
  rep.modes = std::move(modes);
  return rep;
}

inline void write_drift_csv(std::ostream& os, const DriftReport& r) {
  os << "mode,gamma,depth,min_relative_slack\n";
  for (const auto& m : r.modes)
    for (std::size_t d = 0; d < m.minByDepth.size(); ++d)
      os << m.name << ',' << format_double(m.effectiveGamma) << ',' << d << ','
         << format_double(m.minByDepth[d]) << '\n';
}

}  // namespace oll
