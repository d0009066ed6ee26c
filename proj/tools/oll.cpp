// oll: run online list labeling experiments from the command line.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "oll/harness.hpp"

namespace {

struct Options {
  std::int64_t n = 1024;
  std::int64_t capacity = 0;
  double epsilon = 1.0;
  double gamma = 0.5;
  std::string gammaMode = "const";
  double gammaScale = 1.0;
  std::string split = "adaptive";
  double kappa = 8.0;
  std::string workload = "front";
  std::int64_t steps = 0;
  double pInsert = 0.5;
  double rankFraction = 0.5;
  std::string seeds = "1";
  std::string out;
  std::string events;
  std::int64_t metricsEvery = 64;
  std::string specFile;
  std::string trace;
  bool auditEveryStep = false;
};

// "5" means seeds 1..5; "3,9,27" is an explicit list.
std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  if (s.find(',') == std::string::npos) {
    const auto k = std::stoull(s);
    for (std::uint64_t i = 1; i <= k; ++i) out.push_back(i);
    return out;
  }
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoull(item));
  return out;
}

std::vector<std::int64_t> parse_ns(const std::string& s) {
  std::vector<std::int64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoll(item));
  return out;
}

void add_engine_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--n", o.n, "working-set size (warmup keys or front-insert window)");
  cmd->add_option("--capacity", o.capacity, "capacity N (default 2n)");
  cmd->add_option("--epsilon", o.epsilon, "slack parameter in (0, 1]");
  cmd->add_option("--gamma", o.gamma, "proactive trigger parameter in (0, 1/2]");
  cmd->add_option("--gamma-mode", o.gammaMode, "const or invlog")
      ->check(CLI::IsMember({"const", "invlog"}));
  cmd->add_option("--gamma-scale", o.gammaScale, "c in gamma = min(1/2, c / log2 n) for invlog");
  cmd->add_option("--split", o.split, "smooth or adaptive")
      ->check(CLI::IsMember({"smooth", "adaptive"}));
  cmd->add_option("--kappa", o.kappa, "round-schedule constant, > 1");
  cmd->add_option("--metrics-every", o.metricsEvery, "eta sampling stride");
}

void add_workload_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--workload", o.workload, "front, delmax, uniform or hammer")
      ->check(CLI::IsMember({"front", "delmax", "uniform", "hammer"}));
  cmd->add_option("--steps", o.steps, "operations after warmup (default n)");
  cmd->add_option("--p-insert", o.pInsert, "insert probability for uniform");
  cmd->add_option("--rank-fraction", o.rankFraction, "hammer target rank in [0, 1]");
  cmd->add_option("--seeds", o.seeds, "seed count k (seeds 1..k) or comma-separated list");
}

oll::ExperimentSpec to_spec(const Options& o) {
  if (!o.specFile.empty()) {
    std::ifstream in(o.specFile);
    if (!in) throw oll::ConfigError("cannot open " + o.specFile);
    return nlohmann::json::parse(in).get<oll::ExperimentSpec>();
  }
  oll::ExperimentSpec s;
  s.workload.kind = oll::parse_workload(o.workload);
  s.workload.n = o.n;
  s.workload.steps = o.steps;
  s.workload.pInsert = o.pInsert;
  s.workload.rankFraction = o.rankFraction;
  s.capacity = o.capacity;
  s.epsilon = o.epsilon;
  s.proactive.gamma = o.gamma;
  s.proactive.gammaMode = oll::parse_gamma_mode(o.gammaMode);
  s.proactive.gammaScale = o.gammaScale;
  s.proactive.split = oll::parse_split(o.split);
  s.proactive.kappa = o.kappa;
  s.metricsEvery = o.metricsEvery;
  s.seeds = parse_seeds(o.seeds);
  s.auditEveryStep = o.auditEveryStep;
  s.out = o.out;
  s.events = o.events;
  return s;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw oll::ConfigError("cannot write " + path);
  return f;
}

oll::Trace load_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw oll::ConfigError("cannot open " + path);
  return oll::read_trace_csv(in);
}

int cmd_run(const Options& o) {
  oll::ExperimentSpec spec = to_spec(o);
  oll::engine_config(spec, 0).validate();
  std::ofstream eventsFile;
  std::ostream* events = nullptr;
  if (!spec.events.empty()) {
    eventsFile = open_out(spec.events);
    events = &eventsFile;
  }
  std::vector<oll::ResultRow> rows;
  if (!o.trace.empty()) {
    const oll::Trace trace = load_trace(o.trace);
    if (events) oll::write_event_header(*events);
    for (std::uint64_t seed : spec.seeds) {
      oll::Engine::EventSink sink;
      if (events) sink = [events](const oll::ReallocEvent& e) { oll::write_event(*events, e); };
      rows.push_back(oll::run_trace(spec, seed, trace, sink).row);
    }
  } else {
    rows = oll::run(spec, events);
  }
  std::ofstream outFile;
  std::ostream* out = &std::cout;
  if (!spec.out.empty()) {
    outFile = open_out(spec.out);
    out = &outFile;
  }
  oll::write_result_header(*out);
  for (const auto& r : rows) oll::write_result_row(*out, r);
  return 0;
}

int cmd_sweep(const Options& o, const std::string& nList) {
  oll::ExperimentSpec spec = to_spec(o);
  oll::engine_config(spec, 0).validate();
  const oll::SweepTable t = oll::sweep(spec, parse_ns(nList));
  std::ofstream outFile;
  std::ostream* out = &std::cout;
  if (!spec.out.empty()) {
    outFile = open_out(spec.out);
    out = &outFile;
  }
  oll::write_sweep_csv(*out, t);
  if (t.fitted)
    std::cerr << "spread amortized/(log n loglog n): " << t.spreadLogLogLog
              << "  spread amortized/log^2 n: " << t.spreadLogSquared << '\n';
  else
    std::cerr << "single n: no fit\n";
  return 0;
}

int cmd_oracle(const Options& o) {
  oll::ExperimentSpec spec = to_spec(o);
  int failures = 0;
  for (std::uint64_t seed : spec.seeds) {
    const oll::Trace trace = o.trace.empty()
                                 ? oll::make_trace(spec.workload, spec.effective_capacity(), seed)
                                 : load_trace(o.trace);
    if (trace.size() > 10000) throw oll::ConfigError("oracle-verify accepts at most 10^4 steps");
    const auto rep = oll::oracle_verify(trace, oll::engine_config(spec, seed));
    std::cout << "seed " << seed << ": "
              << (rep.ok ? "pass" : "FAIL at step " + std::to_string(rep.failedStep) + ": " +
                                        rep.detail)
              << " (" << rep.stepsChecked << " steps checked)\n";
    if (!rep.ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}

int cmd_drift(const Options& o) {
  const auto seeds = parse_seeds(o.seeds);
  const auto rep = oll::drift_report(o.n, o.epsilon, seeds.front(), o.kappa);
  std::ofstream outFile;
  std::ostream* out = &std::cout;
  if (!o.out.empty()) {
    outFile = open_out(o.out);
    out = &outFile;
  }
  oll::write_drift_csv(*out, rep);
  for (const auto& m : rep.modes)
    std::cerr << m.name << ": gamma " << m.effectiveGamma << ", eta after rebuild "
              << m.etaAfterRebuild << ", min " << m.minEta << " at phase step " << m.argminStep
              << ", min over weight >= " << oll::kDriftLargeWeight << " " << m.minEtaLarge << '\n';
  return 0;
}

int cmd_gen_trace(const Options& o) {
  oll::ExperimentSpec spec = to_spec(o);
  const oll::Trace t = oll::make_trace(spec.workload, spec.effective_capacity(), spec.seeds.front());
  if (spec.out.empty()) {
    oll::write_trace_csv(std::cout, t);
  } else {
    auto f = open_out(spec.out);
    oll::write_trace_csv(f, t);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online list labeling experiments"};
  app.require_subcommand(1);
  Options o;
  std::string nList = "1024,4096,16384,65536";

  auto* run = app.add_subcommand("run", "run a workload, one CSV row per seed");
  add_engine_flags(run, o);
  add_workload_flags(run, o);
  run->add_option("--out", o.out, "results CSV (default stdout)");
  run->add_option("--events", o.events, "reallocation event log CSV");
  run->add_option("--spec", o.specFile, "JSON experiment spec (overrides flags)");
  run->add_option("--trace", o.trace, "replay a trace CSV instead of generating one");
  run->add_flag("--audit-every-step", o.auditEveryStep, "full audit after every update");

  auto* sw = app.add_subcommand("sweep", "amortized writes across n with growth-law ratios");
  add_engine_flags(sw, o);
  add_workload_flags(sw, o);
  sw->add_option("--ns", nList, "ascending comma-separated n values");
  sw->add_option("--out", o.out, "sweep CSV (default stdout)");
  sw->add_option("--spec", o.specFile, "JSON experiment spec (overrides flags)");

  auto* oracle = app.add_subcommand("oracle-verify", "check every step against a brute-force oracle");
  add_engine_flags(oracle, o);
  add_workload_flags(oracle, o);
  oracle->add_option("--trace", o.trace, "trace CSV to replay");

  auto* drift = app.add_subcommand("drift-report", "relative slack by depth over one front-insert phase");
  drift->add_option("--n", o.n, "keys at the start of the phase");
  drift->add_option("--epsilon", o.epsilon, "slack parameter in (0, 1]");
  drift->add_option("--kappa", o.kappa, "round-schedule constant for the adaptive mode");
  drift->add_option("--seeds", o.seeds, "seed (first of the list is used)");
  drift->add_option("--out", o.out, "CSV (default stdout)");

  auto* gen = app.add_subcommand("gen-trace", "write a workload trace as CSV");
  add_workload_flags(gen, o);
  gen->add_option("--n", o.n, "working-set size");
  gen->add_option("--capacity", o.capacity, "capacity N (default 2n)");
  gen->add_option("--out", o.out, "trace CSV (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(o);
    if (sw->parsed()) return cmd_sweep(o, nList);
    if (oracle->parsed()) return cmd_oracle(o);
    if (drift->parsed()) return cmd_drift(o);
    if (gen->parsed()) return cmd_gen_trace(o);
  } catch (const oll::RunFailure& e) {
    std::cerr << "oll: " << e.what() << '\n';
    return 3;
  } catch (const oll::ConfigError& e) {
    std::cerr << "oll: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "oll: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
