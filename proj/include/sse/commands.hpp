#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "sse/bounds.hpp"
#include "sse/config.hpp"
#include "sse/errors.hpp"
#include "sse/fusion.hpp"
#include "sse/lti.hpp"
#include "sse/matrix_io.hpp"
#include "sse/norms.hpp"
#include "sse/observer.hpp"
#include "sse/scenarios.hpp"

namespace sse {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitParse = 1,
  kExitPrerequisite = 2,
  kExitRuntime = 3,
};

struct CommandOptions {
  std::optional<std::string> out;
  std::optional<int> trials;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool timing = false;
};

namespace internal {

inline RunConfig apply_overrides(RunConfig cfg, const CommandOptions& opt) {
  if (opt.out) cfg.output = *opt.out;
  if (opt.trials) cfg.run.trials = *opt.trials;
  if (opt.seed) cfg.run.seed = *opt.seed;
  if (opt.workers) cfg.run.workers = *opt.workers;
  if (cfg.run.trials < 0) throw ParseError("--trials must be >= 0");
  if (cfg.run.workers < 1) throw ParseError("--workers must be >= 1");
  return cfg;
}

inline std::filesystem::path prepare_output(const RunConfig& cfg) {
  std::filesystem::path dir(cfg.output);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path.string() + "'");
  return f;
}

inline void write_manifest(const std::filesystem::path& dir, const std::string& command,
                           const RunConfig& cfg, const std::string& seeds) {
  auto f = open_out(dir / "manifest.txt");
  f << "command: " << command << '\n';
  f << "sse_version: " << kVersion << '\n';
  f << "eigen_version: " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.'
    << EIGEN_MINOR_VERSION << '\n';
  f << "seeds: " << seeds << '\n';
  f << "config:\n" << serialize_config(cfg);
}

inline SensorSet protected_sensors(const RunConfig& cfg, const Plant& plant) {
  return cfg.estimator.protected_sensors.value_or(plant.critical);
}

/// Declared disturbance bound: sqrt(l T) for p = 2 and 1 for p = inf under
/// uniform[-1, 1] noise, zero without disturbance.
inline DisturbanceBound declared_bound(const RunConfig& cfg, const Plant& plant) {
  if (cfg.disturbance == "none") return {0.0, 0.0};
  return {std::sqrt(static_cast<double>(plant.sys.l()) *
                    static_cast<double>(cfg.run.horizon)),
          1.0};
}

inline BankOptions bank_options(const RunConfig& cfg, const Plant& plant) {
  BankOptions o;
  o.rho = cfg.estimator.rho;
  o.pairs = cfg.estimator.regimes;
  o.fusion = cfg.estimator.fusion;
  o.mode = cfg.estimator.mode;
  o.protected_sensors = protected_sensors(cfg, plant);
  o.w_bound = declared_bound(cfg, plant);
  return o;
}

inline std::string verdict(const ChiDetectabilityResult& r) {
  return r.detectable ? "true" : "false";
}

inline std::string witness_text(const ChiDetectabilityResult& r) {
  if (r.detectable || !r.violating) return "-";
  std::string s = r.violating->to_string();
  if (r.witness) {
    s += " (mode " + format_real(r.witness->real());
    if (r.witness->imag() != 0.0) s += (r.witness->imag() > 0 ? "+" : "") +
                                       format_real(r.witness->imag()) + "i";
    s += ")";
  }
  return s;
}

}  // namespace internal

/// rho- and 2 rho-detectability verdicts. Exit 0 iff the mode's prerequisite
/// holds: strict needs 2 rho-detectability, lenient needs at least one
/// detectable subset that keeps the protected sensors.
inline int cmd_check(const RunConfig& cfg, std::ostream& out) {
  const Plant plant = build_plant(cfg);
  const int m = plant.sys.m();
  const int rho = cfg.estimator.rho;
  if (rho >= m) throw ParseError("estimator.rho must be smaller than the sensor count");
  const auto rho_res = chi_detectable(plant.sys, rho);
  const std::optional<ChiDetectabilityResult> two_res =
      2 * rho <= m ? std::optional(chi_detectable(plant.sys, 2 * rho)) : std::nullopt;
  const bool strict = cfg.estimator.mode == BankMode::kStrict;
  const SensorSet keep = internal::protected_sensors(cfg, plant);

  bool ok = false;
  std::string reason;
  if (strict) {
    ok = two_res && two_res->detectable;
    reason = ok ? "2rho-detectable" : "not 2rho-detectable";
  } else {
    int viable = 0;
    if (keep.size() <= m - rho && keep.max_index() <= m) {
      for (const SensorSet& s : enumerate_subsets(m, rho, keep)) {
        if (is_detectable(plant.sys.A(), projection(s, m).apply(plant.sys.C()))) ++viable;
      }
    }
    ok = viable > 0;
    reason = std::to_string(viable) + " detectable subsets keep " + keep.to_string();
  }

  std::ostringstream report;
  report << "plant: " << plant.name << '\n';
  report << "states: " << plant.sys.n() << '\n';
  report << "sensors: " << m << '\n';
  report << "rho: " << rho << '\n';
  report << "mode: " << (strict ? "strict" : "lenient") << '\n';
  report << "critical_sensors: " << plant.critical.to_string() << '\n';
  report << "rho_detectable: " << internal::verdict(rho_res) << '\n';
  report << "rho_violating: " << internal::witness_text(rho_res) << '\n';
  if (two_res) {
    report << "2rho_detectable: " << internal::verdict(*two_res) << '\n';
    report << "2rho_violating: " << internal::witness_text(*two_res) << '\n';
  } else {
    report << "2rho_detectable: false\n";
    report << "2rho_violating: 2 rho exceeds the sensor count\n";
  }
  if (!strict) report << "protected_sensors: " << keep.to_string() << '\n';
  report << "prerequisite: " << (ok ? "ok" : "fail") << " (" << reason << ")\n";

  out << report.str();
  const auto dir = internal::prepare_output(cfg);
  internal::open_out(dir / "check.txt") << report.str();
  internal::write_manifest(dir, "check", cfg, "-");
  return ok ? kExitOk : kExitPrerequisite;
}

struct TrialResult {
  int trial = 0;
  std::uint64_t seed = 0;
  SensorSet targets;
  double err_resilient = 0.0;
  double err_naive = 0.0;
  int invalidations = 0;
  std::string status = "ok";
  double time_resilient = 0.0;
  double time_naive = 0.0;
};

namespace internal {

inline std::string trial_name(int trial, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "trial_%04d_%s.csv", trial, suffix);
  return buf;
}

/// Shared, read-only state for all trials of one run.
struct RunContext {
  RunConfig cfg;
  Plant plant;
  EstimatorBank bank;
  LocalObserver naive;
  std::optional<MatrixXd> custom_attack;
  std::filesystem::path dir;
};

inline TrialResult run_trial(const RunContext& ctx, int trial) {
  const RunConfig& cfg = ctx.cfg;
  const LtiSystem& sys = ctx.plant.sys;
  const long T = cfg.run.horizon;
  const int rho = cfg.estimator.rho;
  TrialResult res;
  res.trial = trial;
  res.seed = cfg.run.seed + static_cast<std::uint64_t>(trial);

  const Disturbance w = cfg.disturbance == "none"
                            ? zero_disturbance(sys.l(), T)
                            : uniform_disturbance(sys.l(), T, derive_seed(res.seed, 2));
  Sequence a;
  if (cfg.attack.kind == "gaussian_bias") {
    res.targets = cfg.attack.targets
                      ? *cfg.attack.targets
                      : choose_attack_targets(ctx.plant, cfg.attack.count.value_or(rho),
                                              derive_seed(res.seed, 1));
    a = gaussian_attack(sys.m(), res.targets, cfg.attack.variance, T,
                        derive_seed(res.seed, 3), rho);
  } else if (cfg.attack.kind == "custom_sequence") {
    a = sse::custom_attack(*ctx.custom_attack, sys.m(), T, rho);
    for (int i = 0; i < sys.m(); ++i) {
      if (ctx.custom_attack->col(i).cwiseAbs().maxCoeff() > 0.0) {
        res.targets = res.targets.unite(SensorSet({i + 1}));
      }
    }
  } else {
    a = zero_attack(sys.m(), T);
  }
  std::optional<KnownInput> input;
  if (ctx.plant.input_matrix && cfg.plant.known_input != 0.0) {
    input = KnownInput{*ctx.plant.input_matrix,
                       Sequence(T, VectorXd::Constant(ctx.plant.input_matrix->cols(),
                                                      cfg.plant.known_input))};
  }
  SimulationTrace sim = simulate(sys, w.samples, a, T, input);
  sim.seed = res.seed;
  sim.w_bound = ctx.bank.options().w_bound;
  const Sequence ys = sim.compensated_measurements(sys.C());

  using clock = std::chrono::steady_clock;
  EstimatorBank bank = ctx.bank;
  EstimateTrace trace;
  auto t0 = clock::now();
  try {
    for (long t = 0; t < T; ++t) {
      trace.steps.push_back(bank.step(ys[t]));
      res.invalidations += static_cast<int>(trace.steps.back().newly_invalidated.size());
    }
  } catch (const NoValidEstimators&) {
    res.status = "no_valid_estimators";
  }
  res.time_resilient = std::chrono::duration<double>(clock::now() - t0).count();

  LocalObserver naive = ctx.naive;
  std::vector<VectorXd> naive_est;
  t0 = clock::now();
  for (long t = 0; t < T; ++t) {
    naive_est.push_back(naive.estimate());
    naive.step(ys[t]);
  }
  res.time_naive = std::chrono::duration<double>(clock::now() - t0).count();

  double e_res = 0.0, e_naive = 0.0;
  for (long t = 1; t < T; ++t) {
    const VectorXd truth = sim.x[t] - sim.known_state[t];
    if (t < static_cast<long>(trace.steps.size())) {
      e_res += (truth - trace.steps[t].estimate).squaredNorm();
    }
    e_naive += (truth - naive_est[t]).squaredNorm();
  }
  res.err_resilient = res.status == "ok" ? std::sqrt(e_res)
                                         : std::numeric_limits<double>::quiet_NaN();
  res.err_naive = std::sqrt(e_naive);

  // Estimates in the trace are for x - x_u; add the known-input part back.
  for (std::size_t t = 0; t < trace.steps.size(); ++t) {
    trace.steps[t].estimate += sim.known_state[t];
  }
  {
    auto f = open_out(ctx.dir / trial_name(trial, "sim"));
    sim.write_csv(f);
  }
  {
    auto f = open_out(ctx.dir / trial_name(trial, "estimate"));
    trace.write_csv(f, sys.n());
  }
  return res;
}

inline std::string join_indices(const SensorSet& s) {
  std::string out;
  for (int i : s.indices()) {
    if (!out.empty()) out += ' ';
    out += std::to_string(i);
  }
  return out;
}

}  // namespace internal

/// Runs the configured trials on a worker pool and writes per-trial traces,
/// summary.csv and manifest.txt. Exit 3 if any trial lost every estimator.
inline int cmd_run(const RunConfig& cfg, std::ostream& out, bool timing = false) {
  const Plant plant = build_plant(cfg);
  if (cfg.estimator.rho >= plant.sys.m()) {
    throw ParseError("estimator.rho must be smaller than the sensor count");
  }
  std::optional<MatrixXd> custom;
  if (cfg.attack.kind == "custom_sequence") {
    custom = load_matrix(resolve_path(cfg, cfg.attack.file));
  }
  const auto dir = internal::prepare_output(cfg);
  const internal::RunContext ctx{
      cfg,
      plant,
      build_bank(plant.sys, internal::bank_options(cfg, plant)),
      make_observer(plant.sys, SensorSet::full(plant.sys.m()), {}),
      std::move(custom),
      dir};

  const int trials = cfg.run.trials;
  std::vector<TrialResult> results(static_cast<std::size_t>(trials));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(trials));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int k = next++; k < trials; k = next++) {
      try {
        results[static_cast<std::size_t>(k)] = internal::run_trial(ctx, k);
      } catch (...) {
        errors[static_cast<std::size_t>(k)] = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, std::min(cfg.run.workers, trials));
  std::vector<std::thread> pool;
  for (int i = 1; i < workers; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  int failures = 0;
  {
    auto f = internal::open_out(dir / "summary.csv");
    f << "trial,seed,targets,err_resilient,err_naive,invalidations,status";
    if (timing) f << ",time_resilient,time_naive";
    f << '\n';
    for (const auto& r : results) {
      f << r.trial << ',' << r.seed << ',' << internal::join_indices(r.targets) << ','
        << format_real(r.err_resilient) << ',' << format_real(r.err_naive) << ','
        << r.invalidations << ',' << r.status;
      if (timing) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), ",%.6f,%.6f", r.time_resilient, r.time_naive);
        f << buf;
      }
      f << '\n';
      if (r.status != "ok") ++failures;
    }
  }
  std::string seeds = std::to_string(cfg.run.seed);
  if (trials > 1) seeds += ".." + std::to_string(cfg.run.seed + trials - 1);
  internal::write_manifest(dir, "run", cfg, seeds);

  out << "trials: " << trials << '\n';
  out << "observers: " << ctx.bank.observers().size() << '\n';
  out << "failed_trials: " << failures << '\n';
  out << "output: " << dir.string() << '\n';
  return failures == 0 ? kExitOk : kExitRuntime;
}

/// Writes bounds_<regime>.txt / .csv for every configured regime. Strict mode
/// requires 2 rho-detectability and reports the violating sensor set.
inline int cmd_bounds(const RunConfig& cfg, std::ostream& out) {
  const Plant plant = build_plant(cfg);
  const int m = plant.sys.m();
  const int rho = cfg.estimator.rho;
  if (rho >= m) throw ParseError("estimator.rho must be smaller than the sensor count");
  if (cfg.estimator.mode == BankMode::kStrict) {
    if (2 * rho > m) {
      throw PrerequisiteFailure("bounds: 2 rho exceeds the sensor count", "");
    }
    const auto two = chi_detectable(plant.sys, 2 * rho);
    if (!two) {
      throw PrerequisiteFailure(
          "bounds: plant is not " + std::to_string(2 * rho) +
              "-detectable; sensors " + internal::witness_text(two) +
              " are the intersection of two retained subsets and cannot detect "
              "the mode",
          two.violating->to_string());
    }
  }
  const EstimatorBank bank = build_bank(plant.sys, internal::bank_options(cfg, plant));
  const auto dir = internal::prepare_output(cfg);
  for (const NormPair pair : cfg.estimator.regimes) {
    const BoundReport report = worst_case_bound(bank, pair);
    {
      auto f = internal::open_out(dir / ("bounds_" + pair.slug() + ".txt"));
      report.write_text(f);
    }
    {
      auto f = internal::open_out(dir / ("bounds_" + pair.slug() + ".csv"));
      report.write_csv(f);
    }
    out << "bound " << pair.name() << ": " << format_real(report.total) << '\n';
  }
  internal::write_manifest(dir, "bounds", cfg, "-");
  return kExitOk;
}

/// Two executions with equal measurements and diverging states, sampled at
/// t = 0..horizon.
inline int cmd_impossible(const RunConfig& cfg, std::ostream& out) {
  const Plant plant = build_plant(cfg);
  const IndistinguishablePair pair =
      indistinguishable_pair(plant.sys, cfg.estimator.rho, cfg.run.horizon);
  const auto dir = internal::prepare_output(cfg);
  {
    auto f = internal::open_out(dir / "trajectory_1.csv");
    pair.first.write_csv(f);
  }
  {
    auto f = internal::open_out(dir / "trajectory_2.csv");
    pair.second.write_csv(f);
  }
  std::ostringstream cert;
  pair.write_certificate(cert);
  internal::open_out(dir / "certificate.txt") << cert.str();
  internal::write_manifest(dir, "impossible", cfg, "-");
  out << cert.str();
  return kExitOk;
}

/// Maps library errors onto exit codes.
template <class F>
int guarded(F&& body, std::ostream& err) {
  try {
    return body();
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitParse;
  } catch (const PrerequisiteFailure& e) {
    err << "prerequisite failure: " << e.what() << '\n';
    return kExitPrerequisite;
  } catch (const PreconditionHolds& e) {
    err << "refused: " << e.what() << '\n';
    return kExitPrerequisite;
  } catch (const NotDetectable& e) {
    err << "prerequisite failure: " << e.what() << '\n';
    return kExitPrerequisite;
  } catch (const NoViableSubsets& e) {
    err << "prerequisite failure: " << e.what() << '\n';
    return kExitPrerequisite;
  } catch (const BudgetExceeded& e) {
    err << "error: " << e.what() << '\n';
    return kExitParse;
  } catch (const std::exception& e) {
    err << "runtime failure: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace sse
