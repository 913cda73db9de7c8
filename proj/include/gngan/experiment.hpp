#pragma once

// Run orchestration behind the command-line tool: one directory per run,
// metrics streamed to CSV, multi-seed aggregation and the ablation sweep.

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "gngan/checkpoint.hpp"
#include "gngan/config.hpp"
#include "gngan/eval.hpp"
#include "gngan/trainer.hpp"

namespace gngan {

namespace fs = std::filesystem;

struct RunOutcome {
  std::uint64_t seed = 0;
  fs::path dir;
  std::optional<ModeReport> report;
  bool aborted = false;
  std::string error;
};

inline void write_metrics_header(std::ostream& os) {
  os << "iteration,v_ae,v_d,v_g,lr,covered_modes,registered_points,tv_true,tv_differential,"
        "grad_norm_ae,grad_norm_d,grad_norm_g\n";
}

inline void write_metrics_row(std::ostream& os, const MetricsRow& r) {
  os << r.iteration << ',' << format_double(r.step.v_ae) << ',' << format_double(r.step.v_d) << ','
     << format_double(r.step.v_g) << ',' << format_double(r.lr) << ',';
  if (r.report) {
    os << r.report->covered_modes << ',' << r.report->registered_points << ',' << format_optional(r.report->tv_true)
       << ',' << format_optional(r.report->tv_differential);
  } else {
    os << ",,,";
  }
  os << ',' << format_double(r.step.grad_norm_ae) << ',' << format_double(r.step.grad_norm_d) << ','
     << format_double(r.step.grad_norm_g) << '\n';
}

inline Checkpoint make_checkpoint(const Trainer& t, std::uint64_t hash) {
  return {kCheckpointVersion, t.model(), t.iteration(), t.config().hp.seed, hash};
}

/// Trains one seed into `dir`: config.txt, metrics.csv, checkpoint.bin, mode_report.csv.
/// A non-finite loss leaves checkpoint.bin.aborted and returns with `aborted` set.
inline RunOutcome run_training(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& dir) {
  RunOutcome out;
  out.seed = seed;
  out.dir = dir;
  fs::create_directories(dir);
  {
    ExperimentConfig run_cfg = cfg;
    run_cfg.seeds = {seed};
    run_cfg.hp.seed = seed;
    run_cfg.out_dir = dir.string();
    std::ofstream(dir / "config.txt") << to_text(run_cfg);
  }
  const auto hash = config_hash(cfg);
  Trainer trainer(to_train_config(cfg, seed));

  std::ofstream metrics(dir / "metrics.csv", std::ios::trunc);
  write_metrics_header(metrics);
  try {
    trainer.run([&](const MetricsRow& row) { write_metrics_row(metrics, row); });
  } catch (const TrainingAborted& e) {
    metrics.flush();
    save_checkpoint(dir / "checkpoint.bin.aborted", make_checkpoint(trainer, hash));
    out.aborted = true;
    out.error = e.what();
    return out;
  }
  metrics.flush();
  save_checkpoint(dir / "checkpoint.bin", make_checkpoint(trainer, hash));
  out.report = trainer.evaluate();
  if (out.report) {
    std::ofstream rep(dir / "mode_report.csv", std::ios::trunc);
    write_mode_report_header(rep);
    write_mode_report_row(rep, *out.report);
  }
  return out;
}

/// Concurrent runs allowed; GNGAN_THREADS caps it, default is the hardware thread count.
inline std::size_t thread_cap() {
  if (const char* env = std::getenv("GNGAN_THREADS")) {
    try {
      const auto n = std::stoul(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs `jobs` on up to `threads` workers. Results keep job order.
template <class Job>
std::vector<RunOutcome> run_parallel(const std::vector<Job>& jobs, std::size_t threads) {
  std::vector<RunOutcome> results(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        results[i] = jobs[i]();
      } catch (const std::exception& e) {
        results[i].aborted = true;
        results[i].error = e.what();
      }
    }
  };
  const std::size_t n = std::min(std::max<std::size_t>(threads, 1), jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return results;
}

/// One run per seed. A single seed trains directly into `base`; several go to base/seed_<s>.
inline std::vector<RunOutcome> run_seeds(const ExperimentConfig& cfg, const fs::path& base, std::size_t threads) {
  std::vector<std::function<RunOutcome()>> jobs;
  for (auto seed : cfg.seeds) {
    const fs::path dir = cfg.seeds.size() == 1 ? base : base / ("seed_" + std::to_string(seed));
    jobs.emplace_back([&cfg, seed, dir] { return run_training(cfg, seed, dir); });
  }
  return run_parallel(jobs, threads);
}

struct MetricSummary {
  std::string name;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for a single run
  std::size_t n = 0;
};

inline MetricSummary summarize_values(std::string name, const std::vector<double>& v) {
  MetricSummary s{std::move(name), 0.0, 0.0, v.size()};
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

/// Mean and std of the mode-report metrics over completed runs.
inline std::vector<MetricSummary> summarize(const std::vector<RunOutcome>& runs) {
  std::vector<double> modes, points, tv, tvd;
  for (const auto& r : runs) {
    if (!r.report) continue;
    modes.push_back(static_cast<double>(r.report->covered_modes));
    points.push_back(static_cast<double>(r.report->registered_points));
    if (r.report->tv_true) tv.push_back(*r.report->tv_true);
    if (r.report->tv_differential) tvd.push_back(*r.report->tv_differential);
  }
  return {summarize_values("covered_modes", modes), summarize_values("registered_points", points),
          summarize_values("tv_true", tv), summarize_values("tv_differential", tvd)};
}

inline void write_runs_csv(std::ostream& os, const std::vector<RunOutcome>& runs) {
  os << "seed,status,covered_modes,registered_points,tv_true,tv_differential\n";
  for (const auto& r : runs) {
    os << r.seed << ',' << (r.aborted ? "aborted" : "ok") << ',';
    if (r.report) {
      os << r.report->covered_modes << ',' << r.report->registered_points << ','
         << format_optional(r.report->tv_true) << ',' << format_optional(r.report->tv_differential);
    } else {
      os << ",,,";
    }
    os << '\n';
  }
}

inline void write_summary_csv(std::ostream& os, const std::vector<MetricSummary>& s) {
  os << "metric,mean,std,n\n";
  for (const auto& m : s) os << m.name << ',' << format_double(m.mean) << ',' << format_double(m.std) << ',' << m.n << '\n';
}

inline constexpr GeneratorVariant kAblationArms[] = {GeneratorVariant::standard_gan, GeneratorVariant::ne_only,
                                                     GeneratorVariant::gm, GeneratorVariant::gm_ne};

struct ArmResult {
  GeneratorVariant variant;
  std::vector<RunOutcome> runs;
  std::vector<MetricSummary> summary;
};

/// Every ablation arm over every seed, into base/<arm>/seed_<s>.
inline std::vector<ArmResult> run_ablation(const ExperimentConfig& cfg, const fs::path& base, std::size_t threads) {
  std::vector<ExperimentConfig> arm_cfgs;
  for (auto v : kAblationArms) {
    auto c = cfg;
    c.hp.variant = v;
    arm_cfgs.push_back(std::move(c));
  }
  std::vector<std::function<RunOutcome()>> jobs;
  for (const auto& c : arm_cfgs) {
    for (auto seed : c.seeds) {
      const fs::path dir = base / std::string(to_string(c.hp.variant)) / ("seed_" + std::to_string(seed));
      jobs.emplace_back([&c, seed, dir] { return run_training(c, seed, dir); });
    }
  }
  const auto all = run_parallel(jobs, threads);
  std::vector<ArmResult> out;
  std::size_t i = 0;
  for (const auto& c : arm_cfgs) {
    ArmResult a{c.hp.variant, {}, {}};
    for (std::size_t k = 0; k < c.seeds.size(); ++k) a.runs.push_back(all[i++]);
    a.summary = summarize(a.runs);
    out.push_back(std::move(a));
  }
  return out;
}

inline void write_ablation_csv(std::ostream& os, const std::vector<ArmResult>& arms) {
  os << "variant,metric,mean,std,n\n";
  for (const auto& a : arms) {
    for (const auto& m : a.summary) {
      os << to_string(a.variant) << ',' << m.name << ',' << format_double(m.mean) << ',' << format_double(m.std) << ','
         << m.n << '\n';
    }
  }
}

}  // namespace gngan
