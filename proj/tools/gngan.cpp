// gngan: train, evaluate and inspect GN-GAN runs on synthetic mixtures.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gngan/checkpoint.hpp"
#include "gngan/config.hpp"
#include "gngan/eval.hpp"
#include "gngan/experiment.hpp"

namespace fs = std::filesystem;
using namespace gngan;

namespace {

/// Flags shared by the subcommands that need an experiment configuration.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::string> seed, seeds, out, dataset, variant, epochs, loss, lambda_p, lambda_r, lambda_m1,
      lambda_m2, alpha, batch_size, latent_dim, lr, beta1, beta2, lr_decay_every, lr_decay_base;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "key = value configuration file");
    app->add_option("--set", sets, "extra key=value override (repeatable)");
    app->add_option("--seed", seed, "single run seed");
    app->add_option("--seeds", seeds, "seed list, e.g. 1..8 or 1,2,3");
    app->add_option("--out", out, "output directory");
    app->add_option("--dataset", dataset, "grid25, tri1d or csv:<path>");
    app->add_option("--variant", variant, "standard_gan, gm, ne_only or gm_ne");
    app->add_option("--epochs", epochs);
    app->add_option("--loss", loss, "log or hinge");
    app->add_option("--lambda-p", lambda_p);
    app->add_option("--lambda-r", lambda_r);
    app->add_option("--lambda-m1", lambda_m1);
    app->add_option("--lambda-m2", lambda_m2);
    app->add_option("--alpha", alpha);
    app->add_option("--batch-size", batch_size);
    app->add_option("--latent-dim", latent_dim);
    app->add_option("--lr", lr);
    app->add_option("--beta1", beta1);
    app->add_option("--beta2", beta2);
    app->add_option("--lr-decay-every", lr_decay_every);
    app->add_option("--lr-decay-base", lr_decay_base);
  }

  ExperimentConfig build() const {
    KeyValues file;
    if (!config_path.empty()) file = read_key_values(config_path);
    KeyValues over;
    auto put = [&](const char* key, const std::optional<std::string>& v) {
      if (v) over.emplace_back(key, *v);
    };
    put("seed", seed);
    put("seeds", seeds);
    put("out_dir", out);
    put("dataset", dataset);
    put("variant", variant);
    put("epochs", epochs);
    put("loss", loss);
    put("lambda_p", lambda_p);
    put("lambda_r", lambda_r);
    put("lambda_m1", lambda_m1);
    put("lambda_m2", lambda_m2);
    put("alpha", alpha);
    put("batch_size", batch_size);
    put("latent_dim", latent_dim);
    put("lr", lr);
    put("beta1", beta1);
    put("beta2", beta2);
    put("lr_decay_every", lr_decay_every);
    put("lr_decay_base", lr_decay_base);
    for (const auto& kv : sets) {
      const auto parsed = parse_key_values(kv);
      over.insert(over.end(), parsed.begin(), parsed.end());
    }
    return build_config(file, over);
  }
};

void print_report(const ModeReport& r) {
  std::printf("covered_modes      %zu\n", r.covered_modes);
  std::printf("registered_points  %zu / %zu\n", r.registered_points, r.n_generated);
  std::printf("tv_true            %s\n", r.tv_true ? format_double(*r.tv_true).c_str() : "undefined");
  std::printf("tv_differential    %s\n", r.tv_differential ? format_double(*r.tv_differential).c_str() : "undefined");
}

int cmd_train(const ConfigFlags& flags) {
  const auto cfg = flags.build();
  const fs::path base = cfg.out_dir;
  const auto runs = run_seeds(cfg, base, thread_cap());
  int status = 0;
  for (const auto& r : runs) {
    if (r.aborted) {
      std::fprintf(stderr, "seed %llu: %s\n", static_cast<unsigned long long>(r.seed), r.error.c_str());
      status = 1;
    } else if (r.report) {
      std::printf("seed %llu -> %s: %zu modes, %zu points\n", static_cast<unsigned long long>(r.seed),
                  r.dir.string().c_str(), r.report->covered_modes, r.report->registered_points);
    }
  }
  if (cfg.seeds.size() > 1) {
    std::ofstream(base / "runs.csv") << [&] {
      std::ostringstream os;
      write_runs_csv(os, runs);
      return os.str();
    }();
    std::ofstream summary(base / "summary.csv");
    write_summary_csv(summary, summarize(runs));
  }
  return status;
}

int cmd_eval(const ConfigFlags& flags, const std::string& checkpoint_path, bool force) {
  const auto cfg = flags.build();
  const auto ckpt = load_checkpoint(checkpoint_path);
  check_config_hash(ckpt, config_hash(cfg), force);
  const auto tc = to_train_config(cfg, ckpt.seed);
  if (!tc.mixture) {
    std::fprintf(stderr, "dataset has no mixture to evaluate against (set eval_centers and eval_sigma)\n");
    return 2;
  }
  // Rebuilding the trainer regenerates the seed's training set for the reference proportions.
  const Trainer reference(tc);
  const auto report = Trainer::evaluate_generator(ckpt.model.generator, *tc.mixture, tc.hp, tc.eval_samples,
                                                  reference.reference_proportions());
  print_report(report);

  const fs::path out = flags.out ? fs::path(*flags.out) : fs::path(checkpoint_path).parent_path();
  if (!out.empty()) fs::create_directories(out);
  std::ofstream rep(out / "mode_report.csv");
  write_mode_report_header(rep);
  write_mode_report_row(rep, report);
  if (ckpt.model.discriminator.in_dim() == 1) {
    const auto xs = linspace(-4.0, 4.0, 401);
    std::ofstream curve(out / "score_curve.csv");
    write_score_curve_csv(curve, score_curve_1d(ckpt.model.discriminator, xs));
  }
  return 0;
}

std::vector<double> split_numbers(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

int cmd_gradmap(const std::string& checkpoint_path, const std::string& bounds, const std::string& resolution,
                const std::string& out_path) {
  const auto ckpt = load_checkpoint(checkpoint_path);
  const auto b = split_numbers(bounds);
  const auto res = split_numbers(resolution);
  if (b.size() != 4 && b.size() != 2) throw ValueError("--bounds: expected xmin,xmax[,ymin,ymax]");
  if (res.empty() || res.size() > 2) throw ValueError("--resolution: expected n or nx,ny");
  GridBounds gb{b[0], b[1], b.size() == 4 ? b[2] : b[0], b.size() == 4 ? b[3] : b[1]};
  const auto nx = static_cast<std::size_t>(res[0]);
  const auto ny = static_cast<std::size_t>(res.size() == 2 ? res[1] : res[0]);
  const auto field = gradient_map(ckpt.model.discriminator, gb, nx, ny);
  if (out_path == "-") {
    write_gradient_map_csv(std::cout, field);
  } else {
    std::ofstream os(out_path);
    write_gradient_map_csv(os, field);
  }
  return 0;
}

int cmd_ablate(const ConfigFlags& flags) {
  const auto cfg = flags.build();
  const fs::path base = cfg.out_dir;
  const auto arms = run_ablation(cfg, base, thread_cap());
  fs::create_directories(base);
  std::ofstream os(base / "ablation_summary.csv");
  write_ablation_csv(os, arms);
  int status = 0;
  for (const auto& a : arms) {
    const auto& modes = a.summary.front();
    std::printf("%-13s covered_modes %.2f +- %.2f (n=%zu)\n", std::string(to_string(a.variant)).c_str(), modes.mean,
                modes.std, modes.n);
    for (const auto& r : a.runs)
      if (r.aborted) status = 1;
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GN-GAN synthetic-mixture experiments"};
  app.require_subcommand(1);

  ConfigFlags train_flags, eval_flags, ablate_flags;
  auto* train = app.add_subcommand("train", "train one or more seeds");
  train_flags.attach(train);

  auto* eval = app.add_subcommand("eval", "mode report for a checkpoint");
  eval_flags.attach(eval);
  std::string eval_ckpt;
  bool force = false;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint.bin")->required();
  eval->add_flag("--force", force, "ignore a configuration hash mismatch");

  auto* gradmap = app.add_subcommand("gradmap", "discriminator gradient field as CSV");
  std::string gm_ckpt, bounds = "-5,5,-5,5", resolution = "40", gm_out = "gradient_map.csv";
  gradmap->add_option("--checkpoint", gm_ckpt, "checkpoint.bin")->required();
  gradmap->add_option("--bounds", bounds, "xmin,xmax,ymin,ymax");
  gradmap->add_option("--resolution", resolution, "n or nx,ny lattice points");
  gradmap->add_option("--out", gm_out, "output CSV ('-' for stdout)");

  auto* ablate = app.add_subcommand("ablate", "run standard_gan, ne_only, gm and gm_ne arms");
  ablate_flags.attach(ablate);

  CLI11_PARSE(app, argc, argv);
  try {
    if (train->parsed()) return cmd_train(train_flags);
    if (eval->parsed()) return cmd_eval(eval_flags, eval_ckpt, force);
    if (gradmap->parsed()) return cmd_gradmap(gm_ckpt, bounds, resolution, gm_out);
    if (ablate->parsed()) return cmd_ablate(ablate_flags);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
