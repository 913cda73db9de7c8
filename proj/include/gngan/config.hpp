#pragma once

// Flat `key = value` experiment configuration. One entry per line, `#` starts a
// comment. Unknown keys are rejected.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gngan/csv.hpp"
#include "gngan/error.hpp"
#include "gngan/model.hpp"
#include "gngan/synthdata.hpp"
#include "gngan/trainer.hpp"

namespace gngan {

enum class DatasetKind : std::uint8_t { grid25, tri1d, csv };

struct ExperimentConfig {
  DatasetKind dataset = DatasetKind::grid25;
  std::string csv_path;          // dataset = csv:<path>
  std::string eval_centers_path;  // optional mixture centers for csv datasets
  double eval_sigma = 0.0;
  HyperParams hp;
  ModelShape shape = shape_2d();
  std::size_t dataset_size = 50000;
  std::size_t eval_every = 10000;
  std::size_t log_every = 100;
  std::size_t eval_samples = 2000;
  std::string out_dir = "runs";
  std::vector<std::uint64_t> seeds{0};
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ValueError(key + ": expected a number, got '" + v + "'");
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ValueError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ValueError(key + ": out of range '" + v + "'");
  }
}

inline bool parse_flag(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ValueError(key + ": expected true or false, got '" + v + "'");
}

/// "3", "1,2,5" or "1..8".
inline std::vector<std::uint64_t> parse_seed_list(const std::string& key, const std::string& v) {
  std::vector<std::uint64_t> out;
  if (const auto dots = v.find(".."); dots != std::string::npos) {
    const auto lo = parse_count(key, trim(v.substr(0, dots)));
    const auto hi = parse_count(key, trim(v.substr(dots + 2)));
    if (hi < lo) throw ValueError(key + ": empty range '" + v + "'");
    for (auto s = lo; s <= hi; ++s) out.push_back(s);
    return out;
  }
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_count(key, trim(item)));
  if (out.empty()) throw ValueError(key + ": at least one seed required");
  return out;
}

}  // namespace detail

inline KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto content = detail::trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ValueError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    auto key = detail::trim(content.substr(0, eq));
    if (key.empty()) throw ValueError("config line " + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::move(key), detail::trim(content.substr(eq + 1)));
  }
  return out;
}

inline KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValueError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

/// Defaults for a dataset before any key is applied.
inline ExperimentConfig dataset_defaults(DatasetKind kind) {
  ExperimentConfig c;
  c.dataset = kind;
  if (kind == DatasetKind::tri1d) {
    c.shape = shape_1d();
    c.hp.latent_dim = 1;
    c.dataset_size = 20000;
    c.hp.epochs = 100;
    c.eval_every = 2000;
  }
  return c;
}

inline void apply_key(ExperimentConfig& c, const std::string& key, const std::string& v) {
  using namespace detail;
  auto& hp = c.hp;
  if (key == "dataset") {
    if (v == "grid25") {
      c.dataset = DatasetKind::grid25;
    } else if (v == "tri1d") {
      c.dataset = DatasetKind::tri1d;
    } else if (v.rfind("csv:", 0) == 0 && v.size() > 4) {
      c.dataset = DatasetKind::csv;
      c.csv_path = v.substr(4);
    } else {
      throw ValueError("dataset: expected grid25, tri1d or csv:<path>, got '" + v + "'");
    }
  } else if (key == "variant") {
    hp.variant = parse_generator_variant(v);
  } else if (key == "loss") {
    hp.loss = parse_loss_variant(v);
  } else if (key == "lambda_p") {
    hp.lambda_p = parse_real(key, v);
  } else if (key == "lambda_r") {
    hp.lambda_r = parse_real(key, v);
  } else if (key == "lambda_m1") {
    hp.lambda_m1 = parse_real(key, v);
  } else if (key == "lambda_m2") {
    hp.lambda_m2 = parse_real(key, v);
  } else if (key == "alpha") {
    hp.alpha = parse_real(key, v);
  } else if (key == "batch_size") {
    hp.batch_size = parse_count(key, v);
  } else if (key == "latent_dim") {
    hp.latent_dim = parse_count(key, v);
  } else if (key == "epochs") {
    hp.epochs = parse_count(key, v);
  } else if (key == "lr") {
    hp.lr = parse_real(key, v);
  } else if (key == "beta1") {
    hp.beta1 = parse_real(key, v);
  } else if (key == "beta2") {
    hp.beta2 = parse_real(key, v);
  } else if (key == "lr_decay_every") {
    hp.lr_decay_every = parse_count(key, v);
  } else if (key == "lr_decay_base") {
    hp.lr_decay_base = parse_real(key, v);
  } else if (key == "seed") {
    c.seeds = {parse_count(key, v)};
  } else if (key == "seeds") {
    c.seeds = parse_seed_list(key, v);
  } else if (key == "latent_affinity_grad") {
    hp.latent_affinity_grad = parse_flag(key, v);
  } else if (key == "gm_vector_form") {
    hp.gm_vector_form = parse_flag(key, v);
  } else if (key == "eval_every") {
    c.eval_every = parse_count(key, v);
  } else if (key == "log_every") {
    c.log_every = parse_count(key, v);
  } else if (key == "eval_samples") {
    c.eval_samples = parse_count(key, v);
  } else if (key == "dataset_size") {
    c.dataset_size = parse_count(key, v);
  } else if (key == "out_dir") {
    c.out_dir = v;
  } else if (key == "eg_hidden_layers") {
    c.shape.eg_hidden_layers = parse_count(key, v);
  } else if (key == "eg_hidden_width") {
    c.shape.eg_hidden_width = parse_count(key, v);
  } else if (key == "d_hidden_layers") {
    c.shape.d_hidden_layers = parse_count(key, v);
  } else if (key == "d_hidden_width") {
    c.shape.d_hidden_width = parse_count(key, v);
  } else if (key == "data_dim") {
    c.shape.data_dim = parse_count(key, v);
  } else if (key == "eval_centers") {
    c.eval_centers_path = v;
  } else if (key == "eval_sigma") {
    c.eval_sigma = parse_real(key, v);
  } else {
    throw ValueError("unknown config key '" + key + "'");
  }
}

inline void validate(const ExperimentConfig& c) {
  c.hp.validate();
  if (c.seeds.empty()) throw ValueError("seeds: at least one seed required");
  if (c.eval_samples < 1) throw ValueError("eval_samples: must be >= 1");
  if (c.shape.eg_hidden_width < 1 || c.shape.d_hidden_width < 1) throw ValueError("hidden widths must be >= 1");
  if (c.dataset == DatasetKind::csv) {
    if (!std::filesystem::exists(c.csv_path)) throw ValueError("dataset: file not found " + c.csv_path);
    if (!c.eval_centers_path.empty()) {
      if (!std::filesystem::exists(c.eval_centers_path)) {
        throw ValueError("eval_centers: file not found " + c.eval_centers_path);
      }
      if (!(c.eval_sigma > 0.0)) throw ValueError("eval_sigma: must be > 0 when eval_centers is set");
    }
  } else if (c.dataset_size < c.hp.batch_size) {
    throw ValueError("dataset_size: must be >= batch_size");
  }
}

/// Dataset defaults, then the file's keys, then `overrides`.
inline ExperimentConfig build_config(const KeyValues& file, const KeyValues& overrides = {}) {
  std::map<std::string, std::string> merged;
  for (const auto& [k, v] : file) merged[k] = v;
  for (const auto& [k, v] : overrides) merged[k] = v;

  ExperimentConfig probe;
  if (auto it = merged.find("dataset"); it != merged.end()) apply_key(probe, "dataset", it->second);
  ExperimentConfig c = dataset_defaults(probe.dataset);
  c.csv_path = probe.csv_path;
  for (const auto& [k, v] : merged) apply_key(c, k, v);
  c.hp.seed = c.seeds.front();
  validate(c);
  return c;
}

inline ExperimentConfig parse_config(std::string_view text, const KeyValues& overrides = {}) {
  return build_config(parse_key_values(text), overrides);
}

inline std::string dataset_string(const ExperimentConfig& c) {
  switch (c.dataset) {
    case DatasetKind::grid25: return "grid25";
    case DatasetKind::tri1d: return "tri1d";
    case DatasetKind::csv: return "csv:" + c.csv_path;
  }
  return "";
}

/// Every key that influences the trained model, in a fixed order. Excludes seeds,
/// output location and logging cadence.
inline std::string canonical_text(const ExperimentConfig& c) {
  const auto& hp = c.hp;
  std::ostringstream os;
  os << "dataset=" << dataset_string(c) << '\n'
     << "variant=" << to_string(hp.variant) << '\n'
     << "loss=" << to_string(hp.loss) << '\n'
     << "lambda_p=" << format_double(hp.lambda_p) << '\n'
     << "lambda_r=" << format_double(hp.lambda_r) << '\n'
     << "lambda_m1=" << format_double(hp.lambda_m1) << '\n'
     << "lambda_m2=" << format_double(hp.lambda_m2) << '\n'
     << "alpha=" << format_double(hp.alpha) << '\n'
     << "batch_size=" << hp.batch_size << '\n'
     << "latent_dim=" << hp.latent_dim << '\n'
     << "epochs=" << hp.epochs << '\n'
     << "lr=" << format_double(hp.lr) << '\n'
     << "beta1=" << format_double(hp.beta1) << '\n'
     << "beta2=" << format_double(hp.beta2) << '\n'
     << "lr_decay_every=" << hp.lr_decay_every << '\n'
     << "lr_decay_base=" << format_double(hp.lr_decay_base) << '\n'
     << "latent_affinity_grad=" << (hp.latent_affinity_grad ? "true" : "false") << '\n'
     << "gm_vector_form=" << (hp.gm_vector_form ? "true" : "false") << '\n'
     << "dataset_size=" << c.dataset_size << '\n'
     << "data_dim=" << c.shape.data_dim << '\n'
     << "eg_hidden_layers=" << c.shape.eg_hidden_layers << '\n'
     << "eg_hidden_width=" << c.shape.eg_hidden_width << '\n'
     << "d_hidden_layers=" << c.shape.d_hidden_layers << '\n'
     << "d_hidden_width=" << c.shape.d_hidden_width << '\n';
  if (!c.eval_centers_path.empty()) {
    os << "eval_centers=" << c.eval_centers_path << '\n' << "eval_sigma=" << format_double(c.eval_sigma) << '\n';
  }
  return os.str();
}

/// Full configuration as parseable text.
inline std::string to_text(const ExperimentConfig& c) {
  std::ostringstream os;
  os << canonical_text(c) << "eval_every=" << c.eval_every << '\n'
     << "log_every=" << c.log_every << '\n'
     << "eval_samples=" << c.eval_samples << '\n'
     << "out_dir=" << c.out_dir << '\n'
     << "seeds=";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) os << (i ? "," : "") << c.seeds[i];
  os << '\n';
  return os.str();
}

/// FNV-1a over the canonical text.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_text(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Mixture used to score generated samples, if the dataset has one.
inline std::optional<GaussianMixtureSpec> evaluation_mixture(const ExperimentConfig& c) {
  switch (c.dataset) {
    case DatasetKind::grid25: return grid25_spec();
    case DatasetKind::tri1d: return tri1d_spec();
    case DatasetKind::csv:
      if (c.eval_centers_path.empty()) return std::nullopt;
      return GaussianMixtureSpec{read_points_csv(c.eval_centers_path), c.eval_sigma};
  }
  return std::nullopt;
}

inline TrainConfig to_train_config(const ExperimentConfig& c, std::uint64_t seed) {
  TrainConfig t;
  t.hp = c.hp;
  t.hp.seed = seed;
  t.shape = c.shape;
  t.mixture = evaluation_mixture(c);
  if (c.dataset == DatasetKind::csv) t.points = read_points_csv(c.csv_path);
  t.dataset_size = c.dataset_size;
  t.eval_every = c.eval_every;
  t.log_every = c.log_every;
  t.eval_samples = c.eval_samples;
  return t;
}

}  // namespace gngan
