#pragma once
// Run configuration: one flat JSON object. Every key is optional; unknown
// keys are rejected so typos do not silently fall back to defaults.
//
//   seed             integer
//   dataset          "lines" | "shapes" | "csv"
//   csv_path         input file when dataset == "csv"
//   n_events         events per domain
//   n_points         points per event
//   noise_sigma      shapes-domain point jitter
//   batch, iters, T, F
//   beta_1, beta_T   default: linear range scaled to T
//   lr_initial, lr_final
//   encoder_hidden, decoder_hidden   layer widths
//   resolution       JSD voxels per axis
//   n_bins           fitted-sigma bins over y in [0, 2]
//   keep_fraction    outlier trim for CD(clean)
//   svg_events       events drawn per scatter figure
//   data_dir, checkpoint_dir, report_dir
#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pctrans/binary_io.hpp"
#include "pctrans/errors.hpp"
#include "pctrans/schedule.hpp"
#include "pctrans/training.hpp"

namespace pctrans {

struct RunConfig {
  std::uint64_t seed = 0;
  std::string dataset = "lines";
  std::string csv_path;
  std::size_t n_events = 1000;
  std::size_t n_points = 256;
  double noise_sigma = 0.05;
  std::size_t batch = 128;
  std::int64_t iters = 1'000'000;
  int T = 256;
  std::size_t F = 256;
  std::optional<double> beta_1;
  std::optional<double> beta_T;
  double lr_initial = 1e-3;
  double lr_final = 1e-4;
  std::vector<std::size_t> encoder_hidden{128, 256};
  std::vector<std::size_t> decoder_hidden{256, 256, 256};
  std::size_t resolution = 28;
  std::size_t n_bins = 4;
  double keep_fraction = 0.99;
  std::size_t svg_events = 4;
  std::string data_dir = "data";
  std::string checkpoint_dir = "checkpoints";
  std::string report_dir = "reports";

  diffusion::TrainConfig train_config(std::size_t dim) const {
    diffusion::TrainConfig c;
    c.batch = batch;
    c.iters = iters;
    c.T = T;
    const auto [b1, bT] = diffusion::default_beta_range(T);
    c.beta_1 = beta_1.value_or(b1);
    c.beta_T = beta_T.value_or(bT);
    c.lr_initial = lr_initial;
    c.lr_final = lr_final;
    c.network.dim = dim;
    c.network.latent = F;
    c.network.encoder_hidden = encoder_hidden;
    c.network.decoder_hidden = decoder_hidden;
    return c;
  }

  void validate() const {
    if (dataset != "lines" && dataset != "shapes" && dataset != "csv") {
      throw ConfigError("dataset must be one of lines, shapes, csv; got '" + dataset + "'");
    }
    if (dataset == "csv" && csv_path.empty()) throw ConfigError("dataset 'csv' requires csv_path");
    if (n_events == 0 || n_points == 0) throw ConfigError("n_events and n_points must be positive");
    if (dataset == "shapes" && n_events % 2 != 0) throw ConfigError("shapes dataset needs an even n_events");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
    if (resolution == 0 || n_bins == 0) throw ConfigError("resolution and n_bins must be positive");
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw ConfigError("keep_fraction must lie in (0, 1]");
    train_config(3).validate();
  }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"seed", c.seed},
       {"dataset", c.dataset},
       {"csv_path", c.csv_path},
       {"n_events", c.n_events},
       {"n_points", c.n_points},
       {"noise_sigma", c.noise_sigma},
       {"batch", c.batch},
       {"iters", c.iters},
       {"T", c.T},
       {"F", c.F},
       {"lr_initial", c.lr_initial},
       {"lr_final", c.lr_final},
       {"encoder_hidden", c.encoder_hidden},
       {"decoder_hidden", c.decoder_hidden},
       {"resolution", c.resolution},
       {"n_bins", c.n_bins},
       {"keep_fraction", c.keep_fraction},
       {"svg_events", c.svg_events},
       {"data_dir", c.data_dir},
       {"checkpoint_dir", c.checkpoint_dir},
       {"report_dir", c.report_dir}};
  j["beta_1"] = c.beta_1 ? nlohmann::json(*c.beta_1) : nlohmann::json(nullptr);
  j["beta_T"] = c.beta_T ? nlohmann::json(*c.beta_T) : nlohmann::json(nullptr);
}

namespace detail {
template <typename T>
void take(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}
template <typename T>
void take(const nlohmann::json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}
}  // namespace detail

inline void from_json(const nlohmann::json& j, RunConfig& c) {
  static const std::vector<std::string> known{
      "seed",       "dataset",        "csv_path",       "n_events",      "n_points",   "noise_sigma",
      "batch",      "iters",          "T",              "F",             "beta_1",     "beta_T",
      "lr_initial", "lr_final",       "encoder_hidden", "decoder_hidden", "resolution", "n_bins",
      "keep_fraction", "svg_events",  "data_dir",       "checkpoint_dir", "report_dir"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown config key '" + key + "'");
  }
  try {
    detail::take(j, "seed", c.seed);
    detail::take(j, "dataset", c.dataset);
    detail::take(j, "csv_path", c.csv_path);
    detail::take(j, "n_events", c.n_events);
    detail::take(j, "n_points", c.n_points);
    detail::take(j, "noise_sigma", c.noise_sigma);
    detail::take(j, "batch", c.batch);
    detail::take(j, "iters", c.iters);
    detail::take(j, "T", c.T);
    detail::take(j, "F", c.F);
    detail::take(j, "beta_1", c.beta_1);
    detail::take(j, "beta_T", c.beta_T);
    detail::take(j, "lr_initial", c.lr_initial);
    detail::take(j, "lr_final", c.lr_final);
    detail::take(j, "encoder_hidden", c.encoder_hidden);
    detail::take(j, "decoder_hidden", c.decoder_hidden);
    detail::take(j, "resolution", c.resolution);
    detail::take(j, "n_bins", c.n_bins);
    detail::take(j, "keep_fraction", c.keep_fraction);
    detail::take(j, "svg_events", c.svg_events);
    detail::take(j, "data_dir", c.data_dir);
    detail::take(j, "checkpoint_dir", c.checkpoint_dir);
    detail::take(j, "report_dir", c.report_dir);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
}

inline RunConfig load_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(path));
  } catch (const nlohmann::json::parse_error& ex) {
    throw ConfigError(path + ": " + ex.what());
  }
  RunConfig c = j.get<RunConfig>();
  c.validate();
  return c;
}

// Hash of the canonical (sorted-key) dump.
inline std::string config_hash(const RunConfig& c) { return io::hex64(io::fnv1a(nlohmann::json(c).dump())); }

}  // namespace pctrans
