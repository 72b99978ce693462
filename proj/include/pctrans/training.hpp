#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "pctrans/dpm.hpp"
#include "pctrans/optim.hpp"

namespace pctrans::diffusion {

inline constexpr std::uint64_t kTrainStream = 0x5452414E;  // "TRAN"

struct TrainConfig {
  std::size_t batch = 128;
  std::int64_t iters = 1'000'000;
  int T = 256;
  double beta_1 = 1e-4;
  double beta_T = 0.02;
  double lr_initial = 1e-3;
  double lr_final = 1e-4;
  NetworkShape network;  // network.latent is F

  void validate() const {
    if (batch == 0) throw ConfigError("batch must be positive");
    if (iters < 0) throw ConfigError("iters must be >= 0");
    if (!(lr_initial > 0.0 && lr_final > 0.0)) throw ConfigError("learning rates must be positive");
    network.validate();
    make_schedule(T, beta_1, beta_T);
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch", c.batch},           {"iters", c.iters},   {"T", c.T},
       {"beta_1", c.beta_1},         {"beta_T", c.beta_T}, {"lr_initial", c.lr_initial},
       {"lr_final", c.lr_final},     {"network", c.network}};
}

struct TrainResult {
  Dpm dpm;
  std::vector<float> losses;  // one per iteration
};

// Denoising loss of one assembled batch. x0, x_t and noise are (E*N x D);
// cond_time is (E x 9) holding each event's time embedding.
inline Var noise_prediction_loss(Tape& tape, const ParamStore& params, const NetworkShape& shape, const Tensor& x0,
                                 const Tensor& x_t, const Tensor& cond_time, const Tensor& noise,
                                 std::size_t points_per_event) {
  Var z = encode(tape, params, shape, tape.constant(x0), points_per_event);
  Var cond = numerics::concat_cols({tape.constant(cond_time), z});
  Var eps_hat = predict_noise(tape, params, shape, tape.constant(x_t), cond);
  return numerics::mse(eps_hat, tape.constant(noise));
}

// Training allocates and frees the same multi-megabyte activations every
// iteration. With glibc's default thresholds each of them is a fresh mmap and
// the page faults cost more than the arithmetic, so keep them on the heap.
inline void retain_large_allocations() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}

// Called after every iteration with (iteration, loss).
using TrainProgress = std::function<void(std::int64_t, float)>;

// Noise-prediction objective: for a batch of events x0 with t ~ U{1..T} and
// w ~ N(0, I), minimize mse(w, eps_hat(sqrt(ab_t) x0 + sqrt(1 - ab_t) w, t,
// encode(x0))). Encoder and decoder are trained jointly with Adam.
inline TrainResult train_dpm(const data::Dataset& dataset, const TrainConfig& config, std::uint64_t seed,
                             const TrainProgress& progress = {}) {
  config.validate();
  if (dataset.events.empty()) throw ConfigError("train_dpm: empty dataset");
  retain_large_allocations();
  dataset.validate();
  if (!dataset.norm) throw ConfigError("train_dpm: dataset must be normalized first");
  if (dataset.dim() != config.network.dim) {
    throw ConfigError("train_dpm: dataset has D=" + std::to_string(dataset.dim()) + ", network expects " +
                      std::to_string(config.network.dim));
  }
  const std::size_t n_points = dataset.events.front().size();
  for (const auto& e : dataset.events) {
    if (e.size() != n_points) throw ConfigError("train_dpm: all events must have the same point count");
  }
  const std::size_t dim = config.network.dim;

  TrainResult result;
  Dpm& dpm = result.dpm;
  dpm = make_dpm(config.network, make_schedule(config.T, config.beta_1, config.beta_T), *dataset.norm,
                 dataset.domain_label, seed);
  dpm.provenance = {{"seed", seed}, {"train", config}, {"n_events", dataset.size()}, {"n_points", n_points}};

  const numerics::LrSchedule lr{config.lr_initial, config.lr_final, std::max<std::int64_t>(config.iters, 1)};
  numerics::AdamState adam = numerics::AdamState::for_params(dpm.params);
  const std::size_t batch = config.batch;
  const std::size_t rows = batch * n_points;
  result.losses.reserve(static_cast<std::size_t>(config.iters));

  Tensor x0 = Tensor::matrix(rows, dim);
  Tensor noise = Tensor::matrix(rows, dim);
  Tensor x_t = Tensor::matrix(rows, dim);
  Tensor cond_time = Tensor::matrix(batch, kTimeFeatures);

  for (std::int64_t it = 0; it < config.iters; ++it) {
    Rng rng(seed, {kTrainStream, static_cast<std::uint64_t>(it)});
    for (std::size_t b = 0; b < batch; ++b) {
      const auto& ev = dataset.events[rng.below(dataset.size())].points();
      const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(config.T)));
      write_time_embedding(t, config.T, cond_time.row(b));
      const auto a = static_cast<float>(std::sqrt(dpm.schedule.alpha_bar_at(t)));
      const auto s = static_cast<float>(std::sqrt(1.0 - dpm.schedule.alpha_bar_at(t)));
      const std::size_t off = b * n_points * dim;
      for (std::size_t i = 0; i < n_points * dim; ++i) {
        const float w = static_cast<float>(rng.normal());
        x0[off + i] = ev[i];
        noise[off + i] = w;
        x_t[off + i] = a * ev[i] + s * w;
      }
    }

    Tape tape;
    Var loss = noise_prediction_loss(tape, dpm.params, dpm.shape, x0, x_t, cond_time, noise, n_points);
    const float loss_value = loss.value().item();
    if (!std::isfinite(loss_value)) {
      throw NumericalError("train_dpm: non-finite loss at iteration " + std::to_string(it));
    }
    tape.backward(loss, dpm.params);
    numerics::adam_step(dpm.params, adam, static_cast<float>(numerics::lr_at(lr, it)));
    result.losses.push_back(loss_value);
    if (progress) progress(it, loss_value);
  }
  return result;
}

}  // namespace pctrans::diffusion
