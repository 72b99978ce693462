#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pctrans/binary_io.hpp"
#include "pctrans/networks.hpp"
#include "pctrans/params.hpp"
#include "pctrans/point_cloud.hpp"
#include "pctrans/schedule.hpp"

namespace pctrans::diffusion {

using data::NormStats;
using data::PointCloud;

inline constexpr std::uint64_t kForwardStream = 0x46574444;  // "FWDD"
inline constexpr std::uint64_t kSampleStream = 0x534D504C;   // "SMPL"

// One trained domain model.
struct Dpm {
  NetworkShape shape;
  ParamStore params;
  NoiseSchedule schedule;
  NormStats norm;
  std::string domain_label;
  // Training seed, hyperparameters and config hash, echoed into the sidecar.
  nlohmann::json provenance = nlohmann::json::object();
};

inline Dpm make_dpm(const NetworkShape& shape, NoiseSchedule schedule, NormStats norm, std::string label,
                    std::uint64_t seed) {
  Dpm dpm;
  dpm.shape = shape;
  dpm.params = init_params(shape, seed);
  dpm.schedule = std::move(schedule);
  if (norm.center.empty()) norm.center.assign(shape.dim, 0.0);
  dpm.norm = std::move(norm);
  dpm.domain_label = std::move(label);
  return dpm;
}

inline void check_cloud(const Dpm& dpm, const Tensor& points) {
  if (points.rank() != 2 || points.cols() != dpm.shape.dim || points.rows() == 0) {
    throw ConfigError("model '" + dpm.domain_label + "' expects N x " + std::to_string(dpm.shape.dim) +
                      " clouds, got " + numerics::shape_str(points.shape()));
  }
}

// Shape latent of one (already normalized) cloud, shape {F}.
inline Tensor encode_shape(const Dpm& dpm, const Tensor& points) {
  check_cloud(dpm, points);
  Tape tape(numerics::GradMode::kNone);
  Var z = encode(tape, dpm.params, dpm.shape, tape.constant(points), points.rows());
  return z.value().reshaped({dpm.shape.latent});
}
inline Tensor encode_shape(const Dpm& dpm, const PointCloud& cloud) { return encode_shape(dpm, cloud.points()); }

inline Tensor conditioning_row(int t, int T, const Tensor& z) {
  Tensor cond = Tensor::matrix(1, kTimeFeatures + z.size());
  write_time_embedding(t, T, cond.row(0).subspan(0, kTimeFeatures));
  std::copy(z.values().begin(), z.values().end(), cond.data() + kTimeFeatures);
  return cond;
}

// Decoder noise prediction eps_hat(x_t, t, z) for one cloud.
inline Tensor predict_noise(const Dpm& dpm, const Tensor& x_t, int t, const Tensor& z) {
  check_cloud(dpm, x_t);
  if (t < 1 || t > dpm.schedule.T) {
    throw ConfigError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(dpm.schedule.T) + "]");
  }
  if (z.size() != dpm.shape.latent) {
    throw ConfigError("latent has " + std::to_string(z.size()) + " entries, model expects " +
                      std::to_string(dpm.shape.latent));
  }
  Tape tape(numerics::GradMode::kNone);
  Var out = predict_noise(tape, dpm.params, dpm.shape, tape.constant(x_t),
                          tape.constant(conditioning_row(t, dpm.schedule.T, z)));
  return out.value();
}

// mu(x_t, t, z) = (x_t - beta_t / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_t)
inline Tensor posterior_mean(const Dpm& dpm, const Tensor& x_t, int t, const Tensor& z) {
  const Tensor eps_hat = predict_noise(dpm, x_t, t, z);
  const auto inv_sqrt_alpha = static_cast<float>(1.0 / std::sqrt(dpm.schedule.alpha_at(t)));
  const auto eps_coef = static_cast<float>(dpm.schedule.beta_at(t) / std::sqrt(1.0 - dpm.schedule.alpha_bar_at(t)));
  Tensor mu = x_t;
  for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = inv_sqrt_alpha * (x_t[i] - eps_coef * eps_hat[i]);
  return mu;
}

// x_t = sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) w_t. Returns [x_1, ..., x_T].
inline std::vector<Tensor> forward_diffuse(const NoiseSchedule& schedule, const Tensor& x0, std::uint64_t seed) {
  if (!x0.all_finite()) throw NumericalError("forward_diffuse: non-finite input cloud");
  Rng rng(seed, {kForwardStream});
  std::vector<Tensor> traj;
  traj.reserve(static_cast<std::size_t>(schedule.T));
  const Tensor* prev = &x0;
  for (int t = 1; t <= schedule.T; ++t) {
    const double keep = std::sqrt(1.0 - schedule.beta_at(t));
    const double noise = std::sqrt(schedule.beta_at(t));
    Tensor next = *prev;
    for (std::size_t i = 0; i < next.size(); ++i) {
      next[i] = static_cast<float>(keep * (*prev)[i] + noise * rng.normal());
    }
    traj.push_back(std::move(next));
    prev = &traj.back();
  }
  return traj;
}

struct SampleOptions {
  // false drops the sigma_t * eps_t term (mean-only reverse chain).
  bool stochastic = true;
};

// Reverse chain from N(0, I) conditioned on z; returns denormalized points.
inline PointCloud sample_unconditional(const Dpm& dpm, const Tensor& z, std::size_t n_points, std::uint64_t seed,
                                       SampleOptions options = {}) {
  if (n_points == 0) throw ConfigError("sample_unconditional: n_points must be positive");
  Rng rng(seed, {kSampleStream});
  Tensor x = Tensor::matrix(n_points, dpm.shape.dim);
  for (auto& v : x.values()) v = static_cast<float>(rng.normal());
  for (int t = dpm.schedule.T; t >= 1; --t) {
    Tensor mu = posterior_mean(dpm, x, t, z);
    if (options.stochastic) {
      const auto sigma = static_cast<float>(dpm.schedule.sigma_at(t));
      for (auto& v : mu.values()) v += sigma * static_cast<float>(rng.normal());
    }
    x = std::move(mu);
  }
  return data::restore_norm(PointCloud(std::move(x)), dpm.norm);
}

// Checkpoint: parameter container at `path`, JSON sidecar at `path + ".json"`.
inline nlohmann::json sidecar_json(const Dpm& dpm) {
  return {{"format", "pctrans-dpm"},
          {"version", 1},
          {"domain_label", dpm.domain_label},
          {"network", dpm.shape},
          {"T", dpm.schedule.T},
          {"F", dpm.shape.latent},
          {"D", dpm.shape.dim},
          {"beta_1", dpm.schedule.beta.front()},
          {"beta_T", dpm.schedule.beta.back()},
          {"norm", dpm.norm},
          {"provenance", dpm.provenance}};
}

inline void save_dpm(const std::string& path, const Dpm& dpm) {
  numerics::save_params(path, dpm.params);
  io::write_text(path + ".json", sidecar_json(dpm).dump(2) + "\n");
}

inline Dpm load_dpm(const std::string& path) {
  Dpm dpm;
  dpm.params = numerics::load_params(path);
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(io::read_text(path + ".json"));
    dpm.domain_label = side.at("domain_label").get<std::string>();
    dpm.shape = side.at("network").get<NetworkShape>();
    dpm.schedule = make_schedule(side.at("T").get<int>(), side.at("beta_1").get<double>(),
                                 side.at("beta_T").get<double>());
    dpm.norm = side.at("norm").get<NormStats>();
    dpm.provenance = side.value("provenance", nlohmann::json::object());
  } catch (const nlohmann::json::exception& ex) {
    throw IoError(path + ".json: malformed checkpoint sidecar: " + ex.what());
  }
  const ParamStore expected = init_params(dpm.shape, 0);
  for (const auto& [name, t] : expected.values()) {
    if (!dpm.params.contains(name) || dpm.params.value(name).shape() != t.shape()) {
      throw IoError(path + ": parameter '" + name + "' missing or mis-shaped for the recorded network");
    }
  }
  if (dpm.params.size() != expected.size()) throw IoError(path + ": unexpected extra parameters");
  return dpm;
}

}  // namespace pctrans::diffusion
