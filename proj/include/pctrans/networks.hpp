#pragma once
// Shape encoder and noise-prediction decoder.
//
// Encoder: shared per-point MLP (ReLU after every layer), max-pool over the
// points of each event, then a linear head to the latent size.
//
// Decoder: per-point MLP over [point coords | time embedding | latent] with
// leaky-ReLU hidden layers and a linear D-wide output. The first layer is
// evaluated as x*W_point + broadcast(cond*W_cond), which equals the
// concatenated product but only touches the per-event part once per event.
//
// Batches are stacked row-wise: E events of N points give an (E*N x D)
// tensor; rows [e*N, (e+1)*N) belong to event e.
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pctrans/autodiff.hpp"
#include "pctrans/rng.hpp"

namespace pctrans::diffusion {

using numerics::ParamStore;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

inline constexpr std::size_t kTimeFeatures = 9;
inline constexpr float kLeakySlope = 0.01f;
inline constexpr std::uint64_t kInitStream = 0x494E4954;  // "INIT"

struct NetworkShape {
  std::size_t dim = 3;
  std::size_t latent = 256;
  std::vector<std::size_t> encoder_hidden{128, 256};
  std::vector<std::size_t> decoder_hidden{256, 256, 256};

  void validate() const {
    if (dim != 3 && dim != 4) throw ConfigError("network dim must be 3 or 4");
    if (latent == 0) throw ConfigError("latent size must be positive");
    if (encoder_hidden.empty() || decoder_hidden.empty()) throw ConfigError("hidden layer lists must be non-empty");
    for (auto w : encoder_hidden) {
      if (w == 0) throw ConfigError("zero-width encoder layer");
    }
    for (auto w : decoder_hidden) {
      if (w == 0) throw ConfigError("zero-width decoder layer");
    }
  }
  std::size_t cond_width() const { return kTimeFeatures + latent; }

  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

inline void to_json(nlohmann::json& j, const NetworkShape& s) {
  j = {{"dim", s.dim},
       {"latent", s.latent},
       {"encoder_hidden", s.encoder_hidden},
       {"decoder_hidden", s.decoder_hidden}};
}
inline void from_json(const nlohmann::json& j, NetworkShape& s) {
  j.at("dim").get_to(s.dim);
  j.at("latent").get_to(s.latent);
  j.at("encoder_hidden").get_to(s.encoder_hidden);
  j.at("decoder_hidden").get_to(s.decoder_hidden);
  s.validate();
}

// [t/T, sin(w_k t), cos(w_k t)] for w_k = pi * 2^k / T, k = 0..3.
inline void write_time_embedding(int t, int T, std::span<float> out) {
  const double tt = static_cast<double>(t);
  out[0] = static_cast<float>(tt / T);
  for (int k = 0; k < 4; ++k) {
    const double w = std::numbers::pi * static_cast<double>(1 << k) / T;
    out[static_cast<std::size_t>(1 + 2 * k)] = static_cast<float>(std::sin(w * tt));
    out[static_cast<std::size_t>(2 + 2 * k)] = static_cast<float>(std::cos(w * tt));
  }
}

namespace detail {
inline std::string layer_name(const char* net, std::size_t i, const char* what) {
  return std::string(net) + "/" + std::to_string(i) + "/" + what;
}

inline void add_linear(ParamStore& params, const std::string& prefix, std::size_t in, std::size_t out,
                       std::uint64_t seed, std::uint64_t layer_key) {
  Rng rng(seed, {kInitStream, layer_key});
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Tensor w = Tensor::matrix(in, out);
  for (auto& v : w.values()) v = static_cast<float>(rng.uniform(-bound, bound));
  Tensor b = Tensor::matrix(1, out);
  for (auto& v : b.values()) v = static_cast<float>(rng.uniform(-bound, bound));
  params.add(prefix + "weight", std::move(w));
  params.add(prefix + "bias", std::move(b));
}

inline Var linear(Tape& tape, const ParamStore& params, const std::string& prefix, Var x) {
  return numerics::add(numerics::matmul(x, tape.parameter(params, prefix + "weight")),
                       tape.parameter(params, prefix + "bias"));
}
}  // namespace detail

// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), one substream per layer.
inline ParamStore init_params(const NetworkShape& shape, std::uint64_t seed) {
  shape.validate();
  ParamStore params;
  std::size_t in = shape.dim;
  std::uint64_t key = 0;
  for (std::size_t i = 0; i < shape.encoder_hidden.size(); ++i) {
    detail::add_linear(params, detail::layer_name("encoder", i, ""), in, shape.encoder_hidden[i], seed, key++);
    in = shape.encoder_hidden[i];
  }
  detail::add_linear(params, "encoder/head/", in, shape.latent, seed, key++);
  in = shape.dim + shape.cond_width();
  for (std::size_t i = 0; i < shape.decoder_hidden.size(); ++i) {
    detail::add_linear(params, detail::layer_name("decoder", i, ""), in, shape.decoder_hidden[i], seed, key++);
    in = shape.decoder_hidden[i];
  }
  detail::add_linear(params, "decoder/out/", in, shape.dim, seed, key++);
  return params;
}

// (E*N x D) -> (E x F).
inline Var encode(Tape& tape, const ParamStore& params, const NetworkShape& shape, Var points,
                  std::size_t points_per_event) {
  if (points.value().cols() != shape.dim) {
    throw ConfigError("encoder expects " + std::to_string(shape.dim) + "-D points, got shape " +
                      numerics::shape_str(points.shape()));
  }
  Var h = points;
  for (std::size_t i = 0; i < shape.encoder_hidden.size(); ++i) {
    h = numerics::relu(detail::linear(tape, params, detail::layer_name("encoder", i, ""), h));
  }
  Var pooled = numerics::segment_max(h, points_per_event);
  return detail::linear(tape, params, "encoder/head/", pooled);
}

// x_t: (E*N x D), cond: (E x (9 + F)) -> predicted noise (E*N x D).
inline Var predict_noise(Tape& tape, const ParamStore& params, const NetworkShape& shape, Var x_t, Var cond) {
  if (x_t.value().cols() != shape.dim || cond.value().cols() != shape.cond_width()) {
    throw ConfigError("decoder expects points with " + std::to_string(shape.dim) + " columns and conditioning with " +
                      std::to_string(shape.cond_width()) + ", got " + numerics::shape_str(x_t.shape()) + " and " +
                      numerics::shape_str(cond.shape()));
  }
  const std::string first = detail::layer_name("decoder", 0, "");
  Var w = tape.parameter(params, first + "weight");
  Var w_point = numerics::slice_rows(w, 0, shape.dim);
  Var w_cond = numerics::slice_rows(w, shape.dim, shape.dim + shape.cond_width());
  Var per_event = numerics::add(numerics::matmul(cond, w_cond), tape.parameter(params, first + "bias"));
  Var h = numerics::leaky_relu(numerics::add(numerics::matmul(x_t, w_point), per_event), kLeakySlope);
  for (std::size_t i = 1; i < shape.decoder_hidden.size(); ++i) {
    h = numerics::leaky_relu(detail::linear(tape, params, detail::layer_name("decoder", i, ""), h), kLeakySlope);
  }
  return detail::linear(tape, params, "decoder/out/", h);
}

}  // namespace pctrans::diffusion
