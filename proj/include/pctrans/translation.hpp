#pragma once
// Cross-domain translation with an exactly invertible diffusion encoding.
//
// dpm_encode runs the forward chain x_1..x_T and stores, for t = T..1, the
// residual that makes the source model's reverse step land on the recorded
// trajectory:
//     eps_t = (x_{t-1} - mu_src(x_t, t, z_src)) / sigma_t.
// dpm_decode replays  y_{t-1} = mu(y_t, t, z) + sigma_t * eps_t  from
// y_T = x_T. With the source model this returns x_0 up to float rounding;
// with another domain's model and latent it yields the translation.
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pctrans/dpm.hpp"
#include "pctrans/metrics.hpp"

namespace pctrans::translation {

using data::PointCloud;
using diffusion::Dpm;
using numerics::Tensor;

struct DpmEncoding {
  Tensor x_T;
  std::vector<Tensor> eps;  // eps[0] = eps_T, ..., eps[T-1] = eps_1
  int source_T = 0;

  const Tensor& eps_at(int t) const { return eps.at(static_cast<std::size_t>(source_T - t)); }

  friend bool operator==(const DpmEncoding&, const DpmEncoding&) = default;
};

struct TranslationResult {
  PointCloud output;
  Tensor z_src;
  Tensor z_tgt;
  DpmEncoding encoding;
};

struct EncodeResult {
  Tensor z_src;
  DpmEncoding encoding;
};

// x0 must already be normalized with dpm_src.norm.
inline EncodeResult dpm_encode(const Dpm& dpm_src, const Tensor& x0, std::uint64_t seed) {
  diffusion::check_cloud(dpm_src, x0);
  const auto& schedule = dpm_src.schedule;
  for (int t = 1; t <= schedule.T; ++t) {
    if (!(schedule.sigma_at(t) > 0.0)) {
      throw NumericalError("dpm_encode: sigma_" + std::to_string(t) + " is zero; the encoding would not be invertible");
    }
  }
  EncodeResult out;
  out.z_src = diffusion::encode_shape(dpm_src, x0);
  const std::vector<Tensor> traj = diffusion::forward_diffuse(schedule, x0, seed);
  DpmEncoding& enc = out.encoding;
  enc.source_T = schedule.T;
  enc.x_T = traj.back();
  enc.eps.reserve(static_cast<std::size_t>(schedule.T));
  for (int t = schedule.T; t >= 1; --t) {
    const Tensor& x_t = traj[static_cast<std::size_t>(t - 1)];
    const Tensor& x_prev = t == 1 ? x0 : traj[static_cast<std::size_t>(t - 2)];
    const Tensor mu = diffusion::posterior_mean(dpm_src, x_t, t, out.z_src);
    const auto sigma = static_cast<float>(schedule.sigma_at(t));
    Tensor eps = x_prev;
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = (x_prev[i] - mu[i]) / sigma;
    enc.eps.push_back(std::move(eps));
  }
  return out;
}
inline EncodeResult dpm_encode(const Dpm& dpm_src, const PointCloud& x0, std::uint64_t seed) {
  return dpm_encode(dpm_src, x0.points(), seed);
}

// Returns points in dpm_tgt's normalized frame.
inline Tensor dpm_decode(const Dpm& dpm_tgt, const Tensor& z, const DpmEncoding& enc) {
  const auto& schedule = dpm_tgt.schedule;
  if (enc.source_T != schedule.T) {
    throw ConfigError("dpm_decode: encoding has T=" + std::to_string(enc.source_T) + " but target model '" +
                      dpm_tgt.domain_label + "' has T=" + std::to_string(schedule.T) +
                      "; retrain or re-encode so both models use the same number of diffusion steps");
  }
  if (enc.eps.size() != static_cast<std::size_t>(enc.source_T)) {
    throw ConfigError("dpm_decode: encoding holds " + std::to_string(enc.eps.size()) + " residuals for T=" +
                      std::to_string(enc.source_T));
  }
  for (const auto& e : enc.eps) {
    if (e.shape() != enc.x_T.shape()) {
      throw ConfigError("dpm_decode: residual shape " + numerics::shape_str(e.shape()) + " differs from x_T " +
                        numerics::shape_str(enc.x_T.shape()));
    }
  }
  Tensor y = enc.x_T;
  for (int t = schedule.T; t >= 1; --t) {
    Tensor mu = diffusion::posterior_mean(dpm_tgt, y, t, z);
    const auto sigma = static_cast<float>(schedule.sigma_at(t));
    const Tensor& eps = enc.eps_at(t);
    for (std::size_t i = 0; i < mu.size(); ++i) mu[i] += sigma * eps[i];
    y = std::move(mu);
  }
  return y;
}

// Raw source event in, raw target-domain event out.
inline TranslationResult translate(const Dpm& dpm_src, const Dpm& dpm_tgt, const PointCloud& x0_raw,
                                   std::uint64_t seed) {
  if (dpm_src.shape.dim != dpm_tgt.shape.dim || x0_raw.dim() != dpm_src.shape.dim) {
    throw ConfigError("translate: point dimension mismatch between input (" + std::to_string(x0_raw.dim()) +
                      ") and models (" + std::to_string(dpm_src.shape.dim) + ", " +
                      std::to_string(dpm_tgt.shape.dim) + ")");
  }
  if (dpm_src.schedule.T != dpm_tgt.schedule.T) {
    throw ConfigError("translate: source model has T=" + std::to_string(dpm_src.schedule.T) + ", target has T=" +
                      std::to_string(dpm_tgt.schedule.T) + "; retrain both with the same diffusion step count");
  }
  const PointCloud x_src = data::apply_norm(x0_raw, dpm_src.norm);
  const PointCloud x_tgt = data::apply_norm(x0_raw, dpm_tgt.norm);
  TranslationResult result;
  EncodeResult encoded = dpm_encode(dpm_src, x_src.points(), seed);
  result.z_src = std::move(encoded.z_src);
  result.z_tgt = diffusion::encode_shape(dpm_tgt, x_tgt.points());
  const Tensor y = dpm_decode(dpm_tgt, result.z_tgt, encoded.encoding);
  result.output = data::restore_norm(PointCloud(y), dpm_tgt.norm);
  result.encoding = std::move(encoded.encoding);
  return result;
}

struct CycleResult {
  PointCloud x_back;
  double cd = 0.0;
};

inline constexpr std::uint64_t kCycleReturnStream = 0x52455452;  // "RETR"

// A -> B -> A; the return leg draws its forward noise from a derived seed.
inline CycleResult reconstruct_cycle(const Dpm& dpm_a, const Dpm& dpm_b, const PointCloud& x0, std::uint64_t seed) {
  const TranslationResult there = translate(dpm_a, dpm_b, x0, seed);
  const TranslationResult back = translate(dpm_b, dpm_a, there.output, derive_seed(seed, {kCycleReturnStream}));
  CycleResult out;
  out.x_back = back.output;
  out.cd = metrics::chamfer(x0, out.x_back);
  return out;
}

// Same container as parameter checkpoints: "x_T" plus "eps/0001".."eps/T"
// holding eps_1..eps_T.
inline std::map<std::string, Tensor> encoding_tensors(const DpmEncoding& enc) {
  std::map<std::string, Tensor> out;
  out.emplace("x_T", enc.x_T);
  for (int t = 1; t <= enc.source_T; ++t) {
    std::string idx = std::to_string(t);
    idx.insert(0, idx.size() < 4 ? 4 - idx.size() : 0, '0');
    out.emplace("eps/" + idx, enc.eps_at(t));
  }
  return out;
}

inline void save_encoding(const std::string& path, const DpmEncoding& enc) {
  io::write_file(path, numerics::encode_container(encoding_tensors(enc)));
}

inline DpmEncoding load_encoding(const std::string& path) {
  auto tensors = numerics::decode_container(io::read_file(path), path);
  DpmEncoding enc;
  auto it = tensors.find("x_T");
  if (it == tensors.end()) throw IoError(path + ": encoding container lacks 'x_T'");
  enc.x_T = std::move(it->second);
  tensors.erase(it);
  enc.source_T = static_cast<int>(tensors.size());
  enc.eps.resize(tensors.size());
  for (auto& [name, t] : tensors) {
    if (name.rfind("eps/", 0) != 0) throw IoError(path + ": unexpected tensor '" + name + "'");
    const int step = std::stoi(name.substr(4));
    if (step < 1 || step > enc.source_T) throw IoError(path + ": residual index out of range in '" + name + "'");
    enc.eps[static_cast<std::size_t>(enc.source_T - step)] = std::move(t);
  }
  return enc;
}

}  // namespace pctrans::translation
