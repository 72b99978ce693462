#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "pctrans/errors.hpp"
#include "pctrans/params.hpp"

namespace pctrans::numerics {

struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::int64_t step = 0;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;

  static AdamState for_params(const ParamStore& params) {
    AdamState s;
    for (const auto& [name, value] : params.values()) {
      s.m.emplace(name, Tensor(value.shape()));
      s.v.emplace(name, Tensor(value.shape()));
    }
    return s;
  }
};

// One Adam update with bias correction. Entries whose gradient is exactly zero
// keep their value (their moments still decay), so an all-zero gradient is
// the identity on the parameters.
inline void adam_step(ParamStore& params, AdamState& state, float lr) {
  for (const auto& entry : params.values()) {
    const std::string& name = entry.first;
    const Tensor& grad = params.grad(name);
    if (!grad.all_finite()) throw NumericalError("non-finite gradient in parameter '" + name + "'");
    auto mit = state.m.find(name);
    auto vit = state.v.find(name);
    if (mit == state.m.end() || vit == state.v.end() || mit->second.shape() != grad.shape() ||
        vit->second.shape() != grad.shape()) {
      throw ConfigError("Adam state does not mirror parameter '" + name + "'");
    }
  }
  ++state.step;
  const double k = static_cast<double>(state.step);
  const auto correction1 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta1), k));
  const auto correction2 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta2), k));
  for (auto& [name, value] : params.values()) {
    const Tensor& grad = params.grad(name);
    Tensor& m = state.m.at(name);
    Tensor& v = state.v.at(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const float g = grad[i];
      m[i] = state.beta1 * m[i] + (1.0f - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0f - state.beta2) * g * g;
      if (g == 0.0f) continue;
      const float m_hat = m[i] / correction1;
      const float v_hat = v[i] / correction2;
      value[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

struct LrSchedule {
  double lr_initial = 1e-3;
  double lr_final = 1e-4;
  std::int64_t total_iters = 1'000'000;
};

// Linear decay from lr_initial at 0 to lr_final at total_iters, then flat.
inline double lr_at(const LrSchedule& schedule, std::int64_t iter) {
  if (schedule.total_iters <= 0) throw ConfigError("LrSchedule.total_iters must be positive");
  if (iter >= schedule.total_iters) return schedule.lr_final;
  const double frac = static_cast<double>(std::max<std::int64_t>(iter, 0)) / static_cast<double>(schedule.total_iters);
  return schedule.lr_initial + (schedule.lr_final - schedule.lr_initial) * frac;
}

}  // namespace pctrans::numerics
