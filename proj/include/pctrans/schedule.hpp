#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pctrans/errors.hpp"

namespace pctrans::diffusion {

// Linear-beta diffusion coefficients. Vectors are indexed by t - 1.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;      // 1 - beta_t
  std::vector<double> alpha_bar;  // prod_{s <= t} alpha_s
  std::vector<double> sigma;      // sqrt(beta_t)

  double beta_at(int t) const { return beta.at(static_cast<std::size_t>(t - 1)); }
  double alpha_at(int t) const { return alpha.at(static_cast<std::size_t>(t - 1)); }
  double alpha_bar_at(int t) const { return alpha_bar.at(static_cast<std::size_t>(t - 1)); }
  double sigma_at(int t) const { return sigma.at(static_cast<std::size_t>(t - 1)); }

  friend bool operator==(const NoiseSchedule&, const NoiseSchedule&) = default;
};

inline NoiseSchedule make_schedule(int T, double beta1, double betaT) {
  if (T < 1) throw ConfigError("make_schedule: T must be >= 1, got " + std::to_string(T));
  if (!(beta1 > 0.0 && beta1 <= betaT && betaT < 1.0)) {
    throw ConfigError("make_schedule: need 0 < beta1 <= betaT < 1, got beta1=" + std::to_string(beta1) +
                      " betaT=" + std::to_string(betaT));
  }
  NoiseSchedule s;
  s.T = T;
  const auto n = static_cast<std::size_t>(T);
  s.beta.resize(n);
  s.alpha.resize(n);
  s.alpha_bar.resize(n);
  s.sigma.resize(n);
  double running = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(T - 1);
    s.beta[i] = beta1 + (betaT - beta1) * frac;
    s.alpha[i] = 1.0 - s.beta[i];
    running *= s.alpha[i];
    s.alpha_bar[i] = running;
    s.sigma[i] = std::sqrt(s.beta[i]);
  }
  return s;
}

// Default endpoints (1e-4, 0.02) at T = 256, scaled by 256 / T so shorter
// chains reach a comparable terminal noise level. The factor is capped at 25
// (beta_T = 0.5) for very short chains.
inline std::pair<double, double> default_beta_range(int T) {
  if (T < 1) throw ConfigError("default_beta_range: T must be >= 1");
  const double k = std::min(256.0 / static_cast<double>(T), 25.0);
  return {1e-4 * k, 0.02 * k};
}

}  // namespace pctrans::diffusion
