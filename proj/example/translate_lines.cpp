// Minimal end-to-end use of the library: two small line domains, one model
// each, and a clean -> noisy translation of a few events.
#include <cstdio>

#include "pctrans/pctrans.hpp"

int main() {
  using namespace pctrans;
  RunConfig cfg;
  cfg.seed = 7;
  cfg.n_events = 64;
  cfg.n_points = 64;
  cfg.batch = 16;
  cfg.iters = 300;
  cfg.T = 32;
  cfg.F = 16;
  cfg.encoder_hidden = {32, 32};
  cfg.decoder_hidden = {32, 32};

  const auto domains = pipeline::gen_domain_pair(cfg);
  const auto clean = pipeline::train_domain(domains.x, cfg).dpm;
  const auto noisy = pipeline::train_domain(domains.y, cfg).dpm;

  for (std::size_t e = 0; e < 4; ++e) {
    const auto& in = domains.x.events[e];
    const auto out = translation::translate(clean, noisy, in, derive_seed(cfg.seed, {e})).output;
    double spread = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) spread += out.at(i, 0) * out.at(i, 0);
    std::printf("event %zu: y = %.3f, rms x after translation = %.4f\n", e, in.at(0, 1),
                std::sqrt(spread / static_cast<double>(out.size())));
  }
  return 0;
}
