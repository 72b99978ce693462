#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "pctrans/dpm.hpp"
#include "pctrans/generators.hpp"
#include "pctrans/training.hpp"

using namespace pctrans;
using namespace pctrans::diffusion;
using numerics::Tensor;

namespace {

Tensor random_cloud(std::uint64_t seed, std::size_t n, std::size_t d = 3) {
  Rng r(seed);
  Tensor t = Tensor::matrix(n, d);
  for (auto& v : t.values()) v = static_cast<float>(r.normal());
  return t;
}

Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
  Tensor out = t;
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t d = 0; d < t.cols(); ++d) out.at(i, d) = t.at(perm[i], d);
  return out;
}

std::vector<std::size_t> random_perm(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  Rng r(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(p[i], p[r.below(i + 1)]);
  return p;
}

NetworkShape small_shape() {
  NetworkShape s;
  s.latent = 16;
  s.encoder_hidden = {16, 32};
  s.decoder_hidden = {32, 32};
  return s;
}

Dpm random_dpm(int T, std::uint64_t seed, NetworkShape shape = small_shape()) {
  const auto [b1, bT] = default_beta_range(T);
  return make_dpm(shape, make_schedule(T, b1, bT), {}, "test", seed);
}

void zero_decoder_output(Dpm& dpm) {
  dpm.params.value("decoder/out/weight").fill(0.0f);
  dpm.params.value("decoder/out/bias").fill(0.0f);
}

}  // namespace

TEST(Schedule, LengthAndSingleStep) {
  EXPECT_EQ(make_schedule(256, 1e-4, 0.02).beta.size(), 256u);
  const auto one = make_schedule(1, 0.3, 0.3);
  EXPECT_DOUBLE_EQ(one.alpha_bar_at(1), 1.0 - 0.3);
}

TEST(Schedule, AlphaBarMatchesDirectProduct) {
  const auto s = make_schedule(64, 1e-4, 0.05);
  double prod = 1.0;
  for (int t = 1; t <= 64; ++t) {
    const double beta = 1e-4 + (0.05 - 1e-4) * (t - 1) / 63.0;
    prod *= 1.0 - beta;
    EXPECT_NEAR(s.alpha_bar_at(t), prod, 1e-7);
  }
}

TEST(Schedule, MonotoneCoefficients) {
  const auto s = make_schedule(32, 1e-3, 0.1);
  for (int t = 2; t <= 32; ++t) {
    EXPECT_GT(s.beta_at(t), s.beta_at(t - 1));
    EXPECT_LT(s.alpha_bar_at(t), s.alpha_bar_at(t - 1));
    EXPECT_GT(s.sigma_at(t), s.sigma_at(t - 1));
    EXPECT_DOUBLE_EQ(s.sigma_at(t), std::sqrt(s.beta_at(t)));
  }
}

TEST(Schedule, RejectsBadRanges) {
  EXPECT_THROW(make_schedule(0, 1e-4, 0.02), ConfigError);
  EXPECT_THROW(make_schedule(10, 0.0, 0.02), ConfigError);
  EXPECT_THROW(make_schedule(10, 0.1, 0.05), ConfigError);
  EXPECT_THROW(make_schedule(10, 0.1, 1.0), ConfigError);
}

TEST(Schedule, DefaultRangeScalesWithT) {
  const auto [b1, bT] = default_beta_range(256);
  EXPECT_DOUBLE_EQ(b1, 1e-4);
  EXPECT_DOUBLE_EQ(bT, 0.02);
  const auto [c1, cT] = default_beta_range(64);
  EXPECT_DOUBLE_EQ(c1, 4e-4);
  EXPECT_DOUBLE_EQ(cT, 0.08);
  EXPECT_NO_THROW(make_schedule(2, default_beta_range(2).first, default_beta_range(2).second));
}

TEST(Encoder, DefaultLatentIs256) {
  const Dpm dpm = random_dpm(8, 1, NetworkShape{});
  EXPECT_EQ(encode_shape(dpm, random_cloud(2, 32)).size(), 256u);
}

TEST(Encoder, PermutationInvariantBitExact) {
  const Dpm dpm = random_dpm(8, 3);
  const Tensor x = random_cloud(4, 200);
  const Tensor z = encode_shape(dpm, x);
  for (std::uint64_t k = 0; k < 5; ++k) {
    const Tensor zp = encode_shape(dpm, permute_rows(x, random_perm(200, k)));
    EXPECT_EQ(0, std::memcmp(z.data(), zp.data(), z.size() * sizeof(float)));
  }
}

TEST(Encoder, SensitiveToPointChange) {
  const Dpm dpm = random_dpm(8, 5);
  Tensor x = random_cloud(6, 64);
  const Tensor z = encode_shape(dpm, x);
  for (std::size_t i = 0; i < x.rows(); ++i) x.at(i, 1) += 1.0f;
  EXPECT_GT(numerics::max_abs_diff(z, encode_shape(dpm, x)), 0.0f);
}

TEST(Encoder, DimensionMismatch) {
  const Dpm dpm = random_dpm(8, 5);
  EXPECT_THROW(encode_shape(dpm, random_cloud(1, 10, 4)), ConfigError);
}

TEST(Decoder, PermutationEquivariantBitExact) {
  const Dpm dpm = random_dpm(16, 7);
  const Tensor x = random_cloud(8, 256);
  const Tensor z = encode_shape(dpm, x);
  const Tensor eps = predict_noise(dpm, x, 5, z);
  EXPECT_EQ(eps.shape(), x.shape());
  for (std::uint64_t k = 0; k < 5; ++k) {
    const auto perm = random_perm(256, 100 + k);
    const Tensor ep = predict_noise(dpm, permute_rows(x, perm), 5, z);
    const Tensor expected = permute_rows(eps, perm);
    EXPECT_EQ(0, std::memcmp(ep.data(), expected.data(), ep.size() * sizeof(float)));
  }
}

TEST(Decoder, RejectsBadTimestepAndLatent) {
  const Dpm dpm = random_dpm(16, 7);
  const Tensor x = random_cloud(8, 16);
  const Tensor z = encode_shape(dpm, x);
  EXPECT_THROW(predict_noise(dpm, x, 0, z), ConfigError);
  EXPECT_THROW(predict_noise(dpm, x, 17, z), ConfigError);
  EXPECT_THROW(predict_noise(dpm, x, 1, Tensor({3}, {1, 2, 3})), ConfigError);
}

TEST(PosteriorMean, ZeroNoisePredictionDividesBySqrtAlpha) {
  Dpm dpm = random_dpm(16, 9);
  zero_decoder_output(dpm);
  const Tensor x = random_cloud(10, 32);
  const Tensor z = encode_shape(dpm, x);
  const Tensor mu = posterior_mean(dpm, x, 7, z);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(mu[i], x[i] / std::sqrt(dpm.schedule.alpha_at(7)), 1e-6);
}

TEST(PosteriorMean, MatchesIndependentTranscription) {
  const Dpm dpm = random_dpm(16, 11);
  const Tensor x = random_cloud(12, 32);
  const Tensor z = encode_shape(dpm, x);
  for (int t : {1, 8, 16}) {
    const Tensor eps = predict_noise(dpm, x, t, z);
    const Tensor mu = posterior_mean(dpm, x, t, z);
    const double beta = dpm.schedule.beta_at(t);
    double ab = 1.0;
    for (int s = 1; s <= t; ++s) ab *= 1.0 - dpm.schedule.beta_at(s);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double ref = (x[i] - beta / std::sqrt(1.0 - ab) * eps[i]) / std::sqrt(1.0 - beta);
      EXPECT_NEAR(mu[i], ref, 1e-6);
    }
  }
}

TEST(ForwardDiffuse, ZeroBetaIsIdentity) {
  NoiseSchedule s;
  s.T = 5;
  s.beta.assign(5, 0.0);
  s.alpha.assign(5, 1.0);
  s.alpha_bar.assign(5, 1.0);
  s.sigma.assign(5, 0.0);
  const Tensor x = random_cloud(13, 8);
  EXPECT_EQ(forward_diffuse(s, x, 1).back(), x);
}

TEST(ForwardDiffuse, DeterministicGivenSeed) {
  const auto s = make_schedule(16, 1e-3, 0.1);
  const Tensor x = random_cloud(14, 8);
  EXPECT_EQ(forward_diffuse(s, x, 5), forward_diffuse(s, x, 5));
  EXPECT_NE(forward_diffuse(s, x, 5).back(), forward_diffuse(s, x, 6).back());
}

TEST(ForwardDiffuse, TerminalMeanNearZeroForLongChains) {
  const auto s = make_schedule(256, 1e-3, 0.08);
  ASSERT_LT(s.alpha_bar_at(256), 1e-4);
  const Tensor x = Tensor({1, 3}, {2.0f, -1.0f, 0.5f});
  const int n = 10000;
  std::vector<double> sum(3, 0.0);
  for (int k = 0; k < n; ++k) {
    const auto traj = forward_diffuse(s, x, static_cast<std::uint64_t>(k));
    for (std::size_t d = 0; d < 3; ++d) sum[d] += traj.back()[d];
  }
  for (std::size_t d = 0; d < 3; ++d) EXPECT_NEAR(sum[d] / n, 0.0, 3.0 / std::sqrt(n));
}

TEST(ForwardDiffuse, RejectsNonFiniteInput) {
  Tensor x = random_cloud(1, 4);
  x[2] = NAN;
  EXPECT_THROW(forward_diffuse(make_schedule(4, 0.01, 0.1), x, 0), NumericalError);
}

namespace {
data::Dataset normalized_lines(std::size_t events, std::size_t points, std::uint64_t seed) {
  return data::normalize(data::gen_lines(events, points, seed, true)).data;
}

TrainConfig tiny_config(std::int64_t iters) {
  TrainConfig c;
  c.batch = 8;
  c.iters = iters;
  c.T = 16;
  std::tie(c.beta_1, c.beta_T) = default_beta_range(16);
  c.network = small_shape();
  return c;
}
}  // namespace

TEST(Train, ZeroIterationsReturnsInitialization) {
  const auto ds = normalized_lines(10, 16, 1);
  const auto result = train_dpm(ds, tiny_config(0), 42);
  EXPECT_EQ(result.dpm.params, init_params(small_shape(), 42));
  EXPECT_TRUE(result.losses.empty());
  EXPECT_EQ(result.dpm.norm, *ds.norm);
}

TEST(Train, BitIdenticalAcrossRuns) {
  const auto ds = normalized_lines(10, 16, 2);
  const auto a = train_dpm(ds, tiny_config(20), 3);
  const auto b = train_dpm(ds, tiny_config(20), 3);
  EXPECT_EQ(numerics::encode_container(a.dpm.params.values()), numerics::encode_container(b.dpm.params.values()));
  EXPECT_EQ(a.losses, b.losses);
}

TEST(Train, Preconditions) {
  auto raw = data::gen_lines(4, 8, 1, false);
  EXPECT_THROW(train_dpm(raw, tiny_config(1), 0), ConfigError);  // not normalized
  data::Dataset empty;
  empty.norm = data::NormStats{{0, 0, 0}, 1};
  EXPECT_THROW(train_dpm(empty, tiny_config(1), 0), ConfigError);
}

TEST(Train, NonFiniteLossReportsIteration) {
  auto ds = data::gen_lines(4, 8, 1, false);
  for (auto& e : ds.events)
    for (auto& v : e.points().values()) v = 1e30f;
  ds.norm = data::NormStats{{0, 0, 0}, 1};
  try {
    train_dpm(ds, tiny_config(5), 0);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration 0"), std::string::npos) << e.what();
  }
}

// Desk-scale smoke run: 200 line events, T = 64, F = 64, 2000 iterations.
TEST(Train, DeskSmokeLossDecreases) {
  const auto ds = normalized_lines(200, 64, 5);
  TrainConfig c;
  c.batch = 16;
  c.iters = 2000;
  c.T = 64;
  std::tie(c.beta_1, c.beta_T) = default_beta_range(64);
  c.network.latent = 64;
  c.network.encoder_hidden = {32, 64};
  c.network.decoder_hidden = {64, 64, 64};
  const auto result = train_dpm(ds, c, 6);
  const auto& l = result.losses;
  const double first = std::accumulate(l.begin(), l.begin() + 100, 0.0) / 100;
  const double last = std::accumulate(l.end() - 100, l.end(), 0.0) / 100;
  EXPECT_LT(last, 0.8 * first);

  // Samples conditioned on a clean line at y ~ 1 stay near the training data.
  const auto raw = data::gen_lines(200, 64, 5, true);
  double lo[3] = {INFINITY, INFINITY, INFINITY}, hi[3] = {-INFINITY, -INFINITY, -INFINITY};
  for (const auto& e : raw.events)
    for (std::size_t i = 0; i < e.size(); ++i)
      for (std::size_t d = 0; d < 3; ++d) {
        lo[d] = std::min<double>(lo[d], e.at(i, d));
        hi[d] = std::max<double>(hi[d], e.at(i, d));
      }
  auto line = data::gen_lines(1, 64, 77, false).events.front();
  for (std::size_t i = 0; i < line.size(); ++i) line.at(i, 1) = 1.0f;
  const auto z = encode_shape(result.dpm, data::apply_norm(line, result.dpm.norm));
  const auto sample = sample_unconditional(result.dpm, z, 256, 8);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    bool ok = true;
    for (std::size_t d = 0; d < 3; ++d) {
      const double pad = 0.125 * (hi[d] - lo[d]);
      ok = ok && sample.at(i, d) >= lo[d] - pad && sample.at(i, d) <= hi[d] + pad;
    }
    inside += ok;
  }
  EXPECT_GE(inside, static_cast<std::size_t>(0.8 * sample.size()));
}

TEST(Sample, ClosedFormWithoutNoise) {
  Dpm dpm = random_dpm(8, 15);
  zero_decoder_output(dpm);
  const Tensor z = Tensor::matrix(1, dpm.shape.latent).reshaped({dpm.shape.latent});
  const auto out = sample_unconditional(dpm, z, 10, 3, SampleOptions{false});
  Rng r(3, {kSampleStream});
  double gain = 1.0;
  for (int t = 1; t <= 8; ++t) gain /= std::sqrt(dpm.schedule.alpha_at(t));
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t d = 0; d < 3; ++d) {
      const double start = static_cast<float>(r.normal());
      EXPECT_NEAR(out.at(i, d), start * gain, 1e-5 * std::max(1.0, std::abs(start * gain)));
    }
}

TEST(Sample, DeterministicGivenSeed) {
  const Dpm dpm = random_dpm(8, 16);
  const Tensor z = encode_shape(dpm, random_cloud(1, 16));
  EXPECT_EQ(sample_unconditional(dpm, z, 20, 4).points(), sample_unconditional(dpm, z, 20, 4).points());
}

TEST(Checkpoint, RoundTripWithSidecar) {
  Dpm dpm = random_dpm(12, 17);
  dpm.norm = data::NormStats{{0.5, -0.25, 1.0}, 0.75};
  dpm.domain_label = "lines_noisy";
  dpm.provenance = {{"seed", 17}};
  const auto path = (std::filesystem::temp_directory_path() / "pctrans_test.ckpt").string();
  save_dpm(path, dpm);
  const Dpm back = load_dpm(path);
  EXPECT_EQ(back.params, dpm.params);
  EXPECT_EQ(back.schedule, dpm.schedule);
  EXPECT_EQ(back.norm, dpm.norm);
  EXPECT_EQ(back.shape, dpm.shape);
  EXPECT_EQ(back.domain_label, "lines_noisy");
  const auto side = nlohmann::json::parse(io::read_text(path + ".json"));
  EXPECT_EQ(side.at("T"), 12);
  EXPECT_EQ(side.at("F"), 16);
  EXPECT_EQ(side.at("D"), 3);
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".json");
}
