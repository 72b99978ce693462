#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "pctrans/pipeline.hpp"
#include "pctrans/translation.hpp"

using namespace pctrans;
using namespace pctrans::translation;
using diffusion::Dpm;
using numerics::Tensor;

namespace {

Tensor random_cloud(std::uint64_t seed, std::size_t n) {
  Rng r(seed);
  Tensor t = Tensor::matrix(n, 3);
  for (auto& v : t.values()) v = static_cast<float>(r.normal());
  return t;
}

Dpm model(int T, std::uint64_t seed, const std::string& label = "m") {
  diffusion::NetworkShape s;
  s.latent = 16;
  s.encoder_hidden = {16, 32};
  s.decoder_hidden = {32, 32};
  const auto [b1, bT] = diffusion::default_beta_range(T);
  return diffusion::make_dpm(s, diffusion::make_schedule(T, b1, bT), {}, label, seed);
}

}  // namespace

TEST(DpmEncoder, RoundTripRecoversInput) {
  for (int T : {16, 64}) {
    const Dpm dpm = model(T, 1);
    const Tensor x0 = random_cloud(2, 128);
    const auto enc = dpm_encode(dpm, x0, 3);
    ASSERT_EQ(enc.encoding.eps.size(), static_cast<std::size_t>(T));
    const Tensor back = dpm_decode(dpm, enc.z_src, enc.encoding);
    EXPECT_LT(numerics::max_abs_diff(back, x0), 1e-4f) << "T=" << T;
  }
}

TEST(DpmEncoder, DeterministicGivenSeed) {
  const Dpm dpm = model(8, 4);
  const Tensor x0 = random_cloud(5, 32);
  EXPECT_EQ(dpm_encode(dpm, x0, 6).encoding, dpm_encode(dpm, x0, 6).encoding);
  EXPECT_NE(dpm_encode(dpm, x0, 6).encoding.x_T, dpm_encode(dpm, x0, 7).encoding.x_T);
}

TEST(DpmEncoder, ResidualsIndexedByTimestep) {
  const Dpm dpm = model(8, 8);
  const Tensor x0 = random_cloud(9, 16);
  const auto enc = dpm_encode(dpm, x0, 10).encoding;
  EXPECT_EQ(&enc.eps_at(8), &enc.eps.front());
  EXPECT_EQ(&enc.eps_at(1), &enc.eps.back());
}

TEST(DpmEncoder, ZeroSigmaRejected) {
  Dpm dpm = model(4, 11);
  dpm.schedule.beta[2] = 0.0;
  dpm.schedule.sigma[2] = 0.0;
  EXPECT_THROW(dpm_encode(dpm, random_cloud(1, 8), 0), NumericalError);
}

TEST(DpmDecoder, StepCountMismatchNamesBoth) {
  const Dpm a = model(8, 12);
  const Dpm b = model(16, 13);
  const auto enc = dpm_encode(a, random_cloud(1, 8), 0);
  try {
    dpm_decode(b, enc.z_src, enc.encoding);
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("T=8"), std::string::npos);
    EXPECT_NE(msg.find("T=16"), std::string::npos);
  }
  EXPECT_THROW(translate(a, b, data::PointCloud(random_cloud(1, 8)), 0), ConfigError);
}

TEST(DpmDecoder, ZeroResidualsWithZeroNetworkIsClosedForm) {
  Dpm dpm = model(6, 14);
  dpm.params.value("decoder/out/weight").fill(0.0f);
  dpm.params.value("decoder/out/bias").fill(0.0f);
  DpmEncoding enc;
  enc.source_T = 6;
  enc.x_T = random_cloud(15, 10);
  enc.eps.assign(6, Tensor::matrix(10, 3));
  const Tensor y = dpm_decode(dpm, Tensor({16}), enc);
  double gain = 1.0;
  for (int t = 1; t <= 6; ++t) gain /= std::sqrt(1.0 - dpm.schedule.beta_at(t));
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], enc.x_T[i] * gain, 1e-5);
}

TEST(DpmDecoder, PermutationEquivariant) {
  const Dpm dpm = model(8, 16);
  const Tensor x0 = random_cloud(17, 64);
  const auto enc = dpm_encode(dpm, x0, 18);
  std::vector<std::size_t> perm(64);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::reverse(perm.begin(), perm.end());
  auto permute = [&](const Tensor& t) {
    Tensor out = t;
    for (std::size_t i = 0; i < 64; ++i)
      for (std::size_t d = 0; d < 3; ++d) out.at(i, d) = t.at(perm[i], d);
    return out;
  };
  DpmEncoding penc = enc.encoding;
  penc.x_T = permute(penc.x_T);
  for (auto& e : penc.eps) e = permute(e);
  const Tensor y = dpm_decode(dpm, enc.z_src, enc.encoding);
  const Tensor yp = dpm_decode(dpm, enc.z_src, penc);
  EXPECT_EQ(yp, permute(y));
}

TEST(Translate, SameModelIsIdentity) {
  Dpm dpm = model(32, 19);
  dpm.norm = data::NormStats{{0.1, 0.2, -0.3}, 2.0};
  const data::PointCloud x(random_cloud(20, 100));
  const auto r = translate(dpm, dpm, x, 21);
  EXPECT_LT(numerics::max_abs_diff(r.output.points(), x.points()), 1e-4f);
  EXPECT_EQ(r.z_src, r.z_tgt);
}

TEST(Translate, DimensionMismatch) {
  const Dpm dpm = model(4, 22);
  Tensor four = Tensor::matrix(5, 4);
  EXPECT_THROW(translate(dpm, dpm, data::PointCloud(four), 0), ConfigError);
}

TEST(Cycle, SameModelReconstructsExactly) {
  const Dpm dpm = model(16, 23);
  const data::PointCloud x(random_cloud(24, 64));
  EXPECT_LT(reconstruct_cycle(dpm, dpm, x, 25).cd, 1e-6);
}

TEST(Encoding, SaveLoadRoundTrip) {
  const Dpm dpm = model(8, 26);
  const auto enc = dpm_encode(dpm, random_cloud(27, 16), 28).encoding;
  const auto path = (std::filesystem::temp_directory_path() / "pctrans_enc.bin").string();
  save_encoding(path, enc);
  EXPECT_EQ(load_encoding(path), enc);
  std::filesystem::remove(path);
}

TEST(TranslateDataset, PreservesOrderCountAndLabels) {
  const Dpm a = model(8, 29, "a");
  const Dpm b = model(8, 30, "b");
  auto input = data::gen_shapes(6, 32, 31, false);
  const pipeline::Provenance prov{5, "abc", "0.0"};
  const auto out = pipeline::translate_dataset(a, b, input, prov);
  ASSERT_EQ(out.size(), input.size());
  EXPECT_EQ(out.class_labels, input.class_labels);
  EXPECT_EQ(out.domain_label, "b");
  for (std::size_t e = 0; e < out.size(); ++e) {
    const auto single = translate(a, b, input.events[e], pipeline::event_seed(5, pipeline::kTranslateStream, e));
    EXPECT_EQ(out.events[e], single.output);
  }
  EXPECT_EQ(out.metadata.at("event_seeds").size(), 6u);
  EXPECT_EQ(out.metadata.at("provenance").at("config_hash"), "abc");
}
