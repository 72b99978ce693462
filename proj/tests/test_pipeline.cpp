#include <gtest/gtest.h>

#include <filesystem>

#include "pctrans/pctrans.hpp"

using namespace pctrans;
using namespace pctrans::pipeline;

TEST(Config, DefaultTrainingSettings) {
  const RunConfig c;
  const auto t = c.train_config(3);
  EXPECT_EQ(t.batch, 128u);
  EXPECT_EQ(t.iters, 1'000'000);
  EXPECT_EQ(t.T, 256);
  EXPECT_EQ(t.network.latent, 256u);
  EXPECT_DOUBLE_EQ(t.lr_initial, 1e-3);
  EXPECT_DOUBLE_EQ(t.lr_final, 1e-4);
  EXPECT_DOUBLE_EQ(t.beta_1, 1e-4);
  EXPECT_DOUBLE_EQ(t.beta_T, 0.02);
  EXPECT_EQ(c.resolution, 28u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, JsonRoundTripAndOverrides) {
  RunConfig c = nlohmann::json::parse(R"({"seed": 9, "T": 64, "decoder_hidden": [8, 8], "beta_T": 0.1})")
                    .get<RunConfig>();
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.T, 64);
  EXPECT_EQ(c.decoder_hidden, (std::vector<std::size_t>{8, 8}));
  EXPECT_EQ(c.train_config(3).beta_T, 0.1);
  EXPECT_DOUBLE_EQ(c.train_config(3).beta_1, 4e-4);
  const RunConfig back = nlohmann::json(c).get<RunConfig>();
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, UnknownKeyRejected) {
  try {
    (void)nlohmann::json::parse(R"({"iterations": 5})").get<RunConfig>();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("iterations"), std::string::npos);
  }
}

TEST(Config, WrongTypeIsConfigError) {
  EXPECT_THROW((void)nlohmann::json::parse(R"({"T": "many"})").get<RunConfig>(), ConfigError);
}

TEST(Config, ValidationErrors) {
  RunConfig c;
  c.dataset = "spirals";
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.keep_fraction = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.dataset = "shapes";
  c.n_events = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.beta_T = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, HashStableAndSensitive) {
  RunConfig a, b;
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  b.seed = 1;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Generation, PairIsDeterministicAndUnpaired) {
  RunConfig c;
  c.n_events = 20;
  c.n_points = 16;
  const auto p = gen_domain_pair(c);
  const auto q = gen_domain_pair(c);
  EXPECT_EQ(p.x, q.x);
  EXPECT_EQ(p.y, q.y);
  EXPECT_EQ(p.x.domain_label, "lines_clean");
  EXPECT_EQ(p.y.domain_label, "lines_noisy");
  EXPECT_NE(p.x.events[0].at(0, 1), p.y.events[0].at(0, 1));
  EXPECT_EQ(p.x.metadata.at("provenance").at("config_hash"), config_hash(c));
}

TEST(Generation, ShapesSummaryCountsClasses) {
  RunConfig c;
  c.dataset = "shapes";
  c.n_events = 10;
  c.n_points = 16;
  const auto s = dataset_summary(gen_domain_pair(c).x);
  EXPECT_EQ(s.at("class_counts").at("triangular_prism"), 5);
  EXPECT_EQ(s.at("class_counts").at("cuboid"), 5);
}

TEST(Training, SidecarEchoesHyperparameters) {
  RunConfig c;
  c.n_events = 8;
  c.n_points = 16;
  c.iters = 3;
  c.batch = 4;
  c.T = 8;
  c.F = 8;
  c.encoder_hidden = {8};
  c.decoder_hidden = {8};
  const auto result = train_domain(gen_domain_pair(c).x, c);
  const auto side = diffusion::sidecar_json(result.dpm);
  EXPECT_EQ(side.at("T"), 8);
  EXPECT_EQ(side.at("F"), 8);
  const auto& train = side.at("provenance").at("train");
  EXPECT_EQ(train.at("batch"), 4);
  EXPECT_EQ(train.at("iters"), 3);
  EXPECT_EQ(train.at("lr_initial"), 1e-3);
  EXPECT_EQ(train.at("lr_final"), 1e-4);
  EXPECT_EQ(side.at("provenance").at("config_hash"), config_hash(c));
  EXPECT_EQ(side.at("provenance").at("version"), kVersion);
  EXPECT_EQ(result.losses.size(), 3u);
}

TEST(Training, LossCsvWindows) {
  std::vector<float> losses(250, 1.0f);
  losses[99] = 3.0f;
  const std::string csv = loss_csv(losses, {1, "h", "v"});
  EXPECT_EQ(csv,
            "# seed=1 config_hash=h version=v\n"
            "iteration,loss,window_mean\n"
            "99,3,1.02\n"
            "199,1,1\n"
            "249,1,1\n");
}

TEST(Evaluate, IdenticalSetsGiveZeroTranslationJsd) {
  RunConfig c;
  c.n_events = 40;
  c.n_points = 64;
  const auto p = gen_domain_pair(c);
  const std::vector<double> cd{0.1, 0.2, 0.3};
  const auto r = evaluate({&p.y, &p.y, &cd, true}, c);
  EXPECT_EQ(*r.jsd_trans, 0.0);
  EXPECT_GT(*r.jsd_rand, *r.jsd_in_domain);
  EXPECT_NEAR(*r.cd_reco_mean, 0.2, 1e-12);
  EXPECT_EQ(r.rows.size(), 4u);
}

TEST(Evaluate, GeneratorTruthLinesHaveSmallMae) {
  RunConfig c;
  c.n_events = 1000;
  c.n_points = 256;
  const auto p = gen_domain_pair(c);
  const auto r = evaluate({&p.y, &p.y, nullptr, true}, c);
  ASSERT_EQ(r.rows.size(), 4u);
  for (const auto& row : r.rows) EXPECT_LT(row.mae, 0.01);
  EXPECT_FALSE(r.cd_reco_mean.has_value());
}

TEST(Cycle, CsvAndRandomPairs) {
  EXPECT_EQ(cycle_csv({0.5, 1.0}, {0, "h", "v"}), "# seed=0 config_hash=h version=v\nevent,cd\n0,0.5\n1,1\n");
  const auto ds = data::gen_shapes(10, 32, 1, false);
  const auto cds = random_pair_chamfer(ds, 20, 2);
  EXPECT_EQ(cds.size(), 20u);
  for (double v : cds) EXPECT_GT(v, 0.0);
  EXPECT_EQ(cds, random_pair_chamfer(ds, 20, 2));
}

TEST(Svg, ProjectionsContainSeries) {
  const auto ds = data::gen_lines(1, 8, 1, true);
  const std::vector<svg::Series> series{{"source", "#1f77b4", &ds.events[0]}};
  const auto svg = svg::projections(series, "event 0");
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("source"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}
