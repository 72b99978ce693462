#pragma once
// Dataset-level steps shared by the command-line tool and the test drivers:
// generate a domain pair, train one model per domain, translate or cycle a
// whole dataset, and evaluate the result. Every artifact carries the run's
// seed, config hash and tool version.
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pctrans/config.hpp"
#include "pctrans/generators.hpp"
#include "pctrans/metrics.hpp"
#include "pctrans/pcds.hpp"
#include "pctrans/training.hpp"
#include "pctrans/translation.hpp"
#include "pctrans/version.hpp"

namespace pctrans::pipeline {

using data::Dataset;
using data::PointCloud;
using diffusion::Dpm;

inline constexpr std::uint64_t kDomainXStream = 0x444F4D58;     // "DOMX"
inline constexpr std::uint64_t kDomainYStream = 0x444F4D59;     // "DOMY"
inline constexpr std::uint64_t kTranslateStream = 0x54524E53;   // "TRNS"
inline constexpr std::uint64_t kCycleStream = 0x4359434C;       // "CYCL"
inline constexpr std::uint64_t kBaselineStream = 0x42534C4E;    // "BSLN"
inline constexpr std::uint64_t kPairStream = 0x50414952;        // "PAIR"
inline constexpr std::int64_t kLossLogEvery = 100;

struct Provenance {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string version = kVersion;

  static Provenance of(const RunConfig& c) { return {c.seed, pctrans::config_hash(c), kVersion}; }

  nlohmann::json json() const { return {{"seed", seed}, {"config_hash", config_hash}, {"version", version}}; }
  std::string comment() const {
    return "# seed=" + std::to_string(seed) + " config_hash=" + config_hash + " version=" + version + "\n";
  }
};

inline void stamp(Dataset& ds, const Provenance& prov) {
  if (!ds.metadata.is_object()) ds.metadata = nlohmann::json::object();
  ds.metadata["provenance"] = prov.json();
}

struct DomainPair {
  Dataset x;  // clean
  Dataset y;  // noisy
};

// Both domains draw from independent substreams of the run seed, so the
// pair is unpaired: event i of X and event i of Y share no geometry.
inline DomainPair gen_domain_pair(const RunConfig& c) {
  c.validate();
  const auto sx = derive_seed(c.seed, {kDomainXStream});
  const auto sy = derive_seed(c.seed, {kDomainYStream});
  DomainPair p;
  if (c.dataset == "lines") {
    p.x = data::gen_lines(c.n_events, c.n_points, sx, false);
    p.y = data::gen_lines(c.n_events, c.n_points, sy, true);
  } else if (c.dataset == "shapes") {
    p.x = data::gen_shapes(c.n_events, c.n_points, sx, false);
    p.y = data::gen_shapes(c.n_events, c.n_points, sy, true, c.noise_sigma);
  } else {
    throw ConfigError("gen_domain_pair: dataset '" + c.dataset + "' is imported, not generated");
  }
  const auto prov = Provenance::of(c);
  stamp(p.x, prov);
  stamp(p.y, prov);
  return p;
}

inline nlohmann::json dataset_summary(const Dataset& ds) {
  std::size_t prisms = 0, cuboids = 0;
  for (const auto& l : ds.class_labels) {
    if (l && *l == data::kTriangularPrism) ++prisms;
    if (l && *l == data::kCuboid) ++cuboids;
  }
  nlohmann::json j = {{"domain_label", ds.domain_label}, {"n_events", ds.size()}, {"total_points", ds.total_points()}};
  if (!ds.class_labels.empty()) j["class_counts"] = {{"triangular_prism", prisms}, {"cuboid", cuboids}};
  return j;
}

// Training seed of one domain: derive_seed(seed, [fnv1a(domain_label)]), so
// the two models of a run start from different initializations.
inline std::uint64_t domain_train_seed(std::uint64_t seed, const std::string& domain_label) {
  return derive_seed(seed, {io::fnv1a(domain_label)});
}

// Normalizes with the domain's own statistics and trains its model.
inline diffusion::TrainResult train_domain(const Dataset& raw, const RunConfig& c,
                                           const diffusion::TrainProgress& progress = {}) {
  const auto normalized = data::normalize(raw);
  auto result = diffusion::train_dpm(normalized.data, c.train_config(raw.dim()),
                                     domain_train_seed(c.seed, raw.domain_label), progress);
  result.dpm.provenance["run_seed"] = c.seed;
  result.dpm.provenance["config_hash"] = config_hash(c);
  result.dpm.provenance["version"] = kVersion;
  if (!normalized.warnings.empty()) result.dpm.provenance["warnings"] = normalized.warnings;
  return result;
}

// Every kLossLogEvery-th iteration: its loss and the mean over the window it
// closes.
inline std::string loss_csv(const std::vector<float>& losses, const Provenance& prov) {
  std::string out = prov.comment() + "iteration,loss,window_mean\n";
  double window = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    window += losses[i];
    ++count;
    if ((i + 1) % kLossLogEvery == 0 || i + 1 == losses.size()) {
      out += std::to_string(i) + "," + metrics::format_double(losses[i]) + "," +
             metrics::format_double(window / static_cast<double>(count)) + "\n";
      window = 0.0;
      count = 0;
    }
  }
  return out;
}

inline std::uint64_t event_seed(std::uint64_t seed, std::uint64_t stream, std::size_t index) {
  return derive_seed(seed, {stream, index});
}

inline void require_compatible(const Dpm& a, const Dpm& b) {
  if (a.schedule.T != b.schedule.T) {
    throw ConfigError("models '" + a.domain_label + "' (T=" + std::to_string(a.schedule.T) + ") and '" +
                      b.domain_label + "' (T=" + std::to_string(b.schedule.T) +
                      ") use different diffusion step counts; retrain them with the same T");
  }
  if (a.shape.dim != b.shape.dim) throw ConfigError("models disagree on point dimension");
}

// Translates every event in order. Event e uses seed
// derive_seed(seed, {kTranslateStream, e}); the seeds are listed in the
// output metadata.
inline Dataset translate_dataset(const Dpm& src, const Dpm& tgt, const Dataset& input, const Provenance& prov) {
  require_compatible(src, tgt);
  Dataset out;
  out.domain_label = tgt.domain_label;
  out.class_labels = input.class_labels;
  out.events.reserve(input.size());
  std::vector<std::uint64_t> seeds;
  for (std::size_t e = 0; e < input.size(); ++e) {
    seeds.push_back(event_seed(prov.seed, kTranslateStream, e));
    out.events.push_back(translation::translate(src, tgt, input.events[e], seeds.back()).output);
  }
  out.metadata = {{"translated_from", src.domain_label},
                  {"translated_to", tgt.domain_label},
                  {"source_metadata", input.metadata},
                  {"event_seed_rule", "derive_seed(seed, [0x54524E53, event_index])"},
                  {"event_seeds", seeds}};
  stamp(out, prov);
  return out;
}

struct CycleOutput {
  Dataset reconstructed;
  std::vector<double> cd;
};

inline CycleOutput cycle_dataset(const Dpm& a, const Dpm& b, const Dataset& input, const Provenance& prov) {
  require_compatible(a, b);
  CycleOutput out;
  out.reconstructed.domain_label = a.domain_label;
  out.reconstructed.class_labels = input.class_labels;
  for (std::size_t e = 0; e < input.size(); ++e) {
    auto r = translation::reconstruct_cycle(a, b, input.events[e], event_seed(prov.seed, kCycleStream, e));
    out.cd.push_back(r.cd);
    out.reconstructed.events.push_back(std::move(r.x_back));
  }
  out.reconstructed.metadata = {{"cycle_through", b.domain_label},
                                {"event_seed_rule", "derive_seed(seed, [0x4359434C, event_index])"}};
  stamp(out.reconstructed, prov);
  return out;
}

inline std::string cycle_csv(const std::vector<double>& cd, const Provenance& prov) {
  std::string out = prov.comment() + "event,cd\n";
  for (std::size_t i = 0; i < cd.size(); ++i) out += std::to_string(i) + "," + metrics::format_double(cd[i]) + "\n";
  return out;
}

// Chamfer distances between `pairs` random pairs of distinct events.
inline std::vector<double> random_pair_chamfer(const Dataset& ds, std::size_t pairs, std::uint64_t seed) {
  if (ds.size() < 2) throw ConfigError("random_pair_chamfer: need at least 2 events");
  Rng rng(seed, {kPairStream});
  std::vector<double> out;
  out.reserve(pairs);
  for (std::size_t k = 0; k < pairs; ++k) {
    const auto i = rng.below(ds.size());
    auto j = rng.below(ds.size() - 1);
    if (j >= i) ++j;
    out.push_back(metrics::chamfer(ds.events[i], ds.events[j]));
  }
  return out;
}

inline double median(std::vector<double> v) { return metrics::median_of(std::move(v)); }

struct EvaluateInputs {
  const Dataset* translated = nullptr;  // source events mapped into the reference domain
  const Dataset* reference = nullptr;   // original events of that domain
  const std::vector<double>* cycle_cd = nullptr;
  bool lines = false;
};

inline metrics::MetricsReport evaluate(const EvaluateInputs& in, const RunConfig& c) {
  if (!in.translated || !in.reference) throw ConfigError("evaluate: translated and reference sets are required");
  metrics::MetricsReport r;
  r.jsd_trans = metrics::jsd_sets(in.translated->events, in.reference->events, c.resolution);
  const auto base = metrics::jsd_baselines(in.reference->events, derive_seed(c.seed, {kBaselineStream}),
                                           c.resolution);
  r.jsd_in_domain = base.jsd_in_domain;
  r.jsd_rand = base.jsd_rand;
  if (in.cycle_cd && !in.cycle_cd->empty()) {
    r.cd_reco_mean = metrics::mean_of(*in.cycle_cd);
    r.cd_reco_std = metrics::stddev_of(*in.cycle_cd);
    const auto trimmed = metrics::outlier_trim(*in.cycle_cd, c.keep_fraction);
    r.cd_clean_mean = metrics::mean_of(trimmed.kept);
  }
  if (in.lines) r.rows = metrics::fitted_sigma_report(*in.translated, c.n_bins).rows;
  return r;
}

inline nlohmann::json report_json(const metrics::MetricsReport& r, const Provenance& prov) {
  auto j = metrics::to_json_value(r);
  j["provenance"] = prov.json();
  return j;
}

}  // namespace pctrans::pipeline
