#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pctrans/errors.hpp"
#include "pctrans/tensor.hpp"

namespace pctrans::data {

using numerics::Tensor;

// One event: N points in D dimensions (D = 3 spatial, 4 with charge).
// Point order carries no meaning.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(Tensor points) : points_(std::move(points)) { validate(); }
  PointCloud(std::size_t n, std::size_t dim) : points_(Tensor::matrix(n, dim)) { validate(); }

  const Tensor& points() const { return points_; }
  Tensor& points() { return points_; }
  std::size_t size() const { return points_.rows(); }
  std::size_t dim() const { return points_.cols(); }

  float& at(std::size_t i, std::size_t d) { return points_.at(i, d); }
  float at(std::size_t i, std::size_t d) const { return points_.at(i, d); }

  friend bool operator==(const PointCloud& a, const PointCloud& b) { return a.points_ == b.points_; }

 private:
  void validate() const {
    if (points_.rank() != 2 || points_.rows() == 0 || (points_.cols() != 3 && points_.cols() != 4)) {
      throw ConfigError("point cloud must be N x D with N >= 1 and D in {3, 4}, got " +
                        numerics::shape_str(points_.shape()));
    }
  }

  Tensor points_;
};

struct NormStats {
  std::vector<double> center;
  double scale = 1.0;

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

inline void to_json(nlohmann::json& j, const NormStats& s) { j = {{"center", s.center}, {"scale", s.scale}}; }
inline void from_json(const nlohmann::json& j, NormStats& s) {
  j.at("center").get_to(s.center);
  j.at("scale").get_to(s.scale);
  if (!(s.scale > 0.0)) throw ConfigError("NormStats.scale must be positive");
}

inline constexpr std::uint8_t kTriangularPrism = 0;
inline constexpr std::uint8_t kCuboid = 1;

struct Dataset {
  std::vector<PointCloud> events;
  std::string domain_label;
  // Empty, or one entry per event (0 = triangular prism, 1 = cuboid).
  std::vector<std::optional<std::uint8_t>> class_labels;
  std::optional<NormStats> norm;
  nlohmann::json metadata = nlohmann::json::object();

  std::size_t size() const { return events.size(); }
  std::size_t dim() const { return events.empty() ? 0 : events.front().dim(); }
  std::size_t total_points() const {
    std::size_t n = 0;
    for (const auto& e : events) n += e.size();
    return n;
  }

  void validate() const {
    for (const auto& e : events) {
      if (e.dim() != dim()) throw ConfigError("dataset mixes point dimensions");
    }
    if (!class_labels.empty() && class_labels.size() != events.size()) {
      throw ConfigError("dataset has " + std::to_string(class_labels.size()) + " class labels for " +
                        std::to_string(events.size()) + " events");
    }
    for (const auto& l : class_labels) {
      if (l && *l > 1) throw ConfigError("class label " + std::to_string(*l) + " outside {0, 1}");
    }
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct NormalizeResult {
  Dataset data;
  NormStats stats;
  std::vector<std::string> warnings;
};

// (p - center) / scale, computed in double and rounded once.
inline PointCloud apply_norm(const PointCloud& cloud, const NormStats& stats) {
  if (stats.center.size() != cloud.dim()) {
    throw ConfigError("norm stats have " + std::to_string(stats.center.size()) + " dims, cloud has " +
                      std::to_string(cloud.dim()));
  }
  PointCloud out = cloud;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (std::size_t d = 0; d < cloud.dim(); ++d) {
      out.at(i, d) = static_cast<float>((static_cast<double>(cloud.at(i, d)) - stats.center[d]) / stats.scale);
    }
  }
  return out;
}

inline PointCloud restore_norm(const PointCloud& cloud, const NormStats& stats) {
  if (stats.center.size() != cloud.dim()) {
    throw ConfigError("norm stats have " + std::to_string(stats.center.size()) + " dims, cloud has " +
                      std::to_string(cloud.dim()));
  }
  PointCloud out = cloud;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (std::size_t d = 0; d < cloud.dim(); ++d) {
      out.at(i, d) = static_cast<float>(static_cast<double>(cloud.at(i, d)) * stats.scale + stats.center[d]);
    }
  }
  return out;
}

// center = per-dimension mean over all points; scale = standard deviation of
// all centered coordinates pooled together. Zero spread clamps scale to 1.
inline NormStats fit_norm(const Dataset& dataset, std::vector<std::string>* warnings = nullptr) {
  if (dataset.events.empty()) throw ConfigError("cannot normalize an empty dataset");
  dataset.validate();
  const std::size_t dim = dataset.dim();
  NormStats stats;
  stats.center.assign(dim, 0.0);
  double count = 0.0;
  for (const auto& e : dataset.events) {
    for (std::size_t i = 0; i < e.size(); ++i) {
      for (std::size_t d = 0; d < dim; ++d) stats.center[d] += e.at(i, d);
    }
    count += static_cast<double>(e.size());
  }
  for (auto& c : stats.center) c /= count;
  double ss = 0.0;
  for (const auto& e : dataset.events) {
    for (std::size_t i = 0; i < e.size(); ++i) {
      for (std::size_t d = 0; d < dim; ++d) {
        const double r = e.at(i, d) - stats.center[d];
        ss += r * r;
      }
    }
  }
  stats.scale = std::sqrt(ss / (count * static_cast<double>(dim)));
  if (!(stats.scale > 1e-12)) {
    stats.scale = 1.0;
    if (warnings) warnings->push_back("zero variance in dataset '" + dataset.domain_label + "': scale clamped to 1");
  }
  return stats;
}

inline Dataset apply_norm(const Dataset& dataset, const NormStats& stats) {
  Dataset out = dataset;
  for (auto& e : out.events) e = apply_norm(e, stats);
  out.norm = stats;
  return out;
}

inline NormalizeResult normalize(const Dataset& dataset) {
  NormalizeResult result;
  result.stats = fit_norm(dataset, &result.warnings);
  result.data = apply_norm(dataset, result.stats);
  return result;
}

inline Dataset denormalize(const Dataset& dataset, const NormStats& stats) {
  Dataset out = dataset;
  for (auto& e : out.events) e = restore_norm(e, stats);
  out.norm.reset();
  return out;
}

}  // namespace pctrans::data
