#pragma once
// Evaluation metrics.
//
// Chamfer distance: mean over a of the squared distance to the nearest point
// of b, plus the same from b to a. Spatial coordinates only unless
// include_charge is set.
//
// Set-level JSD: all points of each set are pooled into a voxel histogram
// (default 28 per axis) over the union bounding box widened by 5%; the result
// is the base-2 Jensen-Shannon divergence of the two normalized histograms,
// so it lies in [0, 1].
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pctrans/errors.hpp"
#include "pctrans/point_cloud.hpp"
#include "pctrans/rng.hpp"

namespace pctrans::metrics {

using data::Dataset;
using data::PointCloud;
using numerics::Tensor;

struct MetricOptions {
  bool include_charge = false;
};

namespace detail {

inline std::size_t metric_dims(std::size_t dim, const MetricOptions& opt) {
  return opt.include_charge ? dim : std::min<std::size_t>(dim, 3);
}

// Static k-d tree for exact nearest-neighbour queries.
class KdTree {
 public:
  KdTree(const Tensor& points, std::size_t dims) : dims_(dims), n_(points.rows()) {
    coords_.resize(n_ * dims_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t d = 0; d < dims_; ++d) coords_[i * dims_ + d] = points.at(i, d);
    }
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(2 * n_ / kLeaf + 2);
    build(0, n_);
  }

  // Squared distance from q to its nearest point.
  double nearest_sq(std::span<const double> q) const {
    double best = std::numeric_limits<double>::infinity();
    search(0, q, best);
    return best;
  }

 private:
  static constexpr std::size_t kLeaf = 8;

  struct Node {
    std::size_t begin, end;
    std::size_t axis = 0;
    double split = 0.0;
    std::size_t left = 0, right = 0;
    bool leaf = true;
  };

  double coord(std::size_t idx, std::size_t d) const { return coords_[idx * dims_ + d]; }

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back(Node{begin, end});
    if (end - begin <= kLeaf) return id;
    std::size_t axis = 0;
    double widest = -1.0;
    for (std::size_t d = 0; d < dims_; ++d) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t i = begin; i < end; ++i) {
        lo = std::min(lo, coord(order_[i], d));
        hi = std::max(hi, coord(order_[i], d));
      }
      if (hi - lo > widest) {
        widest = hi - lo;
        axis = d;
      }
    }
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                       return coord(a, axis) < coord(b, axis);
                     });
    const double split = coord(order_[mid], axis);
    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    Node& n = nodes_[id];
    n.leaf = false;
    n.axis = axis;
    n.split = split;
    n.left = left;
    n.right = right;
    return id;
  }

  void search(std::size_t id, std::span<const double> q, double& best) const {
    const Node& n = nodes_[id];
    if (n.leaf) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const std::size_t p = order_[i];
        double d2 = 0.0;
        for (std::size_t d = 0; d < dims_; ++d) {
          const double diff = q[d] - coord(p, d);
          d2 += diff * diff;
        }
        best = std::min(best, d2);
      }
      return;
    }
    const double delta = q[n.axis] - n.split;
    const std::size_t near = delta < 0.0 ? n.left : n.right;
    const std::size_t far = delta < 0.0 ? n.right : n.left;
    search(near, q, best);
    if (delta * delta <= best) search(far, q, best);
  }

  std::size_t dims_;
  std::size_t n_;
  std::vector<double> coords_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

inline double directed_mean(const Tensor& from, const Tensor& to, std::size_t dims) {
  const KdTree tree(to, dims);
  std::vector<double> q(dims);
  double sum = 0.0;
  for (std::size_t i = 0; i < from.rows(); ++i) {
    for (std::size_t d = 0; d < dims; ++d) q[d] = from.at(i, d);
    sum += tree.nearest_sq(q);
  }
  return sum / static_cast<double>(from.rows());
}

}  // namespace detail

inline double chamfer(const Tensor& a, const Tensor& b, MetricOptions opt = {}) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() == 0 || b.rows() == 0) {
    throw ConfigError("chamfer: both clouds must be non-empty N x D tensors, got " + numerics::shape_str(a.shape()) +
                      " and " + numerics::shape_str(b.shape()));
  }
  if (a.cols() != b.cols()) {
    throw ConfigError("chamfer: dimension mismatch " + std::to_string(a.cols()) + " vs " + std::to_string(b.cols()));
  }
  const std::size_t dims = detail::metric_dims(a.cols(), opt);
  return detail::directed_mean(a, b, dims) + detail::directed_mean(b, a, dims);
}

inline double chamfer(const PointCloud& a, const PointCloud& b, MetricOptions opt = {}) {
  return chamfer(a.points(), b.points(), opt);
}

// Base-2 JSD of two probability vectors of equal length.
inline double jensen_shannon(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ConfigError("jensen_shannon: histogram lengths differ");
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) js += 0.5 * p[i] * std::log2(p[i] / m);
    if (q[i] > 0.0) js += 0.5 * q[i] * std::log2(q[i] / m);
  }
  return std::clamp(js, 0.0, 1.0);
}

struct VoxelGrid {
  std::size_t resolution = 28;
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;

  std::size_t dims() const { return lo.size(); }

  std::size_t cell_of(std::span<const float> p) const {
    std::size_t index = 0;
    for (std::size_t d = 0; d < dims(); ++d) {
      const double f = (static_cast<double>(p[d]) - lo[d]) / (hi[d] - lo[d]);
      auto c = static_cast<std::int64_t>(std::floor(f * static_cast<double>(resolution)));
      c = std::clamp<std::int64_t>(c, 0, static_cast<std::int64_t>(resolution) - 1);
      index = index * resolution + static_cast<std::size_t>(c);
    }
    return index;
  }

  void add(const PointCloud& cloud) {
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      ++counts[cell_of(cloud.points().row(i))];
      ++total;
    }
  }
};

struct Bounds {
  std::vector<double> lo;
  std::vector<double> hi;
};

inline Bounds bounding_box(std::span<const PointCloud> clouds, std::size_t dims) {
  Bounds b{std::vector<double>(dims, std::numeric_limits<double>::infinity()),
           std::vector<double>(dims, -std::numeric_limits<double>::infinity())};
  for (const auto& c : clouds) {
    for (std::size_t i = 0; i < c.size(); ++i) {
      for (std::size_t d = 0; d < dims; ++d) {
        b.lo[d] = std::min(b.lo[d], static_cast<double>(c.at(i, d)));
        b.hi[d] = std::max(b.hi[d], static_cast<double>(c.at(i, d)));
      }
    }
  }
  return b;
}

// Widens each axis by 5% of its extent (2.5% per side); a flat axis gets unit width.
inline Bounds inflate(Bounds b) {
  for (std::size_t d = 0; d < b.lo.size(); ++d) {
    const double extent = b.hi[d] - b.lo[d];
    if (extent > 1e-9) {
      b.lo[d] -= 0.025 * extent;
      b.hi[d] += 0.025 * extent;
    } else {
      const double mid = 0.5 * (b.lo[d] + b.hi[d]);
      b.lo[d] = mid - 0.5;
      b.hi[d] = mid + 0.5;
    }
  }
  return b;
}

inline VoxelGrid make_grid(const Bounds& bounds, std::size_t resolution) {
  if (resolution == 0) throw ConfigError("voxel resolution must be positive");
  VoxelGrid g;
  g.resolution = resolution;
  g.lo = bounds.lo;
  g.hi = bounds.hi;
  std::size_t cells = 1;
  for (std::size_t d = 0; d < bounds.lo.size(); ++d) cells *= resolution;
  g.counts.assign(cells, 0);
  return g;
}

// JSD of two count histograms. Cells occupied by only one side contribute
// exactly half their mass, so voxel-disjoint sets give exactly 1.
inline double jsd_counts(const VoxelGrid& a, const VoxelGrid& b) {
  if (a.counts.size() != b.counts.size()) throw ConfigError("jsd_counts: grids differ in size");
  if (a.total == 0 || b.total == 0) throw ConfigError("jsd: zero total points");
  const auto na = static_cast<double>(a.total);
  const auto nb = static_cast<double>(b.total);
  std::uint64_t only_a = 0, only_b = 0;
  double shared = 0.0;
  for (std::size_t i = 0; i < a.counts.size(); ++i) {
    const auto ca = a.counts[i];
    const auto cb = b.counts[i];
    if (ca && cb) {
      const double p = static_cast<double>(ca) / na;
      const double q = static_cast<double>(cb) / nb;
      const double m = 0.5 * (p + q);
      shared += 0.5 * p * std::log2(p / m) + 0.5 * q * std::log2(q / m);
    } else if (ca) {
      only_a += ca;
    } else if (cb) {
      only_b += cb;
    }
  }
  const double js = 0.5 * (static_cast<double>(only_a) / na) + 0.5 * (static_cast<double>(only_b) / nb) + shared;
  return std::clamp(js, 0.0, 1.0);
}

inline double jsd_sets(std::span<const PointCloud> set_a, std::span<const PointCloud> set_b,
                       std::size_t resolution = 28, MetricOptions opt = {}) {
  if (set_a.empty() || set_b.empty()) throw ConfigError("jsd_sets: both sets must be non-empty");
  const std::size_t dim = set_a.front().dim();
  for (const auto* set : {&set_a, &set_b}) {
    for (const auto& c : *set) {
      if (c.dim() != dim) throw ConfigError("jsd_sets: sets mix point dimensions");
    }
  }
  const std::size_t dims = detail::metric_dims(dim, opt);
  Bounds ba = bounding_box(set_a, dims);
  const Bounds bb = bounding_box(set_b, dims);
  for (std::size_t d = 0; d < dims; ++d) {
    ba.lo[d] = std::min(ba.lo[d], bb.lo[d]);
    ba.hi[d] = std::max(ba.hi[d], bb.hi[d]);
  }
  const Bounds box = inflate(ba);
  VoxelGrid ga = make_grid(box, resolution);
  VoxelGrid gb = make_grid(box, resolution);
  for (const auto& c : set_a) ga.add(c);
  for (const auto& c : set_b) gb.add(c);
  return jsd_counts(ga, gb);
}

struct JsdBaselines {
  double jsd_in_domain = 0.0;
  double jsd_rand = 0.0;
};

inline constexpr std::uint64_t kSplitStream = 0x53504C54;   // "SPLT"
inline constexpr std::uint64_t kRandomStream = 0x524E4443;  // "RNDC"

// Uniform clouds in the bounding box of `like`, matching its event count and
// per-event point counts.
inline std::vector<PointCloud> random_clouds_like(std::span<const PointCloud> like, std::uint64_t seed) {
  const std::size_t dim = like.front().dim();
  const Bounds box = bounding_box(like, dim);
  std::vector<PointCloud> out;
  out.reserve(like.size());
  for (std::size_t e = 0; e < like.size(); ++e) {
    Rng rng(seed, {kRandomStream, e});
    PointCloud c(like[e].size(), dim);
    for (std::size_t i = 0; i < c.size(); ++i) {
      for (std::size_t d = 0; d < dim; ++d) c.at(i, d) = static_cast<float>(rng.uniform(box.lo[d], box.hi[d]));
    }
    out.push_back(std::move(c));
  }
  return out;
}

inline JsdBaselines jsd_baselines(std::span<const PointCloud> domain_set, std::uint64_t seed,
                                  std::size_t resolution = 28, MetricOptions opt = {}) {
  if (domain_set.size() < 2) throw ConfigError("jsd_baselines: need at least 2 events");
  std::vector<std::size_t> order(domain_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed, {kSplitStream});
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  const std::size_t half = order.size() / 2;
  std::vector<PointCloud> first, second;
  for (std::size_t i = 0; i < order.size(); ++i) (i < half ? first : second).push_back(domain_set[order[i]]);
  JsdBaselines out;
  out.jsd_in_domain = jsd_sets(first, second, resolution, opt);
  const auto random = random_clouds_like(domain_set, seed);
  out.jsd_rand = jsd_sets(random, domain_set, resolution, opt);
  return out;
}

// Noise-law table for translated lines. Events are binned by the median of
// their y coordinates into equal-width bins over [0, 2]. Within a bin,
// sigma_T is the sample standard deviation of all x coordinates. The
// reference y of a bin is the root-mean-square of its events' median y, the
// point at which the pooled 0.1*y law predicts sigma_T exactly.
struct FittedSigmaRow {
  double y_bin_center = 0.0;
  double y = 0.0;
  double sigma_true = 0.0;
  double sigma_T = 0.0;
  double stderr_ = 0.0;
  double mae = 0.0;
  std::size_t n_events = 0;
  std::size_t n_points = 0;
};

struct FittedSigmaReport {
  std::vector<FittedSigmaRow> rows;
  std::vector<std::string> warnings;
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw ConfigError("median of empty range");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

inline FittedSigmaReport fitted_sigma_report(const Dataset& translated, std::size_t n_bins) {
  if (n_bins == 0) throw ConfigError("fitted_sigma_report: n_bins must be positive");
  if (translated.events.empty()) throw ConfigError("fitted_sigma_report: empty dataset");
  const double width = 2.0 / static_cast<double>(n_bins);
  std::vector<std::vector<std::size_t>> members(n_bins);
  std::vector<double> medians(translated.size());
  for (std::size_t e = 0; e < translated.size(); ++e) {
    const auto& c = translated.events[e];
    std::vector<double> ys(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) ys[i] = c.at(i, 1);
    medians[e] = median_of(std::move(ys));
    if (medians[e] < 0.0 || medians[e] > 2.0) continue;
    const auto bin = std::min(n_bins - 1, static_cast<std::size_t>(medians[e] / width));
    members[bin].push_back(e);
  }
  FittedSigmaReport report;
  for (std::size_t b = 0; b < n_bins; ++b) {
    const double center = (static_cast<double>(b) + 0.5) * width;
    if (members[b].empty()) {
      report.warnings.push_back("y bin centered at " + std::to_string(center) + " is empty; row omitted");
      continue;
    }
    double sum = 0.0, sum_y2 = 0.0;
    std::size_t n = 0;
    for (auto e : members[b]) {
      const auto& c = translated.events[e];
      for (std::size_t i = 0; i < c.size(); ++i) sum += c.at(i, 0);
      n += c.size();
      sum_y2 += medians[e] * medians[e];
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (auto e : members[b]) {
      const auto& c = translated.events[e];
      for (std::size_t i = 0; i < c.size(); ++i) {
        const double r = c.at(i, 0) - mean;
        ss += r * r;
      }
    }
    FittedSigmaRow row;
    row.y_bin_center = center;
    row.y = std::sqrt(sum_y2 / static_cast<double>(members[b].size()));
    row.sigma_true = 0.1 * row.y;
    row.sigma_T = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    row.stderr_ = row.sigma_T / std::sqrt(static_cast<double>(n));
    row.mae = std::abs(row.sigma_true - row.sigma_T);
    row.n_events = members[b].size();
    row.n_points = n;
    report.rows.push_back(row);
  }
  return report;
}

struct TrimResult {
  std::vector<double> kept;
  std::size_t removed_count = 0;
};

// Keeps the ceil(keep_fraction * n) smallest-magnitude values in their
// original order.
inline TrimResult outlier_trim(std::span<const double> values, double keep_fraction) {
  if (values.empty()) throw ConfigError("outlier_trim: empty list");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw ConfigError("outlier_trim: keep_fraction must lie in (0, 1], got " + std::to_string(keep_fraction));
  }
  const auto n = values.size();
  auto keep = static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(n) - 1e-9));
  keep = std::clamp<std::size_t>(keep, 1, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(values[a]) < std::abs(values[b]); });
  std::vector<bool> mask(n, false);
  for (std::size_t i = 0; i < keep; ++i) mask[order[i]] = true;
  TrimResult out;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i]) out.kept.push_back(values[i]);
  }
  out.removed_count = n - keep;
  return out;
}

inline double mean_of(std::span<const double> v) {
  if (v.empty()) throw ConfigError("mean of empty range");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Population standard deviation.
inline double stddev_of(std::span<const double> v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

struct MetricsReport {
  std::optional<double> jsd_trans;
  std::optional<double> jsd_in_domain;
  std::optional<double> jsd_rand;
  std::optional<double> cd_reco_mean;
  std::optional<double> cd_reco_std;
  std::optional<double> cd_clean_mean;
  std::vector<FittedSigmaRow> rows;
};

inline nlohmann::json to_json_value(const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"y", row.y},
                    {"y_bin_center", row.y_bin_center},
                    {"sigma_y", row.sigma_true},
                    {"sigma_T", row.sigma_T},
                    {"stderr", row.stderr_},
                    {"mae", row.mae},
                    {"n_events", row.n_events},
                    {"n_points", row.n_points}});
  }
  return {{"jsd_trans", opt(r.jsd_trans)},         {"jsd_in_domain", opt(r.jsd_in_domain)},
          {"jsd_rand", opt(r.jsd_rand)},           {"cd_reco_mean", opt(r.cd_reco_mean)},
          {"cd_reco_std", opt(r.cd_reco_std)},     {"cd_clean_mean", opt(r.cd_clean_mean)},
          {"fitted_sigma", rows}};
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

// One row per available metric.
inline std::string metrics_csv(const MetricsReport& r, const std::string& header_comment = {}) {
  std::string out = header_comment;
  out += "metric,value\n";
  auto row = [&](const char* name, const std::optional<double>& v) {
    if (v) out += std::string(name) + "," + format_double(*v) + "\n";
  };
  row("jsd_trans", r.jsd_trans);
  row("jsd_in_domain", r.jsd_in_domain);
  row("jsd_rand", r.jsd_rand);
  row("cd_reco_mean", r.cd_reco_mean);
  row("cd_reco_std", r.cd_reco_std);
  row("cd_clean_mean", r.cd_clean_mean);
  return out;
}

// Columns: y, sigma(y), sigma_T, sigma_T / sqrt(N), MAE.
inline std::string fitted_sigma_csv(std::span<const FittedSigmaRow> rows, const std::string& header_comment = {}) {
  std::string out = header_comment;
  out += "y,sigma_y,sigma_T,stderr,mae\n";
  for (const auto& r : rows) {
    out += format_double(r.y) + "," + format_double(r.sigma_true) + "," + format_double(r.sigma_T) + "," +
           format_double(r.stderr_) + "," + format_double(r.mae) + "\n";
  }
  return out;
}

}  // namespace pctrans::metrics
