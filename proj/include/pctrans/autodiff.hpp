#pragma once
// Tape-based reverse-mode differentiation over rank-2 float tensors.
//
// A Tape records every operation applied to its Vars. Calling backward() on a
// scalar Var walks the tape in reverse and writes d(output)/d(parameter) into
// the gradient slots of the ParamStore the parameters were borrowed from.
//
// The primitive set is closed: matmul, add (same shape, or a row block
// broadcast), mul, scale, concat_cols, slice_rows/slice_cols, segment_max,
// mean, relu, leaky_relu and mse.
#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pctrans/errors.hpp"
#include "pctrans/params.hpp"
#include "pctrans/tensor.hpp"

namespace pctrans::numerics {

namespace detail {
using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

inline MatMap as_matrix(Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}
inline ConstMatMap as_matrix(const Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}
inline Eigen::Map<Eigen::ArrayXf> as_array(Tensor& t) { return {t.data(), static_cast<Eigen::Index>(t.size())}; }
inline Eigen::Map<const Eigen::ArrayXf> as_array(const Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.size())};
}
}  // namespace detail

enum class GradMode { kTrack, kNone };

class Tape;

class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(GradMode mode = GradMode::kTrack) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  GradMode mode() const { return mode_; }

  Var constant(Tensor value) {
    Node n;
    n.owned = std::move(value);
    return append(std::move(n));
  }

  // Borrows the parameter tensor; the store must outlive the tape.
  Var parameter(const ParamStore& params, const std::string& name) {
    Node n;
    n.borrowed = &params.value(name);
    n.param_name = name;
    n.requires_grad = mode_ == GradMode::kTrack;
    return append(std::move(n));
  }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.borrowed ? *n.borrowed : n.owned;
  }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Gradient buffer of a node, zero-initialized on first use.
  Tensor& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.grad_ready) {
      n.grad = Tensor(value(id).shape());
      n.grad_ready = true;
    }
    return n.grad;
  }

  // Records an op result. Inputs only matter for requires_grad propagation.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    Node n;
    n.owned = std::move(value);
    if (mode_ == GradMode::kTrack) {
      for (const Var& in : inputs) {
        check_owner(in);
        n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
      }
      if (n.requires_grad) n.backward = std::move(backward);
    }
    return append(std::move(n));
  }
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
    Node n;
    n.owned = std::move(value);
    if (mode_ == GradMode::kTrack) {
      for (const Var& in : inputs) {
        check_owner(in);
        n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
      }
      if (n.requires_grad) n.backward = std::move(backward);
    }
    return append(std::move(n));
  }

  void check_owner(const Var& v) const {
    if (v.tape() != this) throw ConfigError("Var belongs to a different tape");
  }

  // Fills every gradient slot of `params` with d(output)/d(param). Parameters
  // that do not reach the output get zero gradients.
  void backward(Var output, ParamStore& params) {
    check_owner(output);
    if (mode_ != GradMode::kTrack) throw ConfigError("backward() on a tape recorded without gradients");
    const Tensor& out = value(output.id());
    if (out.size() != 1) {
      throw ConfigError("backward() needs a scalar output, got shape " + shape_str(out.shape()));
    }
    params.zero_grad();
    grad(output.id())[0] = 1.0f;
    touched_.assign(nodes_.size(), false);
    touched_[output.id()] = true;
    for (std::size_t i = output.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!touched_[i] || !n.requires_grad) continue;
      if (n.backward) n.backward(*this, i);
      if (!n.param_name.empty()) {
        Tensor& slot = params.grad(n.param_name);
        grad(i);
        if (slot.shape() != n.grad.shape()) {
          throw ConfigError("gradient slot '" + n.param_name + "' has shape " + shape_str(slot.shape()) +
                            ", tape gradient has " + shape_str(n.grad.shape()));
        }
        for (std::size_t k = 0; k < slot.size(); ++k) slot[k] += n.grad[k];
      }
    }
  }

  // Used by op backward functions: gradient buffer of an input, marked live.
  Tensor& input_grad(const Var& v) {
    touched_[v.id()] = true;
    return grad(v.id());
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    Tensor grad;
    BackwardFn backward;
    std::string param_name;
    bool requires_grad = false;
    bool grad_ready = false;
  };

  Var append(Node n) {
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  GradMode mode_;
  std::vector<Node> nodes_;
  std::vector<bool> touched_;
};

inline const Tensor& Var::value() const {
  if (!tape_) throw ConfigError("use of an unbound Var");
  return tape_->value(id_);
}

namespace detail {
inline void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ConfigError(std::string(op) + ": expected a rank-2 tensor, got " + shape_str(t.shape()));
}
inline Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw ConfigError("operands recorded on different tapes");
  return *a.tape();
}
}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& tape = detail::same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::require_rank2(av, "matmul");
  detail::require_rank2(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw ConfigError("matmul: shape " + shape_str(av.shape()) + " cannot multiply " + shape_str(bv.shape()));
  }
  Tensor out = Tensor::matrix(av.rows(), bv.cols());
  detail::as_matrix(out).noalias() = detail::as_matrix(av) * detail::as_matrix(bv);
  return tape.record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const auto g = detail::as_matrix(std::as_const(t.grad(self)));
    if (t.requires_grad(a.id())) {
      detail::as_matrix(t.input_grad(a)).noalias() += g * detail::as_matrix(b.value()).transpose();
    }
    if (t.requires_grad(b.id())) {
      detail::as_matrix(t.input_grad(b)).noalias() += detail::as_matrix(a.value()).transpose() * g;
    }
  });
}

// a + b where b has the same shape as a, or b is (e x n), a is (m x n) and e
// divides m: row i of b is added to the i-th contiguous block of m/e rows.
// A single-row b is the usual bias broadcast.
inline Var add(Var a, Var b) {
  Tape& tape = detail::same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() == bv.shape()) {
    Tensor out = av;
    detail::as_array(out) += detail::as_array(bv);
    return tape.record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
      const auto g = detail::as_array(std::as_const(t.grad(self)));
      for (Var in : {a, b}) {
        if (t.requires_grad(in.id())) detail::as_array(t.input_grad(in)) += g;
      }
    });
  }
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.cols() || bv.rows() == 0 ||
      av.rows() % bv.rows() != 0) {
    throw ConfigError("add: shape " + shape_str(av.shape()) + " is not compatible with " + shape_str(bv.shape()));
  }
  const auto blk = static_cast<Eigen::Index>(av.rows() / bv.rows());
  Tensor out = av;
  {
    auto om = detail::as_matrix(out);
    const auto bm = detail::as_matrix(bv);
    for (Eigen::Index e = 0; e < bm.rows(); ++e) om.middleRows(e * blk, blk).rowwise() += bm.row(e);
  }
  return tape.record(std::move(out), {a, b}, [a, b, blk](Tape& t, std::size_t self) {
    const auto g = detail::as_matrix(std::as_const(t.grad(self)));
    if (t.requires_grad(a.id())) detail::as_matrix(t.input_grad(a)) += g;
    if (t.requires_grad(b.id())) {
      auto gb = detail::as_matrix(t.input_grad(b));
      for (Eigen::Index e = 0; e < gb.rows(); ++e) gb.row(e) += g.middleRows(e * blk, blk).colwise().sum();
    }
  });
}

// Elementwise product of equally shaped tensors.
inline Var mul(Var a, Var b) {
  Tape& tape = detail::same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw ConfigError("mul: shape " + shape_str(av.shape()) + " differs from " + shape_str(bv.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a.id())) {
      Tensor& ga = t.input_grad(a);
      const Tensor& bv = b.value();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b.id())) {
      Tensor& gb = t.input_grad(b);
      const Tensor& av = a.value();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

inline Var scale(Var a, float s) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= s;
  return a.tape()->record(std::move(out), {a}, [a, s](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.input_grad(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * g[i];
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ConfigError("concat_cols: no inputs");
  Tape& tape = *parts.front().tape();
  const std::size_t rows = parts.front().value().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    tape.check_owner(p);
    const Tensor& v = p.value();
    detail::require_rank2(v, "concat_cols");
    if (v.rows() != rows) {
      throw ConfigError("concat_cols: shape " + shape_str(parts.front().shape()) + " and " + shape_str(v.shape()) +
                        " differ in rows");
    }
    cols += v.cols();
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    detail::as_matrix(out).middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(p.value().cols())) =
        detail::as_matrix(p.value());
    offset += p.value().cols();
  }
  return tape.record(std::move(out), parts, [parts](Tape& t, std::size_t self) {
    const auto g = detail::as_matrix(std::as_const(t.grad(self)));
    std::size_t offset = 0;
    for (const Var& p : parts) {
      const auto width = static_cast<Eigen::Index>(p.value().cols());
      if (t.requires_grad(p.id())) {
        detail::as_matrix(t.input_grad(p)) += g.middleCols(static_cast<Eigen::Index>(offset), width);
      }
      offset += static_cast<std::size_t>(width);
    }
  });
}

inline Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  detail::require_rank2(av, "slice_rows");
  if (begin > end || end > av.rows()) {
    throw ConfigError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                      shape_str(av.shape()));
  }
  const std::size_t cols = av.cols();
  Tensor out(Shape{end - begin, cols},
             std::vector<float>(av.data() + begin * cols, av.data() + end * cols));
  return a.tape()->record(std::move(out), {a}, [a, begin, cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.input_grad(a);
    float* dst = ga.data() + begin * cols;
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

inline Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  detail::require_rank2(av, "slice_cols");
  if (begin > end || end > av.cols()) {
    throw ConfigError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                      shape_str(av.shape()));
  }
  const auto b = static_cast<Eigen::Index>(begin);
  const auto w = static_cast<Eigen::Index>(end - begin);
  Tensor out = Tensor::matrix(av.rows(), end - begin);
  detail::as_matrix(out) = detail::as_matrix(av).middleCols(b, w);
  return a.tape()->record(std::move(out), {a}, [a, b, w](Tape& t, std::size_t self) {
    detail::as_matrix(t.input_grad(a)).middleCols(b, w) += detail::as_matrix(std::as_const(t.grad(self)));
  });
}

// Max over consecutive groups of `group` rows: (e*group x n) -> (e x n).
// Ties route the gradient to the first maximal row.
inline Var segment_max(Var a, std::size_t group) {
  const Tensor& av = a.value();
  detail::require_rank2(av, "segment_max");
  if (group == 0 || av.rows() % group != 0 || av.rows() == 0) {
    throw ConfigError("segment_max: " + std::to_string(group) + "-row groups do not tile " + shape_str(av.shape()));
  }
  const std::size_t groups = av.rows() / group;
  const std::size_t cols = av.cols();
  Tensor out = Tensor::matrix(groups, cols);
  std::vector<std::uint32_t> arg(groups * cols);
  for (std::size_t e = 0; e < groups; ++e) {
    float* orow = out.data() + e * cols;
    std::uint32_t* arow = arg.data() + e * cols;
    const float* first = av.data() + e * group * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      orow[c] = first[c];
      arow[c] = 0;
    }
    for (std::size_t r = 1; r < group; ++r) {
      const float* row = first + r * cols;
      for (std::size_t c = 0; c < cols; ++c) {
        if (row[c] > orow[c]) {
          orow[c] = row[c];
          arow[c] = static_cast<std::uint32_t>(r);
        }
      }
    }
  }
  return a.tape()->record(std::move(out), {a},
                          [a, group, cols, arg = std::move(arg)](Tape& t, std::size_t self) {
                            const Tensor& g = t.grad(self);
                            Tensor& ga = t.input_grad(a);
                            const std::size_t groups = g.size() / cols;
                            for (std::size_t e = 0; e < groups; ++e) {
                              for (std::size_t c = 0; c < cols; ++c) {
                                const std::size_t r = e * group + arg[e * cols + c];
                                ga[r * cols + c] += g[e * cols + c];
                              }
                            }
                          });
}

inline Var mean(Var a) {
  const Tensor& av = a.value();
  if (av.empty()) throw ConfigError("mean of an empty tensor");
  double s = 0.0;
  for (float v : av.values()) s += v;
  const auto n = static_cast<double>(av.size());
  return a.tape()->record(Tensor::scalar(static_cast<float>(s / n)), {a}, [a, n](Tape& t, std::size_t self) {
    const float g = static_cast<float>(t.grad(self)[0] / n);
    for (auto& v : t.input_grad(a).values()) v += g;
  });
}

inline Var leaky_relu(Var a, float slope) {
  Tensor out = a.value();
  {
    auto o = detail::as_array(out);
    o = (o > 0.0f).select(o, slope * o);
  }
  return a.tape()->record(std::move(out), {a}, [a, slope](Tape& t, std::size_t self) {
    const auto y = detail::as_array(t.value(self));
    const auto g = detail::as_array(std::as_const(t.grad(self)));
    detail::as_array(t.input_grad(a)) += (y > 0.0f).select(g, slope * g);
  });
}

inline Var relu(Var a) {
  Tensor out = a.value();
  detail::as_array(out) = detail::as_array(out).max(0.0f);
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const auto y = detail::as_array(t.value(self));
    const auto g = detail::as_array(std::as_const(t.grad(self)));
    detail::as_array(t.input_grad(a)) += (y > 0.0f).select(g, 0.0f);
  });
}

// Mean squared error over all entries: mean((pred - target)^2).
inline Var mse(Var pred, Var target) {
  Tape& tape = detail::same_tape(pred, target);
  const Tensor& p = pred.value();
  const Tensor& q = target.value();
  if (p.shape() != q.shape()) {
    throw ConfigError("mse: shape " + shape_str(p.shape()) + " differs from " + shape_str(q.shape()));
  }
  if (p.empty()) throw ConfigError("mse of empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - q[i];
    s += d * d;
  }
  const auto n = static_cast<double>(p.size());
  return tape.record(Tensor::scalar(static_cast<float>(s / n)), {pred, target},
                     [pred, target, n](Tape& t, std::size_t self) {
                       const float k = static_cast<float>(2.0 * t.grad(self)[0] / n);
                       const Tensor& p = pred.value();
                       const Tensor& q = target.value();
                       if (t.requires_grad(pred.id())) {
                         Tensor& gp = t.input_grad(pred);
                         for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += k * (p[i] - q[i]);
                       }
                       if (t.requires_grad(target.id())) {
                         Tensor& gq = t.input_grad(target);
                         for (std::size_t i = 0; i < gq.size(); ++i) gq[i] -= k * (p[i] - q[i]);
                       }
                     });
}

}  // namespace pctrans::numerics
