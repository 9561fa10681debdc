#pragma once

// Reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every operation applied to its Vars. Values are computed
// eagerly; Tape::backward walks the records in reverse creation order, which
// is a valid topological order because a record can only reference earlier
// ones. Each tape is single-threaded; use one tape per training step.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace geometer {

/// Dense 2-D row-major matrix of doubles. Vectors are 1 x n, scalars 1 x 1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor row_vector(std::vector<double> values);
  static Tensor scalar(double value) { return Tensor(1, 1, value); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols_, cols_); }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }

  bool same_shape(const Tensor& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }
  /// Value of a 1 x 1 tensor.
  double item() const;
  bool all_finite() const;

  bool operator==(const Tensor&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Read-only view over a row-major f32 matrix owned elsewhere (graph features).
struct FloatMatrixView {
  std::span<const float> data;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

namespace ad {

class Tape;

/// Handle to a recorded value. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Propagates the output gradient of record `self` into its parents.
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  /// Records an op result. Throws kNonFinite if `value` has NaN/Inf.
  Var record(std::string_view op, Tensor value, std::span<const Var> parents, Backward backward);
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> parents, Backward backward) {
    return record(op, std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
  }

  /// Seeds d(root)/d(root) = 1 and accumulates gradients into every reachable record.
  void backward(const Var& root);

  /// Gradient of a record after backward(); zeros if unreachable.
  Tensor grad(const Var& v) const;

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of `v` for accumulation, or nullptr when `v` needs no gradient.
  Tensor* grad_buffer(const Var& v);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
};

// ---- operation vocabulary -------------------------------------------------

Var matmul(const Var& a, const Var& b);          // a[m x k] * b[k x n]
Var matmul_nt(const Var& a, const Var& b);       // a[m x k] * b[n x k]^T
/// Constant x[m x k] * w[n x k]^T, skipping zeros of x. The tape keeps the view,
/// so the memory behind `x` must outlive backward().
Var matmul_nt(const FloatMatrixView& x, const Var& w);
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);             // elementwise
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var add_row(const Var& a, const Var& row);       // broadcast row[1 x n] over a[m x n]
Var sub_row(const Var& a, const Var& row);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& a, std::size_t begin, std::size_t count);
Var gather_rows(const Var& a, std::span<const std::uint32_t> rows);
/// out[k] = a(rows[k], cols[k]) as a column.
Var pick(const Var& a, std::span<const std::uint32_t> rows, std::span<const std::uint32_t> cols);

Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var leaky_relu(const Var& a, double negative_slope = 0.2);
Var elu(const Var& a, double alpha = 1.0);
Var exp(const Var& a);
Var log(const Var& a);                           // throws kNonFinite on non-positive input
Var clamp_min(const Var& a, double lo);

Var sum(const Var& a);                           // 1 x 1
Var mean(const Var& a);                          // 1 x 1
Var mean_rows(const Var& a);                     // 1 x n, average over rows
/// Row-wise max as an m x 1 column; entries with mask(i, j) == false are skipped.
/// Gradient flows to the first maximal entry (subgradient).
Var row_max(const Var& a, const std::vector<char>* mask = nullptr);

/// Pairwise squared Euclidean distances: out(i, j) = |a_i - b_j|^2.
Var sq_dist(const Var& a, const Var& b);
/// Sum of squared differences of two equally shaped tensors (1 x 1).
Var squared_euclidean(const Var& a, const Var& b);
/// Cosine similarity of two equally sized vectors, clamped to [-1, 1].
/// Throws kInvalidArgument when either norm is below 1e-12.
Var cosine_sim(const Var& a, const Var& b);
/// Each row divided by its norm. Rows whose norm is below `eps` are replaced by
/// the matching row of `fallback` (treated as a constant).
Var normalize_rows(const Var& a, double eps, const Tensor& fallback);

/// Softmax within contiguous segments of a column: [offsets[s], offsets[s+1]).
Var segment_softmax(const Var& scores, std::span<const std::uint32_t> offsets);
/// out(s, :) = sum over e in segment s of weights[e] * values(cols[e], :).
Var segment_aggregate(const Var& weights, const Var& values, std::span<const std::uint32_t> cols,
                      std::span<const std::uint32_t> offsets);

// ---- plain evaluation helpers --------------------------------------------

struct ValueAndGrad {
  double value = 0.0;
  std::vector<Tensor> grads;
};

using ScalarFunction = std::function<Var(Tape&, std::span<const Var>)>;

/// Evaluates a scalar expression and its gradient w.r.t. every parameter.
/// Unreachable parameters get zero gradients.
ValueAndGrad value_and_grad(const ScalarFunction& f, std::span<const Tensor> params);

}  // namespace ad

// Plain-value conveniences over the same kernels.
double squared_euclidean(std::span<const double> a, std::span<const double> b);
double cosine_sim(std::span<const double> a, std::span<const double> b);
Tensor softmax_rows(const Tensor& a);

}  // namespace geometer
