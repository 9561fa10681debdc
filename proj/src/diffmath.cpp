#include "geometer/diffmath.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "geometer/error.hpp"

namespace geometer {

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_)
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("tensor: {} values for shape {}x{}", data_.size(), rows_, cols_));
}

Tensor Tensor::row_vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(1, n, std::move(values));
}

double Tensor::item() const {
  if (rows_ != 1 || cols_ != 1)
    throw Error(ErrorCode::kShapeMismatch, fmt::format("item() on a {}x{} tensor", rows_, cols_));
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

namespace {

// C[m x n] += A[m x k] * B[k x n]; zero entries of A are skipped.
template <typename TA>
void gemm_nn(const TA* a, std::size_t m, std::size_t k, const double* b, std::size_t n, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const TA* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = static_cast<double>(arow[p]);
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T. B is transposed first so the inner loop is an
// axpy over contiguous memory; the sum over k runs in the same order as a dot product.
void gemm_nt(const double* a, std::size_t m, std::size_t k, const double* b, std::size_t n, double* c) {
  if (n == 1) {
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p];
      c[i] += acc;
    }
    return;
  }
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_nn(a, m, k, bt.data(), n, c);
}

// C[ka x kb] += A[r x ka]^T * B[r x kb]; zero entries of A are skipped.
template <typename TA>
void gemm_tn(const TA* a, std::size_t r, std::size_t ka, const double* b, std::size_t kb, double* c) {
  for (std::size_t p = 0; p < r; ++p) {
    const TA* arow = a + p * ka;
    const double* brow = b + p * kb;
    for (std::size_t i = 0; i < ka; ++i) {
      const double av = static_cast<double>(arow[i]);
      if (av == 0.0) continue;
      double* crow = c + i * kb;
      for (std::size_t j = 0; j < kb; ++j) crow[j] += av * brow[j];
    }
  }
}

// dst[c x r] += src[r x c]^T, in cache-sized tiles. Rows of src with skip[row] set are left out.
void add_transposed(const double* src, std::size_t r, std::size_t c, double* dst, const std::vector<char>* skip = nullptr) {
  constexpr std::size_t kTile = 32;
  for (std::size_t i0 = 0; i0 < r; i0 += kTile)
    for (std::size_t j0 = 0; j0 < c; j0 += kTile)
      for (std::size_t i = i0; i < std::min(r, i0 + kTile); ++i) {
        if (skip && (*skip)[i]) continue;
        for (std::size_t j = j0; j < std::min(c, j0 + kTile); ++j) dst[j * r + i] += src[i * c + j];
      }
}

Tensor transposed(const Tensor& a) {
  Tensor t(a.cols(), a.rows());
  add_transposed(a.data().data(), a.rows(), a.cols(), t.data().data());
  return t;
}

void require(bool ok, std::string_view op, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kShapeMismatch, fmt::format("{}: {}", op, what));
}

std::string shape(const Tensor& t) { return fmt::format("{}x{}", t.rows(), t.cols()); }

}  // namespace

namespace ad {

namespace {

void require_same(const Var& a, const Var& b, std::string_view op) {
  require(a.value().same_shape(b.value()), op,
          fmt::format("shapes {} and {} differ", shape(a.value()), shape(b.value())));
}

void require_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw Error(ErrorCode::kInvalidArgument, "operands recorded on different tapes");
}

}  // namespace

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw Error(ErrorCode::kNonFinite, "constant: non-finite input");
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor value) {
  if (!value.all_finite()) throw Error(ErrorCode::kNonFinite, "parameter: non-finite input");
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::span<const Var> parents, Backward backward) {
  if (!value.all_finite()) throw Error(ErrorCode::kNonFinite, fmt::format("{}: non-finite output", op));
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape() != this) throw Error(ErrorCode::kInvalidArgument, fmt::format("{}: operand from another tape", op));
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : Backward{}});
  return Var(this, nodes_.size() - 1);
}

Tensor* Tape::grad_buffer(const Var& v) {
  Node& node = nodes_[v.id()];
  if (!node.requires_grad) return nullptr;
  if (node.grad.empty() && !node.value.empty()) node.grad = Tensor(node.value.rows(), node.value.cols());
  return &node.grad;
}

void Tape::backward(const Var& root) {
  if (root.tape() != this) throw Error(ErrorCode::kInvalidArgument, "backward: root from another tape");
  Node& r = nodes_[root.id()];
  if (r.value.rows() != 1 || r.value.cols() != 1)
    throw Error(ErrorCode::kShapeMismatch, "backward: root must be a 1x1 scalar");
  if (!r.requires_grad) return;
  r.grad = Tensor(1, 1, 1.0);
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.backward || node.grad.empty()) continue;
    node.backward(*this, node.grad);
  }
}

Tensor Tape::grad(const Var& v) const {
  const Node& node = nodes_[v.id()];
  if (node.grad.empty()) return Tensor(node.value.rows(), node.value.cols());
  return node.grad;
}

// ---- linear algebra -------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  require_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.cols() == bv.rows(), "matmul", fmt::format("{} * {}", shape(av), shape(bv)));
  Tensor out(av.rows(), bv.cols());
  gemm_nn(av.data().data(), av.rows(), av.cols(), bv.data().data(), bv.cols(), out.data().data());
  return a.tape()->record("matmul", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (Tensor* ga = t.grad_buffer(a))
      gemm_nt(g.data().data(), g.rows(), g.cols(), bv.data().data(), bv.rows(), ga->data().data());
    if (Tensor* gb = t.grad_buffer(b))
      gemm_tn(av.data().data(), av.rows(), av.cols(), g.data().data(), g.cols(), gb->data().data());
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.cols() == bv.cols(), "matmul_nt", fmt::format("{} * ({})^T", shape(av), shape(bv)));
  Tensor out(av.rows(), bv.rows());
  gemm_nt(av.data().data(), av.rows(), av.cols(), bv.data().data(), bv.rows(), out.data().data());
  return a.tape()->record("matmul_nt", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (Tensor* ga = t.grad_buffer(a))
      gemm_nn(g.data().data(), g.rows(), g.cols(), bv.data().data(), bv.cols(), ga->data().data());
    if (Tensor* gb = t.grad_buffer(b))
      gemm_tn(g.data().data(), g.rows(), g.cols(), av.data().data(), av.cols(), gb->data().data());
  });
}

Var matmul_nt(const FloatMatrixView& x, const Var& w) {
  const Tensor& wv = w.value();
  require(x.cols == wv.cols(), "matmul_nt", fmt::format("{}x{} * ({})^T", x.rows, x.cols, shape(wv)));
  require(x.data.size() == x.rows * x.cols, "matmul_nt", "feature view size mismatch");
  const Tensor wt = transposed(wv);
  Tensor out(x.rows, wv.rows());
  gemm_nn(x.data.data(), x.rows, x.cols, wt.data().data(), wt.cols(), out.data().data());
  return w.tape()->record("matmul_nt", std::move(out), {w}, [x, w](Tape& t, const Tensor& g) {
    Tensor* gw = t.grad_buffer(w);
    if (!gw) return;
    Tensor tmp(x.cols, g.cols());
    gemm_tn(x.data.data(), x.rows, x.cols, g.data().data(), g.cols(), tmp.data().data());
    // Sparse features leave most rows of tmp at zero; those are not copied back.
    std::vector<char> unused(x.cols, 1);
    for (std::size_t i = 0; i < x.data.size(); ++i)
      if (x.data[i] != 0.0f) unused[i % x.cols] = 0;
    add_transposed(tmp.data().data(), tmp.rows(), tmp.cols(), gw->data().data(), &unused);
  });
}

Var transpose(const Var& a) {
  return a.tape()->record("transpose", transposed(a.value()), {a}, [a](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a)) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) (*ga)(j, i) += g(i, j);
    }
  });
}

// ---- elementwise ----------------------------------------------------------

namespace {

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

void accumulate(Tensor* dst, const Tensor& src, double s = 1.0) {
  if (!dst) return;
  for (std::size_t i = 0; i < src.size(); ++i) (*dst)[i] += s * src[i];
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_tape(a, b);
  require_same(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.tape()->record("add", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    accumulate(t.grad_buffer(a), g);
    accumulate(t.grad_buffer(b), g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_tape(a, b);
  require_same(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape()->record("sub", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    accumulate(t.grad_buffer(a), g);
    accumulate(t.grad_buffer(b), g, -1.0);
  });
}

Var mul(const Var& a, const Var& b) {
  require_tape(a, b);
  require_same(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape()->record("mul", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * b.value()[i];
    if (Tensor* gb = t.grad_buffer(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * a.value()[i];
  });
}

Var scale(const Var& a, double s) {
  return a.tape()->record("scale", map(a.value(), [s](double v) { return v * s; }), {a},
                          [a, s](Tape& t, const Tensor& g) { accumulate(t.grad_buffer(a), g, s); });
}

Var add_scalar(const Var& a, double s) {
  return a.tape()->record("add_scalar", map(a.value(), [s](double v) { return v + s; }), {a},
                          [a](Tape& t, const Tensor& g) { accumulate(t.grad_buffer(a), g); });
}

namespace {

Var broadcast_row(const Var& a, const Var& row, double sign, std::string_view op) {
  require_tape(a, row);
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  require(rv.rows() == 1 && rv.cols() == av.cols(), op, fmt::format("row {} against {}", shape(rv), shape(av)));
  Tensor out = av;
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) += sign * rv(0, j);
  return a.tape()->record(op, std::move(out), {a, row}, [a, row, sign](Tape& t, const Tensor& g) {
    accumulate(t.grad_buffer(a), g);
    if (Tensor* gr = t.grad_buffer(row))
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) (*gr)(0, j) += sign * g(i, j);
  });
}

}  // namespace

Var add_row(const Var& a, const Var& row) { return broadcast_row(a, row, 1.0, "add_row"); }
Var sub_row(const Var& a, const Var& row) { return broadcast_row(a, row, -1.0, "sub_row"); }

// ---- structural -----------------------------------------------------------

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorCode::kInvalidArgument, "concat_rows: no operands");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    require_tape(parts.front(), p);
    require(p.cols() == cols, "concat_rows", "column counts differ");
    rows += p.rows();
  }
  Tensor out(rows, cols);
  std::size_t at = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + at);
    at += p.value().size();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return parts.front().tape()->record("concat_rows", std::move(out), parts, [keep](Tape& t, const Tensor& g) {
    std::size_t at = 0;
    for (const Var& p : keep) {
      const std::size_t n = p.value().size();
      if (Tensor* gp = t.grad_buffer(p))
        for (std::size_t i = 0; i < n; ++i) (*gp)[i] += g[at + i];
      at += n;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorCode::kInvalidArgument, "concat_cols: no operands");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    require_tape(parts.front(), p);
    require(p.rows() == rows, "concat_cols", "row counts differ");
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) out(i, offset + j) = p.value()(i, j);
    offset += p.cols();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return parts.front().tape()->record("concat_cols", std::move(out), parts, [keep](Tape& t, const Tensor& g) {
    std::size_t offset = 0;
    for (const Var& p : keep) {
      if (Tensor* gp = t.grad_buffer(p))
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < p.cols(); ++j) (*gp)(i, j) += g(i, offset + j);
      offset += p.cols();
    }
  });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  require(begin + count <= av.cols(), "slice_cols", fmt::format("[{}, {}) outside {}", begin, begin + count, shape(av)));
  Tensor out(av.rows(), count);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = av(i, begin + j);
  return a.tape()->record("slice_cols", std::move(out), {a}, [a, begin](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) (*ga)(i, begin + j) += g(i, j);
  });
}

Var gather_rows(const Var& a, std::span<const std::uint32_t> rows) {
  const Tensor& av = a.value();
  Tensor out(rows.size(), av.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    require(rows[k] < av.rows(), "gather_rows", fmt::format("row {} outside {}", rows[k], shape(av)));
    std::copy(av.row(rows[k]).begin(), av.row(rows[k]).end(), out.row(k).begin());
  }
  std::vector<std::uint32_t> idx(rows.begin(), rows.end());
  return a.tape()->record("gather_rows", std::move(out), {a}, [a, idx = std::move(idx)](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a))
      for (std::size_t k = 0; k < idx.size(); ++k) {
        auto dst = ga->row(idx[k]);
        auto src = g.row(k);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      }
  });
}

Var pick(const Var& a, std::span<const std::uint32_t> rows, std::span<const std::uint32_t> cols) {
  const Tensor& av = a.value();
  require(rows.size() == cols.size(), "pick", "row and column index lists differ in length");
  Tensor out(rows.size(), 1);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    require(rows[k] < av.rows() && cols[k] < av.cols(), "pick", "index outside tensor");
    out(k, 0) = av(rows[k], cols[k]);
  }
  std::vector<std::uint32_t> r(rows.begin(), rows.end()), c(cols.begin(), cols.end());
  return a.tape()->record("pick", std::move(out), {a}, [a, r = std::move(r), c = std::move(c)](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a))
      for (std::size_t k = 0; k < r.size(); ++k) (*ga)(r[k], c[k]) += g(k, 0);
  });
}

// ---- nonlinearities ---------------------------------------------------------

namespace {

Tensor softmax_values(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto x = a.row(i);
    auto y = out.row(i);
    const double mx = *std::max_element(x.begin(), x.end());
    double total = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) total += (y[j] = std::exp(x[j] - mx));
    for (double& v : y) v /= total;
  }
  return out;
}

}  // namespace

Var softmax_rows(const Var& a) {
  require(a.cols() > 0, "softmax_rows", "empty rows");
  Tensor out = softmax_values(a.value());
  return a.tape()->record("softmax_rows", std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    Tensor* ga = t.grad_buffer(a);
    if (!ga) return;
    const Tensor y = softmax_values(a.value());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) (*ga)(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

Var log_softmax_rows(const Var& a) {
  const Tensor& av = a.value();
  require(av.cols() > 0, "log_softmax_rows", "empty rows");
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    auto x = av.row(i);
    const double mx = *std::max_element(x.begin(), x.end());
    double total = 0.0;
    for (double v : x) total += std::exp(v - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < x.size(); ++j) out(i, j) = x[j] - lse;
  }
  return a.tape()->record("log_softmax_rows", std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    Tensor* ga = t.grad_buffer(a);
    if (!ga) return;
    const Tensor y = softmax_values(a.value());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) total += g(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) (*ga)(i, j) += g(i, j) - y(i, j) * total;
    }
  });
}

Var leaky_relu(const Var& a, double slope) {
  Tensor out = map(a.value(), [slope](double v) { return v > 0.0 ? v : slope * v; });
  return a.tape()->record("leaky_relu", std::move(out), {a}, [a, slope](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * (a.value()[i] > 0.0 ? 1.0 : slope);
  });
}

Var elu(const Var& a, double alpha) {
  Tensor out = map(a.value(), [alpha](double v) { return v > 0.0 ? v : alpha * std::expm1(v); });
  return a.tape()->record("elu", std::move(out), {a}, [a, alpha](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = a.value()[i];
        (*ga)[i] += g[i] * (x > 0.0 ? 1.0 : alpha * std::exp(x));
      }
  });
}

Var exp(const Var& a) {
  Tensor out = map(a.value(), [](double v) { return std::exp(v); });
  Tensor keep = out;
  return a.tape()->record("exp", std::move(out), {a}, [a, y = std::move(keep)](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i];
  });
}

Var log(const Var& a) {
  for (double v : a.value().data())
    if (!(v > 0.0)) throw Error(ErrorCode::kNonFinite, fmt::format("log: non-positive input {}", v));
  Tensor out = map(a.value(), [](double v) { return std::log(v); });
  return a.tape()->record("log", std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / a.value()[i];
  });
}

Var clamp_min(const Var& a, double lo) {
  Tensor out = map(a.value(), [lo](double v) { return std::max(v, lo); });
  return a.tape()->record("clamp_min", std::move(out), {a}, [a, lo](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i)
        if (a.value()[i] >= lo) (*ga)[i] += g[i];
  });
}

// ---- reductions -----------------------------------------------------------

Var sum(const Var& a) {
  const auto d = a.value().data();
  const double total = std::accumulate(d.begin(), d.end(), 0.0);
  return a.tape()->record("sum", Tensor::scalar(total), {a}, [a](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a))
      for (double& v : ga->data()) v += g[0];
  });
}

Var mean(const Var& a) {
  require(a.value().size() > 0, "mean", "empty tensor");
  const auto d = a.value().data();
  const double n = static_cast<double>(d.size());
  const double total = std::accumulate(d.begin(), d.end(), 0.0);
  return a.tape()->record("mean", Tensor::scalar(total / n), {a}, [a, n](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a))
      for (double& v : ga->data()) v += g[0] / n;
  });
}

Var mean_rows(const Var& a) {
  const Tensor& av = a.value();
  require(av.rows() > 0, "mean_rows", "no rows");
  Tensor out(1, av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(0, j) += av(i, j);
  const double n = static_cast<double>(av.rows());
  for (double& v : out.data()) v /= n;
  return a.tape()->record("mean_rows", std::move(out), {a}, [a, n](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < ga->rows(); ++i)
        for (std::size_t j = 0; j < ga->cols(); ++j) (*ga)(i, j) += g(0, j) / n;
  });
}

Var row_max(const Var& a, const std::vector<char>* mask) {
  const Tensor& av = a.value();
  if (mask) require(mask->size() == av.size(), "row_max", "mask size differs from tensor");
  Tensor out(av.rows(), 1);
  std::vector<std::uint32_t> arg(av.rows());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    bool found = false;
    for (std::size_t j = 0; j < av.cols(); ++j) {
      if (mask && !(*mask)[i * av.cols() + j]) continue;
      if (!found || av(i, j) > out(i, 0)) {
        out(i, 0) = av(i, j);
        arg[i] = static_cast<std::uint32_t>(j);
        found = true;
      }
    }
    if (!found) throw Error(ErrorCode::kInvalidArgument, fmt::format("row_max: row {} has no eligible entry", i));
  }
  return a.tape()->record("row_max", std::move(out), {a}, [a, arg = std::move(arg)](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < arg.size(); ++i) (*ga)(i, arg[i]) += g(i, 0);
  });
}

// ---- geometry ---------------------------------------------------------------

Var sq_dist(const Var& a, const Var& b) {
  require_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.cols() == bv.cols(), "sq_dist", fmt::format("{} vs {}", shape(av), shape(bv)));
  Tensor out(av.rows(), bv.rows());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < bv.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < av.cols(); ++k) {
        const double d = av(i, k) - bv(j, k);
        acc += d * d;
      }
      out(i, j) = acc;
    }
  return a.tape()->record("sq_dist", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor* ga = t.grad_buffer(a);
    Tensor* gb = t.grad_buffer(b);
    for (std::size_t i = 0; i < av.rows(); ++i)
      for (std::size_t j = 0; j < bv.rows(); ++j) {
        const double w = 2.0 * g(i, j);
        if (w == 0.0) continue;
        for (std::size_t k = 0; k < av.cols(); ++k) {
          const double d = w * (av(i, k) - bv(j, k));
          if (ga) (*ga)(i, k) += d;
          if (gb) (*gb)(j, k) -= d;
        }
      }
  });
}

Var squared_euclidean(const Var& a, const Var& b) {
  require_tape(a, b);
  require_same(a, b, "squared_euclidean");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) {
    const double d = a.value()[i] - b.value()[i];
    acc += d * d;
  }
  return a.tape()->record("squared_euclidean", Tensor::scalar(acc), {a, b}, [a, b](Tape& t, const Tensor& g) {
    Tensor* ga = t.grad_buffer(a);
    Tensor* gb = t.grad_buffer(b);
    for (std::size_t i = 0; i < a.value().size(); ++i) {
      const double d = 2.0 * g[0] * (a.value()[i] - b.value()[i]);
      if (ga) (*ga)[i] += d;
      if (gb) (*gb)[i] -= d;
    }
  });
}

namespace {
constexpr double kCosineEps = 1e-12;

double norm_of(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}
}  // namespace

Var cosine_sim(const Var& a, const Var& b) {
  require_tape(a, b);
  require(a.value().size() == b.value().size(), "cosine_sim", "vector lengths differ");
  const double na = norm_of(a.value().data());
  const double nb = norm_of(b.value().data());
  if (na < kCosineEps || nb < kCosineEps)
    throw Error(ErrorCode::kInvalidArgument, "cosine_sim: near-zero-norm input");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) dot += a.value()[i] * b.value()[i];
  const double c = std::clamp(dot / (na * nb), -1.0, 1.0);
  return a.tape()->record("cosine_sim", Tensor::scalar(c), {a, b}, [a, b, na, nb, c](Tape& t, const Tensor& g) {
    Tensor* ga = t.grad_buffer(a);
    Tensor* gb = t.grad_buffer(b);
    for (std::size_t i = 0; i < a.value().size(); ++i) {
      const double ai = a.value()[i];
      const double bi = b.value()[i];
      if (ga) (*ga)[i] += g[0] * (bi / (na * nb) - c * ai / (na * na));
      if (gb) (*gb)[i] += g[0] * (ai / (na * nb) - c * bi / (nb * nb));
    }
  });
}

Var normalize_rows(const Var& a, double eps, const Tensor& fallback) {
  const Tensor& av = a.value();
  require(fallback.same_shape(av), "normalize_rows", "fallback shape differs");
  Tensor out(av.rows(), av.cols());
  std::vector<double> norms(av.rows());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    norms[i] = norm_of(av.row(i));
    for (std::size_t j = 0; j < av.cols(); ++j)
      out(i, j) = norms[i] < eps ? fallback(i, j) : av(i, j) / norms[i];
  }
  Tensor y = out;
  return a.tape()->record("normalize_rows", std::move(out), {a},
                          [a, eps, norms = std::move(norms), y = std::move(y)](Tape& t, const Tensor& g) {
                            Tensor* ga = t.grad_buffer(a);
                            if (!ga) return;
                            for (std::size_t i = 0; i < g.rows(); ++i) {
                              if (norms[i] < eps) continue;
                              double dot = 0.0;
                              for (std::size_t j = 0; j < g.cols(); ++j) dot += y(i, j) * g(i, j);
                              for (std::size_t j = 0; j < g.cols(); ++j)
                                (*ga)(i, j) += (g(i, j) - y(i, j) * dot) / norms[i];
                            }
                          });
}

// ---- graph segments ---------------------------------------------------------

Var segment_softmax(const Var& scores, std::span<const std::uint32_t> offsets) {
  const Tensor& sv = scores.value();
  require(!offsets.empty() && offsets.back() == sv.size(), "segment_softmax", "offsets do not cover the scores");
  Tensor out(sv.rows(), sv.cols());
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const auto lo = offsets[s], hi = offsets[s + 1];
    if (lo == hi) continue;
    double mx = sv[lo];
    for (auto e = lo; e < hi; ++e) mx = std::max(mx, sv[e]);
    double total = 0.0;
    for (auto e = lo; e < hi; ++e) total += (out[e] = std::exp(sv[e] - mx));
    for (auto e = lo; e < hi; ++e) out[e] /= total;
  }
  std::vector<std::uint32_t> off(offsets.begin(), offsets.end());
  Tensor y = out;
  return scores.tape()->record("segment_softmax", std::move(out), {scores},
                               [scores, off = std::move(off), y = std::move(y)](Tape& t, const Tensor& g) {
                                 Tensor* gs = t.grad_buffer(scores);
                                 if (!gs) return;
                                 for (std::size_t s = 0; s + 1 < off.size(); ++s) {
                                   double dot = 0.0;
                                   for (auto e = off[s]; e < off[s + 1]; ++e) dot += g[e] * y[e];
                                   for (auto e = off[s]; e < off[s + 1]; ++e) (*gs)[e] += y[e] * (g[e] - dot);
                                 }
                               });
}

Var segment_aggregate(const Var& weights, const Var& values, std::span<const std::uint32_t> cols,
                      std::span<const std::uint32_t> offsets) {
  require_tape(weights, values);
  const Tensor& wv = weights.value();
  const Tensor& vv = values.value();
  require(wv.size() == cols.size(), "segment_aggregate", "one weight per column index required");
  require(!offsets.empty() && offsets.back() == cols.size(), "segment_aggregate", "offsets do not cover the edges");
  const std::size_t segments = offsets.size() - 1;
  const std::size_t d = vv.cols();
  Tensor out(segments, d);
  for (std::size_t s = 0; s < segments; ++s)
    for (auto e = offsets[s]; e < offsets[s + 1]; ++e) {
      require(cols[e] < vv.rows(), "segment_aggregate", "column index outside values");
      const double w = wv[e];
      auto src = vv.row(cols[e]);
      auto dst = out.row(s);
      for (std::size_t j = 0; j < d; ++j) dst[j] += w * src[j];
    }
  std::vector<std::uint32_t> c(cols.begin(), cols.end()), off(offsets.begin(), offsets.end());
  return weights.tape()->record(
      "segment_aggregate", std::move(out), {weights, values},
      [weights, values, c = std::move(c), off = std::move(off)](Tape& t, const Tensor& g) {
        Tensor* gw = t.grad_buffer(weights);
        Tensor* gv = t.grad_buffer(values);
        const Tensor& wv = weights.value();
        const Tensor& vv = values.value();
        for (std::size_t s = 0; s + 1 < off.size(); ++s) {
          auto gs = g.row(s);
          for (auto e = off[s]; e < off[s + 1]; ++e) {
            if (gw) {
              double dot = 0.0;
              auto src = vv.row(c[e]);
              for (std::size_t j = 0; j < gs.size(); ++j) dot += gs[j] * src[j];
              (*gw)[e] += dot;
            }
            if (gv) {
              auto dst = gv->row(c[e]);
              for (std::size_t j = 0; j < gs.size(); ++j) dst[j] += wv[e] * gs[j];
            }
          }
        }
      });
}

ValueAndGrad value_and_grad(const ScalarFunction& f, std::span<const Tensor> params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.parameter(p));
  Var out = f(tape, vars);
  tape.backward(out);
  ValueAndGrad result;
  result.value = out.value().item();
  for (const Var& v : vars) {
    result.grads.push_back(tape.grad(v));
    if (!result.grads.back().all_finite()) throw Error(ErrorCode::kNonFinite, "value_and_grad: non-finite gradient");
  }
  return result;
}

}  // namespace ad

double squared_euclidean(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kShapeMismatch, "squared_euclidean: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kShapeMismatch, "cosine_sim: length mismatch");
  const double na = ad::norm_of(a);
  const double nb = ad::norm_of(b);
  if (na < ad::kCosineEps || nb < ad::kCosineEps) throw Error(ErrorCode::kInvalidArgument, "cosine_sim: near-zero-norm input");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

Tensor softmax_rows(const Tensor& a) { return ad::softmax_values(a); }

}  // namespace geometer
