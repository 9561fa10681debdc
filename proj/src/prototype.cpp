#include "geometer/prototype.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "geometer/error.hpp"
#include "geometer/log.hpp"
#include "geometer/rng.hpp"

namespace geometer {

std::optional<std::size_t> PrototypeSet::index_of(ClassId c) const {
  auto it = std::lower_bound(classes.begin(), classes.end(), c);
  if (it == classes.end() || *it != c) return std::nullopt;
  return static_cast<std::size_t>(it - classes.begin());
}

std::span<const double> PrototypeSet::vector(ClassId c) const {
  auto i = index_of(c);
  if (!i) throw Error(ErrorCode::kMissingPrototype, fmt::format("no prototype for class {}", c));
  return vectors.row(*i);
}

void PrototypeSet::set(ClassId c, std::span<const double> v, PrototypeOrigin o) {
  if (!classes.empty() && v.size() != dim())
    throw Error(ErrorCode::kShapeMismatch, fmt::format("prototype of dim {} added to a set of dim {}", v.size(), dim()));
  if (auto i = index_of(c)) {
    std::copy(v.begin(), v.end(), vectors.row(*i).begin());
    origin[*i] = o;
    return;
  }
  const auto pos = static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), c) - classes.begin());
  const std::size_t d = v.size();
  Tensor grown(classes.size() + 1, d);
  for (std::size_t r = 0, src = 0; r < grown.rows(); ++r) {
    auto dst = grown.row(r);
    if (r == pos) {
      std::copy(v.begin(), v.end(), dst.begin());
    } else {
      auto row = vectors.row(src++);
      std::copy(row.begin(), row.end(), dst.begin());
    }
  }
  vectors = std::move(grown);
  classes.insert(classes.begin() + static_cast<std::ptrdiff_t>(pos), c);
  origin.insert(origin.begin() + static_cast<std::ptrdiff_t>(pos), o);
}

PrototypeSet PrototypeSet::subset(std::span<const ClassId> wanted) const {
  PrototypeSet out;
  out.vectors = Tensor(wanted.size(), dim());
  for (std::size_t i = 0; i < wanted.size(); ++i) {
    auto v = vector(wanted[i]);
    std::copy(v.begin(), v.end(), out.vectors.row(i).begin());
    out.classes.push_back(wanted[i]);
    out.origin.push_back(origin[*index_of(wanted[i])]);
  }
  return out;
}

ClassAttentionParams init_class_attention(std::size_t dim, std::size_t heads, std::uint64_t seed) {
  if (dim == 0 || heads == 0 || dim % heads != 0)
    throw Error(ErrorCode::kInvalidArgument, fmt::format("class attention: dim {} not divisible into {} heads", dim, heads));
  Rng rng = Rng::derive(seed, {0xa77e});
  const double s = std::sqrt(6.0 / static_cast<double>(2 * dim));
  ClassAttentionParams p;
  p.heads = heads;
  for (Tensor* t : p.tensors()) {
    *t = Tensor(dim, dim);
    for (double& v : t->data()) v = rng.uniform(-s, s);
  }
  return p;
}

std::vector<double> degree_weights(std::span<const std::size_t> degrees) {
  if (degrees.empty()) throw Error(ErrorCode::kInvalidArgument, "degree_weights: no supports");
  double total = 0.0;
  for (auto d : degrees) total += static_cast<double>(d);
  std::vector<double> w(degrees.size());
  if (total == 0.0) {
    logger().info("all support degrees are zero, using uniform weights");
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(degrees.size()));
    return w;
  }
  for (std::size_t i = 0; i < degrees.size(); ++i) w[i] = static_cast<double>(degrees[i]) / total;
  return w;
}

namespace ad {

ClassAttentionVars bind_class_attention(Tape& tape, const ClassAttentionParams& params, bool trainable) {
  auto bind = [&](const Tensor& t) { return trainable ? tape.parameter(t) : tape.constant(t); };
  return {bind(params.query), bind(params.key), bind(params.value), params.heads};
}

Var initial_prototype(const Var& supports, std::span<const std::size_t> degrees, PrototypeInit init) {
  if (supports.rows() == 0) throw Error(ErrorCode::kInvalidArgument, "initial_prototype: no supports");
  if (degrees.size() != supports.rows())
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("initial_prototype: {} degrees for {} supports", degrees.size(), supports.rows()));
  std::vector<double> w = init == PrototypeInit::kMean
                              ? std::vector<double>(supports.rows(), 1.0 / static_cast<double>(supports.rows()))
                              : degree_weights(degrees);
  Var weights = supports.tape()->constant(Tensor::row_vector(std::move(w)));
  return matmul(weights, supports);
}

Var refine_prototype(const ClassAttentionVars& params, const Var& initial, const Var& supports, Tensor* weights_out) {
  const std::size_t d = initial.cols();
  if (initial.rows() != 1 || supports.cols() != d)
    throw Error(ErrorCode::kShapeMismatch, "refine_prototype: initial must be 1 x d and supports K x d");
  if (params.query.rows() != d || params.query.cols() != d)
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("refine_prototype: projections are {}x{}, embeddings have dim {}", params.query.rows(),
                            params.query.cols(), d));
  const std::size_t heads = params.heads;
  const std::size_t dk = d / heads;
  const Var parts[] = {initial, supports};
  Var sequence = concat_rows(parts);
  Var q = matmul(initial, params.query);
  Var k = matmul(sequence, params.key);
  Var v = matmul(sequence, params.value);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));

  std::vector<Var> outs;
  if (weights_out) *weights_out = Tensor(heads, sequence.rows());
  for (std::size_t h = 0; h < heads; ++h) {
    Var w = softmax_rows(scale(matmul_nt(slice_cols(q, h * dk, dk), slice_cols(k, h * dk, dk)), inv_sqrt));
    if (weights_out) std::copy(w.value().data().begin(), w.value().data().end(), weights_out->row(h).begin());
    outs.push_back(matmul(w, slice_cols(v, h * dk, dk)));
  }
  Var attended = outs.size() == 1 ? outs.front() : concat_cols(outs);
  return add(initial, attended);
}

}  // namespace ad

Tensor initial_prototype(const Tensor& supports, std::span<const std::size_t> degrees) {
  ad::Tape tape;
  return ad::initial_prototype(tape.constant(supports), degrees, PrototypeInit::kDegreeWeighted).value();
}

Tensor refine_prototype(const ClassAttentionParams& params, const Tensor& initial, const Tensor& supports) {
  ad::Tape tape;
  auto vars = ad::bind_class_attention(tape, params, false);
  return ad::refine_prototype(vars, tape.constant(initial), tape.constant(supports)).value();
}

Tensor class_attention_weights(const ClassAttentionParams& params, const Tensor& initial, const Tensor& supports) {
  ad::Tape tape;
  auto vars = ad::bind_class_attention(tape, params, false);
  Tensor weights;
  ad::refine_prototype(vars, tape.constant(initial), tape.constant(supports), &weights);
  return weights;
}

PrototypeSet compute_prototypes(const Tensor& embeddings, const Graph& g, const ClassNodes& supports,
                                const ClassAttentionParams* params, const PrototypeOptions& options) {
  if (embeddings.rows() != g.node_count())
    throw Error(ErrorCode::kShapeMismatch, "compute_prototypes: one embedding row per graph node required");
  if (options.refine && !params) throw Error(ErrorCode::kInvalidArgument, "compute_prototypes: refinement needs parameters");
  PrototypeSet out;
  for (const auto& [c, nodes] : supports) {
    if (nodes.empty()) throw Error(ErrorCode::kInvalidArgument, fmt::format("class {} has no supports", c));
    Tensor rows(nodes.size(), embeddings.cols());
    std::vector<std::size_t> degrees;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto r = g.require_row(nodes[i]);
      auto src = embeddings.row(r);
      std::copy(src.begin(), src.end(), rows.row(i).begin());
      degrees.push_back(g.neighbor_rows(r).size());
    }
    ad::Tape tape;
    ad::Var sup = tape.constant(std::move(rows));
    ad::Var p = ad::initial_prototype(sup, degrees, options.init);
    if (options.refine) p = ad::refine_prototype(ad::bind_class_attention(tape, *params, false), p, sup);
    out.set(c, p.value().data(), PrototypeOrigin::kComputed);
  }
  return out;
}

}  // namespace geometer
