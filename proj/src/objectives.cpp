#include "geometer/objectives.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "geometer/error.hpp"
#include "geometer/log.hpp"
#include "geometer/rng.hpp"

namespace geometer {

void LossWeights::validate() const {
  if (!(tau > 0.0)) throw Error(ErrorCode::kInvalidArgument, fmt::format("tau must be positive, got {}", tau));
  for (double l : {lambda_p, lambda_u, lambda_s, lambda_kd})
    if (!(l >= 0.0)) throw Error(ErrorCode::kInvalidArgument, fmt::format("loss weights must be non-negative, got {}", l));
  for (const auto& [c, a] : alpha)
    if (!(a >= 0.0 && a <= 1.0))
      throw Error(ErrorCode::kInvalidArgument, fmt::format("alpha of class {} is {}, outside [0, 1]", c, a));
}

double LossWeights::alpha_of(ClassId c) const {
  auto it = alpha.find(c);
  return it == alpha.end() ? 1.0 : it->second;
}

std::map<ClassId, double> inverse_frequency_alpha(const std::map<ClassId, std::size_t>& counts) {
  std::map<ClassId, double> out;
  std::size_t smallest = 0;
  for (const auto& [c, n] : counts) {
    if (n == 0) throw Error(ErrorCode::kInvalidArgument, fmt::format("class {} has no samples", c));
    smallest = smallest == 0 ? n : std::min(smallest, n);
  }
  for (const auto& [c, n] : counts) out[c] = static_cast<double>(smallest) / static_cast<double>(n);
  return out;
}

namespace ad {

Var proximity_loss(const Var& queries, std::span<const std::uint32_t> query_proto, const Var& prototypes,
                   std::span<const double> row_weight) {
  const std::size_t n = queries.rows();
  if (query_proto.size() != n || row_weight.size() != n)
    throw Error(ErrorCode::kShapeMismatch, "proximity_loss: one class index and weight per query required");
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "proximity_loss: no queries");
  for (auto k : query_proto)
    if (k >= prototypes.rows()) throw Error(ErrorCode::kMissingPrototype, fmt::format("no prototype row {}", k));
  Var logp = log_softmax_rows(scale(sq_dist(queries, prototypes), -1.0));
  std::vector<std::uint32_t> rows(n);
  for (std::uint32_t i = 0; i < n; ++i) rows[i] = i;
  Var picked = pick(logp, rows, query_proto);
  Tensor w(n, 1);
  for (std::size_t i = 0; i < n; ++i) w[i] = -row_weight[i];
  return sum(mul(picked, queries.tape()->constant(std::move(w))));
}

Var prototype_center(const Var& prototypes) {
  if (prototypes.rows() == 0) throw Error(ErrorCode::kInvalidArgument, "prototype_center: empty prototype set");
  return mean_rows(prototypes);
}

Var uniformity_loss(const Var& prototypes, std::uint64_t seed) {
  const std::size_t c = prototypes.rows();
  const std::size_t d = prototypes.cols();
  if (c < 2) throw Error(ErrorCode::kInvalidArgument, "uniformity_loss: needs at least two prototypes");
  Var centered = sub_row(prototypes, prototype_center(prototypes));

  Tensor fallback(c, d);
  const Tensor& cv = centered.value();
  for (std::size_t i = 0; i < c; ++i) {
    double norm2 = 0.0;
    for (double v : cv.row(i)) norm2 += v * v;
    if (std::sqrt(norm2) >= kCenterEps) continue;
    logger().warn("prototype {} coincides with the prototype center; using a random direction", i);
    Rng rng = Rng::derive(seed, {0xce17, i});
    double n2 = 0.0;
    auto row = fallback.row(i);
    while (n2 == 0.0) {
      n2 = 0.0;
      for (double& v : row) {
        v = rng.normal();
        n2 += v * v;
      }
    }
    for (double& v : row) v /= std::sqrt(n2);
  }
  Var dirs = normalize_rows(centered, kCenterEps, fallback);
  Var cos = matmul_nt(dirs, dirs);
  std::vector<char> off_diag(c * c, 1);
  for (std::size_t i = 0; i < c; ++i) off_diag[i * c + i] = 0;
  return mean(add_scalar(row_max(cos, &off_diag), 1.0));
}

Var separability_loss(const Var& novel, const Var& old) {
  if (novel.rows() == 0 || old.rows() == 0) throw Error(ErrorCode::kInvalidArgument, "separability_loss: empty prototype list");
  // exp is decreasing, so the nearest old prototype gives the largest term.
  Var nearest = scale(row_max(scale(sq_dist(novel, old), -1.0)), -1.0);
  return mean(exp(scale(nearest, -1.0)));
}

Var softened_logits(const Var& embeddings, const Var& prototypes, double tau, LogitSign sign) {
  if (!(tau > 0.0)) throw Error(ErrorCode::kInvalidArgument, fmt::format("tau must be positive, got {}", tau));
  if (prototypes.rows() == 0) throw Error(ErrorCode::kInvalidArgument, "softened_logits: empty prototype set");
  const double s = (sign == LogitSign::kNegative ? -1.0 : 1.0) / tau;
  return softmax_rows(scale(sq_dist(embeddings, prototypes), s));
}

Var distillation_loss(const Var& student, const Tensor& teacher) {
  if (!student.value().same_shape(teacher))
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("distillation_loss: student {}x{} vs teacher {}x{}", student.rows(), student.cols(),
                            teacher.rows(), teacher.cols()));
  if (teacher.empty()) throw Error(ErrorCode::kInvalidArgument, "distillation_loss: empty logits");
  Tensor log_t(teacher.rows(), teacher.cols());
  for (std::size_t i = 0; i < teacher.size(); ++i) log_t[i] = std::log(std::max(teacher[i], kKdClamp));
  Var ratio = sub(log(clamp_min(student, kKdClamp)), student.tape()->constant(std::move(log_t)));
  return scale(sum(mul(student, ratio)), 1.0 / static_cast<double>(teacher.size()));
}

namespace {

Var weighted(const Var& term, double lambda, Var acc) {
  if (lambda == 0.0 || !term.valid()) return acc;
  Var t = scale(term, lambda);
  return acc.valid() ? add(acc, t) : t;
}

Var zero_like(const LossTerms& terms) {
  for (const Var* v : {&terms.proximity, &terms.uniformity, &terms.separability, &terms.distillation})
    if (v->valid()) return scale(*v, 0.0);
  throw Error(ErrorCode::kInvalidArgument, "loss: no terms given");
}

}  // namespace

Var pretrain_loss(const LossTerms& terms, const LossWeights& w) {
  w.validate();
  Var acc = weighted(terms.proximity, w.lambda_p, Var{});
  acc = weighted(terms.uniformity, w.lambda_u, acc);
  return acc.valid() ? acc : zero_like(terms);
}

Var finetune_loss(const LossTerms& terms, const LossWeights& w) {
  w.validate();
  if (w.lambda_kd > 0.0 && !terms.distillation.valid())
    throw Error(ErrorCode::kMissingTeacher, "finetune_loss: distillation weight set but no teacher logits");
  Var acc = weighted(terms.proximity, w.lambda_p, Var{});
  acc = weighted(terms.uniformity, w.lambda_u, acc);
  acc = weighted(terms.separability, w.lambda_s, acc);
  acc = weighted(terms.distillation, w.lambda_kd, acc);
  return acc.valid() ? acc : zero_like(terms);
}

}  // namespace ad

double proximity_loss(const std::map<ClassId, Tensor>& queries_by_class, const PrototypeSet& prototypes,
                      const std::map<ClassId, double>& alpha) {
  std::vector<std::uint32_t> proto_rows;
  std::vector<double> weights;
  std::vector<double> flat;
  std::size_t d = prototypes.dim();
  for (const auto& [c, q] : queries_by_class) {
    if (q.rows() == 0) continue;
    auto idx = prototypes.index_of(c);
    if (!idx) throw Error(ErrorCode::kMissingPrototype, fmt::format("queries of class {} have no prototype", c));
    if (q.cols() != d) throw Error(ErrorCode::kShapeMismatch, "proximity_loss: query and prototype dims differ");
    auto a = alpha.find(c);
    const double w = (a == alpha.end() ? 1.0 : a->second) / static_cast<double>(q.rows());
    for (std::size_t i = 0; i < q.rows(); ++i) {
      proto_rows.push_back(static_cast<std::uint32_t>(*idx));
      weights.push_back(w);
    }
    flat.insert(flat.end(), q.data().begin(), q.data().end());
  }
  if (proto_rows.empty()) return 0.0;
  ad::Tape tape;
  auto q = tape.constant(Tensor(proto_rows.size(), d, std::move(flat)));
  return ad::proximity_loss(q, proto_rows, tape.constant(prototypes.vectors), weights).value().item();
}

std::vector<double> prototype_center(const PrototypeSet& prototypes) {
  ad::Tape tape;
  auto c = ad::prototype_center(tape.constant(prototypes.vectors)).value().data();
  return {c.begin(), c.end()};
}

double uniformity_loss(const PrototypeSet& prototypes) {
  ad::Tape tape;
  return ad::uniformity_loss(tape.constant(prototypes.vectors)).value().item();
}

double separability_loss(const Tensor& novel, const Tensor& old) {
  ad::Tape tape;
  return ad::separability_loss(tape.constant(novel), tape.constant(old)).value().item();
}

std::vector<double> softened_logits(std::span<const double> embedding, const PrototypeSet& prototypes, double tau,
                                    LogitSign sign) {
  ad::Tape tape;
  auto e = tape.constant(Tensor::row_vector({embedding.begin(), embedding.end()}));
  auto p = ad::softened_logits(e, tape.constant(prototypes.vectors), tau, sign).value().data();
  return {p.begin(), p.end()};
}

double distillation_loss(const Tensor& student, const Tensor& teacher) {
  ad::Tape tape;
  return ad::distillation_loss(tape.constant(student), teacher).value().item();
}

double pretrain_loss(const LossComponents& c, const LossWeights& w) {
  w.validate();
  return w.lambda_p * c.proximity + w.lambda_u * c.uniformity;
}

double finetune_loss(const LossComponents& c, const LossWeights& w) {
  w.validate();
  if (w.lambda_kd > 0.0 && !c.distillation)
    throw Error(ErrorCode::kMissingTeacher, "finetune_loss: distillation weight set but no teacher logits");
  return w.lambda_p * c.proximity + w.lambda_u * c.uniformity + w.lambda_s * c.separability +
         w.lambda_kd * c.distillation.value_or(0.0);
}

}  // namespace geometer
