#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "geometer/diffmath.hpp"
#include "geometer/prototype.hpp"

namespace geometer {

enum class LogitSign { kNegative, kPositive };

struct LossWeights {
  double lambda_p = 1.0;
  double lambda_u = 1.0;
  double lambda_s = 1.0;
  double lambda_kd = 1.0;
  double tau = 2.0;
  LogitSign logit_sign = LogitSign::kNegative;
  std::map<ClassId, double> alpha;  // missing classes weigh 1

  /// Throws kInvalidArgument on tau <= 0, a negative lambda or alpha outside [0, 1].
  void validate() const;
  double alpha_of(ClassId c) const;
};

/// alpha_k proportional to 1 / n_k, scaled so the rarest class gets 1.
std::map<ClassId, double> inverse_frequency_alpha(const std::map<ClassId, std::size_t>& counts);

constexpr double kKdClamp = 1e-12;
constexpr double kCenterEps = 1e-8;

namespace ad {

/// queries: n x d; query_proto[i] indexes the prototype row of query i;
/// row_weight[i] is alpha_k / n_k of that query's class.
Var proximity_loss(const Var& queries, std::span<const std::uint32_t> query_proto, const Var& prototypes,
                   std::span<const double> row_weight);

Var prototype_center(const Var& prototypes);

/// Rows of `prototypes` that coincide with the center get a unit direction drawn from `seed`.
Var uniformity_loss(const Var& prototypes, std::uint64_t seed = 0);

/// Each novel prototype scored against its nearest old prototype.
Var separability_loss(const Var& novel, const Var& old);

/// Softmax over prototypes of -d/tau (or +d/tau with LogitSign::kPositive), one row per embedding.
Var softened_logits(const Var& embeddings, const Var& prototypes, double tau, LogitSign sign = LogitSign::kNegative);

/// sum(s * (log s - log t)) / (queries * classes), logs clamped at kKdClamp.
Var distillation_loss(const Var& student, const Tensor& teacher);

struct LossTerms {
  Var proximity;
  Var uniformity;
  Var separability;
  Var distillation;  // invalid when there is no teacher
};

Var pretrain_loss(const LossTerms& terms, const LossWeights& w);
/// Throws kMissingTeacher when lambda_kd > 0 and no distillation term is given.
Var finetune_loss(const LossTerms& terms, const LossWeights& w);

}  // namespace ad

// Plain-value forms.

double proximity_loss(const std::map<ClassId, Tensor>& queries_by_class, const PrototypeSet& prototypes,
                      const std::map<ClassId, double>& alpha = {});
std::vector<double> prototype_center(const PrototypeSet& prototypes);
double uniformity_loss(const PrototypeSet& prototypes);
double separability_loss(const Tensor& novel, const Tensor& old);
std::vector<double> softened_logits(std::span<const double> embedding, const PrototypeSet& prototypes, double tau,
                                    LogitSign sign = LogitSign::kNegative);
double distillation_loss(const Tensor& student, const Tensor& teacher);

struct LossComponents {
  double proximity = 0.0;
  double uniformity = 0.0;
  double separability = 0.0;
  std::optional<double> distillation;
};

double pretrain_loss(const LossComponents& c, const LossWeights& w);
double finetune_loss(const LossComponents& c, const LossWeights& w);

}  // namespace geometer
