#include "geometer/optimizer.hpp"

#include <cmath>

#include <fmt/format.h>

#include "geometer/error.hpp"

namespace geometer {

Optimizer::Optimizer(OptimizerConfig cfg, std::vector<Tensor*> params) : cfg_(cfg), params_(std::move(params)) {
  if (!(cfg_.lr > 0.0)) throw Error(ErrorCode::kInvalidArgument, fmt::format("learning rate must be positive, got {}", cfg_.lr));
  if (cfg_.kind == OptimizerKind::kAdam) {
    for (const Tensor* p : params_) {
      m_.emplace_back(p->rows(), p->cols());
      v_.emplace_back(p->rows(), p->cols());
    }
  }
}

void Optimizer::step(std::span<const Tensor> grads) {
  if (grads.size() != params_.size())
    throw Error(ErrorCode::kShapeMismatch, fmt::format("optimizer: {} gradients for {} parameters", grads.size(), params_.size()));
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!grads[i].same_shape(*params_[i])) throw Error(ErrorCode::kShapeMismatch, fmt::format("optimizer: gradient {} has the wrong shape", i));
  ++steps_;

  if (cfg_.kind == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < grads.size(); ++i) {
      auto p = params_[i]->data();
      auto g = grads[i].data();
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= cfg_.lr * g[j];
    }
    return;
  }

  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto p = params_[i]->data();
    auto g = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      p[j] -= cfg_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.eps);
    }
  }
}

}  // namespace geometer
