#pragma once

#include <span>
#include <vector>

#include "geometer/diffmath.hpp"

namespace geometer {

enum class OptimizerKind { kAdam, kSgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Updates a fixed list of tensors in place from gradients given in the same order.
class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, std::vector<Tensor*> params);

  void step(std::span<const Tensor> grads);
  std::size_t steps() const { return steps_; }

 private:
  OptimizerConfig cfg_;
  std::vector<Tensor*> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t steps_ = 0;
};

}  // namespace geometer
