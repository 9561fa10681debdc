#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "geometer/diffmath.hpp"
#include "geometer/graph.hpp"
#include "geometer/rng.hpp"
#include "geometer/synthetic.hpp"

namespace geometer::testing {

inline Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Tensor t(rows, cols);
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

/// ||a - b|| / max(||a||, ||b||, floor)
inline double relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

/// Worst relative error between tape gradients and central differences.
inline double gradient_check(const ad::ScalarFunction& f, std::vector<Tensor> params, double h = 1e-5) {
  const auto analytic = ad::value_and_grad(f, params);
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor numeric(params[p].rows(), params[p].cols());
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double keep = params[p][i];
      params[p][i] = keep + h;
      const double up = ad::value_and_grad(f, params).value;
      params[p][i] = keep - h;
      const double down = ad::value_and_grad(f, params).value;
      params[p][i] = keep;
      numeric[i] = (up - down) / (2.0 * h);
    }
    worst = std::max(worst, relative_error(analytic.grads[p], numeric));
  }
  return worst;
}

/// Small labeled graph: `classes` classes of `per_class` nodes each, planted partition.
inline Graph small_graph(std::size_t classes, std::size_t per_class, std::size_t dim, std::uint64_t seed,
                         std::size_t unlabeled = 0) {
  SyntheticSpec s;
  s.class_sizes.assign(classes, per_class);
  s.unlabeled = unlabeled;
  s.feature_dim = dim;
  s.edges = (classes * per_class + unlabeled) * 2;
  s.words_per_node = 4;
  s.topic_words = std::max<std::size_t>(1, dim / classes);
  s.topic_prob = 0.6;
  s.seed = seed;
  return make_synthetic_graph(s);
}

}  // namespace geometer::testing
