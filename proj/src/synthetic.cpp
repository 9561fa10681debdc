#include "geometer/synthetic.hpp"

#include <algorithm>
#include <set>

#include "geometer/error.hpp"
#include "geometer/rng.hpp"

namespace geometer {

SyntheticSpec cora_ml_like(std::uint64_t seed) {
  SyntheticSpec s;
  s.class_sizes = {818, 585, 426, 418, 351, 217, 180};
  s.feature_dim = 2879;
  s.edges = 8158;
  s.seed = seed;
  return s;
}

Graph make_synthetic_graph(const SyntheticSpec& spec) {
  std::size_t labeled = 0;
  for (auto n : spec.class_sizes) labeled += n;
  const std::size_t n = labeled + spec.unlabeled;
  if (n < 2 || spec.feature_dim == 0 || spec.words_per_node == 0)
    throw Error(ErrorCode::kInvalidArgument, "synthetic graph needs nodes, features and words");
  if (spec.edges > n * (n - 1) / 2) throw Error(ErrorCode::kInvalidArgument, "too many edges requested");

  Rng rng = Rng::derive(spec.seed, {0x5717});
  std::vector<ClassId> labels;
  labels.reserve(n);
  std::vector<std::vector<std::uint32_t>> members(spec.class_sizes.size());
  for (std::size_t c = 0; c < spec.class_sizes.size(); ++c)
    for (std::size_t i = 0; i < spec.class_sizes[c]; ++i) labels.push_back(static_cast<ClassId>(c));
  labels.resize(n, kUnlabeled);
  rng.shuffle(std::span<ClassId>(labels));
  for (std::uint32_t r = 0; r < n; ++r)
    if (labels[r] != kUnlabeled) members[static_cast<std::size_t>(labels[r])].push_back(r);

  std::vector<float> features(n * spec.feature_dim, 0.0f);
  const std::size_t slice = std::min(spec.topic_words, spec.feature_dim);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t w = 0; w < spec.words_per_node; ++w) {
      std::size_t word = 0;
      if (labels[r] != kUnlabeled && rng.uniform01() < spec.topic_prob)
        word = (static_cast<std::size_t>(labels[r]) * slice + rng.below(slice)) % spec.feature_dim;
      else
        word = rng.below(spec.feature_dim);
      features[r * spec.feature_dim + word] = 1.0f;
    }
  }

  std::set<EdgeRows> edges;
  while (edges.size() < spec.edges) {
    const auto u = static_cast<std::uint32_t>(rng.below(n));
    std::uint32_t v = 0;
    if (labels[u] != kUnlabeled && rng.uniform01() < spec.homophily) {
      const auto& same = members[static_cast<std::size_t>(labels[u])];
      v = same[rng.below(same.size())];
    } else {
      v = static_cast<std::uint32_t>(rng.below(n));
    }
    if (u == v) continue;
    edges.insert({std::min(u, v), std::max(u, v)});
  }

  std::vector<NodeId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<NodeId>(i);
  return Graph(std::move(ids), spec.feature_dim, std::move(features), {edges.begin(), edges.end()}, std::move(labels));
}

}  // namespace geometer
