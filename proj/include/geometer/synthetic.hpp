#pragma once

#include <cstdint>
#include <vector>

#include "geometer/graph.hpp"

namespace geometer {

/// Planted-partition citation-like graph with sparse binary bag-of-words features.
struct SyntheticSpec {
  std::vector<std::size_t> class_sizes;
  std::size_t unlabeled = 0;
  std::size_t feature_dim = 0;
  std::size_t edges = 0;
  double homophily = 0.75;         // chance an edge stays inside its class
  std::size_t words_per_node = 18;
  std::size_t topic_words = 60;    // vocabulary slice owned by each class
  double topic_prob = 0.35;        // chance a word comes from the node's class slice
  std::uint64_t seed = 0;
};

/// 2995 nodes in 7 classes, 2879 features and ~8.2k edges.
SyntheticSpec cora_ml_like(std::uint64_t seed);

Graph make_synthetic_graph(const SyntheticSpec& spec);

}  // namespace geometer
