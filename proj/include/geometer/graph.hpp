#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

namespace geometer {

using NodeId = std::uint32_t;
using ClassId = std::int32_t;

inline constexpr ClassId kUnlabeled = -1;

/// Unordered pair of row indices, stored with first < second.
using EdgeRows = std::pair<std::uint32_t, std::uint32_t>;

/// Immutable attributed graph snapshot.
///
/// Rows are dense indices [0, node_count). Each row carries a stable external
/// node id that survives induced_subgraph. Features are stored as row-major f32,
/// matching the on-disk container. Adjacency is kept in CSR form with sorted
/// neighbor lists and never contains the row itself.
class Graph {
 public:
  Graph() = default;

  /// Validates every invariant: ids unique, feature length = node_count * feature_dim,
  /// edges in range, no self-loops, no repeated unordered pair.
  Graph(std::vector<NodeId> node_ids, std::size_t feature_dim, std::vector<float> features,
        std::vector<EdgeRows> edges, std::vector<ClassId> labels);

  std::size_t node_count() const { return node_ids_.size(); }
  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t edge_count() const { return edges_.size(); }

  std::span<const float> features() const { return features_; }
  std::span<const float> feature_row(std::size_t row) const {
    return std::span<const float>(features_).subspan(row * feature_dim_, feature_dim_);
  }

  /// Sorted by (first, second); first < second.
  const std::vector<EdgeRows>& edges() const { return edges_; }
  const std::vector<ClassId>& labels() const { return labels_; }
  const std::vector<NodeId>& node_ids() const { return node_ids_; }

  ClassId label(std::size_t row) const { return labels_[row]; }
  NodeId node_id(std::size_t row) const { return node_ids_[row]; }

  std::optional<std::uint32_t> row_of(NodeId id) const;
  /// Throws kUnknownNode.
  std::uint32_t require_row(NodeId id) const;
  bool contains(NodeId id) const { return row_of(id).has_value(); }

  std::span<const std::uint32_t> neighbor_rows(std::size_t row) const {
    return std::span<const std::uint32_t>(adjacency_).subspan(offsets_[row],
                                                              offsets_[row + 1] - offsets_[row]);
  }

  /// Labeled node ids grouped by class, each list ascending by row.
  std::map<ClassId, std::vector<NodeId>> nodes_by_class() const;

 private:
  std::size_t feature_dim_ = 1;
  std::vector<NodeId> node_ids_;
  std::vector<float> features_;
  std::vector<EdgeRows> edges_;
  std::vector<ClassId> labels_;
  std::vector<std::uint32_t> offsets_{0};
  std::vector<std::uint32_t> adjacency_;
  std::unordered_map<NodeId, std::uint32_t> row_index_;
};

/// Reads features.bin, edges.tsv and labels.tsv from `directory`.
Graph load_graph(const std::filesystem::path& directory);

/// Reference writer for the canonical format. Row indices become the file's node indices.
void save_graph(const Graph& g, const std::filesystem::path& directory);

/// Subgraph over `keep` (external ids); rows follow the original row order.
Graph induced_subgraph(const Graph& g, std::span<const NodeId> keep);

std::size_t degree_of(const Graph& g, NodeId node);

/// Adjacent node ids, ascending, excluding the node itself.
std::vector<NodeId> neighbors_of(const Graph& g, NodeId node);

/// Nodes within `hops` of any seed (seeds included), as external ids in row order.
std::vector<NodeId> receptive_field(const Graph& g, std::span<const NodeId> seeds, int hops);

}  // namespace geometer
