#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "geometer/graph.hpp"

namespace geometer {

using ClassNodes = std::map<ClassId, std::vector<NodeId>>;

struct SessionSpec {
  std::vector<ClassId> novel_classes;
  /// Fixed K-shot supports, keyed by novel class.
  ClassNodes supports;

  bool operator==(const SessionSpec&) const = default;
};

struct ClassPartition {
  std::vector<ClassId> base_classes;
  std::vector<SessionSpec> sessions;
  int k_shot = 5;
  std::uint64_t seed = 0;

  bool operator==(const ClassPartition&) const = default;

  /// Number of stages: the base stage plus one per streaming session.
  std::size_t stage_count() const { return sessions.size() + 1; }

  /// Classes encountered up to and including `stage`, ascending.
  std::vector<ClassId> classes_at(std::size_t stage) const;

  /// Classes introduced at `stage` (the base classes for stage 0), ascending.
  std::vector<ClassId> new_classes_at(std::size_t stage) const;
};

/// Base graph plus cumulative session snapshots, with per-stage evaluation pools.
struct SessionStream {
  ClassPartition partition;
  /// snapshots[0] is the base graph; snapshots[t] holds every node whose label is in C^t
  /// plus all unlabeled nodes.
  std::vector<Graph> snapshots;
  /// eval_pools[t][c]: labeled nodes of class c in C^t that are not fixed supports.
  std::vector<ClassNodes> eval_pools;

  std::size_t stage_count() const { return snapshots.size(); }
};

/// Draws fixed K-shot supports (seeded, uniform without replacement) and builds the stream.
SessionStream build_session_stream(const Graph& g, const std::vector<ClassId>& base_classes,
                                   const std::vector<std::vector<ClassId>>& session_novel_classes,
                                   int k_shot, std::uint64_t seed);

/// Rebuilds the stream from a stored partition; validates every partition invariant.
SessionStream stream_from_partition(const Graph& g, const ClassPartition& partition);

std::string manifest_to_json(const ClassPartition& partition);
ClassPartition manifest_from_json(const std::string& text);

void write_manifest(const ClassPartition& partition, const std::filesystem::path& path);
ClassPartition read_manifest(const std::filesystem::path& path);

}  // namespace geometer
