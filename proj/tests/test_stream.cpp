#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "geometer/error.hpp"
#include "geometer/session_stream.hpp"
#include "support.hpp"

using namespace geometer;
using geometer::testing::small_graph;

namespace {

std::set<NodeId> id_set(const Graph& g) { return {g.node_ids().begin(), g.node_ids().end()}; }

ErrorCode build_error(const Graph& g, std::vector<ClassId> base, std::vector<std::vector<ClassId>> sessions, int k) {
  try {
    build_session_stream(g, base, sessions, k, 1);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("build_session_stream did not throw");
  return ErrorCode::kIo;
}

}  // namespace

TEST_SUITE("stream") {
  TEST_CASE("stage structure for 2 base classes and 5 one-way sessions") {
    const Graph g = small_graph(7, 20, 16, 3, 10);
    const SessionStream s = build_session_stream(g, {0, 1}, {{2}, {3}, {4}, {5}, {6}}, 5, 42);
    CHECK(s.stage_count() == 6);
    CHECK(s.partition.classes_at(0) == std::vector<ClassId>{0, 1});
    CHECK(s.partition.classes_at(5) == std::vector<ClassId>{0, 1, 2, 3, 4, 5, 6});
    CHECK(s.partition.new_classes_at(3) == std::vector<ClassId>{4});
    for (std::size_t t = 1; t < s.stage_count(); ++t) {
      const auto& sess = s.partition.sessions[t - 1];
      REQUIRE(sess.supports.size() == 1);
      CHECK(sess.supports.begin()->second.size() == 5);
    }
    CHECK(s.snapshots.back().node_count() == g.node_count());
  }

  TEST_CASE("snapshots are monotone and contain exactly their classes plus unlabeled nodes") {
    const Graph g = small_graph(6, 15, 12, 8, 7);
    const SessionStream s = build_session_stream(g, {3, 0}, {{5, 1}, {2}, {4}}, 3, 9);
    for (std::size_t t = 0; t < s.stage_count(); ++t) {
      const auto classes = s.partition.classes_at(t);
      const std::set<ClassId> allowed(classes.begin(), classes.end());
      std::size_t expected = 0;
      for (ClassId c : g.labels())
        if (c == kUnlabeled || allowed.count(c)) ++expected;
      CHECK(s.snapshots[t].node_count() == expected);
      for (ClassId c : s.snapshots[t].labels()) CHECK((c == kUnlabeled || allowed.count(c) > 0));
      if (t > 0) {
        const auto prev = id_set(s.snapshots[t - 1]);
        const auto cur = id_set(s.snapshots[t]);
        CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
      }
    }
  }

  TEST_CASE("supports never appear in evaluation pools") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      const Graph g = small_graph(5, 12, 8, seed);
      const SessionStream s = build_session_stream(g, {0}, {{1, 2}, {3, 4}}, 5, seed);
      for (std::size_t t = 1; t < s.stage_count(); ++t) {
        for (const auto& [c, sup] : s.partition.sessions[t - 1].supports) {
          CHECK(sup.size() == 5);
          for (std::size_t u = t; u < s.stage_count(); ++u) {
            const auto& pool = s.eval_pools[u].at(c);
            for (NodeId n : sup) CHECK(std::find(pool.begin(), pool.end(), n) == pool.end());
            CHECK(pool.size() + sup.size() == 12);
          }
        }
      }
      // Base classes are evaluated on all their labeled nodes.
      CHECK(s.eval_pools[0].at(0).size() == 12);
    }
  }

  TEST_CASE("supports are drawn from the right class, without replacement") {
    const Graph g = small_graph(3, 10, 8, 4);
    const SessionStream s = build_session_stream(g, {0}, {{1}, {2}}, 9, 17);
    for (const auto& sess : s.partition.sessions)
      for (const auto& [c, sup] : sess.supports) {
        CHECK(std::set<NodeId>(sup.begin(), sup.end()).size() == sup.size());
        for (NodeId n : sup) CHECK(g.label(g.require_row(n)) == c);
      }
  }

  TEST_CASE("support selection is roughly uniform") {
    // Each of 10 nodes is picked with probability k/10 = 0.3.
    const Graph g = small_graph(2, 10, 4, 2);
    std::map<NodeId, int> hits;
    const int trials = 4000;
    for (int seed = 0; seed < trials; ++seed) {
      const auto s = build_session_stream(g, {0}, {{1}}, 3, static_cast<std::uint64_t>(seed));
      for (NodeId n : s.partition.sessions[0].supports.at(1)) ++hits[n];
    }
    CHECK(hits.size() == 10);
    for (const auto& [n, h] : hits) CHECK(std::abs(h / double(trials) - 0.3) < 0.035);
  }

  TEST_CASE("zero sessions leaves only the base stage") {
    const Graph g = small_graph(3, 6, 4, 1);
    const SessionStream s = build_session_stream(g, {0, 1, 2}, {}, 5, 0);
    CHECK(s.stage_count() == 1);
    CHECK(s.snapshots[0].node_count() == g.node_count());
  }

  TEST_CASE("same seed gives byte-identical manifests") {
    const Graph g = small_graph(4, 10, 8, 5);
    const auto a = build_session_stream(g, {0, 1}, {{2}, {3}}, 5, 77);
    const auto b = build_session_stream(g, {0, 1}, {{2}, {3}}, 5, 77);
    CHECK(manifest_to_json(a.partition) == manifest_to_json(b.partition));
    const auto c = build_session_stream(g, {0, 1}, {{2}, {3}}, 5, 78);
    CHECK(manifest_to_json(a.partition) != manifest_to_json(c.partition));
  }

  TEST_CASE("manifest round-trip rebuilds an equal stream") {
    const Graph g = small_graph(5, 10, 8, 6, 4);
    const auto s = build_session_stream(g, {4, 0}, {{2}, {1, 3}}, 4, 12);
    const auto path = std::filesystem::temp_directory_path() / "geometer-test-manifest.json";
    write_manifest(s.partition, path);
    const ClassPartition back = read_manifest(path);
    std::filesystem::remove(path);
    CHECK(back == s.partition);
    const auto rebuilt = stream_from_partition(g, back);
    CHECK(rebuilt.eval_pools == s.eval_pools);
    REQUIRE(rebuilt.snapshots.size() == s.snapshots.size());
    for (std::size_t t = 0; t < s.snapshots.size(); ++t) {
      CHECK(rebuilt.snapshots[t].node_ids() == s.snapshots[t].node_ids());
      CHECK(rebuilt.snapshots[t].edges() == s.snapshots[t].edges());
    }
  }

  TEST_CASE("invalid partitions are rejected") {
    const Graph g = small_graph(4, 6, 4, 7);
    CHECK(build_error(g, {0}, {{1}}, 6) == ErrorCode::kClassTooSmall);
    CHECK(build_error(g, {0, 1}, {{1}}, 2) == ErrorCode::kOverlappingClasses);
    CHECK(build_error(g, {0}, {{2}, {2}}, 2) == ErrorCode::kOverlappingClasses);
    CHECK_NOTHROW(build_session_stream(g, {0}, {{1}}, 5, 0));

    ClassPartition bad = build_session_stream(g, {0}, {{1}}, 2, 0).partition;
    bad.sessions[0].supports[1].push_back(g.nodes_by_class().at(2).front());
    CHECK_THROWS_AS(stream_from_partition(g, bad), Error);
    CHECK_THROWS_AS(manifest_from_json("{\"base_classes\": [0]}"), Error);
  }
}
