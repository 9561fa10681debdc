#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "geometer/error.hpp"
#include "geometer/graph.hpp"
#include "geometer/rng.hpp"
#include "support.hpp"

using namespace geometer;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("geometer-test-" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void write_features(const fs::path& dir, std::uint32_t n, std::uint32_t d, const std::vector<float>& values,
                    const char* magic = "GFSC") {
  std::string bytes(magic, 4);
  put_u32(bytes, n);
  put_u32(bytes, d);
  for (float f : values) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(bytes, bits);
  }
  std::ofstream(dir / "features.bin", std::ios::binary) << bytes;
}

void write_text(const fs::path& file, const std::string& text) { std::ofstream(file) << text; }

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Hand-written 3-node path 0 - 1 - 2 with 2 features per node.
void write_path(const fs::path& dir) {
  write_features(dir, 3, 2, {0.5f, -1.0f, 2.0f, 0.25f, 1e-3f, 7.0f});
  write_text(dir / "edges.tsv", "0\t1\n1\t2\n");
  write_text(dir / "labels.tsv", "0\t0\n1\t1\n2\t-1\n");
}

ErrorCode load_error(const fs::path& dir) {
  try {
    load_graph(dir);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("load_graph did not throw");
  return ErrorCode::kIo;
}

Graph random_graph(std::size_t n, double p, std::uint64_t seed, std::vector<std::vector<int>>& adjacency) {
  Rng rng(seed);
  adjacency.assign(n, std::vector<int>(n, 0));
  std::vector<EdgeRows> edges;
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i + 1; j < n; ++j)
      if (rng.uniform01() < p) {
        edges.emplace_back(i, j);
        adjacency[i][j] = adjacency[j][i] = 1;
      }
  std::vector<NodeId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<NodeId>(100 + 3 * i);
  return Graph(ids, 1, std::vector<float>(n, 1.0f), edges, std::vector<ClassId>(n, 0));
}

}  // namespace

TEST_SUITE("graph") {
  TEST_CASE("3-node path loads and round-trips byte for byte") {
    TempDir dir("path");
    write_path(dir.path);
    const Graph g = load_graph(dir.path);
    CHECK(g.node_count() == 3);
    CHECK(g.feature_dim() == 2);
    CHECK(g.edges() == std::vector<EdgeRows>{{0, 1}, {1, 2}});
    CHECK(g.labels() == std::vector<ClassId>{0, 1, kUnlabeled});
    CHECK(g.feature_row(2)[0] == 1e-3f);
    CHECK(g.feature_row(2)[1] == 7.0f);

    TempDir copy("path-copy");
    save_graph(g, copy.path);
    for (const char* f : {"features.bin", "edges.tsv", "labels.tsv"}) CHECK(slurp(dir.path / f) == slurp(copy.path / f));
  }

  TEST_CASE("minimal single-node graph") {
    TempDir dir("single");
    write_features(dir.path, 1, 1, {3.0f});
    write_text(dir.path / "edges.tsv", "");
    write_text(dir.path / "labels.tsv", "0\t4\n");
    const Graph g = load_graph(dir.path);
    CHECK(g.node_count() == 1);
    CHECK(g.edge_count() == 0);
    CHECK(degree_of(g, 0) == 0);
    CHECK(neighbors_of(g, 0).empty());
  }

  TEST_CASE("reverse duplicates are symmetrized away") {
    TempDir dir("sym");
    write_path(dir.path);
    write_text(dir.path / "edges.tsv", "0\t1\n1\t0\n2\t1\n");
    const Graph g = load_graph(dir.path);
    CHECK(g.edges() == std::vector<EdgeRows>{{0, 1}, {1, 2}});
  }

  TEST_CASE("each malformed input has its own error code") {
    TempDir dir("errors");
    write_path(dir.path);
    fs::remove(dir.path / "labels.tsv");
    CHECK(load_error(dir.path) == ErrorCode::kMissingFile);

    write_path(dir.path);
    write_features(dir.path, 3, 2, {0, 0, 0, 0, 0, 0}, "XXXX");
    CHECK(load_error(dir.path) == ErrorCode::kBadHeader);

    write_features(dir.path, 3, 2, {0, 0, 0, 0, 0});
    CHECK(load_error(dir.path) == ErrorCode::kLengthMismatch);
    write_features(dir.path, 3, 2, {0, 0, 0, 0, 0, 0, 0});
    CHECK(load_error(dir.path) == ErrorCode::kLengthMismatch);

    write_path(dir.path);
    write_text(dir.path / "edges.tsv", "0\t1\n0\t1\n");
    CHECK(load_error(dir.path) == ErrorCode::kDuplicateEdge);

    write_text(dir.path / "edges.tsv", "0\t3\n");
    CHECK(load_error(dir.path) == ErrorCode::kNodeOutOfRange);

    write_path(dir.path);
    write_text(dir.path / "labels.tsv", "0\t0\n0\t1\n");
    CHECK(load_error(dir.path) == ErrorCode::kDuplicateLabel);
  }

  TEST_CASE("degree and neighbors match an adjacency-matrix oracle") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::vector<std::vector<int>> adj;
      const Graph g = random_graph(10, 0.3, seed, adj);
      for (std::size_t i = 0; i < 10; ++i) {
        std::size_t row_sum = 0;
        std::vector<NodeId> expected;
        for (std::size_t j = 0; j < 10; ++j)
          if (adj[i][j]) {
            ++row_sum;
            expected.push_back(g.node_id(j));
          }
        CHECK(degree_of(g, g.node_id(i)) == row_sum);
        CHECK(neighbors_of(g, g.node_id(i)) == expected);
      }
    }
  }

  TEST_CASE("degree and neighbors of the path") {
    const Graph g({0, 1, 2}, 1, {0, 0, 0}, {{0, 1}, {1, 2}}, {0, 0, 0});
    CHECK(degree_of(g, 1) == 2);
    CHECK(neighbors_of(g, 1) == std::vector<NodeId>{0, 2});
    CHECK_THROWS_AS(degree_of(g, 9), Error);
    CHECK_THROWS_AS(neighbors_of(g, 9), Error);
  }

  TEST_CASE("graph constructor rejects invalid structure") {
    CHECK_THROWS_AS(Graph({0, 1}, 1, {0, 0}, {{0, 1}, {0, 1}}, {0, 0}), Error);
    CHECK_THROWS_AS(Graph({0, 1}, 1, {0, 0}, {{0, 0}}, {0, 0}), Error);
    CHECK_THROWS_AS(Graph({0, 0}, 1, {0, 0}, {}, {0, 0}), Error);
    CHECK_THROWS_AS(Graph({0, 1}, 2, {0, 0}, {}, {0, 0}), Error);
  }

  TEST_CASE("induced_subgraph examples") {
    const Graph g({0, 1, 2}, 1, {1, 2, 3}, {{0, 1}, {1, 2}}, {0, 1, 2});
    const NodeId ends[] = {0, 2};
    const Graph ends_only = induced_subgraph(g, ends);
    CHECK(ends_only.node_count() == 2);
    CHECK(ends_only.edge_count() == 0);
    CHECK(ends_only.node_ids() == std::vector<NodeId>{0, 2});
    CHECK(ends_only.labels() == std::vector<ClassId>{0, 2});
    CHECK(ends_only.feature_row(1)[0] == 3.0f);

    const Graph empty = induced_subgraph(g, std::span<const NodeId>{});
    CHECK(empty.node_count() == 0);

    const NodeId all[] = {2, 0, 1};
    const Graph same = induced_subgraph(g, all);
    CHECK(same.node_ids() == g.node_ids());
    CHECK(same.edges() == g.edges());
    CHECK(same.labels() == g.labels());

    const NodeId unknown[] = {0, 7};
    try {
      induced_subgraph(g, unknown);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kUnknownNode);
    }
  }

  TEST_CASE("induced_subgraph preserves degree for fully kept neighborhoods") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::vector<std::vector<int>> adj;
      const Graph g = random_graph(30, 0.1, seed + 50, adj);
      Rng rng(seed);
      std::vector<NodeId> keep;
      for (NodeId id : g.node_ids())
        if (rng.uniform01() < 0.6) keep.push_back(id);
      const Graph sub = induced_subgraph(g, keep);
      const std::set<NodeId> kept(keep.begin(), keep.end());
      for (NodeId id : keep) {
        const auto nb = neighbors_of(g, id);
        if (std::all_of(nb.begin(), nb.end(), [&](NodeId n) { return kept.count(n) > 0; }))
          CHECK(degree_of(sub, id) == degree_of(g, id));
      }
      // Every kept edge is an original edge with both endpoints kept.
      std::size_t expected_edges = 0;
      for (const auto& [a, b] : g.edges())
        if (kept.count(g.node_id(a)) && kept.count(g.node_id(b))) ++expected_edges;
      CHECK(sub.edge_count() == expected_edges);
    }
  }

  TEST_CASE("receptive_field grows by hop") {
    const Graph g({0, 1, 2, 3, 4}, 1, {0, 0, 0, 0, 0}, {{0, 1}, {1, 2}, {2, 3}, {3, 4}}, {0, 0, 0, 0, 0});
    const NodeId seed[] = {0};
    CHECK(receptive_field(g, seed, 0) == std::vector<NodeId>{0});
    CHECK(receptive_field(g, seed, 2) == std::vector<NodeId>{0, 1, 2});
    const NodeId both[] = {4, 0};
    CHECK(receptive_field(g, both, 1) == std::vector<NodeId>{0, 1, 3, 4});
  }
}
