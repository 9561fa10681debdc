#include "geometer/graph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "binary_io.hpp"
#include "geometer/error.hpp"
#include "geometer/log.hpp"

namespace geometer {

namespace fs = std::filesystem;

Graph::Graph(std::vector<NodeId> node_ids, std::size_t feature_dim, std::vector<float> features,
             std::vector<EdgeRows> edges, std::vector<ClassId> labels)
    : feature_dim_(feature_dim),
      node_ids_(std::move(node_ids)),
      features_(std::move(features)),
      edges_(std::move(edges)),
      labels_(std::move(labels)) {
  const std::size_t n = node_ids_.size();
  if (feature_dim_ == 0) throw Error(ErrorCode::kInvalidArgument, "graph: feature_dim must be positive");
  if (features_.size() != n * feature_dim_)
    throw Error(ErrorCode::kLengthMismatch,
                fmt::format("graph: {} feature values for {} nodes x {} dims", features_.size(), n, feature_dim_));
  if (labels_.size() != n)
    throw Error(ErrorCode::kLengthMismatch, fmt::format("graph: {} labels for {} nodes", labels_.size(), n));

  row_index_.reserve(n);
  for (std::uint32_t r = 0; r < n; ++r) {
    if (!row_index_.emplace(node_ids_[r], r).second)
      throw Error(ErrorCode::kInvalidArgument, fmt::format("graph: node id {} repeated", node_ids_[r]));
  }

  for (auto& e : edges_) {
    if (e.first >= n || e.second >= n)
      throw Error(ErrorCode::kNodeOutOfRange, fmt::format("graph: edge ({}, {}) outside {} nodes", e.first, e.second, n));
    if (e.first == e.second) throw Error(ErrorCode::kInvalidArgument, fmt::format("graph: self-loop on row {}", e.first));
    if (e.first > e.second) std::swap(e.first, e.second);
  }
  std::sort(edges_.begin(), edges_.end());
  if (auto dup = std::adjacent_find(edges_.begin(), edges_.end()); dup != edges_.end())
    throw Error(ErrorCode::kDuplicateEdge, fmt::format("graph: edge ({}, {}) repeated", dup->first, dup->second));

  std::vector<std::uint32_t> degree(n, 0);
  for (const auto& [u, v] : edges_) {
    ++degree[u];
    ++degree[v];
  }
  offsets_.assign(n + 1, 0);
  for (std::size_t r = 0; r < n; ++r) offsets_[r + 1] = offsets_[r] + degree[r];
  adjacency_.resize(offsets_[n]);
  std::vector<std::uint32_t> fill(offsets_.begin(), offsets_.end() - 1);
  for (const auto& [u, v] : edges_) {
    adjacency_[fill[u]++] = v;
    adjacency_[fill[v]++] = u;
  }
  for (std::size_t r = 0; r < n; ++r)
    std::sort(adjacency_.begin() + offsets_[r], adjacency_.begin() + offsets_[r + 1]);
}

std::optional<std::uint32_t> Graph::row_of(NodeId id) const {
  auto it = row_index_.find(id);
  if (it == row_index_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t Graph::require_row(NodeId id) const {
  auto row = row_of(id);
  if (!row) throw Error(ErrorCode::kUnknownNode, fmt::format("node {} is not in the graph", id));
  return *row;
}

std::map<ClassId, std::vector<NodeId>> Graph::nodes_by_class() const {
  std::map<ClassId, std::vector<NodeId>> out;
  for (std::size_t r = 0; r < node_count(); ++r)
    if (labels_[r] != kUnlabeled) out[labels_[r]].push_back(node_ids_[r]);
  return out;
}

namespace {

std::ifstream open_or_throw(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw Error(ErrorCode::kMissingFile, fmt::format("cannot open {}", path.string()));
  return in;
}

// Splits a tab/space separated line into exactly two integer fields.
bool parse_pair(std::string_view line, long long& a, long long& b) {
  auto skip_ws = [&](std::size_t i) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    return i;
  };
  std::size_t i = skip_ws(0);
  auto r1 = std::from_chars(line.data() + i, line.data() + line.size(), a);
  if (r1.ec != std::errc()) return false;
  i = skip_ws(static_cast<std::size_t>(r1.ptr - line.data()));
  auto r2 = std::from_chars(line.data() + i, line.data() + line.size(), b);
  if (r2.ec != std::errc()) return false;
  return skip_ws(static_cast<std::size_t>(r2.ptr - line.data())) == line.size();
}

bool blank(std::string_view line) {
  return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

}  // namespace

Graph load_graph(const fs::path& directory) {
  const fs::path features_path = directory / "features.bin";
  const fs::path edges_path = directory / "edges.tsv";
  const fs::path labels_path = directory / "labels.tsv";

  auto fin = open_or_throw(features_path, std::ios::binary);
  detail::expect_magic(fin, "GFSC", features_path.string());
  const std::uint32_t n = detail::read_u32(fin, features_path.string());
  const std::uint32_t d = detail::read_u32(fin, features_path.string());
  if (d == 0) throw Error(ErrorCode::kBadHeader, features_path.string() + ": feature dimension is zero");
  std::vector<float> features(static_cast<std::size_t>(n) * d);
  detail::read_f32s(fin, features, features_path.string());
  if (!detail::at_eof(fin))
    throw Error(ErrorCode::kLengthMismatch, features_path.string() + ": trailing bytes after payload");

  auto ein = open_or_throw(edges_path);
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen_directed;
  std::set<EdgeRows> undirected;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ein, line)) {
    ++line_no;
    if (blank(line)) continue;
    long long a = 0, b = 0;
    if (!parse_pair(line, a, b))
      throw Error(ErrorCode::kParse, fmt::format("{}:{}: expected two node indices", edges_path.string(), line_no));
    if (a < 0 || b < 0 || a >= n || b >= n)
      throw Error(ErrorCode::kNodeOutOfRange,
                  fmt::format("{}:{}: node index outside [0, {})", edges_path.string(), line_no, n));
    const auto u = static_cast<std::uint32_t>(a);
    const auto v = static_cast<std::uint32_t>(b);
    if (!seen_directed.emplace(u, v).second)
      throw Error(ErrorCode::kDuplicateEdge, fmt::format("{}:{}: edge ({}, {}) repeated", edges_path.string(), line_no, u, v));
    if (u == v) {
      logger().warn("{}:{}: dropping self-loop on node {}", edges_path.string(), line_no, u);
      continue;
    }
    undirected.emplace(std::min(u, v), std::max(u, v));
  }

  auto lin = open_or_throw(labels_path);
  std::vector<ClassId> labels(n, kUnlabeled);
  std::vector<bool> labeled(n, false);
  line_no = 0;
  while (std::getline(lin, line)) {
    ++line_no;
    if (blank(line)) continue;
    long long node = 0, cls = 0;
    if (!parse_pair(line, node, cls))
      throw Error(ErrorCode::kParse, fmt::format("{}:{}: expected node index and class id", labels_path.string(), line_no));
    if (node < 0 || node >= n)
      throw Error(ErrorCode::kNodeOutOfRange,
                  fmt::format("{}:{}: node index outside [0, {})", labels_path.string(), line_no, n));
    if (cls < kUnlabeled || cls > std::numeric_limits<ClassId>::max())
      throw Error(ErrorCode::kParse, fmt::format("{}:{}: invalid class id {}", labels_path.string(), line_no, cls));
    if (labeled[node])
      throw Error(ErrorCode::kDuplicateLabel, fmt::format("{}:{}: node {} labeled twice", labels_path.string(), line_no, node));
    labeled[node] = true;
    labels[node] = static_cast<ClassId>(cls);
  }

  std::vector<NodeId> ids(n);
  for (std::uint32_t i = 0; i < n; ++i) ids[i] = i;
  return Graph(std::move(ids), d, std::move(features), {undirected.begin(), undirected.end()}, std::move(labels));
}

void save_graph(const Graph& g, const fs::path& directory) {
  fs::create_directories(directory);
  {
    std::ofstream out(directory / "features.bin", std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + (directory / "features.bin").string());
    out.write("GFSC", 4);
    detail::write_u32(out, static_cast<std::uint32_t>(g.node_count()));
    detail::write_u32(out, static_cast<std::uint32_t>(g.feature_dim()));
    detail::write_f32s(out, g.features());
  }
  {
    std::ofstream out(directory / "edges.tsv", std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + (directory / "edges.tsv").string());
    for (const auto& [u, v] : g.edges()) out << u << '\t' << v << '\n';
  }
  {
    std::ofstream out(directory / "labels.tsv", std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + (directory / "labels.tsv").string());
    for (std::size_t r = 0; r < g.node_count(); ++r) out << r << '\t' << g.label(r) << '\n';
  }
}

Graph induced_subgraph(const Graph& g, std::span<const NodeId> keep) {
  std::vector<char> kept(g.node_count(), 0);
  for (NodeId id : keep) kept[g.require_row(id)] = 1;

  std::vector<std::uint32_t> new_row(g.node_count(), 0);
  std::vector<NodeId> ids;
  std::vector<ClassId> labels;
  std::vector<float> features;
  std::uint32_t next = 0;
  for (std::uint32_t r = 0; r < g.node_count(); ++r) {
    if (!kept[r]) continue;
    new_row[r] = next++;
    ids.push_back(g.node_id(r));
    labels.push_back(g.label(r));
    auto row = g.feature_row(r);
    features.insert(features.end(), row.begin(), row.end());
  }
  std::vector<EdgeRows> edges;
  for (const auto& [u, v] : g.edges())
    if (kept[u] && kept[v]) edges.emplace_back(new_row[u], new_row[v]);
  return Graph(std::move(ids), g.feature_dim(), std::move(features), std::move(edges), std::move(labels));
}

std::size_t degree_of(const Graph& g, NodeId node) {
  return g.neighbor_rows(g.require_row(node)).size();
}

std::vector<NodeId> neighbors_of(const Graph& g, NodeId node) {
  std::vector<NodeId> out;
  for (std::uint32_t r : g.neighbor_rows(g.require_row(node))) out.push_back(g.node_id(r));
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<NodeId> receptive_field(const Graph& g, std::span<const NodeId> seeds, int hops) {
  std::vector<char> in(g.node_count(), 0);
  std::vector<std::uint32_t> frontier;
  for (NodeId id : seeds) {
    auto r = g.require_row(id);
    if (!in[r]) {
      in[r] = 1;
      frontier.push_back(r);
    }
  }
  for (int h = 0; h < hops; ++h) {
    std::vector<std::uint32_t> next;
    for (auto r : frontier)
      for (auto nb : g.neighbor_rows(r))
        if (!in[nb]) {
          in[nb] = 1;
          next.push_back(nb);
        }
    frontier = std::move(next);
  }
  std::vector<NodeId> out;
  for (std::uint32_t r = 0; r < g.node_count(); ++r)
    if (in[r]) out.push_back(g.node_id(r));
  return out;
}

}  // namespace geometer
