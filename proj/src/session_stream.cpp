#include "geometer/session_stream.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "geometer/error.hpp"
#include "geometer/rng.hpp"

namespace geometer {

using nlohmann::json;

std::vector<ClassId> ClassPartition::classes_at(std::size_t stage) const {
  std::vector<ClassId> out(base_classes);
  for (std::size_t s = 0; s < stage && s < sessions.size(); ++s)
    out.insert(out.end(), sessions[s].novel_classes.begin(), sessions[s].novel_classes.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<ClassId> ClassPartition::new_classes_at(std::size_t stage) const {
  std::vector<ClassId> out = stage == 0 ? base_classes : sessions.at(stage - 1).novel_classes;
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

void validate_class_lists(const std::map<ClassId, std::vector<NodeId>>& by_class,
                          const std::vector<ClassId>& base,
                          const std::vector<std::vector<ClassId>>& sessions, int k_shot) {
  if (k_shot <= 0) throw Error(ErrorCode::kInvalidArgument, "k_shot must be positive");
  std::set<ClassId> seen;
  auto claim = [&](ClassId c, const std::string& where) {
    if (!seen.insert(c).second)
      throw Error(ErrorCode::kOverlappingClasses, fmt::format("class {} listed twice ({})", c, where));
    if (!by_class.contains(c))
      throw Error(ErrorCode::kInvalidArgument, fmt::format("class {} ({}) has no labeled nodes in the graph", c, where));
  };
  for (ClassId c : base) claim(c, "base");
  for (std::size_t s = 0; s < sessions.size(); ++s) {
    if (sessions[s].empty())
      throw Error(ErrorCode::kInvalidArgument, fmt::format("session {} has no novel classes", s + 1));
    for (ClassId c : sessions[s]) {
      claim(c, fmt::format("session {}", s + 1));
      const auto have = by_class.at(c).size();
      if (have < static_cast<std::size_t>(k_shot) + 1)
        throw Error(ErrorCode::kClassTooSmall,
                    fmt::format("class {} has {} labeled nodes, needs at least {}", c, have, k_shot + 1));
    }
  }
}

}  // namespace

SessionStream build_session_stream(const Graph& g, const std::vector<ClassId>& base_classes,
                                   const std::vector<std::vector<ClassId>>& session_novel_classes,
                                   int k_shot, std::uint64_t seed) {
  const auto by_class = g.nodes_by_class();
  validate_class_lists(by_class, base_classes, session_novel_classes, k_shot);

  ClassPartition partition;
  partition.base_classes = base_classes;
  partition.k_shot = k_shot;
  partition.seed = seed;
  for (std::size_t s = 0; s < session_novel_classes.size(); ++s) {
    SessionSpec spec;
    spec.novel_classes = session_novel_classes[s];
    for (ClassId c : spec.novel_classes) {
      // One stream per class keeps each draw independent of list order.
      Rng rng = Rng::derive(seed, {0x5e55, static_cast<std::uint64_t>(c)});
      const auto& pool = by_class.at(c);
      auto picked = rng.sample_without_replacement<NodeId>(pool, static_cast<std::size_t>(k_shot));
      std::sort(picked.begin(), picked.end());
      spec.supports[c] = std::move(picked);
    }
    partition.sessions.push_back(std::move(spec));
  }
  return stream_from_partition(g, partition);
}

SessionStream stream_from_partition(const Graph& g, const ClassPartition& partition) {
  const auto by_class = g.nodes_by_class();
  std::vector<std::vector<ClassId>> novel;
  for (const auto& s : partition.sessions) novel.push_back(s.novel_classes);
  validate_class_lists(by_class, partition.base_classes, novel, partition.k_shot);

  std::map<ClassId, std::set<NodeId>> support_sets;
  for (std::size_t s = 0; s < partition.sessions.size(); ++s) {
    const auto& spec = partition.sessions[s];
    if (spec.supports.size() != spec.novel_classes.size())
      throw Error(ErrorCode::kInvalidArgument, fmt::format("session {}: supports do not match novel classes", s + 1));
    for (ClassId c : spec.novel_classes) {
      auto it = spec.supports.find(c);
      if (it == spec.supports.end())
        throw Error(ErrorCode::kInvalidArgument, fmt::format("session {}: class {} has no supports", s + 1, c));
      std::set<NodeId> unique(it->second.begin(), it->second.end());
      if (it->second.size() != static_cast<std::size_t>(partition.k_shot) || unique.size() != it->second.size())
        throw Error(ErrorCode::kInvalidArgument,
                    fmt::format("session {}: class {} needs exactly {} distinct supports", s + 1, c, partition.k_shot));
      for (NodeId id : unique) {
        if (g.label(g.require_row(id)) != c)
          throw Error(ErrorCode::kInvalidArgument,
                      fmt::format("session {}: support node {} is not labeled {}", s + 1, id, c));
      }
      support_sets[c] = std::move(unique);
    }
  }

  SessionStream stream;
  stream.partition = partition;
  for (std::size_t t = 0; t < partition.stage_count(); ++t) {
    const auto classes = partition.classes_at(t);
    const std::set<ClassId> present(classes.begin(), classes.end());
    std::vector<NodeId> keep;
    for (std::size_t r = 0; r < g.node_count(); ++r) {
      const ClassId label = g.label(r);
      if (label == kUnlabeled || present.contains(label)) keep.push_back(g.node_id(r));
    }
    stream.snapshots.push_back(induced_subgraph(g, keep));

    ClassNodes pools;
    for (ClassId c : classes) {
      auto& pool = pools[c];
      const auto sup = support_sets.find(c);
      for (NodeId id : by_class.at(c))
        if (sup == support_sets.end() || !sup->second.contains(id)) pool.push_back(id);
    }
    stream.eval_pools.push_back(std::move(pools));
  }
  return stream;
}

std::string manifest_to_json(const ClassPartition& partition) {
  json doc;
  doc["base_classes"] = partition.base_classes;
  doc["k_shot"] = partition.k_shot;
  doc["seed"] = partition.seed;
  json sessions = json::array();
  for (const auto& s : partition.sessions) {
    json supports = json::object();
    for (const auto& [c, nodes] : s.supports) supports[std::to_string(c)] = nodes;
    sessions.push_back({{"novel_classes", s.novel_classes}, {"supports", supports}});
  }
  doc["sessions"] = sessions;
  return doc.dump(2) + "\n";
}

ClassPartition manifest_from_json(const std::string& text) {
  ClassPartition p;
  try {
    const json doc = json::parse(text);
    for (const char* key : {"base_classes", "sessions", "k_shot", "seed"})
      if (!doc.contains(key)) throw Error(ErrorCode::kParse, fmt::format("manifest: missing key \"{}\"", key));
    p.base_classes = doc.at("base_classes").get<std::vector<ClassId>>();
    p.k_shot = doc.at("k_shot").get<int>();
    p.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& s : doc.at("sessions")) {
      SessionSpec spec;
      spec.novel_classes = s.at("novel_classes").get<std::vector<ClassId>>();
      for (const auto& [key, nodes] : s.at("supports").items())
        spec.supports[static_cast<ClassId>(std::stol(key))] = nodes.get<std::vector<NodeId>>();
      p.sessions.push_back(std::move(spec));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, fmt::format("manifest: {}", e.what()));
  } catch (const std::invalid_argument&) {
    throw Error(ErrorCode::kParse, "manifest: support keys must be class ids");
  }
  return p;
}

void write_manifest(const ClassPartition& partition, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << manifest_to_json(partition);
}

ClassPartition read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return manifest_from_json(buf.str());
}

}  // namespace geometer
