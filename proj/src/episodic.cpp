#include "geometer/episodic.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "geometer/error.hpp"

namespace geometer {

void SamplerConfig::validate() const {
  if (k_max < 1) throw Error(ErrorCode::kInvalidArgument, fmt::format("k_max must be >= 1, got {}", k_max));
  if (k_qry < 1) throw Error(ErrorCode::kInvalidArgument, fmt::format("k_qry must be >= 1, got {}", k_qry));
  if (!(old_query_bias > 0.0 && old_query_bias < 1.0))
    throw Error(ErrorCode::kInvalidArgument, fmt::format("old_query_bias must be in (0, 1), got {}", old_query_bias));
  if (pretrain_episodes < 0 || finetune_episodes < 0)
    throw Error(ErrorCode::kInvalidArgument, "episode counts must be non-negative");
  if (n_way < 0) throw Error(ErrorCode::kInvalidArgument, "n_way must be non-negative");
}

Rng episode_rng(std::uint64_t seed, Stage stage, std::size_t session, std::size_t index) {
  return Rng::derive(seed, {0xe915, static_cast<std::uint64_t>(stage), session, index});
}

Episode sample_pretrain_episode(const ClassNodes& pools, const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<ClassId> classes;
  for (const auto& [c, pool] : pools) {
    const auto need = static_cast<std::size_t>(cfg.k_max + cfg.k_qry);
    if (pool.size() < need)
      throw Error(ErrorCode::kPoolTooSmall,
                  fmt::format("class {} has {} labeled nodes, pretrain episodes need {}", c, pool.size(), need));
    classes.push_back(c);
  }
  if (classes.empty()) throw Error(ErrorCode::kInvalidArgument, "sample_pretrain_episode: no classes");
  if (cfg.n_way > 0 && static_cast<std::size_t>(cfg.n_way) < classes.size()) {
    classes = rng.sample_without_replacement<ClassId>(classes, static_cast<std::size_t>(cfg.n_way));
    std::sort(classes.begin(), classes.end());
  }

  Episode ep;
  ep.stage = Stage::kPretrain;
  for (ClassId c : classes) {
    const auto k = static_cast<std::size_t>(rng.uniform_int(1, cfg.k_max));
    auto drawn = rng.sample_without_replacement<NodeId>(pools.at(c), k + static_cast<std::size_t>(cfg.k_qry));
    ep.supports[c].assign(drawn.begin(), drawn.begin() + static_cast<std::ptrdiff_t>(k));
    for (std::size_t i = k; i < drawn.size(); ++i) ep.queries.emplace_back(drawn[i], c);
  }
  return ep;
}

std::pair<std::size_t, std::size_t> split_query_slots(std::size_t total, double old_query_bias) {
  if (!(old_query_bias > 0.0 && old_query_bias < 1.0))
    throw Error(ErrorCode::kInvalidArgument, fmt::format("old_query_bias must be in (0, 1), got {}", old_query_bias));
  // The small slack keeps products like 0.7 * 10 from rounding up to 8.
  auto old = static_cast<std::size_t>(std::ceil(old_query_bias * static_cast<double>(total) - 1e-9));
  old = std::min(old, total);
  return {old, total - old};
}

namespace {

// Spreads `slots` over `classes` round-robin from a random starting class.
std::map<ClassId, std::size_t> spread(const std::vector<ClassId>& classes, std::size_t slots, Rng& rng) {
  std::map<ClassId, std::size_t> out;
  if (classes.empty()) return out;
  const std::size_t start = static_cast<std::size_t>(rng.below(classes.size()));
  for (std::size_t i = 0; i < slots; ++i) ++out[classes[(start + i) % classes.size()]];
  return out;
}

}  // namespace

Episode sample_finetune_episode(std::size_t session, const SessionStream& stream, const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  if (session == 0 || session >= stream.partition.stage_count())
    throw Error(ErrorCode::kUnknownSession, fmt::format("no streaming session {}", session));
  const auto& spec = stream.partition.sessions[session - 1];
  const auto& pools = stream.eval_pools[session];
  const auto novel = stream.partition.new_classes_at(session);
  const auto old = stream.partition.classes_at(session - 1);

  const std::size_t total = static_cast<std::size_t>(cfg.k_qry) * (novel.size() + old.size());
  const auto [old_slots, novel_slots] = split_query_slots(total, cfg.old_query_bias);
  const auto old_quota = spread(old, old_slots, rng);
  const auto novel_quota = spread(novel, novel_slots, rng);

  Episode ep;
  ep.stage = Stage::kFinetune;
  for (ClassId c : novel) {
    ep.supports[c] = spec.supports.at(c);
    auto it = novel_quota.find(c);
    const std::size_t q = it == novel_quota.end() ? 0 : it->second;
    const auto& pool = pools.at(c);
    if (pool.size() < q)
      throw Error(ErrorCode::kPoolTooSmall, fmt::format("novel class {} has {} query nodes, needs {}", c, pool.size(), q));
    for (NodeId id : rng.sample_without_replacement<NodeId>(pool, q)) ep.queries.emplace_back(id, c);
  }
  for (ClassId c : old) {
    auto it = old_quota.find(c);
    const std::size_t q = it == old_quota.end() ? 0 : it->second;
    const auto& pool = pools.at(c);
    const std::size_t min_support = cfg.resample_old ? 1 : 0;
    if (pool.size() < q + min_support)
      throw Error(ErrorCode::kPoolTooSmall,
                  fmt::format("old class {} pool exhausted: {} nodes for {} queries", c, pool.size(), q));
    const std::size_t k = cfg.resample_old ? std::min<std::size_t>(cfg.k_max, pool.size() - q) : 0;
    auto drawn = rng.sample_without_replacement<NodeId>(pool, k + q);
    if (k > 0) ep.supports[c].assign(drawn.begin(), drawn.begin() + static_cast<std::ptrdiff_t>(k));
    for (std::size_t i = k; i < drawn.size(); ++i) ep.queries.emplace_back(drawn[i], c);
  }
  return ep;
}

}  // namespace geometer
