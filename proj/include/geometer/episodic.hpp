#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "geometer/rng.hpp"
#include "geometer/session_stream.hpp"

namespace geometer {

enum class Stage : std::uint8_t { kPretrain = 0, kFinetune = 1 };

struct SamplerConfig {
  int k_max = 10;
  int k_qry = 10;
  double old_query_bias = 0.7;  // fraction of finetune query slots given to old classes
  int pretrain_episodes = 500;
  int finetune_episodes = 100;
  int n_way = 0;              // pretrain classes per episode; 0 means all base classes
  bool resample_old = true;   // false: old classes get no supports and keep carried prototypes
  std::uint64_t seed = 0;

  void validate() const;
};

struct Episode {
  ClassNodes supports;
  std::vector<std::pair<NodeId, ClassId>> queries;
  Stage stage = Stage::kPretrain;
};

/// Episode RNG for (seed, stage, session, index).
Rng episode_rng(std::uint64_t seed, Stage stage, std::size_t session, std::size_t index);

/// Per class: support size uniform in [1, k_max], then k_qry disjoint queries.
/// Every class in `pools` needs k_max + k_qry nodes (kPoolTooSmall otherwise).
Episode sample_pretrain_episode(const ClassNodes& pools, const SamplerConfig& cfg, Rng& rng);

/// {old slots, novel slots} for `total` query slots.
std::pair<std::size_t, std::size_t> split_query_slots(std::size_t total, double old_query_bias);

/// Novel classes keep their fixed supports; old classes are resampled from the
/// session's eval pools. k_qry * |classes| query slots, split by old_query_bias.
Episode sample_finetune_episode(std::size_t session, const SessionStream& stream, const SamplerConfig& cfg, Rng& rng);

}  // namespace geometer
