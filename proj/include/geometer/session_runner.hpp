#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "geometer/episodic.hpp"
#include "geometer/model.hpp"
#include "geometer/objectives.hpp"
#include "geometer/optimizer.hpp"
#include "geometer/session_stream.hpp"

namespace geometer {

enum class Mode { kGeometer, kPnStar };

struct TrainConfig {
  Mode mode = Mode::kGeometer;
  std::size_t hidden = 512;
  std::size_t out_dim = 64;
  std::size_t backbone_heads = 1;
  std::size_t attention_heads = 4;
  double dropout = 0.0;
  SamplerConfig sampler;
  LossWeights weights;
  bool inverse_frequency_alpha = true;  // finetune only; pretrain uses alpha = 1
  OptimizerConfig base_optimizer{.kind = OptimizerKind::kAdam, .lr = 1e-3};
  OptimizerConfig finetune_optimizer{.kind = OptimizerKind::kAdam, .lr = 1e-4};
  bool freeze_backbone = false;
  std::uint64_t seed = 0;

  /// Copy with the seed applied to both initialization and episode sampling.
  TrainConfig with_seed(std::uint64_t s) const;
  /// pn_star collapses to mean prototypes, proximity loss only and no distillation.
  TrainConfig effective() const;
  PrototypeOptions prototype_options() const;
  void validate() const;
};

struct StepReport {
  Stage stage;
  std::size_t session;
  std::size_t episode;
  double loss;
};

using StepCallback = std::function<void(const StepReport&)>;

/// Freshly initialized model with no prototypes.
ModelState init_model(const TrainConfig& cfg, std::size_t feature_dim);

/// Pretrain objective of one episode under `model`, without updating it.
double pretrain_episode_loss(const ModelState& model, const SessionStream& stream, const Episode& episode,
                             const TrainConfig& cfg);

/// Episodic training on the base stage, then full-shot base prototypes.
/// Throws kDivergence naming the episode when the loss stops being finite.
ModelState pretrain(const SessionStream& stream, const TrainConfig& cfg, const StepCallback& on_step = {});

/// Finetunes a copy of `teacher` on session `session`; the teacher is only read.
ModelState run_stream_session(const ModelState& teacher, const SessionStream& stream, std::size_t session,
                              const TrainConfig& cfg, const StepCallback& on_step = {});

/// Class of the nearest prototype (squared Euclidean); ties go to the lowest class id.
ClassId nearest_prototype(std::span<const double> embedding, const PrototypeSet& prototypes);

/// Encodes `g` and labels each node by its nearest prototype.
std::vector<ClassId> predict_nodes(const ModelState& model, const Graph& g, std::span<const NodeId> nodes);

struct SessionMetrics {
  std::size_t session = 0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;  // population std over seeds
  std::vector<double> accuracy_per_seed;
  std::map<ClassId, double> per_class;  // averaged over seeds
  double seconds = 0.0;
};

/// Accuracy over every eval-pool node of the classes seen by `session`, one model per seed.
SessionMetrics evaluate_session(std::span<const ModelState> models, const SessionStream& stream, std::size_t session);

/// counts[i][j]: nodes of classes[i] predicted as classes[j]. Predictions outside `classes` are dropped.
std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const ClassId> truth, std::span<const ClassId> predicted,
                                                       std::span<const ClassId> classes);

}  // namespace geometer
