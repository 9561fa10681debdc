#pragma once

#include <cstdint>
#include <vector>

#include "geometer/diffmath.hpp"
#include "geometer/graph.hpp"
#include "geometer/rng.hpp"

namespace geometer {

struct GatHead {
  Tensor weight;     // out x in
  Tensor attention;  // 1 x 2*out: [source half | neighbor half]
};

/// One attention layer. Hidden layers concatenate their heads, the output
/// layer averages them.
struct GatLayer {
  std::vector<GatHead> heads;
  bool concat_heads = true;
};

/// Two-layer graph attention encoder: features -> hidden (ELU) -> embedding (identity).
struct BackboneParams {
  std::size_t feature_dim = 0;
  std::size_t hidden = 0;
  std::size_t out_dim = 0;
  std::vector<GatLayer> layers;

  std::size_t head_count() const { return layers.empty() ? 0 : layers.front().heads.size(); }
  /// Flat view of every tensor, in a fixed order (per layer, per head: weight, attention).
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
};

/// Glorot-uniform initialization, deterministic under `seed`. `hidden` must be divisible by `heads`.
BackboneParams init_backbone(std::size_t feature_dim, std::size_t hidden, std::size_t out_dim,
                             std::uint64_t seed, std::size_t heads = 1);

/// CSR neighborhoods with the node itself included, rows sorted ascending.
struct SelfLoopAdjacency {
  std::vector<std::uint32_t> offsets;  // node_count + 1
  std::vector<std::uint32_t> targets;  // row owning each slot
  std::vector<std::uint32_t> sources;  // neighbor (or self) in each slot
};

SelfLoopAdjacency self_loop_adjacency(const Graph& g);

namespace ad {

struct GatHeadVars {
  Var weight;
  Var attention;
};

struct BackboneVars {
  std::vector<std::vector<GatHeadVars>> layers;
  std::vector<bool> concat;
};

/// Binds parameters to a tape, as trainable leaves or constants.
BackboneVars bind_backbone(Tape& tape, const BackboneParams& params, bool trainable);

struct HeadOutput {
  Var aggregated;  // node_count x out, before the nonlinearity
  Var alpha;       // one coefficient per adjacency slot
};

/// Masked attention of one head over self-inclusive neighborhoods.
HeadOutput attention_head(const Var& transformed, const Var& attention, const SelfLoopAdjacency& adj);

struct EncodeOptions {
  double dropout = 0.0;  // applied to the hidden layer output when > 0
  Rng* rng = nullptr;    // required when dropout > 0
};

/// Embeddings for every row of `g`. `g` must outlive backward() on the tape.
Var encode(const BackboneVars& vars, const Graph& g, const SelfLoopAdjacency& adj, const EncodeOptions& options = {});

/// Applies layer `layer` to arbitrary node states.
Var gat_layer(const BackboneVars& vars, std::size_t layer, const Var& node_states, const SelfLoopAdjacency& adj);

}  // namespace ad

/// Per node, (neighbor id, alpha) over the self-inclusive neighborhood for one head.
std::vector<std::vector<std::pair<NodeId, double>>> attention_coefficients(const BackboneParams& params,
                                                                           const Graph& g, const Tensor& node_states,
                                                                           std::size_t layer, std::size_t head = 0);

/// One layer applied to `node_states` (ELU on the hidden layer, identity on the output layer).
Tensor gat_layer(const BackboneParams& params, const Graph& g, const Tensor& node_states, std::size_t layer);

/// Node embeddings [node_count x out_dim].
Tensor encode(const BackboneParams& params, const Graph& g);

}  // namespace geometer
