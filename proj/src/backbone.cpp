#include "geometer/backbone.hpp"

#include <cmath>

#include <fmt/format.h>

#include "geometer/error.hpp"

namespace geometer {

std::vector<Tensor*> BackboneParams::tensors() {
  std::vector<Tensor*> out;
  for (auto& layer : layers)
    for (auto& head : layer.heads) {
      out.push_back(&head.weight);
      out.push_back(&head.attention);
    }
  return out;
}

std::vector<const Tensor*> BackboneParams::tensors() const {
  std::vector<const Tensor*> out;
  for (const auto& layer : layers)
    for (const auto& head : layer.heads) {
      out.push_back(&head.weight);
      out.push_back(&head.attention);
    }
  return out;
}

namespace {

Tensor glorot(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(rows, cols);
  for (double& v : t.data()) v = rng.uniform(-s, s);
  return t;
}

}  // namespace

BackboneParams init_backbone(std::size_t feature_dim, std::size_t hidden, std::size_t out_dim,
                             std::uint64_t seed, std::size_t heads) {
  if (feature_dim == 0 || hidden == 0 || out_dim == 0 || heads == 0)
    throw Error(ErrorCode::kInvalidArgument, "init_backbone: every dimension must be positive");
  if (hidden % heads != 0)
    throw Error(ErrorCode::kInvalidArgument, fmt::format("init_backbone: hidden {} not divisible by {} heads", hidden, heads));

  Rng rng = Rng::derive(seed, {0xba0b});
  BackboneParams p;
  p.feature_dim = feature_dim;
  p.hidden = hidden;
  p.out_dim = out_dim;

  const std::size_t per_head = hidden / heads;
  GatLayer first{.heads = {}, .concat_heads = true};
  for (std::size_t h = 0; h < heads; ++h)
    first.heads.push_back({glorot(per_head, feature_dim, feature_dim, per_head, rng),
                           glorot(1, 2 * per_head, 2 * per_head, 1, rng)});
  GatLayer second{.heads = {}, .concat_heads = false};
  for (std::size_t h = 0; h < heads; ++h)
    second.heads.push_back({glorot(out_dim, hidden, hidden, out_dim, rng),
                            glorot(1, 2 * out_dim, 2 * out_dim, 1, rng)});
  p.layers.push_back(std::move(first));
  p.layers.push_back(std::move(second));
  return p;
}

SelfLoopAdjacency self_loop_adjacency(const Graph& g) {
  SelfLoopAdjacency adj;
  adj.offsets.reserve(g.node_count() + 1);
  adj.offsets.push_back(0);
  for (std::uint32_t r = 0; r < g.node_count(); ++r) {
    auto nb = g.neighbor_rows(r);
    bool self_done = false;
    for (std::uint32_t c : nb) {
      if (!self_done && r < c) {
        adj.targets.push_back(r);
        adj.sources.push_back(r);
        self_done = true;
      }
      adj.targets.push_back(r);
      adj.sources.push_back(c);
    }
    if (!self_done) {
      adj.targets.push_back(r);
      adj.sources.push_back(r);
    }
    adj.offsets.push_back(static_cast<std::uint32_t>(adj.sources.size()));
  }
  return adj;
}

namespace ad {

BackboneVars bind_backbone(Tape& tape, const BackboneParams& params, bool trainable) {
  BackboneVars vars;
  for (const auto& layer : params.layers) {
    std::vector<GatHeadVars> heads;
    for (const auto& head : layer.heads) {
      if (trainable)
        heads.push_back({tape.parameter(head.weight), tape.parameter(head.attention)});
      else
        heads.push_back({tape.constant(head.weight), tape.constant(head.attention)});
    }
    vars.layers.push_back(std::move(heads));
    vars.concat.push_back(layer.concat_heads);
  }
  return vars;
}

HeadOutput attention_head(const Var& transformed, const Var& attention, const SelfLoopAdjacency& adj) {
  const std::size_t width = transformed.cols();
  if (attention.cols() != 2 * width || attention.rows() != 1)
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("attention vector is {}x{}, expected 1x{}", attention.rows(), attention.cols(), 2 * width));
  if (adj.offsets.size() != transformed.rows() + 1)
    throw Error(ErrorCode::kShapeMismatch, "attention_head: adjacency does not match node states");
  // a^T [W h_i || W h_j] splits into a source score and a neighbor score.
  Var self_score = matmul_nt(transformed, slice_cols(attention, 0, width));
  Var neighbor_score = matmul_nt(transformed, slice_cols(attention, width, width));
  Var logits = leaky_relu(add(gather_rows(self_score, adj.targets), gather_rows(neighbor_score, adj.sources)), 0.2);
  Var alpha = segment_softmax(logits, adj.offsets);
  return {segment_aggregate(alpha, transformed, adj.sources, adj.offsets), alpha};
}

namespace {

Var combine_heads(std::vector<Var>& outs, bool concat) {
  if (outs.size() == 1) return outs.front();
  if (concat) return concat_cols(outs);
  Var acc = outs.front();
  for (std::size_t h = 1; h < outs.size(); ++h) acc = add(acc, outs[h]);
  return scale(acc, 1.0 / static_cast<double>(outs.size()));
}

Var activate(Var x, std::size_t layer, std::size_t layer_count) {
  return layer + 1 < layer_count ? elu(x) : x;
}

Var dropout(const Var& x, double rate, Rng& rng) {
  Tensor mask(x.rows(), x.cols());
  const double keep = 1.0 - rate;
  for (double& m : mask.data()) m = rng.uniform01() < keep ? 1.0 / keep : 0.0;
  return mul(x, x.tape()->constant(std::move(mask)));
}

}  // namespace

Var gat_layer(const BackboneVars& vars, std::size_t layer, const Var& node_states, const SelfLoopAdjacency& adj) {
  if (layer >= vars.layers.size()) throw Error(ErrorCode::kInvalidArgument, fmt::format("no layer {}", layer));
  std::vector<Var> outs;
  for (const auto& head : vars.layers[layer]) {
    if (head.weight.cols() != node_states.cols())
      throw Error(ErrorCode::kShapeMismatch,
                  fmt::format("layer {} expects {} input dims, got {}", layer, head.weight.cols(), node_states.cols()));
    outs.push_back(attention_head(matmul_nt(node_states, head.weight), head.attention, adj).aggregated);
  }
  return activate(combine_heads(outs, vars.concat[layer]), layer, vars.layers.size());
}

Var encode(const BackboneVars& vars, const Graph& g, const SelfLoopAdjacency& adj, const EncodeOptions& options) {
  if (vars.layers.empty()) throw Error(ErrorCode::kInvalidArgument, "encode: backbone has no layers");
  const auto& first = vars.layers.front();
  if (first.front().weight.cols() != g.feature_dim())
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("encode: backbone expects {} features, graph has {}", first.front().weight.cols(), g.feature_dim()));
  const FloatMatrixView x{g.features(), g.node_count(), g.feature_dim()};
  std::vector<Var> outs;
  for (const auto& head : first) outs.push_back(attention_head(matmul_nt(x, head.weight), head.attention, adj).aggregated);
  Var h = activate(combine_heads(outs, vars.concat.front()), 0, vars.layers.size());
  if (options.dropout > 0.0) {
    if (!options.rng) throw Error(ErrorCode::kInvalidArgument, "encode: dropout requires an rng");
    h = dropout(h, options.dropout, *options.rng);
  }
  for (std::size_t l = 1; l < vars.layers.size(); ++l) h = gat_layer(vars, l, h, adj);
  return h;
}

}  // namespace ad

std::vector<std::vector<std::pair<NodeId, double>>> attention_coefficients(const BackboneParams& params,
                                                                           const Graph& g, const Tensor& node_states,
                                                                           std::size_t layer, std::size_t head) {
  if (node_states.rows() != g.node_count())
    throw Error(ErrorCode::kShapeMismatch, "attention_coefficients: one state row per node required");
  if (layer >= params.layers.size() || head >= params.layers[layer].heads.size())
    throw Error(ErrorCode::kInvalidArgument, "attention_coefficients: no such layer/head");
  ad::Tape tape;
  const auto& h = params.layers[layer].heads[head];
  const auto adj = self_loop_adjacency(g);
  ad::Var states = tape.constant(node_states);
  auto out = ad::attention_head(ad::matmul_nt(states, tape.constant(h.weight)), tape.constant(h.attention), adj);
  const Tensor& alpha = out.alpha.value();
  std::vector<std::vector<std::pair<NodeId, double>>> result(g.node_count());
  for (std::size_t r = 0; r < g.node_count(); ++r)
    for (auto e = adj.offsets[r]; e < adj.offsets[r + 1]; ++e) result[r].emplace_back(g.node_id(adj.sources[e]), alpha[e]);
  return result;
}

Tensor gat_layer(const BackboneParams& params, const Graph& g, const Tensor& node_states, std::size_t layer) {
  if (node_states.rows() != g.node_count())
    throw Error(ErrorCode::kShapeMismatch, "gat_layer: one state row per node required");
  ad::Tape tape;
  auto vars = ad::bind_backbone(tape, params, false);
  return ad::gat_layer(vars, layer, tape.constant(node_states), self_loop_adjacency(g)).value();
}

Tensor encode(const BackboneParams& params, const Graph& g) {
  ad::Tape tape;
  auto vars = ad::bind_backbone(tape, params, false);
  return ad::encode(vars, g, self_loop_adjacency(g)).value();
}

}  // namespace geometer
