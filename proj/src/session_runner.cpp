#include "geometer/session_runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "geometer/error.hpp"
#include "geometer/log.hpp"

namespace geometer {

TrainConfig TrainConfig::with_seed(std::uint64_t s) const {
  TrainConfig c = *this;
  c.seed = s;
  c.sampler.seed = s;
  return c;
}

TrainConfig TrainConfig::effective() const {
  TrainConfig c = *this;
  if (mode == Mode::kPnStar) {
    c.weights.lambda_u = 0.0;
    c.weights.lambda_s = 0.0;
    c.weights.lambda_kd = 0.0;
  }
  return c;
}

PrototypeOptions TrainConfig::prototype_options() const {
  if (mode == Mode::kPnStar) return {.init = PrototypeInit::kMean, .refine = false};
  return {.init = PrototypeInit::kDegreeWeighted, .refine = true};
}

void TrainConfig::validate() const {
  sampler.validate();
  weights.validate();
  if (hidden == 0 || out_dim == 0 || backbone_heads == 0 || attention_heads == 0)
    throw Error(ErrorCode::kInvalidArgument, "model dimensions and head counts must be positive");
  if (hidden % backbone_heads != 0)
    throw Error(ErrorCode::kInvalidArgument, fmt::format("hidden {} not divisible by {} heads", hidden, backbone_heads));
  if (out_dim % attention_heads != 0)
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("embedding size {} not divisible by {} attention heads", out_dim, attention_heads));
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::kInvalidArgument, "dropout must be in [0, 1)");
}

ModelState init_model(const TrainConfig& cfg, std::size_t feature_dim) {
  cfg.validate();
  ModelState m;
  m.backbone = init_backbone(feature_dim, cfg.hidden, cfg.out_dim, cfg.seed, cfg.backbone_heads);
  if (cfg.mode == Mode::kGeometer) m.class_attention = init_class_attention(cfg.out_dim, cfg.attention_heads, cfg.seed);
  m.prototypes.vectors = Tensor(0, cfg.out_dim);
  return m;
}

namespace {

struct Bound {
  ad::BackboneVars backbone;
  std::optional<ad::ClassAttentionVars> attention;
  std::vector<ad::Var> trainable;  // same order as the optimizer's tensors
};

Bound bind_model(ad::Tape& tape, const ModelState& m, bool train_backbone, bool train_attention) {
  Bound b;
  b.backbone = ad::bind_backbone(tape, m.backbone, train_backbone);
  if (train_backbone)
    for (const auto& layer : b.backbone.layers)
      for (const auto& head : layer) {
        b.trainable.push_back(head.weight);
        b.trainable.push_back(head.attention);
      }
  if (m.class_attention) {
    b.attention = ad::bind_class_attention(tape, *m.class_attention, train_attention);
    if (train_attention) {
      b.trainable.push_back(b.attention->query);
      b.trainable.push_back(b.attention->key);
      b.trainable.push_back(b.attention->value);
    }
  }
  return b;
}

std::vector<Tensor*> trainable_tensors(ModelState& m, bool train_backbone) {
  std::vector<Tensor*> out;
  if (train_backbone) out = m.backbone.tensors();
  if (m.class_attention)
    for (Tensor* t : m.class_attention->tensors()) out.push_back(t);
  return out;
}

struct LocalGraph {
  Graph sub;
  SelfLoopAdjacency adj;
};

// Exact receptive field of a two-layer encoder around the episode's nodes.
LocalGraph local_graph(const Graph& snapshot, const Episode& ep, std::size_t layers) {
  std::vector<NodeId> targets;
  for (const auto& [c, nodes] : ep.supports) targets.insert(targets.end(), nodes.begin(), nodes.end());
  for (const auto& [id, c] : ep.queries) targets.push_back(id);
  auto ball = receptive_field(snapshot, targets, static_cast<int>(layers));
  LocalGraph lg{induced_subgraph(snapshot, ball), {}};
  lg.adj = self_loop_adjacency(lg.sub);
  return lg;
}

std::vector<std::uint32_t> rows_in(const Graph& g, std::span<const NodeId> ids) {
  std::vector<std::uint32_t> rows;
  rows.reserve(ids.size());
  for (NodeId id : ids) rows.push_back(g.require_row(id));
  return rows;
}

ad::Var class_prototype(const Bound& b, const ad::Var& embeddings, const Graph& local, const Graph& snapshot,
                        std::span<const NodeId> support, const PrototypeOptions& opt) {
  ad::Var s = ad::gather_rows(embeddings, rows_in(local, support));
  std::vector<std::size_t> degrees;
  for (NodeId id : support) degrees.push_back(snapshot.neighbor_rows(snapshot.require_row(id)).size());
  ad::Var p = ad::initial_prototype(s, degrees, opt.init);
  if (opt.refine) {
    if (!b.attention) throw Error(ErrorCode::kInvalidArgument, "prototype refinement needs class attention parameters");
    p = ad::refine_prototype(*b.attention, p, s);
  }
  return p;
}

struct QueryBatch {
  ad::Var embeddings;
  std::vector<std::uint32_t> proto_rows;
  std::vector<double> weights;
  std::vector<NodeId> nodes;
};

QueryBatch gather_queries(const Episode& ep, const ad::Var& embeddings, const Graph& local,
                          const std::vector<ClassId>& classes, const std::map<ClassId, double>& alpha) {
  std::map<ClassId, std::size_t> per_class;
  for (const auto& [id, c] : ep.queries) ++per_class[c];
  QueryBatch q;
  for (const auto& [id, c] : ep.queries) {
    auto it = std::lower_bound(classes.begin(), classes.end(), c);
    if (it == classes.end() || *it != c)
      throw Error(ErrorCode::kMissingPrototype, fmt::format("query class {} has no prototype", c));
    q.proto_rows.push_back(static_cast<std::uint32_t>(it - classes.begin()));
    q.weights.push_back(alpha.at(c) / static_cast<double>(per_class[c]));
    q.nodes.push_back(id);
  }
  q.embeddings = ad::gather_rows(embeddings, rows_in(local, q.nodes));
  return q;
}

// `lg` must outlive the backward pass: the first layer reads its features by reference.
ad::Var pretrain_objective(const Bound& b, const LocalGraph& lg, const Graph& snapshot, const Episode& ep,
                           const TrainConfig& cfg, Rng* dropout_rng) {
  ad::EncodeOptions enc{.dropout = dropout_rng ? cfg.dropout : 0.0, .rng = dropout_rng};
  ad::Var e = ad::encode(b.backbone, lg.sub, lg.adj, enc);

  std::vector<ClassId> classes;
  std::vector<ad::Var> protos;
  std::map<ClassId, double> alpha;
  for (const auto& [c, support] : ep.supports) {
    classes.push_back(c);
    protos.push_back(class_prototype(b, e, lg.sub, snapshot, support, cfg.prototype_options()));
    alpha[c] = cfg.weights.alpha_of(c);
  }
  ad::Var p = protos.size() == 1 ? protos.front() : ad::concat_rows(protos);
  auto q = gather_queries(ep, e, lg.sub, classes, alpha);

  ad::LossTerms terms;
  terms.proximity = ad::proximity_loss(q.embeddings, q.proto_rows, p, q.weights);
  if (cfg.weights.lambda_u > 0.0 && classes.size() >= 2) terms.uniformity = ad::uniformity_loss(p, cfg.seed);
  return ad::pretrain_loss(terms, cfg.weights);
}

void check_finite_loss(const ad::Var& loss, Stage stage, std::size_t session, std::size_t episode) {
  if (!std::isfinite(loss.value().item()))
    throw Error(ErrorCode::kDivergence,
                fmt::format("{} session {} episode {}: loss is not finite", stage == Stage::kPretrain ? "pretrain" : "finetune",
                            session, episode));
}

template <typename F>
auto with_divergence_context(Stage stage, std::size_t session, std::size_t episode, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNonFinite) throw;
    throw Error(ErrorCode::kDivergence, fmt::format("{} session {} episode {}: {}",
                                                    stage == Stage::kPretrain ? "pretrain" : "finetune", session,
                                                    episode, e.what()));
  }
}

std::vector<Tensor> collect_grads(ad::Tape& tape, const Bound& b) {
  std::vector<Tensor> grads;
  grads.reserve(b.trainable.size());
  for (const auto& v : b.trainable) grads.push_back(tape.grad(v));
  return grads;
}

}  // namespace

double pretrain_episode_loss(const ModelState& model, const SessionStream& stream, const Episode& episode,
                             const TrainConfig& cfg_in) {
  const TrainConfig cfg = cfg_in.effective();
  ad::Tape tape;
  Bound b = bind_model(tape, model, false, false);
  const Graph& base = stream.snapshots.at(0);
  const LocalGraph lg = local_graph(base, episode, 2);
  return pretrain_objective(b, lg, base, episode, cfg, nullptr).value().item();
}

ModelState pretrain(const SessionStream& stream, const TrainConfig& cfg_in, const StepCallback& on_step) {
  const TrainConfig cfg = cfg_in.effective();
  cfg.validate();
  if (stream.partition.base_classes.size() < 2)
    throw Error(ErrorCode::kInvalidArgument, "pretraining needs at least two base classes");
  const Graph& base = stream.snapshots.at(0);
  ModelState model = init_model(cfg, base.feature_dim());

  Optimizer opt(cfg.base_optimizer, trainable_tensors(model, true));
  const ClassNodes& pools = stream.eval_pools.at(0);
  for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.sampler.pretrain_episodes); ++i) {
    Rng rng = episode_rng(cfg.sampler.seed, Stage::kPretrain, 0, i);
    const Episode ep = sample_pretrain_episode(pools, cfg.sampler, rng);
    Rng drop = Rng::derive(cfg.seed, {0xd0, 0, 0, i});
    const double loss = with_divergence_context(Stage::kPretrain, 0, i, [&] {
      ad::Tape tape;
      Bound b = bind_model(tape, model, true, true);
      const LocalGraph lg = local_graph(base, ep, 2);
      ad::Var l = pretrain_objective(b, lg, base, ep, cfg, cfg.dropout > 0.0 ? &drop : nullptr);
      check_finite_loss(l, Stage::kPretrain, 0, i);
      tape.backward(l);
      opt.step(collect_grads(tape, b));
      return l.value().item();
    });
    if (on_step) on_step({Stage::kPretrain, 0, i, loss});
  }

  const Tensor emb = encode(model.backbone, base);
  model.prototypes = compute_prototypes(emb, base, pools, model.class_attention ? &*model.class_attention : nullptr,
                                        cfg.prototype_options());
  model.session_index = 0;
  return model;
}

ModelState run_stream_session(const ModelState& teacher, const SessionStream& stream, std::size_t session,
                              const TrainConfig& cfg_in, const StepCallback& on_step) {
  const TrainConfig cfg = cfg_in.effective();
  cfg.validate();
  if (session == 0 || session >= stream.stage_count())
    throw Error(ErrorCode::kUnknownSession, fmt::format("no streaming session {}", session));
  if (teacher.session_index + 1 != session)
    throw Error(ErrorCode::kMissingTeacher,
                fmt::format("session {} needs the model of session {}, got session {}", session, session - 1,
                            teacher.session_index));

  const Graph& snapshot = stream.snapshots[session];
  const auto old_classes = stream.partition.classes_at(session - 1);
  const auto novel_classes = stream.partition.new_classes_at(session);
  const auto all_classes = stream.partition.classes_at(session);
  for (ClassId c : old_classes)
    if (!teacher.prototypes.index_of(c))
      throw Error(ErrorCode::kMissingPrototype, fmt::format("teacher has no prototype for old class {}", c));
  const PrototypeOptions popt = cfg.prototype_options();

  ModelState student = teacher;
  const bool train_backbone = !cfg.freeze_backbone;
  Optimizer opt(cfg.finetune_optimizer, trainable_tensors(student, train_backbone));

  // The teacher is frozen, so its view of the snapshot is computed once.
  Tensor teacher_emb;
  Tensor teacher_protos;
  if (cfg.weights.lambda_kd > 0.0 && cfg.sampler.finetune_episodes > 0) {
    teacher_emb = encode(teacher.backbone, snapshot);
    teacher_protos = teacher.prototypes.subset(old_classes).vectors;
  }

  std::vector<std::uint32_t> old_rows;
  std::vector<std::uint32_t> novel_rows;
  for (std::uint32_t i = 0; i < all_classes.size(); ++i) {
    if (std::binary_search(novel_classes.begin(), novel_classes.end(), all_classes[i]))
      novel_rows.push_back(i);
    else
      old_rows.push_back(i);
  }

  const std::size_t steps = static_cast<std::size_t>(cfg.sampler.finetune_episodes);
  for (std::size_t i = 0; i < steps; ++i) {
    Rng rng = episode_rng(cfg.sampler.seed, Stage::kFinetune, session, i);
    const Episode ep = sample_finetune_episode(session, stream, cfg.sampler, rng);
    Rng drop = Rng::derive(cfg.seed, {0xd0, 1, session, i});
    const double loss = with_divergence_context(Stage::kFinetune, session, i, [&] {
      ad::Tape tape;
      Bound b = bind_model(tape, student, train_backbone, true);
      const auto lg = local_graph(snapshot, ep, 2);
      ad::EncodeOptions enc{.dropout = cfg.dropout, .rng = cfg.dropout > 0.0 ? &drop : nullptr};
      ad::Var e = ad::encode(b.backbone, lg.sub, lg.adj, enc);

      std::map<ClassId, std::size_t> support_counts;
      for (const auto& [c, nodes] : ep.supports) support_counts[c] = nodes.size();
      std::map<ClassId, double> alpha;
      const auto inv = cfg.inverse_frequency_alpha ? inverse_frequency_alpha(support_counts) : std::map<ClassId, double>{};
      for (ClassId c : all_classes) {
        auto it = inv.find(c);
        alpha[c] = it != inv.end() ? it->second : cfg.weights.alpha_of(c);
      }

      std::vector<ad::Var> protos;
      for (ClassId c : all_classes) {
        auto sup = ep.supports.find(c);
        if (sup != ep.supports.end()) {
          protos.push_back(class_prototype(b, e, lg.sub, snapshot, sup->second, popt));
        } else {
          auto v = student.prototypes.vector(c);
          protos.push_back(tape.constant(Tensor::row_vector({v.begin(), v.end()})));
        }
      }
      ad::Var p = ad::concat_rows(protos);
      auto q = gather_queries(ep, e, lg.sub, all_classes, alpha);

      ad::LossTerms terms;
      terms.proximity = ad::proximity_loss(q.embeddings, q.proto_rows, p, q.weights);
      if (cfg.weights.lambda_u > 0.0) terms.uniformity = ad::uniformity_loss(p, cfg.seed);
      if (cfg.weights.lambda_s > 0.0)
        terms.separability = ad::separability_loss(ad::gather_rows(p, novel_rows), ad::gather_rows(p, old_rows));
      if (cfg.weights.lambda_kd > 0.0) {
        ad::Var student_probs = ad::softened_logits(q.embeddings, ad::gather_rows(p, old_rows), cfg.weights.tau,
                                                    cfg.weights.logit_sign);
        ad::Tape scratch;
        ad::Var te = ad::gather_rows(scratch.constant(teacher_emb), rows_in(snapshot, q.nodes));
        Tensor teacher_probs =
            ad::softened_logits(te, scratch.constant(teacher_protos), cfg.weights.tau, cfg.weights.logit_sign).value();
        terms.distillation = ad::distillation_loss(student_probs, teacher_probs);
      }
      ad::Var l = ad::finetune_loss(terms, cfg.weights);
      check_finite_loss(l, Stage::kFinetune, session, i);
      tape.backward(l);
      opt.step(collect_grads(tape, b));
      return l.value().item();
    });
    if (on_step) on_step({Stage::kFinetune, session, i, loss});
  }

  const Tensor emb = encode(student.backbone, snapshot);
  const ClassAttentionParams* ca = student.class_attention ? &*student.class_attention : nullptr;
  ClassNodes fresh;
  for (ClassId c : novel_classes) fresh[c] = stream.partition.sessions[session - 1].supports.at(c);
  const bool recompute_old = steps > 0 && cfg.sampler.resample_old;
  if (recompute_old) {
    const std::set<ClassId> base(stream.partition.base_classes.begin(), stream.partition.base_classes.end());
    for (ClassId c : old_classes) {
      if (base.contains(c)) {
        fresh[c] = stream.eval_pools[session].at(c);
      } else {
        for (const auto& spec : stream.partition.sessions)
          if (auto it = spec.supports.find(c); it != spec.supports.end()) fresh[c] = it->second;
      }
    }
  } else {
    for (std::size_t i = 0; i < student.prototypes.size(); ++i) student.prototypes.origin[i] = PrototypeOrigin::kCarried;
  }
  const PrototypeSet computed = compute_prototypes(emb, snapshot, fresh, ca, popt);
  for (std::size_t i = 0; i < computed.size(); ++i)
    student.prototypes.set(computed.classes[i], computed.vectors.row(i), PrototypeOrigin::kComputed);
  student.session_index = session;
  return student;
}

ClassId nearest_prototype(std::span<const double> embedding, const PrototypeSet& prototypes) {
  if (prototypes.size() == 0) throw Error(ErrorCode::kMissingPrototype, "no prototypes to compare against");
  ClassId best = prototypes.classes[0];
  double best_d = std::numeric_limits<double>::infinity();
  // Classes are sorted, so keeping the first strict minimum implements the lowest-id tie rule.
  for (std::size_t i = 0; i < prototypes.size(); ++i) {
    const double d = squared_euclidean(embedding, prototypes.vectors.row(i));
    if (d < best_d) {
      best_d = d;
      best = prototypes.classes[i];
    }
  }
  return best;
}

std::vector<ClassId> predict_nodes(const ModelState& model, const Graph& g, std::span<const NodeId> nodes) {
  if (model.prototypes.size() == 0) throw Error(ErrorCode::kMissingPrototype, "predict_nodes: empty prototype set");
  const auto rows = rows_in(g, nodes);
  const Tensor emb = encode(model.backbone, g);
  std::vector<ClassId> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(nearest_prototype(emb.row(r), model.prototypes));
  return out;
}

SessionMetrics evaluate_session(std::span<const ModelState> models, const SessionStream& stream, std::size_t session) {
  if (models.empty()) throw Error(ErrorCode::kInvalidArgument, "evaluate_session: no models");
  if (session >= stream.stage_count()) throw Error(ErrorCode::kUnknownSession, fmt::format("no session {}", session));
  const auto start = std::chrono::steady_clock::now();
  const Graph& g = stream.snapshots[session];
  const auto classes = stream.partition.classes_at(session);

  std::vector<NodeId> nodes;
  std::vector<ClassId> truth;
  for (ClassId c : classes) {
    const auto& pool = stream.eval_pools[session].at(c);
    nodes.insert(nodes.end(), pool.begin(), pool.end());
    truth.insert(truth.end(), pool.size(), c);
  }
  if (nodes.empty()) throw Error(ErrorCode::kPoolTooSmall, fmt::format("session {} has an empty eval pool", session));

  SessionMetrics m;
  m.session = session;
  std::map<ClassId, double> class_sum;
  for (const auto& model : models) {
    if (model.session_index != session)
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("model is at session {}, evaluation asked for {}", model.session_index, session));
    const auto pred = predict_nodes(model, g, nodes);
    const auto cm = confusion_matrix(truth, pred, classes);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < classes.size(); ++i) {
      std::size_t row_total = 0;
      for (auto v : cm[i]) row_total += v;
      correct += cm[i][i];
      class_sum[classes[i]] += static_cast<double>(cm[i][i]) / static_cast<double>(row_total);
    }
    m.accuracy_per_seed.push_back(static_cast<double>(correct) / static_cast<double>(nodes.size()));
  }
  const double n = static_cast<double>(models.size());
  for (double a : m.accuracy_per_seed) m.accuracy_mean += a / n;
  double var = 0.0;
  for (double a : m.accuracy_per_seed) var += (a - m.accuracy_mean) * (a - m.accuracy_mean) / n;
  m.accuracy_std = std::sqrt(var);
  for (const auto& [c, s] : class_sum) m.per_class[c] = s / n;
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const ClassId> truth, std::span<const ClassId> predicted,
                                                       std::span<const ClassId> classes) {
  if (truth.size() != predicted.size()) throw Error(ErrorCode::kShapeMismatch, "confusion_matrix: length mismatch");
  std::map<ClassId, std::size_t> index;
  for (std::size_t i = 0; i < classes.size(); ++i) index[classes[i]] = i;
  std::vector<std::vector<std::size_t>> cm(classes.size(), std::vector<std::size_t>(classes.size(), 0));
  for (std::size_t k = 0; k < truth.size(); ++k) {
    auto t = index.find(truth[k]);
    if (t == index.end()) throw Error(ErrorCode::kInvalidArgument, fmt::format("class {} is not in the class list", truth[k]));
    auto p = index.find(predicted[k]);
    if (p != index.end()) ++cm[t->second][p->second];
  }
  return cm;
}

}  // namespace geometer
