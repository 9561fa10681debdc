#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "geometer/diffmath.hpp"
#include "geometer/graph.hpp"
#include "geometer/session_stream.hpp"

namespace geometer {

/// Query/key/value projections of the class-level attention. Each is dim x dim
/// and is split column-wise into `heads` blocks of dim / heads.
struct ClassAttentionParams {
  Tensor query;
  Tensor key;
  Tensor value;
  std::size_t heads = 4;

  std::size_t dim() const { return query.rows(); }
  std::vector<Tensor*> tensors() { return {&query, &key, &value}; }
  std::vector<const Tensor*> tensors() const { return {&query, &key, &value}; }
};

ClassAttentionParams init_class_attention(std::size_t dim, std::size_t heads, std::uint64_t seed);

enum class PrototypeInit { kDegreeWeighted, kMean };

struct PrototypeOptions {
  PrototypeInit init = PrototypeInit::kDegreeWeighted;
  bool refine = true;  // false: the initial prototype is final
};

enum class PrototypeOrigin : std::uint8_t { kComputed = 0, kCarried = 1 };

/// Prototypes keyed by class id, kept sorted by id. Row i of `vectors` belongs to classes[i].
struct PrototypeSet {
  std::vector<ClassId> classes;
  Tensor vectors;
  std::vector<PrototypeOrigin> origin;

  std::size_t size() const { return classes.size(); }
  std::size_t dim() const { return vectors.cols(); }
  std::optional<std::size_t> index_of(ClassId c) const;
  /// Throws kMissingPrototype.
  std::span<const double> vector(ClassId c) const;
  /// Inserts or replaces, keeping ids sorted.
  void set(ClassId c, std::span<const double> v, PrototypeOrigin o);
  /// Rows for `wanted`, in that order. Throws kMissingPrototype.
  PrototypeSet subset(std::span<const ClassId> wanted) const;
};

/// Degree weights normalized to sum 1, uniform when every degree is zero.
std::vector<double> degree_weights(std::span<const std::size_t> degrees);

/// Degree-weighted average of support embeddings (rows of `supports`), 1 x d.
Tensor initial_prototype(const Tensor& supports, std::span<const std::size_t> degrees);

/// Initial prototype followed by the supports, attended by the initial prototype.
Tensor refine_prototype(const ClassAttentionParams& params, const Tensor& initial, const Tensor& supports);

/// Attention weights of the refinement, heads x (K + 1). Each row sums to 1.
Tensor class_attention_weights(const ClassAttentionParams& params, const Tensor& initial, const Tensor& supports);

/// Prototype per class of `supports`. `embeddings` rows align with the rows of `g`,
/// whose degrees feed the initial weighting. `params` may be null when refine is off.
PrototypeSet compute_prototypes(const Tensor& embeddings, const Graph& g, const ClassNodes& supports,
                                const ClassAttentionParams* params, const PrototypeOptions& options = {});

namespace ad {

struct ClassAttentionVars {
  Var query;
  Var key;
  Var value;
  std::size_t heads = 4;
};

ClassAttentionVars bind_class_attention(Tape& tape, const ClassAttentionParams& params, bool trainable);

Var initial_prototype(const Var& supports, std::span<const std::size_t> degrees, PrototypeInit init);

/// `weights_out`, when given, receives the heads x (K + 1) attention weights.
Var refine_prototype(const ClassAttentionVars& params, const Var& initial, const Var& supports,
                     Tensor* weights_out = nullptr);

}  // namespace ad

}  // namespace geometer
