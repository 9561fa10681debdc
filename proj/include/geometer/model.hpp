#pragma once

#include <optional>

#include "geometer/backbone.hpp"
#include "geometer/prototype.hpp"

namespace geometer {

/// Everything a session hands to the next one.
struct ModelState {
  BackboneParams backbone;
  std::optional<ClassAttentionParams> class_attention;  // absent in mean-prototype mode
  PrototypeSet prototypes;
  std::size_t session_index = 0;

  /// Backbone tensors followed by the class-attention projections.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
};

/// Rounds every parameter and prototype to f32, the precision of stored checkpoints.
void quantize_to_f32(ModelState& model);

}  // namespace geometer
