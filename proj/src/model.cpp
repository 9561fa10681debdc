#include "geometer/model.hpp"

namespace geometer {

std::vector<Tensor*> ModelState::parameters() {
  auto out = backbone.tensors();
  if (class_attention)
    for (Tensor* t : class_attention->tensors()) out.push_back(t);
  return out;
}

std::vector<const Tensor*> ModelState::parameters() const {
  auto out = backbone.tensors();
  if (class_attention)
    for (const Tensor* t : class_attention->tensors()) out.push_back(t);
  return out;
}

void quantize_to_f32(ModelState& model) {
  auto round = [](Tensor& t) {
    for (double& v : t.data()) v = static_cast<double>(static_cast<float>(v));
  };
  for (Tensor* t : model.parameters()) round(*t);
  round(model.prototypes.vectors);
}

}  // namespace geometer
