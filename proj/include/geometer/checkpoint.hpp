#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "geometer/diffmath.hpp"
#include "geometer/model.hpp"

namespace geometer {

/// Named tensors stored as f32. Layout: "GFSP", u32 count, then per tensor
/// u32 name length, name bytes, u32 rows, u32 cols, rows*cols f32. All little-endian.
using TensorMap = std::map<std::string, Tensor>;

void write_tensors(const TensorMap& tensors, const std::filesystem::path& path);
TensorMap read_tensors(const std::filesystem::path& path);

TensorMap model_to_tensors(const ModelState& model);
ModelState model_from_tensors(const TensorMap& tensors);

void save_checkpoint(const ModelState& model, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace geometer
