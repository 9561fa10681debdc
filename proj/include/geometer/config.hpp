#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "geometer/session_runner.hpp"

namespace geometer {

enum class ClassOrder { kAscending, kShuffled };

/// How cmd_prepare splits classes when no explicit lists are given.
struct SplitConfig {
  std::vector<ClassId> base_classes;                 // explicit lists win when non-empty
  std::vector<std::vector<ClassId>> session_classes;
  std::size_t n_base = 0;
  std::size_t n_sessions = 0;
  std::size_t n_ways = 1;
  ClassOrder class_order = ClassOrder::kAscending;
  int k_shot = 5;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::filesystem::path dataset_dir;
  std::filesystem::path manifest;
  std::filesystem::path run_dir;
  SplitConfig split;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0};
};

/// Parses flat `key = value` text. Blank lines and lines starting with '#' are
/// skipped. Unknown keys and malformed values throw kConfig naming the line.
/// Relative paths resolve against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every key the parser accepts, with its default rendered as text.
std::vector<std::pair<std::string, std::string>> config_keys();

}  // namespace geometer
