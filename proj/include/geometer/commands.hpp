#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geometer/config.hpp"
#include "geometer/session_stream.hpp"

namespace geometer {

/// One JSON line of the run log.
struct MetricsRecord {
  std::size_t session = 0;
  double mean = 0.0;
  double std = 0.0;
  std::map<ClassId, double> per_class;
  double seconds = 0.0;
  std::uint64_t seed = 0;
  std::string mode;
};

std::string metrics_to_json(const MetricsRecord& r);
MetricsRecord metrics_from_json(const std::string& line);
/// Appends one line with a single write.
void append_metrics(const std::filesystem::path& path, const MetricsRecord& r);
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

std::string mode_name(Mode m);
std::filesystem::path checkpoint_path(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t session);
std::filesystem::path metrics_path(const ExperimentConfig& cfg);

/// Class lists for the manifest: explicit lists when given, otherwise n_base then
/// n_sessions groups of n_ways taken in class order.
ClassPartition plan_split(const Graph& g, const SplitConfig& split);

SessionStream load_stream(const ExperimentConfig& cfg);

/// Writes the manifest and returns its path. Same seed, same bytes.
std::filesystem::path cmd_prepare(const ExperimentConfig& cfg);

/// One base checkpoint per seed (only `seed` when given); appends a session-0 record per seed.
std::vector<std::filesystem::path> cmd_pretrain(const ExperimentConfig& cfg, std::optional<std::uint64_t> seed = {});

/// Runs every remaining session from the base checkpoint (or `checkpoint`), one record per session per seed.
std::vector<MetricsRecord> cmd_stream(const ExperimentConfig& cfg, std::optional<std::uint64_t> seed = {},
                                      const std::optional<std::filesystem::path>& checkpoint = {});

struct ReportRow {
  std::string mode;
  std::size_t session = 0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t seeds = 0;
};

struct Report {
  std::vector<ReportRow> rows;
  std::string text;
  std::string json;
};

/// Mean and population std over seeds per (mode, session). The latest record wins
/// when a (mode, seed, session) repeats. Seeds of one mode must cover the same sessions.
Report summarize(std::span<const MetricsRecord> records);
Report cmd_report(std::span<const std::filesystem::path> logs);

/// Writes `node <id> <class> <vec...>` rows for the session's eval pool and
/// `prototype <class> <vec...>` rows for its classes, tab-separated. Returns the node row count.
std::size_t export_embeddings(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint, std::size_t session,
                              const std::filesystem::path& out);

}  // namespace geometer
