#include "geometer/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "geometer/checkpoint.hpp"
#include "geometer/error.hpp"
#include "geometer/log.hpp"
#include "geometer/rng.hpp"

namespace geometer {

using nlohmann::json;

std::string metrics_to_json(const MetricsRecord& r) {
  json per_class = json::object();
  for (const auto& [c, a] : r.per_class) per_class[std::to_string(c)] = a;
  json doc = {{"session", r.session}, {"mean", r.mean},     {"std", r.std},   {"per_class", per_class},
              {"seconds", r.seconds}, {"seed", r.seed},     {"mode", r.mode}};
  return doc.dump();
}

MetricsRecord metrics_from_json(const std::string& line) {
  MetricsRecord r;
  try {
    const json doc = json::parse(line);
    r.session = doc.at("session").get<std::size_t>();
    r.mean = doc.at("mean").get<double>();
    r.std = doc.at("std").get<double>();
    r.seconds = doc.at("seconds").get<double>();
    r.seed = doc.value("seed", std::uint64_t{0});
    r.mode = doc.value("mode", std::string("geometer"));
    for (const auto& [k, v] : doc.at("per_class").items()) r.per_class[static_cast<ClassId>(std::stol(k))] = v.get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, fmt::format("metrics record: {}", e.what()));
  } catch (const std::invalid_argument&) {
    throw Error(ErrorCode::kParse, "metrics record: per_class keys must be class ids");
  }
  return r;
}

void append_metrics(const std::filesystem::path& path, const MetricsRecord& r) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::kIo, "cannot append to " + path.string());
  const std::string line = metrics_to_json(r) + "\n";
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot open " + path.string());
  std::vector<MetricsRecord> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(metrics_from_json(line));
    } catch (const Error& e) {
      throw Error(ErrorCode::kParse, fmt::format("{}:{}: {}", path.string(), n, e.what()));
    }
  }
  return out;
}

std::string mode_name(Mode m) { return m == Mode::kPnStar ? "pn_star" : "geometer"; }

std::filesystem::path checkpoint_path(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t session) {
  return cfg.run_dir / fmt::format("seed-{}", seed) / fmt::format("session-{}.gfsp", session);
}

std::filesystem::path metrics_path(const ExperimentConfig& cfg) { return cfg.run_dir / "metrics.jsonl"; }

ClassPartition plan_split(const Graph& g, const SplitConfig& split) {
  ClassPartition p;
  p.k_shot = split.k_shot;
  p.seed = split.seed;
  if (!split.base_classes.empty()) {
    p.base_classes = split.base_classes;
    for (const auto& s : split.session_classes) p.sessions.push_back({s, {}});
    return p;
  }
  if (split.n_base == 0) throw Error(ErrorCode::kConfig, "split needs base_classes or n_base");
  std::vector<ClassId> classes;
  for (const auto& [c, nodes] : g.nodes_by_class()) classes.push_back(c);
  const std::size_t need = split.n_base + split.n_sessions * split.n_ways;
  if (split.n_sessions > 0 && split.n_ways == 0) throw Error(ErrorCode::kInvalidArgument, "n_ways must be positive");
  if (need > classes.size())
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("split asks for {} classes ({} base + {} x {}), graph has {}", need, split.n_base,
                            split.n_sessions, split.n_ways, classes.size()));
  if (split.class_order == ClassOrder::kShuffled) {
    Rng rng = Rng::derive(split.seed, {0xc1a5});
    rng.shuffle(std::span<ClassId>(classes));
  }
  auto it = classes.begin();
  p.base_classes.assign(it, it + static_cast<std::ptrdiff_t>(split.n_base));
  it += static_cast<std::ptrdiff_t>(split.n_base);
  for (std::size_t s = 0; s < split.n_sessions; ++s) {
    SessionSpec spec;
    spec.novel_classes.assign(it, it + static_cast<std::ptrdiff_t>(split.n_ways));
    it += static_cast<std::ptrdiff_t>(split.n_ways);
    p.sessions.push_back(std::move(spec));
  }
  return p;
}

namespace {

void require_path(const std::filesystem::path& p, const char* what) {
  if (p.empty()) throw Error(ErrorCode::kConfig, fmt::format("config does not set {}", what));
  if (!std::filesystem::exists(p)) throw Error(ErrorCode::kMissingFile, fmt::format("{} {} does not exist", what, p.string()));
}

std::vector<std::uint64_t> seeds_for(const ExperimentConfig& cfg, std::optional<std::uint64_t> seed) {
  if (seed) return {*seed};
  return cfg.seeds;
}

MetricsRecord to_record(const SessionMetrics& m, std::uint64_t seed, Mode mode, double seconds) {
  return {m.session, m.accuracy_mean, m.accuracy_std, m.per_class, seconds, seed, mode_name(mode)};
}

double elapsed(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

SessionStream load_stream(const ExperimentConfig& cfg) {
  require_path(cfg.dataset_dir, "dataset_dir");
  require_path(cfg.manifest, "manifest");
  return stream_from_partition(load_graph(cfg.dataset_dir), read_manifest(cfg.manifest));
}

std::filesystem::path cmd_prepare(const ExperimentConfig& cfg) {
  require_path(cfg.dataset_dir, "dataset_dir");
  if (cfg.manifest.empty()) throw Error(ErrorCode::kConfig, "config does not set manifest");
  const Graph g = load_graph(cfg.dataset_dir);
  const ClassPartition plan = plan_split(g, cfg.split);
  std::vector<std::vector<ClassId>> sessions;
  for (const auto& s : plan.sessions) sessions.push_back(s.novel_classes);
  const auto stream = build_session_stream(g, plan.base_classes, sessions, plan.k_shot, plan.seed);
  write_manifest(stream.partition, cfg.manifest);
  return cfg.manifest;
}

std::vector<std::filesystem::path> cmd_pretrain(const ExperimentConfig& cfg, std::optional<std::uint64_t> seed) {
  if (cfg.run_dir.empty()) throw Error(ErrorCode::kConfig, "config does not set run_dir");
  const SessionStream stream = load_stream(cfg);
  std::vector<std::filesystem::path> written;
  for (std::uint64_t s : seeds_for(cfg, seed)) {
    const auto start = std::chrono::steady_clock::now();
    const TrainConfig tc = cfg.train.with_seed(s);
    logger().info("pretraining seed {}", s);
    ModelState model = pretrain(stream, tc, [](const StepReport& r) {
      if (r.episode % 50 == 0) logger().debug("pretrain episode {} loss {:.6f}", r.episode, r.loss);
    });
    quantize_to_f32(model);
    const auto path = checkpoint_path(cfg, s, 0);
    save_checkpoint(model, path);
    const double seconds = elapsed(start);
    const auto metrics = evaluate_session(std::span<const ModelState>(&model, 1), stream, 0);
    append_metrics(metrics_path(cfg), to_record(metrics, s, tc.mode, seconds));
    written.push_back(path);
  }
  return written;
}

std::vector<MetricsRecord> cmd_stream(const ExperimentConfig& cfg, std::optional<std::uint64_t> seed,
                                      const std::optional<std::filesystem::path>& checkpoint) {
  if (cfg.run_dir.empty()) throw Error(ErrorCode::kConfig, "config does not set run_dir");
  const auto seeds = seeds_for(cfg, seed);
  if (checkpoint && seeds.size() != 1)
    throw Error(ErrorCode::kInvalidArgument, "an explicit checkpoint needs exactly one seed (use --seed)");
  const SessionStream stream = load_stream(cfg);
  std::vector<MetricsRecord> records;
  for (std::uint64_t s : seeds) {
    const auto from = checkpoint ? *checkpoint : checkpoint_path(cfg, s, 0);
    require_path(from, "checkpoint");
    ModelState model = load_checkpoint(from);
    if (model.session_index >= stream.stage_count())
      throw Error(ErrorCode::kUnknownSession,
                  fmt::format("checkpoint is at session {}, the manifest has {} sessions", model.session_index,
                              stream.stage_count() - 1));
    const TrainConfig tc = cfg.train.with_seed(s);
    for (std::size_t t = model.session_index + 1; t < stream.stage_count(); ++t) {
      const auto start = std::chrono::steady_clock::now();
      logger().info("seed {} session {}", s, t);
      model = run_stream_session(model, stream, t, tc);
      // Stored checkpoints are f32; rounding here keeps resumed runs identical.
      quantize_to_f32(model);
      save_checkpoint(model, checkpoint_path(cfg, s, t));
      const double seconds = elapsed(start);
      const auto metrics = evaluate_session(std::span<const ModelState>(&model, 1), stream, t);
      records.push_back(to_record(metrics, s, tc.mode, seconds));
      append_metrics(metrics_path(cfg), records.back());
    }
  }
  return records;
}

Report summarize(std::span<const MetricsRecord> records) {
  if (records.empty()) throw Error(ErrorCode::kInvalidArgument, "report: no metrics records");
  // mode -> seed -> session -> accuracy
  std::map<std::string, std::map<std::uint64_t, std::map<std::size_t, double>>> runs;
  for (const auto& r : records) runs[r.mode][r.seed][r.session] = r.mean;

  Report rep;
  std::set<std::size_t> all_sessions;
  for (const auto& [mode, seeds] : runs) {
    const auto& first = seeds.begin()->second;
    for (const auto& [seed, sessions] : seeds) {
      bool same = sessions.size() == first.size();
      for (auto a = sessions.begin(), b = first.begin(); same && a != sessions.end(); ++a, ++b) same = a->first == b->first;
      if (!same)
        throw Error(ErrorCode::kInvalidArgument,
                    fmt::format("report: mode {} seed {} has {} sessions, seed {} has {}", mode, seed, sessions.size(),
                                seeds.begin()->first, first.size()));
    }
    for (const auto& [session, acc] : first) {
      ReportRow row{mode, session, 0.0, 0.0, seeds.size()};
      const double n = static_cast<double>(seeds.size());
      for (const auto& [seed, sessions] : seeds) row.mean += sessions.at(session) / n;
      double var = 0.0;
      for (const auto& [seed, sessions] : seeds) var += std::pow(sessions.at(session) - row.mean, 2) / n;
      row.std = std::sqrt(var);
      rep.rows.push_back(row);
      all_sessions.insert(session);
    }
  }

  std::vector<std::string> modes;
  for (const auto& [mode, seeds] : runs) modes.push_back(mode);
  std::string text = fmt::format("{:<8}", "session");
  for (const auto& m : modes) text += fmt::format("  {:>16}", m);
  text += "\n";
  for (std::size_t s : all_sessions) {
    text += fmt::format("{:<8}", s);
    for (const auto& m : modes) {
      auto it = std::find_if(rep.rows.begin(), rep.rows.end(),
                             [&](const ReportRow& r) { return r.mode == m && r.session == s; });
      text += it == rep.rows.end() ? fmt::format("  {:>16}", "-")
                                   : fmt::format("  {:>16}", fmt::format("{:.2f}+-{:.2f}", 100 * it->mean, 100 * it->std));
    }
    text += "\n";
  }
  rep.text = std::move(text);

  json rows = json::array();
  for (const auto& r : rep.rows)
    rows.push_back({{"mode", r.mode}, {"session", r.session}, {"mean", r.mean}, {"std", r.std}, {"seeds", r.seeds}});
  rep.json = json{{"rows", rows}}.dump(2) + "\n";
  return rep;
}

Report cmd_report(std::span<const std::filesystem::path> logs) {
  std::vector<MetricsRecord> all;
  for (const auto& p : logs) {
    auto recs = read_metrics(p);
    all.insert(all.end(), recs.begin(), recs.end());
  }
  return summarize(all);
}

std::size_t export_embeddings(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint, std::size_t session,
                              const std::filesystem::path& out) {
  require_path(checkpoint, "checkpoint");
  const SessionStream stream = load_stream(cfg);
  const ModelState model = load_checkpoint(checkpoint);
  if (session >= stream.stage_count() || session > model.session_index)
    throw Error(ErrorCode::kUnknownSession,
                fmt::format("session {} is not available (manifest has {} stages, checkpoint is at session {})",
                            session, stream.stage_count(), model.session_index));
  const Graph& g = stream.snapshots[session];
  const Tensor emb = encode(model.backbone, g);
  const auto classes = stream.partition.classes_at(session);
  const PrototypeSet protos = model.prototypes.subset(classes);

  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  std::ofstream f(out, std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + out.string());
  auto write_vec = [&f](std::span<const double> v) {
    for (double x : v) f << '\t' << fmt::format("{:.9g}", static_cast<float>(x));
    f << '\n';
  };
  std::size_t rows = 0;
  for (ClassId c : classes)
    for (NodeId id : stream.eval_pools[session].at(c)) {
      f << "node\t" << id << '\t' << c;
      write_vec(emb.row(g.require_row(id)));
      ++rows;
    }
  for (std::size_t i = 0; i < protos.size(); ++i) {
    f << "prototype\t" << protos.classes[i];
    write_vec(protos.vectors.row(i));
  }
  if (!f) throw Error(ErrorCode::kIo, "failed writing " + out.string());
  return rows;
}

}  // namespace geometer
