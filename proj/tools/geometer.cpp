// geometer command-line driver.
//
//   geometer prepare  --config run.cfg
//   geometer pretrain --config run.cfg [--seed n]
//   geometer stream   --config run.cfg [--seed n] [--checkpoint path]
//   geometer report   --config run.cfg [--out summary.json]
//   geometer export   --config run.cfg --checkpoint path --session t --out file.tsv

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "geometer/commands.hpp"
#include "geometer/error.hpp"
#include "geometer/log.hpp"

namespace {

int fail(std::string_view code, std::string_view message) {
  std::fprintf(stderr, "error: %.*s: %.*s\n", static_cast<int>(code.size()), code.data(),
               static_cast<int>(message.size()), message.data());
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace geometer;
  configure_logging_from_env();

  CLI::App app{"Few-shot class-incremental node classification"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string out;
  std::size_t session = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config (key = value)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "run only this seed");
    cmd->add_option("--checkpoint", checkpoint, "checkpoint to resume or export from");
    cmd->add_option("--out", out, "output path");
  };

  auto* prepare = app.add_subcommand("prepare", "write the split manifest");
  auto* pretrain_cmd = app.add_subcommand("pretrain", "episodic training on the base classes");
  auto* stream_cmd = app.add_subcommand("stream", "run every streaming session");
  auto* report = app.add_subcommand("report", "summarize the run log over seeds");
  auto* export_cmd = app.add_subcommand("export", "dump eval-pool embeddings and prototypes as TSV");
  for (auto* cmd : {prepare, pretrain_cmd, stream_cmd, report, export_cmd}) add_common(cmd);
  export_cmd->add_option("--session", session, "session whose nodes and prototypes are exported")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    const ExperimentConfig cfg = load_config(config_path);
    if (*prepare) {
      std::cout << cmd_prepare(cfg).string() << "\n";
    } else if (*pretrain_cmd) {
      for (const auto& p : cmd_pretrain(cfg, seed)) std::cout << p.string() << "\n";
    } else if (*stream_cmd) {
      std::optional<std::filesystem::path> from;
      if (!checkpoint.empty()) from = checkpoint;
      for (const auto& r : cmd_stream(cfg, seed, from)) std::cout << metrics_to_json(r) << "\n";
    } else if (*report) {
      const std::filesystem::path logs[] = {metrics_path(cfg)};
      const Report rep = cmd_report(logs);
      std::cout << rep.text;
      if (!out.empty()) {
        std::ofstream f(out, std::ios::trunc);
        if (!f) throw Error(ErrorCode::kIo, "cannot write " + out);
        f << rep.json;
      }
    } else if (*export_cmd) {
      if (checkpoint.empty() || out.empty()) return fail("usage", "export needs --checkpoint and --out");
      const auto rows = export_embeddings(cfg, checkpoint, session, out);
      std::cout << fmt::format("{} node rows written to {}\n", rows, out);
    }
  } catch (const Error& e) {
    return fail(error_code_name(e.code()), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
