#include "geometer/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "geometer/error.hpp"

namespace geometer {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, sep)) {
    auto t = trim(part);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument(fmt::format("\"{}\" is not a valid number", v));
  return out;
}

double parse_double(const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw std::invalid_argument(fmt::format("\"{}\" is not a valid number", v));
  return d;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument(fmt::format("\"{}\" is not a boolean", v));
}

template <typename T>
std::vector<T> parse_list(const std::string& v) {
  std::vector<T> out;
  for (const auto& item : split(v, ',')) out.push_back(parse_number<T>(item));
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::filesystem::path&)>;

struct Key {
  Setter set;
  std::string default_text;
};

std::filesystem::path resolve(const std::string& v, const std::filesystem::path& base) {
  std::filesystem::path p(v);
  return p.is_absolute() || base.empty() ? p : base / p;
}

const std::map<std::string, Key>& keys() {
  static const std::map<std::string, Key> table = [] {
    std::map<std::string, Key> k;
    k["dataset_dir"] = {[](auto& c, const auto& v, const auto& b) { c.dataset_dir = resolve(v, b); }, ""};
    k["manifest"] = {[](auto& c, const auto& v, const auto& b) { c.manifest = resolve(v, b); }, ""};
    k["run_dir"] = {[](auto& c, const auto& v, const auto& b) { c.run_dir = resolve(v, b); }, ""};
    k["seeds"] = {[](auto& c, const auto& v, const auto&) { c.seeds = parse_list<std::uint64_t>(v); }, "0"};
    k["mode"] = {[](auto& c, const auto& v, const auto&) {
                   if (v == "geometer") c.train.mode = Mode::kGeometer;
                   else if (v == "pn_star") c.train.mode = Mode::kPnStar;
                   else throw std::invalid_argument("mode must be geometer or pn_star");
                 },
                 "geometer"};

    k["base_classes"] = {[](auto& c, const auto& v, const auto&) { c.split.base_classes = parse_list<ClassId>(v); }, ""};
    k["session_classes"] = {[](auto& c, const auto& v, const auto&) {
                              c.split.session_classes.clear();
                              for (const auto& s : split(v, ';')) c.split.session_classes.push_back(parse_list<ClassId>(s));
                            },
                            ""};
    k["n_base"] = {[](auto& c, const auto& v, const auto&) { c.split.n_base = parse_number<std::size_t>(v); }, "0"};
    k["n_sessions"] = {[](auto& c, const auto& v, const auto&) { c.split.n_sessions = parse_number<std::size_t>(v); }, "0"};
    k["n_ways"] = {[](auto& c, const auto& v, const auto&) { c.split.n_ways = parse_number<std::size_t>(v); }, "1"};
    k["class_order"] = {[](auto& c, const auto& v, const auto&) {
                          if (v == "ascending") c.split.class_order = ClassOrder::kAscending;
                          else if (v == "shuffled") c.split.class_order = ClassOrder::kShuffled;
                          else throw std::invalid_argument("class_order must be ascending or shuffled");
                        },
                        "ascending"};
    k["k_shot"] = {[](auto& c, const auto& v, const auto&) { c.split.k_shot = parse_number<int>(v); }, "5"};
    k["split_seed"] = {[](auto& c, const auto& v, const auto&) { c.split.seed = parse_number<std::uint64_t>(v); }, "0"};

    k["hidden"] = {[](auto& c, const auto& v, const auto&) { c.train.hidden = parse_number<std::size_t>(v); }, "512"};
    k["out_dim"] = {[](auto& c, const auto& v, const auto&) { c.train.out_dim = parse_number<std::size_t>(v); }, "64"};
    k["backbone_heads"] = {[](auto& c, const auto& v, const auto&) { c.train.backbone_heads = parse_number<std::size_t>(v); }, "1"};
    k["attention_heads"] = {[](auto& c, const auto& v, const auto&) { c.train.attention_heads = parse_number<std::size_t>(v); }, "4"};
    k["dropout"] = {[](auto& c, const auto& v, const auto&) { c.train.dropout = parse_double(v); }, "0"};
    k["freeze_backbone"] = {[](auto& c, const auto& v, const auto&) { c.train.freeze_backbone = parse_bool(v); }, "false"};

    k["k_max"] = {[](auto& c, const auto& v, const auto&) { c.train.sampler.k_max = parse_number<int>(v); }, "10"};
    k["k_qry"] = {[](auto& c, const auto& v, const auto&) { c.train.sampler.k_qry = parse_number<int>(v); }, "10"};
    k["old_query_bias"] = {[](auto& c, const auto& v, const auto&) { c.train.sampler.old_query_bias = parse_double(v); }, "0.7"};
    k["pretrain_episodes"] = {[](auto& c, const auto& v, const auto&) { c.train.sampler.pretrain_episodes = parse_number<int>(v); }, "500"};
    k["finetune_episodes"] = {[](auto& c, const auto& v, const auto&) { c.train.sampler.finetune_episodes = parse_number<int>(v); }, "100"};
    k["n_way"] = {[](auto& c, const auto& v, const auto&) { c.train.sampler.n_way = parse_number<int>(v); }, "0"};
    k["resample_old"] = {[](auto& c, const auto& v, const auto&) { c.train.sampler.resample_old = parse_bool(v); }, "true"};

    k["lambda_p"] = {[](auto& c, const auto& v, const auto&) { c.train.weights.lambda_p = parse_double(v); }, "1"};
    k["lambda_u"] = {[](auto& c, const auto& v, const auto&) { c.train.weights.lambda_u = parse_double(v); }, "1"};
    k["lambda_s"] = {[](auto& c, const auto& v, const auto&) { c.train.weights.lambda_s = parse_double(v); }, "1"};
    k["lambda_kd"] = {[](auto& c, const auto& v, const auto&) { c.train.weights.lambda_kd = parse_double(v); }, "1"};
    k["tau"] = {[](auto& c, const auto& v, const auto&) { c.train.weights.tau = parse_double(v); }, "2"};
    k["logit_sign"] = {[](auto& c, const auto& v, const auto&) {
                         if (v == "negative") c.train.weights.logit_sign = LogitSign::kNegative;
                         else if (v == "positive") c.train.weights.logit_sign = LogitSign::kPositive;
                         else throw std::invalid_argument("logit_sign must be negative or positive");
                       },
                       "negative"};
    k["alpha"] = {[](auto& c, const auto& v, const auto&) {
                    c.train.weights.alpha.clear();
                    for (const auto& item : split(v, ',')) {
                      const auto colon = item.find(':');
                      if (colon == std::string::npos) throw std::invalid_argument("alpha entries are class:weight");
                      c.train.weights.alpha[parse_number<ClassId>(trim(item.substr(0, colon)))] =
                          parse_double(trim(item.substr(colon + 1)));
                    }
                  },
                  ""};
    k["inverse_frequency_alpha"] = {[](auto& c, const auto& v, const auto&) { c.train.inverse_frequency_alpha = parse_bool(v); }, "true"};

    auto optimizer_kind = [](const std::string& v) {
      if (v == "adam") return OptimizerKind::kAdam;
      if (v == "sgd") return OptimizerKind::kSgd;
      throw std::invalid_argument("optimizer must be adam or sgd");
    };
    k["optimizer"] = {[optimizer_kind](auto& c, const auto& v, const auto&) {
                        c.train.base_optimizer.kind = optimizer_kind(v);
                        c.train.finetune_optimizer.kind = optimizer_kind(v);
                      },
                      "adam"};
    k["lr_base"] = {[](auto& c, const auto& v, const auto&) { c.train.base_optimizer.lr = parse_double(v); }, "0.001"};
    k["lr_finetune"] = {[](auto& c, const auto& v, const auto&) { c.train.finetune_optimizer.lr = parse_double(v); }, "0.0001"};
    return k;
  }();
  return table;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::kConfig, fmt::format("line {}: expected key = value", n));
    const auto key = trim(std::string_view(t).substr(0, eq));
    const auto value = trim(std::string_view(t).substr(eq + 1));
    auto it = keys().find(key);
    if (it == keys().end()) throw Error(ErrorCode::kConfig, fmt::format("line {}: unknown key \"{}\"", n, key));
    if (!seen.insert(key).second) throw Error(ErrorCode::kConfig, fmt::format("line {}: key \"{}\" set twice", n, key));
    if (value.empty()) throw Error(ErrorCode::kConfig, fmt::format("line {}: key \"{}\" has no value", n, key));
    try {
      it->second.set(cfg, value, base_dir);
      // Single-field ranges are checked here so the error can name the line.
      cfg.train.sampler.validate();
      cfg.train.weights.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::kConfig, fmt::format("line {}: {}: {}", n, key, e.what()));
    } catch (const std::invalid_argument& e) {
      throw Error(ErrorCode::kConfig, fmt::format("line {}: {}: {}", n, key, e.what()));
    } catch (const std::out_of_range&) {
      throw Error(ErrorCode::kConfig, fmt::format("line {}: {}: value out of range", n, key));
    }
  }
  if (cfg.seeds.empty()) throw Error(ErrorCode::kConfig, "seeds must not be empty");
  try {
    cfg.train.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, e.what());
  }
  cfg.train = cfg.train.with_seed(cfg.seeds.front());
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

std::vector<std::pair<std::string, std::string>> config_keys() {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [name, key] : keys()) out.emplace_back(name, key.default_text);
  return out;
}

}  // namespace geometer
