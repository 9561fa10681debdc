#include "geometer/checkpoint.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "binary_io.hpp"
#include "geometer/error.hpp"

namespace geometer {

namespace {

constexpr std::uint32_t kMaxNameLength = 4096;

Tensor scalar_tensor(double v) { return Tensor::scalar(v); }

const Tensor& require(const TensorMap& m, const std::string& name) {
  auto it = m.find(name);
  if (it == m.end()) throw Error(ErrorCode::kParse, fmt::format("checkpoint: missing tensor \"{}\"", name));
  return it->second;
}

std::int64_t as_integer(double v, const std::string& what) {
  if (!std::isfinite(v) || v != std::floor(v))
    throw Error(ErrorCode::kParse, fmt::format("checkpoint: {} is not an integer ({})", what, v));
  return static_cast<std::int64_t>(v);
}

std::string head_name(std::size_t layer, std::size_t head, const char* part) {
  return fmt::format("backbone.layer{}.head{}.{}", layer, head, part);
}

}  // namespace

void write_tensors(const TensorMap& tensors, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write("GFSP", 4);
  detail::write_u32(out, static_cast<std::uint32_t>(tensors.size()));
  std::vector<float> buf;
  for (const auto& [name, t] : tensors) {
    detail::write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u32(out, static_cast<std::uint32_t>(t.rows()));
    detail::write_u32(out, static_cast<std::uint32_t>(t.cols()));
    buf.assign(t.data().begin(), t.data().end());
    detail::write_f32s(out, buf);
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

TensorMap read_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot open " + path.string());
  const std::string what = path.filename().string();
  detail::expect_magic(in, "GFSP", what);
  const auto count = detail::read_u32(in, what);
  TensorMap out;
  std::vector<float> buf;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::read_u32(in, what);
    if (len == 0 || len > kMaxNameLength) throw Error(ErrorCode::kBadHeader, what + ": bad tensor name length");
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (static_cast<std::uint32_t>(in.gcount()) != len) throw Error(ErrorCode::kLengthMismatch, what + ": truncated name");
    const auto rows = detail::read_u32(in, what);
    const auto cols = detail::read_u32(in, what);
    buf.resize(static_cast<std::size_t>(rows) * cols);
    detail::read_f32s(in, buf, what);
    if (!out.emplace(name, Tensor(rows, cols, std::vector<double>(buf.begin(), buf.end()))).second)
      throw Error(ErrorCode::kParse, fmt::format("{}: tensor \"{}\" stored twice", what, name));
  }
  if (!detail::at_eof(in)) throw Error(ErrorCode::kLengthMismatch, what + ": trailing bytes after the last tensor");
  return out;
}

TensorMap model_to_tensors(const ModelState& model) {
  TensorMap m;
  m["meta.session_index"] = scalar_tensor(static_cast<double>(model.session_index));
  m["backbone.heads"] = scalar_tensor(static_cast<double>(model.backbone.head_count()));
  for (std::size_t l = 0; l < model.backbone.layers.size(); ++l)
    for (std::size_t h = 0; h < model.backbone.layers[l].heads.size(); ++h) {
      m[head_name(l, h, "weight")] = model.backbone.layers[l].heads[h].weight;
      m[head_name(l, h, "attention")] = model.backbone.layers[l].heads[h].attention;
    }
  if (model.class_attention) {
    m["class_attention.heads"] = scalar_tensor(static_cast<double>(model.class_attention->heads));
    m["class_attention.query"] = model.class_attention->query;
    m["class_attention.key"] = model.class_attention->key;
    m["class_attention.value"] = model.class_attention->value;
  }
  const auto& p = model.prototypes;
  Tensor ids(1, p.size());
  Tensor origin(1, p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    ids[i] = static_cast<double>(p.classes[i]);
    origin[i] = static_cast<double>(p.origin[i]);
  }
  m["prototypes.class_ids"] = ids;
  m["prototypes.origin"] = origin;
  m["prototypes.vectors"] = p.vectors;
  return m;
}

ModelState model_from_tensors(const TensorMap& m) {
  ModelState model;
  model.session_index = static_cast<std::size_t>(as_integer(require(m, "meta.session_index").item(), "session index"));
  const auto heads = static_cast<std::size_t>(as_integer(require(m, "backbone.heads").item(), "backbone heads"));
  if (heads == 0) throw Error(ErrorCode::kParse, "checkpoint: zero backbone heads");

  auto& bb = model.backbone;
  for (std::size_t l = 0; l < 2; ++l) {
    GatLayer layer{.heads = {}, .concat_heads = l == 0};
    for (std::size_t h = 0; h < heads; ++h)
      layer.heads.push_back({require(m, head_name(l, h, "weight")), require(m, head_name(l, h, "attention"))});
    bb.layers.push_back(std::move(layer));
  }
  bb.feature_dim = bb.layers[0].heads[0].weight.cols();
  bb.hidden = bb.layers[0].heads[0].weight.rows() * heads;
  bb.out_dim = bb.layers[1].heads[0].weight.rows();
  for (std::size_t l = 0; l < 2; ++l)
    for (const auto& head : bb.layers[l].heads) {
      const std::size_t out = l == 0 ? bb.hidden / heads : bb.out_dim;
      const std::size_t in = l == 0 ? bb.feature_dim : bb.hidden;
      if (head.weight.rows() != out || head.weight.cols() != in || head.attention.rows() != 1 ||
          head.attention.cols() != 2 * out)
        throw Error(ErrorCode::kShapeMismatch, fmt::format("checkpoint: inconsistent shapes in layer {}", l));
    }

  if (m.contains("class_attention.heads")) {
    ClassAttentionParams ca;
    ca.heads = static_cast<std::size_t>(as_integer(m.at("class_attention.heads").item(), "class attention heads"));
    ca.query = require(m, "class_attention.query");
    ca.key = require(m, "class_attention.key");
    ca.value = require(m, "class_attention.value");
    for (const Tensor* t : ca.tensors())
      if (t->rows() != bb.out_dim || t->cols() != bb.out_dim || ca.heads == 0 || bb.out_dim % ca.heads != 0)
        throw Error(ErrorCode::kShapeMismatch, "checkpoint: class attention does not match the embedding size");
    model.class_attention = std::move(ca);
  }

  const Tensor& ids = require(m, "prototypes.class_ids");
  const Tensor& origin = require(m, "prototypes.origin");
  const Tensor& vectors = require(m, "prototypes.vectors");
  if (origin.size() != ids.size() || vectors.rows() != ids.size() || (ids.size() > 0 && vectors.cols() != bb.out_dim))
    throw Error(ErrorCode::kShapeMismatch, "checkpoint: prototype tensors disagree");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto o = as_integer(origin[i], "prototype origin");
    if (o != 0 && o != 1) throw Error(ErrorCode::kParse, "checkpoint: unknown prototype origin");
    model.prototypes.set(static_cast<ClassId>(as_integer(ids[i], "class id")), vectors.row(i),
                         static_cast<PrototypeOrigin>(o));
  }
  if (ids.size() == 0) model.prototypes.vectors = Tensor(0, bb.out_dim);
  return model;
}

void save_checkpoint(const ModelState& model, const std::filesystem::path& path) {
  write_tensors(model_to_tensors(model), path);
}

ModelState load_checkpoint(const std::filesystem::path& path) { return model_from_tensors(read_tensors(path)); }

}  // namespace geometer
