#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "geometer/checkpoint.hpp"
#include "geometer/commands.hpp"
#include "geometer/error.hpp"
#include "geometer/objectives.hpp"
#include "geometer/session_runner.hpp"
#include "geometer/synthetic.hpp"

namespace py = pybind11;
using namespace geometer;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() == 1) return Tensor(1, static_cast<std::size_t>(a.shape(0)), {a.data(), a.data() + a.size()});
  if (a.ndim() != 2) throw Error(ErrorCode::kShapeMismatch, "expected a 1-D or 2-D array");
  return Tensor(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)), {a.data(), a.data() + a.size()});
}

Array to_array(const Tensor& t) {
  Array a({t.rows(), t.cols()});
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return a;
}

PrototypeSet to_prototypes(const std::vector<ClassId>& classes, const Array& vectors) {
  const Tensor v = to_tensor(vectors);
  if (v.rows() != classes.size()) throw Error(ErrorCode::kShapeMismatch, "one prototype row per class required");
  PrototypeSet p;
  for (std::size_t i = 0; i < classes.size(); ++i) p.set(classes[i], v.row(i), PrototypeOrigin::kComputed);
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Few-shot class-incremental node classification core";

  static py::exception<Error> error(m, "GeometerError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(error_code_name(e.code())) + ": " + e.what()).c_str());
    }
  });

  py::class_<Graph>(m, "Graph")
      .def_property_readonly("node_count", &Graph::node_count)
      .def_property_readonly("feature_dim", &Graph::feature_dim)
      .def_property_readonly("edge_count", &Graph::edge_count)
      .def_property_readonly("labels", &Graph::labels)
      .def_property_readonly("node_ids", &Graph::node_ids)
      .def("degree", [](const Graph& g, NodeId id) { return degree_of(g, id); });

  m.def("load_graph", &load_graph, py::arg("directory"));
  m.def("save_graph", &save_graph, py::arg("graph"), py::arg("directory"));
  m.def("synthetic_graph", [](std::uint64_t seed) { return make_synthetic_graph(cora_ml_like(seed)); }, py::arg("seed") = 0);

  py::class_<SessionStream>(m, "SessionStream")
      .def_property_readonly("stage_count", &SessionStream::stage_count)
      .def("classes_at", [](const SessionStream& s, std::size_t t) { return s.partition.classes_at(t); })
      .def("eval_pool", [](const SessionStream& s, std::size_t t) { return s.eval_pools.at(t); })
      .def("manifest_json", [](const SessionStream& s) { return manifest_to_json(s.partition); });

  m.def("build_session_stream", &build_session_stream, py::arg("graph"), py::arg("base_classes"),
        py::arg("session_classes"), py::arg("k_shot") = 5, py::arg("seed") = 0);

  m.def("squared_euclidean", [](const Array& a, const Array& b) {
    const Tensor x = to_tensor(a), y = to_tensor(b);
    return squared_euclidean(x.data(), y.data());
  });
  m.def("cosine_sim", [](const Array& a, const Array& b) {
    const Tensor x = to_tensor(a), y = to_tensor(b);
    return cosine_sim(x.data(), y.data());
  });
  m.def("softmax_rows", [](const Array& a) { return to_array(softmax_rows(to_tensor(a))); });

  m.def("uniformity_loss", [](const std::vector<ClassId>& classes, const Array& v) {
    return uniformity_loss(to_prototypes(classes, v));
  });
  m.def("separability_loss", [](const Array& novel, const Array& old) {
    return separability_loss(to_tensor(novel), to_tensor(old));
  });
  m.def("softened_logits", [](const Array& e, const std::vector<ClassId>& classes, const Array& v, double tau) {
    const Tensor emb = to_tensor(e);
    return softened_logits(emb.data(), to_prototypes(classes, v), tau);
  }, py::arg("embedding"), py::arg("classes"), py::arg("prototypes"), py::arg("tau") = 2.0);
  m.def("distillation_loss", [](const Array& s, const Array& t) { return distillation_loss(to_tensor(s), to_tensor(t)); });
  m.def("proximity_loss", [](const std::map<ClassId, Array>& queries, const std::vector<ClassId>& classes, const Array& v) {
    std::map<ClassId, Tensor> q;
    for (const auto& [c, a] : queries) q[c] = to_tensor(a);
    return proximity_loss(q, to_prototypes(classes, v));
  });
  m.def("nearest_prototype", [](const Array& e, const std::vector<ClassId>& classes, const Array& v) {
    const Tensor emb = to_tensor(e);
    return nearest_prototype(emb.data(), to_prototypes(classes, v));
  });

  py::class_<ModelState>(m, "Model")
      .def_readonly("session_index", &ModelState::session_index)
      .def_property_readonly("prototype_classes", [](const ModelState& s) { return s.prototypes.classes; })
      .def_property_readonly("prototypes", [](const ModelState& s) { return to_array(s.prototypes.vectors); })
      .def("encode", [](const ModelState& s, const Graph& g) { return to_array(encode(s.backbone, g)); })
      .def("predict", [](const ModelState& s, const Graph& g, const std::vector<NodeId>& nodes) {
        return predict_nodes(s, g, nodes);
      })
      .def("save", [](const ModelState& s, const std::filesystem::path& p) { save_checkpoint(s, p); });

  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  m.def(
      "pretrain",
      [](const SessionStream& stream, std::uint64_t seed, int episodes, std::size_t hidden, std::size_t out_dim,
         const std::string& mode) {
        TrainConfig cfg;
        cfg.hidden = hidden;
        cfg.out_dim = out_dim;
        cfg.sampler.pretrain_episodes = episodes;
        cfg.mode = mode == "pn_star" ? Mode::kPnStar : Mode::kGeometer;
        py::gil_scoped_release release;
        return pretrain(stream, cfg.with_seed(seed));
      },
      py::arg("stream"), py::arg("seed") = 0, py::arg("episodes") = 500, py::arg("hidden") = 512,
      py::arg("out_dim") = 64, py::arg("mode") = "geometer");

  m.def(
      "run_session",
      [](const ModelState& teacher, const SessionStream& stream, std::size_t session, std::uint64_t seed, int episodes,
         const std::string& mode) {
        TrainConfig cfg;
        cfg.hidden = teacher.backbone.hidden;
        cfg.out_dim = teacher.backbone.out_dim;
        cfg.sampler.finetune_episodes = episodes;
        cfg.mode = mode == "pn_star" ? Mode::kPnStar : Mode::kGeometer;
        py::gil_scoped_release release;
        return run_stream_session(teacher, stream, session, cfg.with_seed(seed));
      },
      py::arg("teacher"), py::arg("stream"), py::arg("session"), py::arg("seed") = 0, py::arg("episodes") = 100,
      py::arg("mode") = "geometer");

  m.def("evaluate", [](const std::vector<ModelState>& models, const SessionStream& stream, std::size_t session) {
    const auto r = evaluate_session(models, stream, session);
    py::dict d;
    d["session"] = r.session;
    d["mean"] = r.accuracy_mean;
    d["std"] = r.accuracy_std;
    d["per_class"] = r.per_class;
    return d;
  });
}
