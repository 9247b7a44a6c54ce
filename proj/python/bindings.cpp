#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cfcontra/adain.hpp"
#include "cfcontra/errors.hpp"
#include "cfcontra/gradsuite.hpp"
#include "cfcontra/losses.hpp"
#include "cfcontra/train.hpp"

namespace py = pybind11;
using namespace cfcontra;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape.begin(), t.shape.end()));
  std::copy(t.values.begin(), t.values.end(), out.mutable_data());
  return out;
}

Array to_array(const std::vector<double>& v, const Shape& shape) { return to_array(Tensor(shape, v)); }

Domain parse_domain(const std::string& s) {
  if (s == "source") return Domain::Source;
  if (s == "target") return Domain::Target;
  throw py::value_error("domain must be 'source' or 'target'");
}

nlohmann::json json_of(const py::object& obj) {
  if (obj.is_none()) return nlohmann::json::object();
  const auto text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
  return nlohmann::json::parse(text);
}

py::object py_of(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

RunConfig run_config_of(const py::object& obj) {
  RunConfig c;
  apply_json(json_of(obj), c);
  c.validate();
  return c;
}

// Evaluates a scalar loss of one input and returns (value, gradient).
template <class Fn>
std::pair<double, Array> value_and_grad(const Array& x, Fn&& fn) {
  Graph g;
  const Tensor t = to_tensor(x);
  Var v = g.input(t);
  Var loss = fn(g, v);
  g.backward(loss);
  return {loss.item(), to_array(g.grad(v), t.shape)};
}

py::dict metrics_dict(const std::vector<MetricsRecord>& m) {
  py::dict out;
  const std::pair<const char*, double MetricsRecord::*> fields[] = {
      {"ce", &MetricsRecord::ce},         {"entropy", &MetricsRecord::entropy},
      {"contra", &MetricsRecord::contra}, {"total", &MetricsRecord::total},
      {"pseudo_acc", &MetricsRecord::pseudo_acc}, {"labeled_frac", &MetricsRecord::labeled_frac}};
  std::vector<double> it;
  for (const auto& r : m) it.push_back(static_cast<double>(r.iteration));
  out["iteration"] = to_array(it, {it.size()});
  for (const auto& [name, field] : fields) {
    std::vector<double> col;
    for (const auto& r : m) col.push_back(r.*field);
    out[name] = to_array(col, {col.size()});
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Coarse-to-fine contrastive domain adaptation core";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);
  py::register_exception<GenerationError>(m, "GenerationError", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);

  m.def("matmul", [](const Array& a, const Array& b) {
    Graph g;
    return to_array(matmul(g.constant(to_tensor(a)), g.constant(to_tensor(b))).value());
  });
  m.def("softmax", [](const Array& x) {
    Graph g;
    return to_array(softmax(g.constant(to_tensor(x))).value());
  }, "Softmax along the last axis.");

  m.def("cross_entropy", [](const Array& probs, const std::vector<int>& labels) {
    return value_and_grad(probs, [&](Graph&, Var p) { return cross_entropy(p, labels); });
  }, py::arg("probs"), py::arg("labels"), "Returns (loss, d loss / d probs).");
  m.def("entropy_loss", [](const Array& probs) {
    return value_and_grad(probs, [](Graph&, Var p) { return entropy_loss(p); });
  }, py::arg("probs"));
  m.def("info_nce",
        [](const Array& features, const std::vector<int>& labels, const Array& centers, const std::vector<bool>& mask,
           double tau, bool exclude_positive, bool normalize) {
          const Tensor v = to_tensor(centers);
          return value_and_grad(features, [&](Graph&, Var f) {
            return info_nce(f, labels, v, mask, tau, InfoNceOptions{exclude_positive, normalize}).loss;
          });
        },
        py::arg("features"), py::arg("labels"), py::arg("centers"), py::arg("mask"), py::arg("tau"),
        py::arg("exclude_positive") = false, py::arg("normalize") = false);

  py::class_<MemoryBank>(m, "MemoryBank")
      .def(py::init<std::size_t, std::size_t, double>(), py::arg("class_count"), py::arg("feature_dim"),
           py::arg("alpha") = 0.9)
      .def_property_readonly("alpha", &MemoryBank::alpha)
      .def("centers", [](const MemoryBank& b, const std::string& d) { return to_array(b.centers(parse_domain(d))); })
      .def("initialized", [](const MemoryBank& b, const std::string& d) { return b.initialized(parse_domain(d)); })
      .def("update",
           [](MemoryBank& b, const std::string& d, const Array& means, const std::vector<std::size_t>& counts) {
             b.update(parse_domain(d), to_tensor(means), counts);
           })
      .def("set_row", [](MemoryBank& b, const std::string& d, std::size_t cls, const std::vector<double>& row) {
        b.set_row(parse_domain(d), cls, row);
      });

  m.def("contrastive_combined",
        [](const Array& fs, const std::vector<int>& ys, const Array& ft, const std::vector<int>& yt,
           const MemoryBank& bank, double tau) {
          Graph g;
          const Tensor ts = to_tensor(fs), tt = to_tensor(ft);
          Var vs = g.input(ts), vt = g.input(tt);
          Var loss = contrastive_combined(vs, ys, vt, yt, bank, tau);
          g.backward(loss);
          return py::make_tuple(loss.item(), to_array(g.grad(vs), ts.shape), to_array(g.grad(vt), tt.shape));
        },
        "Returns (loss, d/d f_s, d/d f_t).");

  m.def("class_centers", [](const Array& features, const std::vector<int>& labels, std::size_t class_count) {
    const auto c = class_centers(to_tensor(features), labels, class_count);
    return py::make_tuple(to_array(c.centers), c.counts);
  });
  m.def("assign_pseudo_labels", [](const Array& features, const MemoryBank& bank, double threshold) {
    return assign_pseudo_labels(to_tensor(features), bank, threshold);
  });
  m.def("pseudo_label_accuracy", [](const std::vector<int>& pseudo, const std::vector<int>& truth) {
    const auto r = pseudo_label_accuracy(pseudo, truth);
    return py::make_tuple(r.accuracy, r.assigned);
  });

  m.def("channel_stats", [](const Array& x) {
    const auto s = channel_stats(to_tensor(x));
    return py::make_tuple(s.mean, s.var);
  }, "Per-channel (mean, population variance); axis 1 is the channel axis.");
  m.def("adain_transfer",
        [](const Array& content, const std::vector<double>& mean, const std::vector<double>& var, double eps) {
          return to_array(adain_transfer(to_tensor(content), ChannelStats{mean, var}, eps));
        },
        py::arg("content"), py::arg("mean"), py::arg("var"), py::arg("eps") = 1e-5);
  m.def("content_loss", [](const Array& a, const Array& b) { return content_loss(to_tensor(a), to_tensor(b)); });
  m.def("style_loss", [](const std::vector<double>& mean_tf, const std::vector<double>& var_tf,
                         const std::vector<double>& mean_s, const std::vector<double>& var_s) {
    return style_loss(ChannelStats{mean_tf, var_tf}, ChannelStats{mean_s, var_s});
  });

  m.def("segmentation_iou", [](const std::vector<int>& pred, const std::vector<int>& truth, std::size_t classes) {
    const auto r = segmentation_iou(pred, truth, classes);
    return py::make_tuple(r.per_class, r.miou);
  }, "Returns (per-class IOU with None for empty unions, mIOU).");

  m.def("head_parameter_count", [](const std::string& kind, std::size_t d_in, std::size_t d_hidden, std::size_t d_out) {
    return build_head(parse_head_kind(kind), d_in, d_hidden, d_out, 0).parameter_count();
  });
  m.def("gradient_suite", [](std::size_t instances, double h, std::uint64_t seed) {
    py::dict out;
    for (const auto& r : run_gradient_suite(instances, h, seed)) out[py::str(r.name)] = r.max_error;
    return out;
  }, py::arg("instances") = 20, py::arg("h") = 1e-5, py::arg("seed") = 0);

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("spec", [](const Dataset& d) { return py_of(to_json(d.spec)); })
      .def_property_readonly("source_images", [](const Dataset& d) { return to_array(d.source_train.images); })
      .def_property_readonly("source_labels", [](const Dataset& d) { return d.source_train.labels; })
      .def_property_readonly("target_images", [](const Dataset& d) { return to_array(d.target_train.images); })
      .def_property_readonly("eval_images", [](const Dataset& d) { return to_array(d.target_eval.images); })
      .def_property_readonly("eval_labels", [](const Dataset& d) { return d.target_eval.labels; })
      .def("save", [](const Dataset& d, const std::string& dir) { save_dataset(dir, d); })
      .def_static("load", &load_dataset);

  m.def("generate_dataset", [](const py::object& spec) {
    SynthSpec s;
    apply_json(json_of(spec), s);
    return generate_dataset(s);
  }, py::arg("spec") = py::none(), "Synthetic two-domain dataset; `spec` is a dict of SynthSpec fields.");

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_property_readonly("config", [](const Checkpoint& c) { return py_of(to_json(c.config)); })
      .def_readonly("iterations_done", &Checkpoint::iterations_done)
      .def("save", [](const Checkpoint& c, const std::string& path) { save_checkpoint(path, c); });
  m.def("load_checkpoint", &load_checkpoint);

  m.def("train", [](const py::object& config, const Dataset& data) {
    const RunConfig c = run_config_of(config);
    TrainResult r;
    {
      py::gil_scoped_release release;
      r = train(c, data);
    }
    return py::make_tuple(std::move(r.checkpoint), metrics_dict(r.metrics));
  }, py::arg("config"), py::arg("data"), "Returns (checkpoint, metrics columns).");

  m.def("evaluate", [](const Checkpoint& ckpt, const Dataset& data) {
    return py_of(results_json(evaluate(ckpt, data.target_eval), ckpt.config));
  }, "Scores the target eval split; returns the results document as a dict.");
}
