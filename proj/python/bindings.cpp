#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "agcd/assignment.hpp"
#include "agcd/estimation.hpp"
#include "agcd/metrics.hpp"
#include "agcd/pipeline.hpp"

namespace py = pybind11;
using namespace agcd;

namespace {

// RoundReport and friends cross the boundary as plain dicts via their JSON form.
py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

LabelList to_labels(const std::vector<long long>& v) {
  LabelList out;
  out.reserve(v.size());
  for (long long x : v) {
    if (x < 0) throw ConfigError("labels must be non-negative");
    out.push_back(static_cast<Label>(x));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_agcd, m) {
  m.doc() = "Active generalized category discovery core";

  // Translators run newest first, so the base class goes in first.
  const auto base = py::register_exception<Error>(m, "AgcdError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());

  py::class_<FeatureDataset>(m, "FeatureDataset")
      .def(py::init([](const Matrix& x, const std::vector<long long>& y, std::vector<std::string> names,
                       std::size_t num_old) { return FeatureDataset(x, to_labels(y), std::move(names), num_old); }),
           py::arg("features"), py::arg("labels"), py::arg("class_names"), py::arg("num_old"))
      .def_property_readonly("features", &FeatureDataset::features)
      .def_property_readonly("labels", &FeatureDataset::labels)
      .def_property_readonly("class_names", &FeatureDataset::class_names)
      .def_property_readonly("num_old", &FeatureDataset::num_old)
      .def_property_readonly("num_classes", &FeatureDataset::num_classes)
      .def("__len__", &FeatureDataset::size);

  m.def("generate_synthetic",
        [](std::size_t num_old, std::size_t num_new, std::size_t per_class, std::size_t dim, double separation,
           std::uint64_t seed) {
          return generate_synthetic({num_old, num_new, per_class, dim, separation, seed});
        },
        py::arg("num_old"), py::arg("num_new"), py::arg("per_class"), py::arg("dim"), py::arg("separation"),
        py::arg("seed") = 0);
  m.def("load_feature_dir", &load_feature_dir, py::arg("path"));
  m.def("save_feature_dir", &save_feature_dir, py::arg("dataset"), py::arg("path"));

  m.def("hungarian", &hungarian, py::arg("reward"), "row -> column assignment maximizing the total reward");
  m.def("cluster_accuracy",
        [](const std::vector<long long>& y_true, const std::vector<long long>& y_pred, std::size_t k) {
          const auto r = cluster_accuracy(to_labels(y_true), to_labels(y_pred), k);
          return py::make_tuple(r.accuracy, r.permutation);
        },
        py::arg("y_true"), py::arg("y_pred"), py::arg("k"));
  m.def("accuracy_breakdown",
        [](const std::vector<long long>& y_true, const std::vector<long long>& y_pred, std::size_t k,
           std::size_t num_old) {
          return to_python(to_json(accuracy_breakdown(to_labels(y_true), to_labels(y_pred), k, num_old)));
        },
        py::arg("y_true"), py::arg("y_pred"), py::arg("k"), py::arg("num_old"));
  m.def("novelty_metrics",
        [](const std::vector<long long>& labels, std::size_t num_old, std::size_t num_new) {
          return to_python(to_json(novelty_metrics(to_labels(labels), num_old, num_new)));
        },
        py::arg("labels"), py::arg("num_old"), py::arg("num_new"));
  m.def("mapping_diff",
        [](const std::vector<Label>& a, const std::vector<Label>& b) {
          return mapping_diff(LabelMapping(a), LabelMapping(b));
        },
        py::arg("initial"), py::arg("final"));

  m.def("estimate_k",
        [](const Matrix& features, const std::vector<Index>& rows, const std::vector<long long>& labels,
           std::size_t kmin, std::size_t kmax, std::uint64_t seed) {
          const auto est = estimate_k(features, rows, to_labels(labels), {kmin, kmax}, seed);
          return py::make_tuple(est.k, est.accuracy);
        },
        py::arg("features"), py::arg("labeled_rows"), py::arg("labeled_labels"), py::arg("k_min"),
        py::arg("k_max"), py::arg("seed") = 0);

  m.def("run",
        [](const std::string& features, const std::string& synthetic, const std::string& strategy,
           std::size_t rounds, std::size_t budget, double label_ratio, double delta, std::uint64_t seed,
           std::size_t epochs_base, std::size_t epochs_round, const std::string& out) {
          RunConfig cfg;
          if (!features.empty()) cfg.source.feature_dir = features;
          if (!synthetic.empty()) cfg.source.synthetic = parse_synthetic_spec(synthetic);
          cfg.strategy = parse_strategy(strategy);
          cfg.rounds = rounds;
          cfg.budget = budget;
          cfg.split.label_ratio = label_ratio;
          cfg.delta = delta;
          cfg.seed = seed;
          cfg.train.epochs_base = epochs_base;
          cfg.train.epochs_round = epochs_round;
          cfg.out_dir = out;
          std::vector<RoundReport> reports;
          {
            py::gil_scoped_release release;
            reports = run_experiment(cfg);
          }
          py::list result;
          for (const auto& r : reports) result.append(to_python(r.to_json()));
          return result;
        },
        py::arg("features") = "", py::arg("synthetic") = "", py::arg("strategy") = "adaptive-novel",
        py::arg("rounds") = 5, py::arg("budget") = 100, py::arg("label_ratio") = 0.2, py::arg("delta") = 0.1,
        py::arg("seed") = 0, py::arg("epochs_base") = 200, py::arg("epochs_round") = 15, py::arg("out") = "");
}
