// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "infosieve/cli.hpp"
#include "infosieve/cluster.hpp"
#include "infosieve/datagen.hpp"
#include "infosieve/runner.hpp"
#include "infosieve/treelab.hpp"

namespace py = pybind11;
using namespace infosieve;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d array");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

py::dict metrics_dict(const cluster::GcdMetrics& m) {
  py::dict d;
  d["acc_all"] = m.acc_all;
  d["acc_known"] = m.acc_known;
  d["acc_novel"] = m.acc_novel;
  d["n_all"] = m.n_all;
  d["n_known"] = m.n_known;
  d["n_novel"] = m.n_novel;
  return d;
}

}  // namespace

PYBIND11_MODULE(_infosieve, m) {
  m.doc() = "Category-code discovery on embeddings";
  m.attr("__version__") = kVersion;

  m.def(
      "gen_dataset",
      [](std::uint64_t seed, int depth, int per_leaf, int dim, double noise) {
        const auto ds = data::gen_hier_dataset(
            {.seed = seed, .depth = depth, .per_leaf = per_leaf, .dim = dim, .noise_sigma = noise});
        return py::make_tuple(to_array(ds.features), ds.labels, ds.category_paths);
      },
      py::arg("seed") = 0, py::arg("depth") = 3, py::arg("per_leaf") = 20, py::arg("dim") = 64,
      py::arg("noise") = 0.05, "Synthetic hierarchical dataset: (features, labels, category paths).");

  m.def(
      "hungarian",
      [](const Array& cost) {
        const auto r = cluster::hungarian(to_matrix(cost));
        return py::make_tuple(r.row_to_col, r.cost);
      },
      py::arg("cost"), "Minimum-cost assignment: (row_to_col, cost).");

  m.def(
      "kmeans",
      [](const Array& x, std::size_t k, std::uint64_t seed, int n_init) {
        const auto r = cluster::kmeans_restarts(to_matrix(x), k, seed, n_init);
        return py::make_tuple(r.assign, r.objective);
      },
      py::arg("x"), py::arg("k"), py::arg("seed") = 0, py::arg("n_init") = 1);

  m.def(
      "ss_kmeans",
      [](const Array& x, const std::map<std::size_t, int>& labeled, std::size_t k, std::uint64_t seed, int n_init) {
        const auto r = cluster::ss_kmeans_restarts(to_matrix(x), labeled, k, seed, n_init);
        return py::make_tuple(r.assign, r.objective);
      },
      py::arg("x"), py::arg("labeled"), py::arg("k"), py::arg("seed") = 0, py::arg("n_init") = 1,
      "k-means with labeled points pinned to their class clusters.");

  m.def(
      "gcd_accuracy",
      [](const std::vector<int>& pred, const std::vector<int>& gt, const std::vector<int>& known,
         const std::vector<std::size_t>& labeled) { return metrics_dict(cluster::gcd_accuracy(pred, gt, known, labeled)); },
      py::arg("pred"), py::arg("gt"), py::arg("known_classes"), py::arg("labeled_idx"));

  m.def(
      "oracle",
      [](const std::vector<int>& labels, std::size_t max_n) {
        const auto r = tree::oracle_optimal_encoding(labels, max_n);
        std::vector<std::vector<std::string>> optima;
        for (const auto& e : r.optima) optima.push_back(e.codes);
        return py::make_tuple(r.min_total_length, optima);
      },
      py::arg("labels"), py::arg("max_n") = 8, "Shortest valid encodings: (total length, optima).");

  m.def(
      "is_valid_encoding",
      [](const std::vector<std::string>& codes, const std::vector<int>& labels) {
        const auto v = tree::is_valid_encoding({codes}, labels);
        return py::make_tuple(v.valid, v.witness);
      },
      py::arg("codes"), py::arg("labels"));

  m.def(
      "train_json",
      [](const std::string& config_json) {
        const RunConfig cfg = config_from_json(config_json);
        RunResult r;
        {
          py::gil_scoped_release release;
          r = train(cfg);
        }
        py::dict d;
        d["metrics_json"] = metrics_to_json(r.metrics);
        d["epochs"] = r.epochs_trained;
        d["purity"] = r.tree.mean_purity;
        d["tree"] = r.tree.text;
        d["codes"] = r.tree.codes.codes;
        d["binarization_code"] = r.binarization.code;
        d["binarization_mask"] = r.binarization.mask;
        return d;
      },
      py::arg("config_json"), "Runs training from a JSON config and returns the results.");

  m.def("default_config_json", [] { return config_to_json(RunConfig{}); });
  m.def("published_config_json", [] { return config_to_json(RunConfig::paper_defaults()); });

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int rc = cli::run(args, out, err);
        return py::make_tuple(rc, out.str(), err.str());
      },
      py::arg("args"), "Runs a command-line invocation: (status, stdout, stderr).");

  py::register_exception<tree::DuplicateCodeError>(m, "DuplicateCodeError", PyExc_ValueError);
}
