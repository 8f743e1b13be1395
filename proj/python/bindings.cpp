// Thin pybind11 layer over the C++ core. Spans are bridged through
// std::vector copies; nothing here is performance critical.
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "privdistill/dataset.hpp"
#include "privdistill/lintheory.hpp"
#include "privdistill/losses.hpp"
#include "privdistill/metrics.hpp"
#include "privdistill/pipelines.hpp"

namespace py = pybind11;
using namespace privdistill;

namespace {

py::dict summary_dict(const std::vector<NdcgSummary>& s) {
  py::dict d;
  for (const auto& x : s) d[py::int_(x.k)] = py::make_tuple(x.mean, x.stddev);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "privileged features distillation core";

  py::register_exception<DatasetError>(m, "DatasetError", PyExc_ValueError);
  py::register_exception<MetricError>(m, "MetricError", PyExc_ValueError);
  py::register_exception<LossError>(m, "LossError", PyExc_ValueError);
  py::register_exception<PipelineError>(m, "PipelineError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);

  // metrics
  m.def("rank_by_scores", [](const std::vector<double>& s) { return rank_by_scores(s).ranks; }, py::arg("scores"));
  m.def("ndcg_at_k",
        [](const std::vector<double>& s, const std::vector<double>& y, std::size_t k) { return ndcg_at_k(s, y, k); },
        py::arg("scores"), py::arg("labels"), py::arg("k"));

  // losses
  m.def("sigmoid", &sigmoid);
  m.def(
      "rank_bce",
      [](const std::vector<double>& s, const std::vector<double>& t) {
        auto r = rank_bce(s, t);
        return py::make_tuple(r.loss, r.grad);
      },
      py::arg("scores"), py::arg("targets"));
  m.def(
      "rank_net",
      [](const std::vector<double>& s, const std::vector<double>& t, const std::vector<std::size_t>& offsets,
         bool distinct_only) {
        auto r = rank_net(s, t, offsets, distinct_only);
        return py::make_tuple(r.loss, r.grad);
      },
      py::arg("scores"), py::arg("targets"), py::arg("offsets"), py::arg("distinct_only") = false);

  // datasets
  py::class_<QueryGroup>(m, "QueryGroup")
      .def_readonly("query_id", &QueryGroup::query_id)
      .def_readonly("features", &QueryGroup::features)
      .def_readonly("relevance", &QueryGroup::relevance)
      .def_readonly("binary_labels", &QueryGroup::binary_labels)
      .def_property_readonly("num_docs", &QueryGroup::num_docs);

  py::class_<RankingDataset>(m, "RankingDataset")
      .def_readonly("groups", &RankingDataset::groups)
      .def_readonly("num_features", &RankingDataset::num_features)
      .def_readonly("regular_cols", &RankingDataset::regular_cols)
      .def_readonly("privileged_cols", &RankingDataset::privileged_cols)
      .def_property_readonly("num_docs", &RankingDataset::num_docs)
      .def("__len__", [](const RankingDataset& d) { return d.groups.size(); })
      .def("content_hash", &dataset_content_hash);

  m.def("read_dataset", [](const std::filesystem::path& p) { return parse_ranking_file(p); }, py::arg("path"));
  m.def("write_dataset", &write_ranking_file, py::arg("path"), py::arg("dataset"));
  m.def("log1p_transform", &log1p_transform);
  m.def("filter_query_groups", &filter_query_groups, py::arg("dataset"), py::arg("min_docs") = 10);
  m.def("label_probability", &label_probability, py::arg("temperature"), py::arg("relevance"), py::arg("tau"));
  m.def(
      "generate_binary_labels",
      [](const RankingDataset& d, double temperature, double tau, std::uint64_t seed) {
        return generate_binary_labels(d, LabelGenConfig{temperature, tau, seed});
      },
      py::arg("dataset"), py::arg("temperature") = 4.0, py::arg("tau_target") = 4.8, py::arg("seed") = 0);
  m.def("split_features_by_correlation", &split_features_by_correlation, py::arg("dataset"),
        py::arg("num_privileged"));
  m.def(
      "latent_fixture",
      [](std::size_t groups, std::size_t docs, std::size_t regular, std::size_t privileged, double noise,
         std::uint64_t seed) {
        LatentFixtureSpec s;
        s.num_groups = groups;
        s.docs_per_group = docs;
        s.num_regular = regular;
        s.num_privileged = privileged;
        s.noise = noise;
        s.seed = seed;
        return make_latent_fixture(s);
      },
      py::arg("groups") = 100, py::arg("docs") = 20, py::arg("regular") = 5, py::arg("privileged") = 3,
      py::arg("noise") = 0.5, py::arg("seed") = 0);

  // training
  m.def(
      "run_strategy",
      [](const RankingDataset& train, const RankingDataset& test, const std::string& strategy, double alpha,
         std::size_t epochs, std::size_t hidden, std::size_t depth, double lr, const std::string& loss,
         std::uint64_t seed) {
        TrainConfig c;
        c.strategy = parse_strategy(strategy);
        c.alpha = alpha;
        c.epochs = epochs;
        c.hidden_dim = hidden;
        c.depth = depth;
        c.base_lr = lr;
        c.loss_kind = parse_loss_kind(loss);
        c.seed = seed;
        StrategyOutcome out;
        {
          py::gil_scoped_release nogil;
          out = run_strategy(ExperimentData{train, test}, c);
        }
        py::dict d;
        d["best_epoch"] = out.student.best_epoch;
        d["best_metric"] = out.student.best_metric;
        d["test"] = summary_dict(out.test);
        d["teacher_test"] = summary_dict(out.teacher_test);
        return d;
      },
      py::arg("train"), py::arg("test"), py::arg("strategy") = "pfd", py::arg("alpha") = 0.5,
      py::arg("epochs") = 100, py::arg("hidden") = 100, py::arg("depth") = 5, py::arg("lr") = 0.0,
      py::arg("loss") = "rankbce", py::arg("seed") = 0);

  // linear theory
  py::class_<LinearExperiment>(m, "LinearExperiment")
      .def_readwrite("d_x", &LinearExperiment::d_x)
      .def_readwrite("d_u", &LinearExperiment::d_u)
      .def_readwrite("d_z", &LinearExperiment::d_z)
      .def_readwrite("n", &LinearExperiment::n)
      .def_readwrite("m", &LinearExperiment::m)
      .def_readwrite("sigma", &LinearExperiment::sigma)
      .def_readwrite("w_star", &LinearExperiment::w_star)
      .def_readwrite("v_star", &LinearExperiment::v_star)
      .def_readwrite("seed", &LinearExperiment::seed);
  m.def("example_experiment", &example_experiment, py::arg("d_z") = 10, py::arg("w_seed") = 2022);
  m.def("closed_form_risk_ols", &closed_form_risk_ols);
  m.def("closed_form_risk_pfd", [](const LinearExperiment& e) {
    auto r = closed_form_risk_pfd(e);
    return py::make_tuple(r.total, r.term_noise, r.term_privileged);
  });
  m.def(
      "monte_carlo_risk",
      [](const LinearExperiment& e, const std::string& estimator, std::size_t trials) {
        RiskReport r;
        {
          py::gil_scoped_release nogil;
          r = monte_carlo_risk(e, parse_estimator(estimator), trials);
        }
        return py::make_tuple(r.mean, r.stderr_);
      },
      py::arg("experiment"), py::arg("estimator"), py::arg("trials"));
}
