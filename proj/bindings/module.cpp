#include <pybind11/pybind11.h>
#include <pybind11/eigen.h>
#include <pybind11/stl.h>

#include "ipswlab/config_json.hpp"
#include "ipswlab/datagen.hpp"
#include "ipswlab/diagnostics.hpp"
#include "ipswlab/error.hpp"
#include "ipswlab/glm.hpp"
#include "ipswlab/ipsw.hpp"
#include "ipswlab/mice.hpp"
#include "ipswlab/missingness.hpp"
#include "ipswlab/study.hpp"
#include "ipswlab/tabular.hpp"

namespace py = pybind11;
using namespace ipswlab;

namespace {

Dataset dataset_from_dict(const std::map<std::string, std::vector<double>>& columns,
                          const std::map<std::string, std::string>& roles,
                          const std::vector<std::string>& order) {
  std::map<std::string, ColumnRole> parsed;
  for (const auto& [name, role] : roles) parsed[name] = parse_role(role);
  std::vector<std::pair<std::string, std::vector<double>>> cols;
  if (!order.empty()) {
    for (const auto& name : order) cols.emplace_back(name, columns.at(name));
  } else {
    for (const auto& [name, values] : columns) cols.emplace_back(name, values);
  }
  return build_dataset(cols, parsed);
}

DesignMatrix design_from_matrix(const Eigen::MatrixXd& X,
                                const std::vector<std::string>& names) {
  DesignMatrix d;
  d.names = names;
  if (names.size() != static_cast<std::size_t>(X.cols()))
    throw ConfigError("predictor names must match the matrix columns");
  d.X.resize(X.rows(), X.cols() + 1);
  d.X.col(0).setOnes();
  d.X.rightCols(X.cols()) = X;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "IPSW + multiple-imputation causal transport laboratory";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<SeparationError>(m, "SeparationError", PyExc_RuntimeError);

  py::enum_<ColumnRole>(m, "ColumnRole")
      .value("Covariate", ColumnRole::Covariate)
      .value("TrialIndicator", ColumnRole::TrialIndicator)
      .value("Treatment", ColumnRole::Treatment)
      .value("Outcome", ColumnRole::Outcome)
      .value("Weight", ColumnRole::Weight)
      .value("Derived", ColumnRole::Derived);

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("n_rows", &Dataset::n_rows)
      .def_property_readonly("n_cols", &Dataset::n_cols)
      .def("has_column", &Dataset::has_column)
      .def("covariate_names", &Dataset::covariate_names)
      .def("count_masked", &Dataset::count_masked)
      .def("derived_consistent", &Dataset::derived_consistent, py::arg("name") = "")
      .def("values",
           [](const Dataset& ds, const std::string& name) {
             return ds.column(name).values;
           })
      .def("observed",
           [](const Dataset& ds, const std::string& name) {
             std::vector<bool> out;
             for (auto o : ds.column(name).observed) out.push_back(o != 0);
             return out;
           })
      .def("column_names", [](const Dataset& ds) {
        std::vector<std::string> names;
        for (const auto& col : ds.columns()) names.push_back(col.name);
        return names;
      });

  m.def("build_dataset", &dataset_from_dict, py::arg("columns"), py::arg("roles"),
        py::arg("order") = std::vector<std::string>{},
        "Build a dataset from name -> values (NaN = missing) and name -> role maps.");
  m.def("read_csv",
        [](const std::string& path, const std::map<std::string, std::string>& roles) {
          std::map<std::string, ColumnRole> parsed;
          for (const auto& [name, role] : roles) parsed[name] = parse_role(role);
          return read_csv(path, parsed);
        },
        py::arg("path"), py::arg("roles"));
  m.def("write_csv", &write_csv, py::arg("dataset"), py::arg("path"));
  m.def("concat_trial_target", &concat_trial_target, py::arg("trial"), py::arg("target"),
        py::arg("permissive") = false, py::arg("indicator_name") = "S");
  m.def("add_derived_product", &add_derived_product, py::arg("dataset"), py::arg("a"),
        py::arg("b"), py::arg("out"));

  py::class_<ScenarioConfig>(m, "ScenarioConfig")
      .def(py::init<>())
      .def_readwrite("n_target", &ScenarioConfig::n_target)
      .def_readwrite("alpha", &ScenarioConfig::alpha)
      .def_readwrite("beta1", &ScenarioConfig::beta1)
      .def_readwrite("beta0", &ScenarioConfig::beta0)
      .def_readwrite("noise_sd", &ScenarioConfig::noise_sd)
      .def_readwrite("treat_prob", &ScenarioConfig::treat_prob)
      .def_readwrite("seed", &ScenarioConfig::seed);

  py::class_<Superpopulation>(m, "Superpopulation")
      .def_readonly("data", &Superpopulation::data)
      .def_readonly("y1", &Superpopulation::y1)
      .def_readonly("y0", &Superpopulation::y0)
      .def_readonly("true_pate_s0", &Superpopulation::true_pate_s0)
      .def_readonly("true_pate_all", &Superpopulation::true_pate_all)
      .def_readonly("realized_tate", &Superpopulation::realized_tate)
      .def_readonly("n_trial", &Superpopulation::n_trial);

  m.def("make_superpopulation",
        [](const ScenarioConfig& cfg) { return make_superpopulation(cfg); });

  py::enum_<TrialMarRule>(m, "TrialMarRule")
      .value("ranked", TrialMarRule::ranked)
      .value("random", TrialMarRule::random);

  py::class_<MarSpec>(m, "MarSpec")
      .def(py::init<>())
      .def_readwrite("target_col", &MarSpec::target_col)
      .def_readwrite("rank_cols", &MarSpec::rank_cols)
      .def_readwrite("frac_nontrial", &MarSpec::frac_nontrial)
      .def_readwrite("frac_trial", &MarSpec::frac_trial)
      .def_readwrite("trial_rule", &MarSpec::trial_rule);

  m.def("induce_mar",
        [](const Dataset& ds, const MarSpec& spec, std::optional<std::uint64_t> seed) {
          if (seed) return induce_mar(ds, spec, RngStream(*seed));
          return induce_mar(ds, spec);
        },
        py::arg("dataset"), py::arg("spec"), py::arg("seed") = std::nullopt);

  py::class_<GlmFit>(m, "GlmFit")
      .def_property_readonly("coef",
                             [](const GlmFit& fit) {
                               return std::vector<double>(fit.coef.data(),
                                                          fit.coef.data() + fit.coef.size());
                             })
      .def_readonly("names", &GlmFit::names)
      .def_readonly("converged", &GlmFit::converged)
      .def_readonly("iterations", &GlmFit::iterations)
      .def_property_readonly("cov_model", [](const GlmFit& f) { return f.cov_model; })
      .def_property_readonly("cov_robust", [](const GlmFit& f) { return f.cov_robust; })
      .def("se", &GlmFit::se)
      .def("robust_se", &GlmFit::robust_se);

  m.def("fit_logistic",
        [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
           const std::vector<std::string>& names) {
          return fit_logistic(design_from_matrix(X, names), y);
        },
        py::arg("X"), py::arg("y"), py::arg("names"),
        "Logistic regression by IRLS; X excludes the intercept column.");
  m.def("fit_wls",
        [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
           const std::vector<std::string>& names) {
          return fit_wls(design_from_matrix(X, names), y, w);
        },
        py::arg("X"), py::arg("y"), py::arg("w"), py::arg("names"));

  py::enum_<WeightScheme>(m, "WeightScheme")
      .value("Generalize", WeightScheme::Generalize)
      .value("Transport", WeightScheme::Transport);

  py::class_<WeightsSummary>(m, "WeightsSummary")
      .def_readonly("min", &WeightsSummary::min)
      .def_readonly("max", &WeightsSummary::max)
      .def_readonly("sum", &WeightsSummary::sum)
      .def_readonly("ess", &WeightsSummary::ess);

  py::class_<EstimateResult>(m, "EstimateResult")
      .def_readonly("estimate", &EstimateResult::estimate)
      .def_readonly("robust_se", &EstimateResult::robust_se)
      .def_readonly("model_se", &EstimateResult::model_se)
      .def_readonly("n_used", &EstimateResult::n_used)
      .def_readonly("weights", &EstimateResult::weights);

  py::class_<PooledEstimate>(m, "PooledEstimate")
      .def_readonly("estimate", &PooledEstimate::estimate)
      .def_readonly("within_var", &PooledEstimate::within_var)
      .def_readonly("between_var", &PooledEstimate::between_var)
      .def_readonly("total_var", &PooledEstimate::total_var)
      .def_readonly("m", &PooledEstimate::m)
      .def("se", &PooledEstimate::se);

  m.def("estimate_ps", &estimate_ps, py::arg("dataset"), py::arg("covariates"));
  m.def("treatment_prob", &treatment_prob, py::arg("dataset"), py::arg("mode"),
        py::arg("covariates") = std::vector<std::string>{});
  py::enum_<TreatProbMode>(m, "TreatProbMode")
      .value("marginal", TreatProbMode::marginal)
      .value("logistic", TreatProbMode::logistic);
  m.def("compute_weights", &compute_weights, py::arg("dataset"), py::arg("ps"),
        py::arg("e_a"), py::arg("scheme"));
  m.def("estimate_pate", &estimate_pate, py::arg("dataset"), py::arg("weights"));

  py::class_<PipelineParams>(m, "PipelineParams")
      .def(py::init<>())
      .def_readwrite("covariates", &PipelineParams::covariates)
      .def_readwrite("scheme", &PipelineParams::scheme)
      .def_readwrite("treat_prob_mode", &PipelineParams::treat_prob_mode);

  m.def("ipsw_pipeline", &ipsw_pipeline, py::arg("dataset"), py::arg("params"));
  m.def("complete_case", &complete_case, py::arg("dataset"), py::arg("params"));

  py::enum_<ModelKind>(m, "ModelKind")
      .value("M1A", ModelKind::M1A)
      .value("M1B", ModelKind::M1B)
      .value("M2", ModelKind::M2)
      .value("M3A", ModelKind::M3A)
      .value("M3B", ModelKind::M3B);

  py::class_<MRule>(m, "MRule")
      .def_static("paper", &MRule::paper)
      .def_static("explicit_count", &MRule::explicit_count);

  py::class_<ImputationSpec>(m, "ImputationSpec")
      .def_readwrite("m", &ImputationSpec::m)
      .def_readwrite("maxit", &ImputationSpec::maxit)
      .def_readwrite("seed", &ImputationSpec::seed)
      .def_readonly("variables", &ImputationSpec::variables);

  py::class_<ImputedSet>(m, "ImputedSet")
      .def_readonly("datasets", &ImputedSet::datasets)
      .def("chain_log_csv", &ImputedSet::chain_log_csv);

  m.def("build_spec", &build_spec, py::arg("kind"), py::arg("dataset"), py::arg("m_rule"),
        py::arg("interactions") = std::vector<std::string>{});
  m.def("impute", &impute, py::arg("dataset"), py::arg("spec"), py::arg("workers") = 1);
  m.def("psi_within", &psi_within, py::arg("imputed"), py::arg("params"));

  m.def("asd",
        [](const Dataset& ds, const std::string& covariate,
           const std::optional<std::vector<double>>& w) { return asd(ds, covariate, w); },
        py::arg("dataset"), py::arg("covariate"), py::arg("weights") = std::nullopt);
  m.def("tipton_index", &tipton_index, py::arg("ps_trial"), py::arg("ps_target"),
        py::arg("bins") = 20);
  m.def("ess", &ess, py::arg("weights"));

  py::enum_<Method>(m, "Method")
      .value("FullData", Method::FullData)
      .value("CC", Method::CC)
      .value("M1A", Method::M1A)
      .value("M1B", Method::M1B)
      .value("M2", Method::M2)
      .value("M3A", Method::M3A)
      .value("M3B", Method::M3B);

  m.def("run_study_json",
        [](const std::string& config_json, int workers) {
          StudyConfig cfg = study_config_from_json(nlohmann::json::parse(config_json));
          StudyResult result = run_study(cfg, workers);
          return study_result_to_json(result).dump();
        },
        py::arg("config_json"), py::arg("workers") = 1,
        "Run the Monte Carlo study from a StudyConfig JSON string; returns result JSON.");

  m.def("performance_metrics",
        [](const std::vector<double>& estimates, double truth,
           const std::vector<double>& robust_ses) {
          MetricRecord r = performance_metrics(estimates, truth, robust_ses);
          py::dict d;
          d["bias"] = r.bias;
          d["bias_mcse"] = r.bias_mcse;
          d["emp_se"] = r.emp_se;
          d["emp_se_mcse"] = r.emp_se_mcse;
          d["avg_robust_se"] = r.avg_robust_se;
          d["mse"] = r.mse;
          d["mse_mcse"] = r.mse_mcse;
          d["n"] = r.n;
          return d;
        },
        py::arg("estimates"), py::arg("truth"), py::arg("robust_ses"));
}
