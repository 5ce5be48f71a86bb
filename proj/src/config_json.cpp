#include "ipswlab/config_json.hpp"

#include <fstream>

#include "ipswlab/error.hpp"

namespace ipswlab {

namespace {

using nlohmann::json;

double get_number(const json& j, const std::string& field) {
  if (!j.contains(field)) throw ConfigError("missing field '" + field + "'");
  if (!j[field].is_number()) throw ConfigError("field '" + field + "' must be a number");
  return j[field].get<double>();
}

std::uint64_t get_seed(const json& j, const std::string& field, std::uint64_t fallback) {
  if (!j.contains(field)) return fallback;
  if (!j[field].is_number_integer() && !j[field].is_number_unsigned())
    throw ConfigError("field '" + field + "' must be an integer");
  return j[field].get<std::uint64_t>();
}

std::array<double, 4> get_array4(const json& j, const std::string& field,
                                 const std::array<double, 4>& fallback) {
  if (!j.contains(field)) return fallback;
  if (!j[field].is_array() || j[field].size() != 4)
    throw ConfigError("field '" + field + "' must be an array of 4 numbers");
  std::array<double, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!j[field][i].is_number())
      throw ConfigError("field '" + field + "' must be an array of 4 numbers");
    out[i] = j[field][i].get<double>();
  }
  return out;
}

}  // namespace

ScenarioConfig scenario_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("scenario config must be a JSON object");
  ScenarioConfig cfg;
  if (j.contains("n_target")) {
    double n = get_number(j, "n_target");
    if (n < 1) throw ConfigError("field 'n_target' must be positive");
    cfg.n_target = static_cast<std::size_t>(n);
  }
  cfg.alpha = get_array4(j, "alpha", cfg.alpha);
  cfg.beta1 = get_array4(j, "beta1", cfg.beta1);
  cfg.beta0 = get_array4(j, "beta0", cfg.beta0);
  if (j.contains("noise_sd")) cfg.noise_sd = get_number(j, "noise_sd");
  if (j.contains("treat_prob")) cfg.treat_prob = get_number(j, "treat_prob");
  cfg.seed = get_seed(j, "seed", cfg.seed);
  cfg.validate();
  return cfg;
}

json scenario_to_json(const ScenarioConfig& cfg) {
  return json{{"n_target", cfg.n_target}, {"alpha", cfg.alpha},
              {"beta1", cfg.beta1},       {"beta0", cfg.beta0},
              {"noise_sd", cfg.noise_sd}, {"treat_prob", cfg.treat_prob},
              {"seed", cfg.seed}};
}

MarSpec mar_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("mar spec must be a JSON object");
  MarSpec spec;
  if (j.contains("target_col")) {
    if (!j["target_col"].is_string())
      throw ConfigError("field 'target_col' must be a string");
    spec.target_col = j["target_col"].get<std::string>();
  }
  if (j.contains("rank_cols")) {
    if (!j["rank_cols"].is_array())
      throw ConfigError("field 'rank_cols' must be an array of strings");
    spec.rank_cols.clear();
    for (const auto& v : j["rank_cols"]) {
      if (!v.is_string()) throw ConfigError("field 'rank_cols' must be an array of strings");
      spec.rank_cols.push_back(v.get<std::string>());
    }
  }
  if (j.contains("frac_nontrial")) spec.frac_nontrial = get_number(j, "frac_nontrial");
  if (j.contains("frac_trial")) spec.frac_trial = get_number(j, "frac_trial");
  if (j.contains("trial_mar")) {
    std::string rule = j["trial_mar"].get<std::string>();
    if (rule == "ranked") spec.trial_rule = TrialMarRule::ranked;
    else if (rule == "random") spec.trial_rule = TrialMarRule::random;
    else throw ConfigError("field 'trial_mar' must be 'ranked' or 'random'");
  }
  spec.validate();
  return spec;
}

json mar_to_json(const MarSpec& spec) {
  return json{{"target_col", spec.target_col},
              {"rank_cols", spec.rank_cols},
              {"frac_nontrial", spec.frac_nontrial},
              {"frac_trial", spec.frac_trial},
              {"trial_mar", spec.trial_rule == TrialMarRule::ranked ? "ranked" : "random"}};
}

StudyConfig study_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("study config must be a JSON object");
  StudyConfig cfg;
  if (j.contains("scenario")) cfg.scenario = scenario_from_json(j["scenario"]);
  if (j.contains("mar")) cfg.mar = mar_from_json(j["mar"]);
  if (j.contains("trial_fracs")) {
    if (!j["trial_fracs"].is_array())
      throw ConfigError("field 'trial_fracs' must be an array of numbers");
    cfg.trial_fracs.clear();
    for (const auto& v : j["trial_fracs"]) {
      if (!v.is_number()) throw ConfigError("field 'trial_fracs' must be an array of numbers");
      cfg.trial_fracs.push_back(v.get<double>());
    }
  }
  if (j.contains("methods")) {
    if (!j["methods"].is_array())
      throw ConfigError("field 'methods' must be an array of method names");
    cfg.methods.clear();
    for (const auto& v : j["methods"]) {
      if (!v.is_string()) throw ConfigError("field 'methods' must be an array of method names");
      cfg.methods.push_back(parse_method(v.get<std::string>()));
    }
  }
  if (j.contains("n_sim")) cfg.n_sim = static_cast<int>(get_number(j, "n_sim"));
  if (j.contains("truth")) {
    std::string t = j["truth"].get<std::string>();
    if (t == "pate_s0") cfg.truth = TruthKind::pate_s0;
    else if (t == "pate_all") cfg.truth = TruthKind::pate_all;
    else throw ConfigError("field 'truth' must be 'pate_s0' or 'pate_all'");
  }
  cfg.master_seed = get_seed(j, "master_seed", cfg.master_seed);
  if (j.contains("m_rule")) {
    const auto& mr = j["m_rule"];
    if (mr.is_string() && mr.get<std::string>() == "paper_percent") {
      cfg.m_rule = MRule::paper();
    } else if (mr.is_number_integer()) {
      cfg.m_rule = MRule::explicit_count(mr.get<int>());
    } else {
      throw ConfigError("field 'm_rule' must be 'paper_percent' or an integer");
    }
  }
  if (j.contains("interactions")) {
    if (!j["interactions"].is_array())
      throw ConfigError("field 'interactions' must be an array of covariate names");
    cfg.interactions.clear();
    for (const auto& v : j["interactions"])
      cfg.interactions.push_back(v.get<std::string>());
  }
  cfg.validate();
  return cfg;
}

json study_config_to_json(const StudyConfig& cfg) {
  json methods = json::array();
  for (Method m : cfg.methods) methods.push_back(method_name(m));
  json j{{"scenario", scenario_to_json(cfg.scenario)},
         {"mar", mar_to_json(cfg.mar)},
         {"trial_fracs", cfg.trial_fracs},
         {"methods", methods},
         {"n_sim", cfg.n_sim},
         {"truth", cfg.truth == TruthKind::pate_s0 ? "pate_s0" : "pate_all"},
         {"master_seed", cfg.master_seed},
         {"interactions", cfg.interactions}};
  if (cfg.m_rule.paper_percent) j["m_rule"] = "paper_percent";
  else j["m_rule"] = cfg.m_rule.explicit_m;
  return j;
}

json study_result_to_json(const StudyResult& result) {
  json cells = json::array();
  for (const auto& c : result.cells) {
    json cell{{"method", method_name(c.method)},
              {"bias", c.metrics.bias},
              {"bias_mcse", c.metrics.bias_mcse},
              {"emp_se", c.metrics.emp_se},
              {"emp_se_mcse", c.metrics.emp_se_mcse},
              {"avg_robust_se", c.metrics.avg_robust_se},
              {"mse", c.metrics.mse},
              {"mse_mcse", c.metrics.mse_mcse},
              {"n_completed", c.metrics.n},
              {"n_failed", c.n_failed}};
    if (c.trial_missing) cell["trial_missing"] = *c.trial_missing;
    else cell["trial_missing"] = nullptr;
    cells.push_back(cell);
  }
  return json{{"cells", cells},
              {"n_sim", result.n_sim},
              {"truth_value", result.truth_value},
              {"mean_true_pate_s0", result.mean_true_pate_s0},
              {"mean_true_pate_all", result.mean_true_pate_all},
              {"mean_realized_tate", result.mean_realized_tate},
              {"sd_realized_tate", result.sd_realized_tate}};
}

json estimate_to_json(const EstimateResult& result) {
  return json{{"estimate", result.estimate},
              {"robust_se", result.robust_se},
              {"model_se", result.model_se},
              {"n_used", result.n_used},
              {"weights", json{{"min", result.weights.min},
                               {"max", result.weights.max},
                               {"sum", result.weights.sum},
                               {"ess", result.weights.ess}}}};
}

json pooled_to_json(const PooledEstimate& pooled) {
  return json{{"estimate", pooled.estimate},
              {"within_var", pooled.within_var},
              {"between_var", pooled.between_var},
              {"total_var", pooled.total_var},
              {"se", pooled.se()},
              {"m", pooled.m}};
}

json load_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open '" + path + "'");
  try {
    json j;
    f >> j;
    return j;
  } catch (const json::exception& e) {
    throw ConfigError("failed to parse '" + path + "': " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  f << content;
}

}  // namespace ipswlab
