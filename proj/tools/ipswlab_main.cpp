// ipswlab command-line interface
//
//   simulate  generate a superpopulation CSV + true-estimand summary
//   study     run the replicated Monte Carlo study
//   apply     transport/generalize a trial effect to a target CSV
//   diagnose  balance and overlap diagnostics for a trial/target pair
//
// Exit codes: 0 success, 2 config/input, 3 generation, 4 study, 5 pipeline.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include "CLI11.hpp"

#include "ipswlab/config_json.hpp"
#include "ipswlab/datagen.hpp"
#include "ipswlab/diagnostics.hpp"
#include "ipswlab/error.hpp"
#include "ipswlab/ipsw.hpp"
#include "ipswlab/mice.hpp"
#include "ipswlab/missingness.hpp"
#include "ipswlab/study.hpp"
#include "ipswlab/tabular.hpp"

namespace {

using namespace ipswlab;
using nlohmann::json;

std::uint64_t resolve_seed(std::optional<std::uint64_t> seed) {
  if (seed) return *seed;
  std::random_device rd;
  std::uint64_t chosen = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  std::cout << "seed: " << chosen << " (no --seed given)\n";
  return chosen;
}

std::map<std::string, ColumnRole> resolve_roles(const std::vector<std::string>& role_flags,
                                                const std::string& roles_json) {
  std::map<std::string, ColumnRole> roles;
  if (!roles_json.empty()) roles = read_roles_json(roles_json);
  for (const auto& flag : role_flags) {
    auto eq = flag.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--role expects name=ROLE, got '" + flag + "'");
    roles[flag.substr(0, eq)] = parse_role(flag.substr(eq + 1));
  }
  return roles;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string config_path;
  std::string out_path;
  std::string summary_path;
  bool reveal_potential = false;
  std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateArgs& args) {
  ScenarioConfig cfg;
  if (!args.config_path.empty()) cfg = scenario_from_json(load_json_file(args.config_path));
  if (args.seed) cfg.seed = *args.seed;
  else if (args.config_path.empty()) cfg.seed = resolve_seed(std::nullopt);

  Superpopulation pop = make_superpopulation(cfg);

  Dataset out = pop.data;
  if (args.reveal_potential) {
    Column y1, y0;
    y1.name = "Y1";
    y0.name = "Y0";
    y1.role = y0.role = ColumnRole::Covariate;
    y1.values = pop.y1;
    y0.values = pop.y0;
    y1.observed.assign(out.n_rows(), 1);
    y0.observed.assign(out.n_rows(), 1);
    out.add_column(std::move(y1));
    out.add_column(std::move(y0));
  }
  write_csv(out, args.out_path);

  json summary{{"n_target", pop.data.n_rows()},
               {"n_trial", pop.n_trial},
               {"true_pate_s0", pop.true_pate_s0},
               {"true_pate_all", pop.true_pate_all},
               {"realized_tate", pop.realized_tate},
               {"seed", cfg.seed}};
  std::string summary_path = args.summary_path.empty()
                                 ? args.out_path + ".summary.json"
                                 : args.summary_path;
  write_text_file(summary_path, summary.dump(2) + "\n");
  std::cout << "wrote " << args.out_path << " (" << pop.data.n_rows() << " rows, "
            << pop.n_trial << " trial)\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct StudyArgs {
  std::string config_path;
  std::string out_dir;
  int workers = 1;
  std::optional<std::uint64_t> seed;
};

int cmd_study(const StudyArgs& args) {
  StudyConfig cfg = study_config_from_json(load_json_file(args.config_path));
  if (args.seed) cfg.master_seed = *args.seed;

  StudyResult result = run_study(cfg, args.workers);

  std::filesystem::create_directories(args.out_dir);
  auto path = [&](const std::string& name) {
    return (std::filesystem::path(args.out_dir) / name).string();
  };
  write_text_file(path("results.csv"), result.results_csv());
  write_text_file(path("results.json"), study_result_to_json(result).dump(2) + "\n");
  write_text_file(path("estimates.csv"), result.estimates_csv());
  write_text_file(path("truths.csv"), result.truths_csv());

  std::cout << result.results_csv();
  return 0;
}

// ---------------------------------------------------------------------------

struct ApplyArgs {
  std::string trial_path, target_path;
  std::vector<std::string> role_flags;
  std::string roles_json;
  std::string method = "M2";
  std::string scheme = "transport";
  int explicit_m = 0;  // 0 = paper_percent rule
  int maxit = 5;
  int B = 2000;
  int workers = 1;
  bool permissive = false;
  std::vector<std::string> interactions;
  std::string out_path = "apply_report.json";
  std::optional<std::uint64_t> seed;
};

int cmd_apply(const ApplyArgs& args) {
  auto roles = resolve_roles(args.role_flags, args.roles_json);
  Dataset trial = read_csv(args.trial_path, roles);
  Dataset target = read_csv(args.target_path, roles);
  Dataset ds = concat_trial_target(trial, target, args.permissive);
  if (!ds.find_role(ColumnRole::Treatment) || !ds.find_role(ColumnRole::Outcome))
    throw ConfigError("apply needs treatment and outcome roles on the trial CSV");

  std::uint64_t seed = resolve_seed(args.seed);
  WeightScheme scheme = parse_weight_scheme(args.scheme);
  PipelineParams params;
  params.covariates = ds.covariate_names();
  params.scheme = scheme;

  MRule m_rule = args.explicit_m > 0 ? MRule::explicit_count(args.explicit_m) : MRule::paper();

  const bool use_cc = args.method == "CC";
  ModelKind kind = ModelKind::M2;
  if (!use_cc) kind = parse_model_kind(args.method);

  json report;
  report["method"] = args.method;
  report["scheme"] = args.scheme;
  report["seed"] = seed;
  report["n_trial"] = trial.n_rows();
  report["n_target"] = target.n_rows();

  // trial-only (unweighted) estimate for the agreement check
  EstimateResult trial_only;
  {
    std::vector<double> w(ds.n_rows(), 0.0);
    const Column& s = *ds.find_role(ColumnRole::TrialIndicator);
    for (std::size_t i = 0; i < ds.n_rows(); ++i)
      if (s.values[i] == 1.0) w[i] = 1.0;
    trial_only = estimate_pate(ds, w);
  }
  report["trial_estimate"] = estimate_to_json(trial_only);

  double point = 0.0, analytic_se = 0.0;
  if (use_cc) {
    EstimateResult res = complete_case(ds, params);
    point = res.estimate;
    analytic_se = res.robust_se;
    report["estimate"] = estimate_to_json(res);
  } else {
    ImputationSpec spec = build_spec(kind, ds, m_rule, args.interactions);
    spec.maxit = args.maxit;
    spec.seed = RngStream(seed).substream(1).seed();
    ImputedSet imputed = impute(ds, spec, args.workers);
    PooledEstimate pooled = psi_within(imputed, params);
    point = pooled.estimate;
    analytic_se = pooled.se();
    report["estimate"] = pooled_to_json(pooled);

    json balance = json::array();
    for (const auto& imp : imputed.datasets) {
      std::vector<double> ps = estimate_ps(imp, params.covariates);
      std::vector<double> e_a;
      if (scheme == WeightScheme::Generalize)
        e_a = treatment_prob(imp, params.treat_prob_mode, params.covariates);
      std::vector<double> w = compute_weights(imp, ps, e_a, scheme);
      BalanceReport br = balance_report(imp, params.covariates, ps, w);
      json jb{{"tipton_index", br.tipton_index}, {"ess_trial", br.ess_trial}};
      json asds = json::array();
      for (const auto& cb : br.covariates)
        asds.push_back(json{{"covariate", cb.name},
                            {"asd_unweighted", cb.asd_unweighted},
                            {"asd_weighted", cb.asd_weighted}});
      jb["asd"] = asds;
      balance.push_back(jb);
    }
    report["balance"] = balance;
  }

  if (args.B > 0) {
    BootstrapPipeline pipeline = [&](const Dataset& boot, RngStream& rng) -> double {
      if (use_cc) return complete_case(boot, params).estimate;
      ImputationSpec spec = build_spec(kind, boot, m_rule, args.interactions);
      spec.maxit = args.maxit;
      spec.seed = rng.substream(1).seed();
      return psi_within(impute(boot, spec), params).estimate;
    };
    RngStream boot_rng = RngStream(seed).substream(2);
    double se = bootstrap_se(ds, pipeline, args.B, boot_rng, args.workers);
    report["bootstrap_se"] = se;
    report["B"] = args.B;
  } else {
    report["bootstrap_se"] = nullptr;
    report["note"] = "bootstrap skipped (B=0); analytic variance only";
  }

  // trivial interval-containment ("estimate agreement") check against the
  // trial-only 95% CI
  double lo = trial_only.estimate - 1.96 * trial_only.robust_se;
  double hi = trial_only.estimate + 1.96 * trial_only.robust_se;
  report["estimate_agreement"] = (point >= lo && point <= hi);

  write_text_file(args.out_path, report.dump(2) + "\n");
  std::cout << "estimate: " << point << "  analytic se: " << analytic_se;
  if (args.B > 0) std::cout << "  bootstrap se: " << report["bootstrap_se"].get<double>();
  std::cout << "\nwrote " << args.out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct DiagnoseArgs {
  std::string trial_path, target_path;
  std::vector<std::string> role_flags;
  std::string roles_json;
  std::string scheme = "transport";
  int bins = 20;
  bool permissive = false;
  std::string out_dir;
};

int cmd_diagnose(const DiagnoseArgs& args) {
  auto roles = resolve_roles(args.role_flags, args.roles_json);
  Dataset trial = read_csv(args.trial_path, roles);
  Dataset target = read_csv(args.target_path, roles);
  Dataset ds = concat_trial_target(trial, target, args.permissive);

  std::vector<std::string> covariates = ds.covariate_names();

  // complete-case subset for the PS fit
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    bool complete = true;
    for (const auto& name : covariates)
      if (!ds.column(name).observed[i]) complete = false;
    if (complete) keep.push_back(i);
  }
  if (keep.size() < ds.n_rows())
    std::cout << "note: " << ds.n_rows() - keep.size()
              << " rows with missing covariates excluded from diagnostics\n";
  Dataset cc = take_rows(ds, keep);

  WeightScheme scheme = parse_weight_scheme(args.scheme);
  std::vector<double> ps = estimate_ps(cc, covariates);
  std::vector<double> e_a;
  if (scheme == WeightScheme::Generalize) {
    if (!cc.find_role(ColumnRole::Treatment))
      throw ConfigError("generalize diagnostics need a treatment role");
    e_a = treatment_prob(cc, TreatProbMode::marginal, covariates);
  }
  std::vector<double> w = compute_weights(cc, ps, e_a, scheme);
  BalanceReport report = balance_report(cc, covariates, ps, w, args.bins);

  std::printf("%-16s %12s %12s\n", "covariate", "asd", "asd_weighted");
  for (const auto& cb : report.covariates)
    std::printf("%-16s %12.4f %12.4f\n", cb.name.c_str(), cb.asd_unweighted,
                cb.asd_weighted);
  std::printf("tipton_index: %.4f\n", report.tipton_index);
  std::printf("ess_trial: %.2f\n", report.ess_trial);
  if (report.tipton_index < 0.5)
    std::cout << "warning: low propensity-score overlap between trial and target "
              << "(tipton_index < 0.5)\n";

  if (!args.out_dir.empty()) {
    std::filesystem::create_directories(args.out_dir);
    auto path = [&](const std::string& name) {
      return (std::filesystem::path(args.out_dir) / name).string();
    };
    std::ostringstream asd_csv;
    asd_csv << "covariate,asd_unweighted,asd_weighted\n";
    for (const auto& cb : report.covariates)
      asd_csv << cb.name << ',' << cb.asd_unweighted << ',' << cb.asd_weighted << '\n';
    write_text_file(path("asd.csv"), asd_csv.str());

    std::vector<int> h1(static_cast<std::size_t>(args.bins), 0),
        h0(static_cast<std::size_t>(args.bins), 0);
    const Column& s_cc = *cc.find_role(ColumnRole::TrialIndicator);
    for (std::size_t i = 0; i < cc.n_rows(); ++i) {
      int b = std::min(static_cast<int>(ps[i] * args.bins), args.bins - 1);
      (s_cc.values[i] == 1.0 ? h1 : h0)[static_cast<std::size_t>(b)] += 1;
    }
    std::ostringstream hist;
    hist << "bin_lo,bin_hi,trial_count,target_count\n";
    for (int b = 0; b < args.bins; ++b)
      hist << static_cast<double>(b) / args.bins << ','
           << static_cast<double>(b + 1) / args.bins << ','
           << h1[static_cast<std::size_t>(b)] << ',' << h0[static_cast<std::size_t>(b)]
           << '\n';
    write_text_file(path("ps_hist.csv"), hist.str());

    json jr{{"tipton_index", report.tipton_index}, {"ess_trial", report.ess_trial}};
    json asds = json::array();
    for (const auto& cb : report.covariates)
      asds.push_back(json{{"covariate", cb.name},
                          {"asd_unweighted", cb.asd_unweighted},
                          {"asd_weighted", cb.asd_weighted}});
    jr["asd"] = asds;
    write_text_file(path("balance.json"), jr.dump(2) + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"causal-transport laboratory: IPSW with multiple imputation"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "generate a superpopulation CSV");
  simulate->add_option("--config", sim.config_path, "ScenarioConfig JSON");
  simulate->add_option("--out", sim.out_path, "output CSV path")->required();
  simulate->add_option("--summary", sim.summary_path, "summary JSON path");
  simulate->add_flag("--reveal-potential", sim.reveal_potential,
                     "include the potential-outcome columns Y1, Y0");
  simulate->add_option("--seed", sim.seed, "RNG seed (overrides the config)");

  StudyArgs st;
  auto* study = app.add_subcommand("study", "run the Monte Carlo study");
  study->add_option("--config", st.config_path, "StudyConfig JSON")->required();
  study->add_option("--out-dir", st.out_dir, "output directory")->required();
  study->add_option("--workers", st.workers, "worker threads (identical output for any count)");
  study->add_option("--seed", st.seed, "master seed (overrides the config)");

  ApplyArgs ap;
  auto* apply = app.add_subcommand("apply", "estimate a transported/generalized effect");
  apply->add_option("--trial", ap.trial_path, "trial CSV")->required();
  apply->add_option("--target", ap.target_path, "target CSV")->required();
  apply->add_option("--role", ap.role_flags,
                    "column role, name=ROLE (covariate|treatment|outcome); repeatable");
  apply->add_option("--roles-json", ap.roles_json, "JSON sidecar of column roles");
  apply->add_option("--method", ap.method, "CC|M1A|M1B|M2|M3A|M3B (default M2)");
  apply->add_option("--scheme", ap.scheme, "transport|generalize (default transport)");
  apply->add_option("--m", ap.explicit_m, "number of imputations (default: percentage rule)");
  apply->add_option("--maxit", ap.maxit, "chained-equation sweeps (default 5)");
  apply->add_option("--B", ap.B, "bootstrap resamples (default 2000; 0 skips)");
  apply->add_option("--workers", ap.workers, "worker threads");
  apply->add_flag("--permissive", ap.permissive,
                  "fill covariates absent from one file as fully missing");
  apply->add_option("--interactions", ap.interactions,
                    "covariates to interact with treatment under M3A/M3B");
  apply->add_option("--out", ap.out_path, "report JSON path");
  apply->add_option("--seed", ap.seed, "RNG seed");

  DiagnoseArgs dg;
  auto* diagnose = app.add_subcommand("diagnose", "balance/overlap diagnostics");
  diagnose->add_option("--trial", dg.trial_path, "trial CSV")->required();
  diagnose->add_option("--target", dg.target_path, "target CSV")->required();
  diagnose->add_option("--role", dg.role_flags, "column role, name=ROLE; repeatable");
  diagnose->add_option("--roles-json", dg.roles_json, "JSON sidecar of column roles");
  diagnose->add_option("--scheme", dg.scheme, "transport|generalize (default transport)");
  diagnose->add_option("--bins", dg.bins, "histogram bins for the overlap index");
  diagnose->add_flag("--permissive", dg.permissive,
                     "fill covariates absent from one file as fully missing");
  diagnose->add_option("--out-dir", dg.out_dir, "directory for asd.csv / ps_hist.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(sim);
    if (study->parsed()) return cmd_study(st);
    if (apply->parsed()) return cmd_apply(ap);
    if (diagnose->parsed()) return cmd_diagnose(dg);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const GenerationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const StudyError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const PipelineError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
