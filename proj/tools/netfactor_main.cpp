// Command-line interface: fit, test, decompose, simulate, crossval.
// Every run writes a manifest.json echoing the effective configuration so a
// run can be reproduced exactly from its output directory.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "netfactor/netfactor.hpp"
#include "netfactor/serialize.hpp"

namespace fs = std::filesystem;
using namespace netfactor;

namespace {

constexpr const char* kVersion = "0.1.0";

struct FitOptions {
  std::string network;
  std::string format = "dense";
  std::string kind = "continuous";
  int max_nominations = 0;
  std::string attributes;
  std::vector<std::string> dyad_covs;  // label=path
  int k = 1;
  int iterations = 4000;
  int burn_in = 500;
  int thin = 5;
  std::uint64_t seed = 0;
  std::string out_dir = "fit_out";
  bool restrict_ab_uv = false;
  double rho_proposal_sd = 0.05;
  int wishart_df = 0;
  double mu_beta_prior_var = 100.0;
};

NetworkFormat parse_format(const std::string& s) {
  if (s == "dense") return NetworkFormat::dense_csv;
  if (s == "edges") return NetworkFormat::edge_list_csv;
  throw ValidationError("unknown network format: " + s + " (expected dense|edges)");
}

std::vector<DyadCovariate> load_dyad_covs(const std::vector<std::string>& entries, int n) {
  std::vector<DyadCovariate> covs;
  for (const std::string& entry : entries) {
    auto eq = entry.find('=');
    DyadCovariate cov;
    cov.label = (eq == std::string::npos) ? "w" + std::to_string(covs.size() + 1)
                                          : entry.substr(0, eq);
    std::string path = (eq == std::string::npos) ? entry : entry.substr(eq + 1);
    cov.values = load_square_matrix(path);
    cov.validate(n);
    covs.push_back(std::move(cov));
  }
  return covs;
}

json fit_manifest(const FitOptions& opt, SamplerMode mode) {
  json m;
  m["command"] = "fit";
  m["version"] = kVersion;
  m["network"] = opt.network;
  m["format"] = opt.format;
  m["kind"] = opt.kind;
  m["max_nominations"] = opt.max_nominations;
  m["attributes"] = opt.attributes;
  m["attributes_centered"] = !opt.attributes.empty();
  m["dyad_covariates"] = opt.dyad_covs;
  m["k"] = opt.k;
  m["mode"] = to_string(mode);
  m["restrict_ab_uv"] = opt.restrict_ab_uv;
  m["schedule"] = json{{"iterations", opt.iterations}, {"burn_in", opt.burn_in},
                       {"thin", opt.thin}, {"seed", opt.seed}};
  m["prior"] = json{{"rho_proposal_sd", opt.rho_proposal_sd},
                    {"wishart_df", opt.wishart_df},
                    {"mu_beta_prior_var", opt.mu_beta_prior_var}};
  return m;
}

PosteriorSamples run_fit(const FitOptions& opt, SamplerMode& mode_out,
                         std::vector<std::string>& labels_out) {
  RelationalMatrix y = load_network(opt.network, parse_format(opt.format),
                                    relation_kind_from_string(opt.kind),
                                    opt.max_nominations > 0
                                        ? std::optional<int>(opt.max_nominations)
                                        : std::nullopt);
  if (opt.k >= y.n) throw ValidationError("fit: k must be below the node count");
  std::optional<AttributeMatrix> x;
  SamplerMode mode = SamplerMode::network_only;
  if (!opt.attributes.empty()) {
    AttributeMatrix raw = load_attributes(opt.attributes);
    if (raw.n != y.n) throw ValidationError("fit: attribute rows do not match network size");
    x = center_attributes(raw);
    mode = SamplerMode::joint;
  }
  std::vector<DyadCovariate> w = load_dyad_covs(opt.dyad_covs, y.n);

  PriorConfig prior;
  prior.rho_proposal_sd = opt.rho_proposal_sd;
  prior.wishart_df = opt.wishart_df;
  prior.mu_beta_prior_var = opt.mu_beta_prior_var;

  McmcSchedule schedule{opt.iterations, opt.burn_in, opt.thin, opt.seed};
  mode_out = mode;
  labels_out = y.labels;
  return run_chain(y, x, w, opt.k, prior, schedule, mode, opt.restrict_ab_uv);
}

void write_fit_outputs(const FitOptions& opt, const PosteriorSamples& post,
                       const std::vector<std::string>& labels, SamplerMode mode) {
  fs::create_directories(opt.out_dir);
  write_json(fit_manifest(opt, mode), opt.out_dir + "/manifest.json");
  save_posterior(post, opt.out_dir + "/traces");
  LatentFactors factors = extract_factors(post, post.k);
  save_factors(factors, labels, opt.out_dir + "/factors.csv");

  {
    // Identified parameterization: the common decreasing diagonal D of the
    // factor covariance blocks, per stored sample.
    csv::Writer out(opt.out_dir + "/identified_D.csv");
    std::vector<std::string> header{"sample"};
    for (int l = 0; l < post.k; ++l) header.push_back("d_" + std::to_string(l + 1));
    out.row(header);
    for (int s = 0; s < post.count(); ++s) {
      std::vector<std::string> row{std::to_string(s + 1)};
      ModelState st;
      st.U = post.U[s];
      st.V = post.V[s];
      st.Sigma_XN = post.Sigma_XN[s];
      try {
        ModelState id = to_identified(st);
        const int head = static_cast<int>(id.Sigma_XN.rows()) - 2 * post.k;
        for (int l = 0; l < post.k; ++l)
          row.push_back(csv::format_double(id.Sigma_XN(head + l, head + l)));
      } catch (const NumericalError&) {
        for (int l = 0; l < post.k; ++l) row.push_back("");
      }
      out.row(row);
    }
  }

  bool any_x_missing = post.x_missing.size() > 0 && post.x_missing.any();
  if (any_x_missing) {
    csv::Writer out(opt.out_dir + "/imputed_attributes.csv");
    out.row({"node", "attribute", "posterior_mean"});
    for (int i = 0; i < post.n; ++i)
      for (int j = 0; j < post.p; ++j)
        if (post.x_missing(i, j))
          out.row({labels[i], std::to_string(j + 1),
                   csv::format_double(post.x_imputed_mean(i, j))});
  }
  if (post.y_missing.any()) {
    csv::Writer out(opt.out_dir + "/imputed_relations.csv");
    out.row({"src", "dst", "posterior_mean"});
    for (int i = 0; i < post.n; ++i)
      for (int j = 0; j < post.n; ++j)
        if (post.y_missing(i, j))
          out.row({labels[i], labels[j], csv::format_double(post.y_imputed_mean(i, j))});
  }

  double ess_sum = 0.0;
  int ess_count = 0;
  for (const auto& [name, value] : post.effective_sample_sizes()) {
    ess_sum += value;
    ++ess_count;
  }
  std::cout << "fit: stored " << post.count() << " samples; mean ESS "
            << (ess_count ? ess_sum / ess_count : 0.0) << "; rho acceptance "
            << post.rho_acceptance << "\n";
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent factor network models: estimation, dependence testing, experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // ---- fit ----
  FitOptions fit;
  CLI::App* cmd_fit = app.add_subcommand("fit", "Fit the network(-attribute) model by MCMC");
  cmd_fit->set_config("--config");
  cmd_fit->add_option("--network", fit.network, "Network CSV path")->required();
  cmd_fit->add_option("--format", fit.format, "dense|edges");
  cmd_fit->add_option("--kind", fit.kind, "continuous|binary|rank");
  cmd_fit->add_option("--max-nominations", fit.max_nominations, "FRN cap for rank data");
  cmd_fit->add_option("--attributes", fit.attributes, "Attribute CSV path (enables joint mode)");
  cmd_fit->add_option("--dyad-cov", fit.dyad_covs, "Dyadic covariate label=path (repeatable)");
  cmd_fit->add_option("--k", fit.k, "Multiplicative factor dimension");
  cmd_fit->add_option("--iterations", fit.iterations, "MCMC iterations");
  cmd_fit->add_option("--burn-in", fit.burn_in, "Burn-in iterations");
  cmd_fit->add_option("--thin", fit.thin, "Thinning interval");
  cmd_fit->add_option("--seed", fit.seed, "Master seed")->required();
  cmd_fit->add_option("--out-dir", fit.out_dir, "Output directory");
  cmd_fit->add_flag("--restrict-abuv", fit.restrict_ab_uv,
                    "Force zero additive/multiplicative covariance (network mode)");
  cmd_fit->add_option("--rho-proposal-sd", fit.rho_proposal_sd, "Initial rho proposal sd");
  cmd_fit->add_option("--wishart-df", fit.wishart_df, "Wishart prior df (0 = p+2+2k+1)");
  cmd_fit->add_option("--mu-beta-prior-var", fit.mu_beta_prior_var, "Prior variance of mu, beta");
  int fit_threads = 0;
  cmd_fit->add_option("--threads", fit_threads,
                      "Accepted for interface uniformity; a chain runs sequentially");

  // ---- test ----
  struct {
    std::string run_dir, attributes;
    FitOptions fit;
    double alpha = 0.05;
    int null_draws = 100000;
    std::uint64_t seed = 1;
    std::string out_dir = "test_out";
  } tst;
  CLI::App* cmd_test = app.add_subcommand("test", "Test independence of factors and attributes");
  cmd_test->set_config("--config");
  cmd_test->add_option("--run-dir", tst.run_dir, "Fitted run directory (reads factors.csv)");
  cmd_test->add_option("--network", tst.fit.network, "Network CSV (fits internally)");
  cmd_test->add_option("--format", tst.fit.format, "dense|edges");
  cmd_test->add_option("--kind", tst.fit.kind, "continuous|binary|rank");
  cmd_test->add_option("--max-nominations", tst.fit.max_nominations, "FRN cap for rank data");
  cmd_test->add_option("--dyad-cov", tst.fit.dyad_covs, "Dyadic covariate label=path");
  cmd_test->add_option("--k", tst.fit.k, "Factor dimension for the internal fit");
  cmd_test->add_option("--iterations", tst.fit.iterations, "MCMC iterations (internal fit)");
  cmd_test->add_option("--burn-in", tst.fit.burn_in, "Burn-in (internal fit)");
  cmd_test->add_option("--thin", tst.fit.thin, "Thinning (internal fit)");
  cmd_test->add_option("--attributes", tst.attributes, "Attribute CSV path")->required();
  cmd_test->add_option("--alpha", tst.alpha, "Test level");
  cmd_test->add_option("--null-draws", tst.null_draws, "Monte Carlo null draws");
  cmd_test->add_option("--seed", tst.seed, "Master seed");
  cmd_test->add_option("--out-dir", tst.out_dir, "Output directory");
  int test_threads = 0;
  cmd_test->add_option("--threads", test_threads,
                       "Accepted for interface uniformity; the test is sequential");

  // ---- decompose ----
  struct {
    std::string run_dir, matrix;
    int k_max = 8;
    double cutoff = 0.9;
    std::string out_dir = "decompose_out";
  } dec;
  CLI::App* cmd_dec = app.add_subcommand("decompose", "Scree-style factor-rank profile");
  cmd_dec->set_config("--config");
  cmd_dec->add_option("--run-dir", dec.run_dir, "Fitted run directory (uses posterior mean UV')");
  cmd_dec->add_option("--matrix", dec.matrix, "Square matrix CSV to profile directly");
  cmd_dec->add_option("--k-max", dec.k_max, "Number of leading factors to profile");
  cmd_dec->add_option("--cutoff", dec.cutoff, "Cumulative proportion for the suggested rank");
  cmd_dec->add_option("--out-dir", dec.out_dir, "Output directory");
  int dec_threads = 0;
  cmd_dec->add_option("--threads", dec_threads,
                      "Accepted for interface uniformity; decomposition is sequential");

  // ---- simulate ----
  struct {
    std::vector<std::string> scenarios{"A"};
    std::vector<std::string> observations{"N", "Y", "B0.50", "B0.15"};
    std::vector<int> sizes{25, 50, 100};
    std::vector<double> gamma_sq{-0.05, 0.0, 0.05, 0.1, 0.15, 0.2};
    int reps = 200;
    double alpha = 0.05;
    int null_draws = 100000;
    int iterations = 4000, burn_in = 500, thin = 5;
    std::uint64_t seed = 0;
    int threads = 0;
    std::string out_dir = "simulate_out";
  } sim;
  CLI::App* cmd_sim = app.add_subcommand("simulate", "Monte Carlo power study");
  cmd_sim->set_config("--config");
  cmd_sim->add_option("--scenarios", sim.scenarios, "A and/or B")->delimiter(',');
  cmd_sim->add_option("--observations", sim.observations, "Among N, Y, B<d>")->delimiter(',');
  cmd_sim->add_option("--sizes", sim.sizes, "Network sizes")->delimiter(',');
  cmd_sim->add_option("--gamma-sq", sim.gamma_sq, "Signed squared correlations")->delimiter(',');
  cmd_sim->add_option("--reps", sim.reps, "Replicates per cell");
  cmd_sim->add_option("--alpha", sim.alpha, "Test level");
  cmd_sim->add_option("--null-draws", sim.null_draws, "Monte Carlo null draws");
  cmd_sim->add_option("--iterations", sim.iterations, "MCMC iterations per replicate");
  cmd_sim->add_option("--burn-in", sim.burn_in, "Burn-in per replicate");
  cmd_sim->add_option("--thin", sim.thin, "Thinning per replicate");
  cmd_sim->add_option("--seed", sim.seed, "Master seed")->required();
  cmd_sim->add_option("--threads", sim.threads, "Worker threads (0 = hardware)");
  cmd_sim->add_option("--out-dir", sim.out_dir, "Output directory");

  // ---- crossval ----
  struct {
    FitOptions fit;
    int folds = 20;
    double holdout = 0.05;
    int threads = 0;
    std::string out_dir = "crossval_out";
  } cv;
  CLI::App* cmd_cv = app.add_subcommand("crossval", "Holdout comparison of imputation methods");
  cmd_cv->set_config("--config");
  cmd_cv->add_option("--network", cv.fit.network, "Network CSV path")->required();
  cmd_cv->add_option("--format", cv.fit.format, "dense|edges");
  cmd_cv->add_option("--kind", cv.fit.kind, "continuous|binary|rank");
  cmd_cv->add_option("--max-nominations", cv.fit.max_nominations, "FRN cap for rank data");
  cmd_cv->add_option("--attributes", cv.fit.attributes, "Attribute CSV path")->required();
  cmd_cv->add_option("--dyad-cov", cv.fit.dyad_covs, "Dyadic covariate label=path");
  cmd_cv->add_option("--k", cv.fit.k, "Factor dimension");
  cmd_cv->add_option("--folds", cv.folds, "Number of folds");
  cmd_cv->add_option("--holdout", cv.holdout, "Held-out fraction per attribute per fold");
  cmd_cv->add_option("--iterations", cv.fit.iterations, "MCMC iterations per fold");
  cmd_cv->add_option("--burn-in", cv.fit.burn_in, "Burn-in per fold");
  cmd_cv->add_option("--thin", cv.fit.thin, "Thinning per fold");
  cmd_cv->add_option("--seed", cv.fit.seed, "Master seed")->required();
  cmd_cv->add_option("--threads", cv.threads, "Worker threads (0 = hardware)");
  cmd_cv->add_option("--out-dir", cv.out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cmd_fit->parsed()) {
      SamplerMode mode;
      std::vector<std::string> labels;
      PosteriorSamples post = run_fit(fit, mode, labels);
      write_fit_outputs(fit, post, labels, mode);
      return 0;
    }

    if (cmd_test->parsed()) {
      AttributeMatrix x = center_attributes(load_attributes(tst.attributes));
      for (int i = 0; i < x.n; ++i)
        for (int j = 0; j < x.p; ++j)
          if (!x.observed(i, j))
            throw ValidationError("test: attributes must be fully observed");
      LatentFactors factors;
      json fitted;
      if (!tst.run_dir.empty()) {
        factors = load_factors(tst.run_dir + "/factors.csv");
        fitted["source"] = tst.run_dir;
      } else {
        if (tst.fit.network.empty())
          throw ValidationError("test: provide --run-dir or --network");
        tst.fit.seed = tst.seed;
        SamplerMode mode;
        std::vector<std::string> labels;
        PosteriorSamples post = run_fit(tst.fit, mode, labels);
        factors = extract_factors(post, post.k);
        fitted["source"] = tst.fit.network;
        fitted["schedule"] = schedule_to_json(post.schedule);
      }
      if (factors.n() != x.n)
        throw ValidationError("test: factor rows do not match attribute rows");
      TestResult result = test_independence(x.values, factors.as_matrix(), tst.alpha,
                                            tst.null_draws, tst.seed);
      fs::create_directories(tst.out_dir);
      json manifest;
      manifest["command"] = "test";
      manifest["version"] = kVersion;
      manifest["attributes"] = tst.attributes;
      manifest["alpha"] = tst.alpha;
      manifest["null_draws"] = tst.null_draws;
      manifest["seed"] = tst.seed;
      manifest["factors"] = fitted;
      write_json(manifest, tst.out_dir + "/manifest.json");
      write_json(test_result_to_json(result), tst.out_dir + "/test.json");
      std::cout << "reject H0 at alpha=" << tst.alpha << ": " << (result.reject ? "yes" : "no")
                << " (p=" << result.p_value << ")\n";
      return 0;
    }

    if (cmd_dec->parsed()) {
      MatrixXd m;
      std::string source;
      if (!dec.run_dir.empty()) {
        m = load_square_matrix(dec.run_dir + "/traces/uv_mean.csv");
        source = dec.run_dir;
      } else if (!dec.matrix.empty()) {
        m = load_square_matrix(dec.matrix);
        source = dec.matrix;
      } else {
        throw ValidationError("decompose: provide --run-dir or --matrix");
      }
      ScreeProfile scree = scree_proportions(m, dec.k_max);
      int selected = scree.suggested_rank(dec.cutoff);
      fs::create_directories(dec.out_dir);
      json manifest;
      manifest["command"] = "decompose";
      manifest["version"] = kVersion;
      manifest["source"] = source;
      manifest["k_max"] = dec.k_max;
      manifest["cutoff"] = dec.cutoff;
      write_json(manifest, dec.out_dir + "/manifest.json");
      save_scree(scree, dec.out_dir + "/scree.csv");
      json out;
      out["proportions"] = std::vector<double>(scree.proportions.data(),
                                               scree.proportions.data() + scree.proportions.size());
      out["cutoff"] = dec.cutoff;
      out["selected_k"] = selected;
      write_json(out, dec.out_dir + "/decompose.json");
      std::cout << "decompose: suggested k = " << selected << " at cumulative cutoff "
                << dec.cutoff << "\n";
      return 0;
    }

    if (cmd_sim->parsed()) {
      std::vector<Scenario> scenarios;
      for (const auto& s : sim.scenarios) {
        if (s == "A") scenarios.push_back(Scenario::A);
        else if (s == "B") scenarios.push_back(Scenario::B);
        else throw ValidationError("simulate: unknown scenario " + s);
      }
      std::vector<Observation> observations;
      for (const auto& o : sim.observations) {
        if (o == "N") observations.push_back(Observation::latent());
        else if (o == "Y") observations.push_back(Observation::continuous());
        else if (o.size() > 1 && o[0] == 'B')
          observations.push_back(Observation::binary(std::stod(o.substr(1))));
        else throw ValidationError("simulate: unknown observation " + o);
      }
      PowerStudySettings settings;
      settings.alpha = sim.alpha;
      settings.null_draws = sim.null_draws;
      settings.schedule = McmcSchedule{sim.iterations, sim.burn_in, sim.thin, 1};
      settings.threads = sim.threads > 0 ? sim.threads : hardware_threads();
      std::vector<PowerRow> rows = run_power_grid(scenarios, observations, sim.sizes,
                                                  sim.gamma_sq, sim.reps, sim.seed, settings);
      fs::create_directories(sim.out_dir);
      json manifest;
      manifest["command"] = "simulate";
      manifest["version"] = kVersion;
      manifest["scenarios"] = sim.scenarios;
      manifest["observations"] = sim.observations;
      manifest["sizes"] = sim.sizes;
      manifest["gamma_sq"] = sim.gamma_sq;
      manifest["reps"] = sim.reps;
      manifest["alpha"] = sim.alpha;
      manifest["null_draws"] = sim.null_draws;
      manifest["schedule"] = json{{"iterations", sim.iterations}, {"burn_in", sim.burn_in},
                                  {"thin", sim.thin}};
      manifest["seed"] = sim.seed;
      write_json(manifest, sim.out_dir + "/manifest.json");
      csv::Writer out(sim.out_dir + "/power.csv");
      out.row({"scenario", "observation", "n", "gamma_sq", "power", "mc_se", "reps", "seed"});
      for (const PowerRow& row : rows)
        out.row({to_string(row.scenario), row.observation.label(), std::to_string(row.n),
                 csv::format_double(row.estimate.gamma_sq), csv::format_double(row.estimate.power),
                 csv::format_double(row.estimate.mc_se), std::to_string(row.estimate.reps),
                 std::to_string(sim.seed)});
      std::cout << "simulate: wrote " << rows.size() << " power cells\n";
      return 0;
    }

    if (cmd_cv->parsed()) {
      RelationalMatrix y = load_network(cv.fit.network, parse_format(cv.fit.format),
                                        relation_kind_from_string(cv.fit.kind),
                                        cv.fit.max_nominations > 0
                                            ? std::optional<int>(cv.fit.max_nominations)
                                            : std::nullopt);
      AttributeMatrix x = load_attributes(cv.fit.attributes);
      if (x.n != y.n) throw ValidationError("crossval: attribute rows do not match network size");
      std::vector<DyadCovariate> w = load_dyad_covs(cv.fit.dyad_covs, y.n);
      McmcSchedule schedule{cv.fit.iterations, cv.fit.burn_in, cv.fit.thin, cv.fit.seed};
      int threads = cv.threads > 0 ? cv.threads : hardware_threads();
      CvReport report = crossval(y, x, w, cv.fit.k, cv.folds, cv.holdout, schedule,
                                 cv.fit.seed, threads);
      fs::create_directories(cv.out_dir);
      json manifest;
      manifest["command"] = "crossval";
      manifest["version"] = kVersion;
      manifest["network"] = cv.fit.network;
      manifest["attributes"] = cv.fit.attributes;
      manifest["k"] = cv.fit.k;
      manifest["folds"] = cv.folds;
      manifest["holdout"] = cv.holdout;
      manifest["schedule"] = json{{"iterations", cv.fit.iterations}, {"burn_in", cv.fit.burn_in},
                                  {"thin", cv.fit.thin}};
      manifest["seed"] = cv.fit.seed;
      write_json(manifest, cv.out_dir + "/manifest.json");
      {
        csv::Writer out(cv.out_dir + "/crossval.csv");
        std::vector<std::string> header{"method"};
        header.insert(header.end(), report.attribute_names.begin(), report.attribute_names.end());
        out.row(header);
        auto emit = [&](const std::string& name, const VectorXd& v) {
          std::vector<std::string> row{name};
          for (int j = 0; j < v.size(); ++j) row.push_back(csv::format_double(v[j]));
          out.row(row);
        };
        emit("regression", report.baseline_mse);
        emit("joint", report.joint_mse);
        emit("improvement_pct", report.improvement_pct);
      }
      {
        csv::Writer out(cv.out_dir + "/crossval_folds.csv");
        out.row({"fold", "attribute", "regression_mse", "joint_mse"});
        for (int f = 0; f < report.folds; ++f)
          for (size_t j = 0; j < report.attribute_names.size(); ++j)
            out.row({std::to_string(f + 1), report.attribute_names[j],
                     csv::format_double(report.fold_baseline_mse(f, static_cast<int>(j))),
                     csv::format_double(report.fold_joint_mse(f, static_cast<int>(j)))});
      }
      std::cout << "crossval: mean improvement "
                << report.improvement_pct.mean() << "%\n";
      return 0;
    }
  } catch (const ValidationError& e) {
    json err{{"error", "validation"}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    json err{{"error", "numerical"}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 3;
  } catch (const std::exception& e) {
    json err{{"error", "internal"}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 3;
  }
  return 2;
}
