#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "netfactor/ame_sampler.hpp"
#include "netfactor/dependence_test.hpp"
#include "netfactor/errors.hpp"
#include "netfactor/parallel.hpp"
#include "netfactor/relational_data.hpp"
#include "netfactor/rng.hpp"

namespace netfactor {

enum class Scenario { A, B };

inline std::string to_string(Scenario s) { return s == Scenario::A ? "A" : "B"; }

/// What the test gets to see: the latent factors themselves, the continuous
/// network, or its density-d binarization.
struct Observation {
  enum class Kind { latent_factors, continuous_network, binary_network };
  Kind kind = Kind::latent_factors;
  double density = 0.5;

  static Observation latent() { return {Kind::latent_factors, 0.0}; }
  static Observation continuous() { return {Kind::continuous_network, 0.0}; }
  static Observation binary(double d) { return {Kind::binary_network, d}; }

  std::string label() const {
    switch (kind) {
      case Kind::latent_factors: return "N";
      case Kind::continuous_network: return "Y";
      case Kind::binary_network: {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "B%.2f", density);
        return buf;
      }
    }
    return "?";
  }
};

/// One cell of the power study: a single attribute (p = 1), one
/// multiplicative factor (k = 1), and covariance I + gamma E linking the
/// attribute to the additive (scenario A) or multiplicative (scenario B)
/// sender factor.
struct ScenarioConfig {
  Scenario scenario = Scenario::A;
  double gamma = 0.0;
  int n = 100;
  Observation observation;

  static constexpr int p = 1;
  static constexpr int k = 1;

  void validate() const {
    if (!(std::abs(gamma) < 1.0))
      throw ValidationError("ScenarioConfig: |gamma| must be below 1 for a positive-definite covariance");
    if (n < 8) throw ValidationError("ScenarioConfig: network too small");
    if (observation.kind == Observation::Kind::binary_network &&
        !(observation.density > 0.0 && observation.density < 1.0))
      throw ValidationError("ScenarioConfig: binary density must be in (0,1)");
  }

  /// Coordinates (x, a, b, u, v).
  MatrixXd sigma_xn() const {
    MatrixXd sigma = MatrixXd::Identity(5, 5);
    const int other = (scenario == Scenario::A) ? 1 : 3;
    sigma(0, other) = gamma;
    sigma(other, 0) = gamma;
    return sigma;
  }
};

struct ScenarioData {
  MatrixXd x;        // n x 1
  MatrixXd n_true;   // n x 4, columns (a, b, u, v)
  RelationalMatrix y;                  // continuous network
  std::optional<RelationalMatrix> b_d; // binarized network when requested
};

/// Draw (x, a, b, u, v) iid from normal(0, I + gamma E) and build the
/// network y_ij = a_i + b_j + u_i v_j + e_ij with standard normal errors.
inline ScenarioData simulate_scenario(const ScenarioConfig& cfg, Rng& rng) {
  cfg.validate();
  const int n = cfg.n;
  MatrixXd L = chol_lower(cfg.sigma_xn());
  MatrixXd coords(n, 5);
  VectorXd z(5);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 5; ++j) z[j] = rng.normal();
    coords.row(i) = (L * z).transpose();
  }
  ScenarioData out;
  out.x = coords.col(0);
  out.n_true = coords.rightCols(4);
  MatrixXd y(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) {
        y(i, j) = 0.0;
        continue;
      }
      y(i, j) = coords(i, 1) + coords(j, 2) + coords(i, 3) * coords(j, 4) + rng.normal();
    }
  out.y = RelationalMatrix::make(std::move(y), RelationKind::continuous);
  if (cfg.observation.kind == Observation::Kind::binary_network)
    out.b_d = binarize(out.y, cfg.observation.density);
  return out;
}

struct PowerEstimate {
  double gamma_sq = 0.0;  // signed squared correlation sign(gamma) * gamma^2
  double power = 0.0;
  int reps = 0;
  double mc_se = 0.0;
};

enum class EstimationMode { direct, mcmc };

struct PowerStudySettings {
  double alpha = 0.05;
  int null_draws = 100000;
  McmcSchedule schedule{4000, 500, 5, 1};  // seed field unused; streams derive from the master seed
  int threads = 1;
};

/// Monte Carlo power of the level-alpha independence test for one scenario
/// cell. In mcmc mode the factors are re-estimated from the observed
/// network in every replicate.
inline PowerEstimate estimate_power(const ScenarioConfig& cfg, int reps, EstimationMode estimation,
                                    std::uint64_t master_seed, NullQuantileCache& cache,
                                    const PowerStudySettings& settings = {}) {
  cfg.validate();
  if (reps < 1) throw ValidationError("estimate_power: need at least one replicate");
  if (estimation == EstimationMode::direct &&
      cfg.observation.kind != Observation::Kind::latent_factors)
    throw ValidationError("estimate_power: direct estimation observes the latent factors");

  auto table = cache.get(ScenarioConfig::p, 2 + 2 * ScenarioConfig::k, cfg.n,
                         settings.null_draws, master_seed);
  std::vector<int> rejected(reps, 0);
  parallel_for(reps, settings.threads, [&](int rep) {
    Rng rng = Rng::derive(master_seed, {static_cast<std::uint64_t>(rep), 17});
    ScenarioData data = simulate_scenario(cfg, rng);
    MatrixXd nmat;
    if (estimation == EstimationMode::direct) {
      nmat = data.n_true;
    } else {
      const RelationalMatrix& observed =
          (cfg.observation.kind == Observation::Kind::binary_network) ? *data.b_d : data.y;
      AmeSampler sampler(observed, std::nullopt, {}, ScenarioConfig::k);
      McmcSchedule schedule = settings.schedule;
      schedule.seed = Rng::derive(master_seed, {static_cast<std::uint64_t>(rep), 29}).seed();
      PosteriorSamples posterior = sampler.run(schedule);
      nmat = extract_factors(posterior, ScenarioConfig::k).as_matrix();
    }
    TestResult result = test_independence(data.x, nmat, settings.alpha, *table);
    rejected[rep] = result.reject ? 1 : 0;
  });

  PowerEstimate out;
  out.reps = reps;
  out.gamma_sq = (cfg.gamma < 0.0 ? -1.0 : 1.0) * cfg.gamma * cfg.gamma;
  double hits = 0.0;
  for (int r : rejected) hits += r;
  out.power = hits / reps;
  out.mc_se = std::sqrt(out.power * (1.0 - out.power) / reps);
  return out;
}

/// Signed squared correlation to the generating gamma.
inline double gamma_from_signed_square(double gamma_sq) {
  return (gamma_sq < 0.0 ? -1.0 : 1.0) * std::sqrt(std::abs(gamma_sq));
}

struct PowerRow {
  Scenario scenario;
  Observation observation;
  int n = 0;
  EstimationMode estimation = EstimationMode::direct;
  PowerEstimate estimate;
};

/// Full factorial power study over scenarios x observations x sizes x
/// gamma^2 grid; latent-factor observations use the direct test, network
/// observations re-fit the model per replicate.
inline std::vector<PowerRow> run_power_grid(const std::vector<Scenario>& scenarios,
                                            const std::vector<Observation>& observations,
                                            const std::vector<int>& sizes,
                                            const std::vector<double>& gamma_sq_grid, int reps,
                                            std::uint64_t master_seed,
                                            const PowerStudySettings& settings) {
  NullQuantileCache cache;
  std::vector<PowerRow> rows;
  std::uint64_t cell = 0;
  for (Scenario sc : scenarios)
    for (const Observation& obs : observations)
      for (int n : sizes)
        for (double gs : gamma_sq_grid) {
          ScenarioConfig cfg;
          cfg.scenario = sc;
          cfg.gamma = gamma_from_signed_square(gs);
          cfg.n = n;
          cfg.observation = obs;
          EstimationMode mode = (obs.kind == Observation::Kind::latent_factors)
                                    ? EstimationMode::direct
                                    : EstimationMode::mcmc;
          PowerRow row;
          row.scenario = sc;
          row.observation = obs;
          row.n = n;
          row.estimation = mode;
          row.estimate = estimate_power(cfg, reps, mode, mix64(master_seed ^ mix64(cell)), cache,
                                        settings);
          rows.push_back(row);
          ++cell;
        }
  return rows;
}

/// Per-attribute OLS on complete training rows; masked entries are predicted
/// from their observed covariates, with training means filling absent
/// predictors.
inline MatrixXd regression_baseline(const AttributeMatrix& x) {
  const int n = x.n, p = x.p;
  MatrixXd pred = x.values;
  std::vector<int> complete;
  for (int i = 0; i < n; ++i) {
    bool all = true;
    for (int j = 0; j < p; ++j)
      if (!x.observed(i, j)) all = false;
    if (all) complete.push_back(i);
  }
  if (static_cast<int>(complete.size()) < p)
    throw ValidationError("regression_baseline: fewer complete cases than attributes");

  VectorXd train_mean = VectorXd::Zero(p);
  for (int i : complete) train_mean += x.values.row(i).transpose();
  train_mean /= static_cast<double>(complete.size());

  for (int j = 0; j < p; ++j) {
    // Design: intercept plus the other attributes.
    MatrixXd design(complete.size(), p);
    VectorXd response(complete.size());
    for (size_t r = 0; r < complete.size(); ++r) {
      design(r, 0) = 1.0;
      int c = 1;
      for (int l = 0; l < p; ++l) {
        if (l == j) continue;
        design(r, c++) = x.values(complete[r], l);
      }
      response[r] = x.values(complete[r], j);
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
    if (qr.rank() < design.cols())
      throw NumericalError("regression_baseline: singular design for attribute " + x.names[j]);
    VectorXd coef = qr.solve(response);

    for (int i = 0; i < n; ++i) {
      if (x.observed(i, j)) continue;
      double yhat = coef[0];
      int c = 1;
      for (int l = 0; l < p; ++l) {
        if (l == j) continue;
        double v = x.observed(i, l) ? x.values(i, l) : train_mean[l];
        yhat += coef[c++] * v;
      }
      pred(i, j) = yhat;
    }
  }
  return pred;
}

/// Center and scale each column to unit variance over its observed entries.
inline AttributeMatrix standardize_attributes(const AttributeMatrix& x) {
  AttributeMatrix out = center_attributes(x);
  for (int j = 0; j < out.p; ++j) {
    double ss = 0.0;
    int c = 0;
    for (int i = 0; i < out.n; ++i)
      if (out.observed(i, j)) {
        ss += out.values(i, j) * out.values(i, j);
        ++c;
      }
    if (c < 2 || ss <= 0.0)
      throw ValidationError("standardize_attributes: column " + out.names[j] + " has no variation");
    double sd = std::sqrt(ss / (c - 1));
    for (int i = 0; i < out.n; ++i)
      if (out.observed(i, j)) out.values(i, j) /= sd;
  }
  return out;
}

struct CvReport {
  std::vector<std::string> attribute_names;
  VectorXd baseline_mse;        // per attribute, pooled over folds
  VectorXd joint_mse;
  VectorXd improvement_pct;     // 100 (baseline - joint) / baseline
  MatrixXd fold_baseline_mse;   // folds x p
  MatrixXd fold_joint_mse;      // folds x p
  int folds = 0;
  double holdout_fraction = 0.0;
};

/// K-fold holdout study on standardized attributes: per fold, a fraction of
/// each attribute column is masked; predictions come from the
/// attributes-only regression and from the joint model's posterior-mean
/// imputations.
inline CvReport crossval(const RelationalMatrix& y, const AttributeMatrix& x_raw,
                         const std::vector<DyadCovariate>& w, int k, int folds,
                         double holdout_fraction, const McmcSchedule& schedule,
                         std::uint64_t master_seed, int threads = 1,
                         const PriorConfig& prior = {}) {
  if (folds < 2) throw ValidationError("crossval: need at least two folds");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw ValidationError("crossval: holdout fraction must be in (0,1)");
  AttributeMatrix x = standardize_attributes(x_raw);
  const int n = x.n, p = x.p;

  // Disjoint holdout slices over a per-attribute shuffle of the observed
  // rows; folds tile the shuffle exactly when folds * holdout_fraction = 1.
  std::vector<std::vector<int>> shuffled(p);
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < n; ++i)
      if (x.observed(i, j)) shuffled[j].push_back(i);
    Rng rng = Rng::derive(master_seed, {static_cast<std::uint64_t>(j), 101});
    for (int i = static_cast<int>(shuffled[j].size()) - 1; i > 0; --i)
      std::swap(shuffled[j][i], shuffled[j][rng.uniform_int(i + 1)]);
  }
  auto holdout_rows = [&](int fold, int j) {
    const double count = static_cast<double>(shuffled[j].size());
    long lo = static_cast<long>(std::floor(fold * holdout_fraction * count));
    long hi = static_cast<long>(std::floor((fold + 1) * holdout_fraction * count));
    hi = std::min(hi, static_cast<long>(shuffled[j].size()));
    lo = std::min(lo, hi);
    return std::pair<long, long>(lo, hi);
  };

  CvReport report;
  report.attribute_names = x.names;
  report.folds = folds;
  report.holdout_fraction = holdout_fraction;
  report.fold_baseline_mse = MatrixXd::Zero(folds, p);
  report.fold_joint_mse = MatrixXd::Zero(folds, p);
  MatrixXd fold_counts = MatrixXd::Zero(folds, p);

  parallel_for(folds, threads, [&](int fold) {
    AttributeMatrix masked = x;
    for (int j = 0; j < p; ++j) {
      auto [lo, hi] = holdout_rows(fold, j);
      for (long t = lo; t < hi; ++t) masked.observed(shuffled[j][t], j) = false;
    }
    MatrixXd baseline = regression_baseline(masked);

    McmcSchedule fold_schedule = schedule;
    fold_schedule.seed = Rng::derive(master_seed, {static_cast<std::uint64_t>(fold), 211}).seed();
    AmeSampler sampler(y, masked, w, k, prior, SamplerMode::joint);
    PosteriorSamples posterior = sampler.run(fold_schedule);

    for (int j = 0; j < p; ++j) {
      auto [lo, hi] = holdout_rows(fold, j);
      double se_base = 0.0, se_joint = 0.0;
      for (long t = lo; t < hi; ++t) {
        const int i = shuffled[j][t];
        const double truth = x.values(i, j);
        se_base += (baseline(i, j) - truth) * (baseline(i, j) - truth);
        const double imputed = posterior.x_imputed_mean(i, j);
        se_joint += (imputed - truth) * (imputed - truth);
      }
      const double cnt = static_cast<double>(hi - lo);
      fold_counts(fold, j) = cnt;
      if (cnt > 0) {
        report.fold_baseline_mse(fold, j) = se_base / cnt;
        report.fold_joint_mse(fold, j) = se_joint / cnt;
      }
    }
  });

  report.baseline_mse = VectorXd::Zero(p);
  report.joint_mse = VectorXd::Zero(p);
  report.improvement_pct = VectorXd::Zero(p);
  for (int j = 0; j < p; ++j) {
    double total = fold_counts.col(j).sum();
    if (total <= 0.0) throw ValidationError("crossval: empty holdout for attribute " + x.names[j]);
    for (int f = 0; f < folds; ++f) {
      report.baseline_mse[j] += report.fold_baseline_mse(f, j) * fold_counts(f, j);
      report.joint_mse[j] += report.fold_joint_mse(f, j) * fold_counts(f, j);
    }
    report.baseline_mse[j] /= total;
    report.joint_mse[j] /= total;
    report.improvement_pct[j] =
        100.0 * (report.baseline_mse[j] - report.joint_mse[j]) / report.baseline_mse[j];
  }
  return report;
}

}  // namespace netfactor
