#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "netfactor/experiments.hpp"

using namespace netfactor;

namespace {

double correlation(const VectorXd& a, const VectorXd& b) {
  const double n = static_cast<double>(a.size());
  double ma = a.mean(), mb = b.mean();
  double num = 0.0, va = 0.0, vb = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  (void)n;
  return num / std::sqrt(va * vb);
}

}  // namespace

TEST_CASE("scenario simulation matches the generating covariance", "[experiments]") {
  SECTION("gamma = 0 leaves the attribute uncorrelated with the factors") {
    ScenarioConfig cfg;
    cfg.gamma = 0.0;
    cfg.n = 400;
    Rng rng(601);
    ScenarioData data = simulate_scenario(cfg, rng);
    for (int c = 0; c < 4; ++c)
      REQUIRE(std::abs(correlation(data.x.col(0), data.n_true.col(c))) <
              4.0 / std::sqrt(static_cast<double>(cfg.n)));
  }

  SECTION("scenario A links the attribute to the additive sender factor") {
    ScenarioConfig cfg;
    cfg.scenario = Scenario::A;
    cfg.gamma = 0.4;
    cfg.n = 800;
    Rng rng(602);
    ScenarioData data = simulate_scenario(cfg, rng);
    REQUIRE(correlation(data.x.col(0), data.n_true.col(0)) ==
            Catch::Approx(0.4).margin(4.0 / std::sqrt(800.0)));
    REQUIRE(std::abs(correlation(data.x.col(0), data.n_true.col(2))) < 4.0 / std::sqrt(800.0));
  }

  SECTION("scenario B links the attribute to the multiplicative sender factor") {
    ScenarioConfig cfg;
    cfg.scenario = Scenario::B;
    cfg.gamma = -0.5;
    cfg.n = 800;
    Rng rng(603);
    ScenarioData data = simulate_scenario(cfg, rng);
    REQUIRE(correlation(data.x.col(0), data.n_true.col(2)) ==
            Catch::Approx(-0.5).margin(4.0 / std::sqrt(800.0)));
  }

  SECTION("network entries follow the additive-multiplicative recipe in distribution") {
    ScenarioConfig cfg;
    cfg.gamma = 0.0;
    cfg.n = 300;
    Rng rng(604);
    ScenarioData data = simulate_scenario(cfg, rng);
    // Var(y_ij) = var(a) + var(b) + var(u v) + var(e) = 4 under the null.
    double acc = 0.0, acc2 = 0.0;
    int count = 0;
    for (int i = 0; i < cfg.n; ++i)
      for (int j = 0; j < cfg.n; ++j) {
        if (i == j) continue;
        acc += data.y.values(i, j);
        acc2 += data.y.values(i, j) * data.y.values(i, j);
        ++count;
      }
    // Entries share node effects, so the effective sample size is ~n, not
    // n^2; tolerances reflect that.
    double mean = acc / count;
    double var = acc2 / count - mean * mean;
    REQUIRE(std::abs(mean) < 0.25);
    REQUIRE(var == Catch::Approx(4.0).epsilon(0.2));
  }

  SECTION("binary observation carries the exact requested density") {
    ScenarioConfig cfg;
    cfg.gamma = 0.2;
    cfg.n = 50;
    cfg.observation = Observation::binary(0.15);
    Rng rng(605);
    ScenarioData data = simulate_scenario(cfg, rng);
    REQUIRE(data.b_d.has_value());
    long m = 50L * 49L;
    REQUIRE(static_cast<long>(data.b_d->values.sum()) == static_cast<long>(std::floor(0.15 * m)));
  }

  SECTION("invalid gamma is rejected") {
    ScenarioConfig cfg;
    cfg.gamma = 1.0;
    Rng rng(606);
    REQUIRE_THROWS_AS(simulate_scenario(cfg, rng), ValidationError);
  }
}

TEST_CASE("signed squared correlation maps back to gamma", "[experiments]") {
  REQUIRE(gamma_from_signed_square(0.04) == Catch::Approx(0.2));
  REQUIRE(gamma_from_signed_square(-0.05) == Catch::Approx(-std::sqrt(0.05)));
  REQUIRE(gamma_from_signed_square(0.0) == 0.0);
}

TEST_CASE("power estimation is seeded-deterministic and near level at gamma 0", "[experiments]") {
  ScenarioConfig cfg;
  cfg.gamma = 0.0;
  cfg.n = 50;
  cfg.observation = Observation::latent();
  NullQuantileCache cache;
  PowerStudySettings settings;
  settings.null_draws = 20000;
  settings.threads = 2;
  PowerEstimate e1 = estimate_power(cfg, 300, EstimationMode::direct, 900, cache, settings);
  PowerEstimate e2 = estimate_power(cfg, 300, EstimationMode::direct, 900, cache, settings);
  REQUIRE(e1.power == e2.power);
  REQUIRE(e1.gamma_sq == 0.0);
  REQUIRE(std::abs(e1.power - 0.05) < 4.0 * std::sqrt(0.05 * 0.95 / 300.0));
  REQUIRE(e1.mc_se == Catch::Approx(std::sqrt(e1.power * (1 - e1.power) / 300.0)));
}

TEST_CASE("power rises with strong dependence on observed factors", "[experiments]") {
  ScenarioConfig cfg;
  cfg.gamma = std::sqrt(0.2);
  cfg.n = 100;
  cfg.observation = Observation::latent();
  NullQuantileCache cache;
  PowerStudySettings settings;
  settings.null_draws = 20000;
  settings.threads = 2;
  PowerEstimate e = estimate_power(cfg, 200, EstimationMode::direct, 901, cache, settings);
  REQUIRE(e.gamma_sq == Catch::Approx(0.2));
  REQUIRE(e.power >= 0.8);
}

TEST_CASE("scenarios A and B give equal test-statistic distributions", "[experiments]") {
  // With observed factors the two covariance structures are equivalent under
  // the test's invariances, so W has the same distribution under both.
  const int reps = 400, n = 60;
  std::vector<double> w_a(reps), w_b(reps);
  for (int r = 0; r < reps; ++r) {
    for (Scenario sc : {Scenario::A, Scenario::B}) {
      ScenarioConfig cfg;
      cfg.scenario = sc;
      cfg.gamma = 0.3;
      cfg.n = n;
      Rng rng = Rng::derive(902, {static_cast<std::uint64_t>(r), sc == Scenario::A ? 0u : 1u});
      ScenarioData data = simulate_scenario(cfg, rng);
      double w = lrt_statistic(data.x, data.n_true).wilks;
      (sc == Scenario::A ? w_a : w_b)[r] = w;
    }
  }
  std::sort(w_a.begin(), w_a.end());
  std::sort(w_b.begin(), w_b.end());
  double d = 0.0;
  size_t ia = 0, ib = 0;
  while (ia < w_a.size() && ib < w_b.size()) {
    if (w_a[ia] <= w_b[ib]) ++ia;
    else ++ib;
    d = std::max(d, std::abs(static_cast<double>(ia) - static_cast<double>(ib)) / reps);
  }
  // 4x the asymptotic 5% two-sample KS radius would be ~0.19; use 0.15.
  REQUIRE(d < 0.15);
}

TEST_CASE("regression baseline reproduces closed-form OLS", "[experiments]") {
  SECTION("exact linear relation is recovered exactly") {
    const int n = 30;
    Rng rng(610);
    MatrixXd v(n, 2);
    for (int i = 0; i < n; ++i) {
      v(i, 1) = rng.normal();
      v(i, 0) = 0.5 * v(i, 1);
    }
    AttributeMatrix x = AttributeMatrix::make(v);
    x.observed(3, 0) = false;
    x.observed(11, 0) = false;
    MatrixXd pred = regression_baseline(x);
    REQUIRE(pred(3, 0) == Catch::Approx(0.5 * v(3, 1)).margin(1e-10));
    REQUIRE(pred(11, 0) == Catch::Approx(0.5 * v(11, 1)).margin(1e-10));
  }

  SECTION("row with no observed predictors falls back to the training mean") {
    const int n = 12;
    Rng rng(611);
    MatrixXd v(n, 2);
    for (int i = 0; i < n; ++i) {
      v(i, 0) = rng.normal() + 2.0;
      v(i, 1) = rng.normal();
    }
    AttributeMatrix x = AttributeMatrix::make(v);
    x.observed(0, 0) = false;
    x.observed(0, 1) = false;
    MatrixXd pred = regression_baseline(x);
    double mean0 = 0.0;
    for (int i = 1; i < n; ++i) mean0 += v(i, 0);
    mean0 /= (n - 1);
    REQUIRE(pred(0, 0) == Catch::Approx(mean0).margin(1e-10));
  }

  SECTION("exactly collinear predictors raise a singular-design error") {
    const int n = 15;
    Rng rng(612);
    MatrixXd v(n, 3);
    for (int i = 0; i < n; ++i) {
      v(i, 0) = rng.normal();
      v(i, 1) = rng.normal();
    }
    v.col(2) = v.col(1);
    AttributeMatrix x = AttributeMatrix::make(v);
    x.observed(2, 0) = false;
    REQUIRE_THROWS_AS(regression_baseline(x), NumericalError);
  }

  SECTION("too few complete cases is a validation error") {
    MatrixXd v = MatrixXd::Zero(3, 3);
    AttributeMatrix x = AttributeMatrix::make(v);
    x.observed(0, 0) = false;
    x.observed(1, 1) = false;
    REQUIRE_THROWS_AS(regression_baseline(x), ValidationError);
  }
}

TEST_CASE("standardization produces unit-variance centered columns", "[experiments]") {
  Rng rng(613);
  MatrixXd v(40, 2);
  for (int i = 0; i < 40; ++i) {
    v(i, 0) = 3.0 * rng.normal() + 5.0;
    v(i, 1) = 0.2 * rng.normal() - 1.0;
  }
  AttributeMatrix x = AttributeMatrix::make(v);
  x.observed(5, 0) = false;
  AttributeMatrix sx = standardize_attributes(x);
  for (int j = 0; j < 2; ++j) {
    double mean = 0.0, ss = 0.0;
    int c = 0;
    for (int i = 0; i < 40; ++i)
      if (sx.observed(i, j)) {
        mean += sx.values(i, j);
        ++c;
      }
    mean /= c;
    for (int i = 0; i < 40; ++i)
      if (sx.observed(i, j)) ss += (sx.values(i, j) - mean) * (sx.values(i, j) - mean);
    REQUIRE(std::abs(mean) < 1e-10);
    REQUIRE(ss / (c - 1) == Catch::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("crossval masks partition the data when folds x holdout = 1", "[experiments]") {
  // 4 folds at 25% holdout: every observed entry is held out exactly once.
  const int n = 37;
  Rng rng(614);
  MatrixXd v(n, 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 2; ++j) v(i, j) = rng.normal();
  // Check the slice arithmetic directly.
  const int folds = 4;
  const double holdout = 0.25;
  for (int count : {36, 37, 40}) {
    std::set<long> seen;
    for (int f = 0; f < folds; ++f) {
      long lo = static_cast<long>(std::floor(f * holdout * count));
      long hi = static_cast<long>(std::floor((f + 1) * holdout * count));
      for (long t = lo; t < hi; ++t) {
        REQUIRE(seen.count(t) == 0);
        seen.insert(t);
      }
    }
    REQUIRE(static_cast<int>(seen.size()) == count);
  }
}

TEST_CASE("crossval runs end to end on a small joint dataset", "[experiments]") {
  const int n = 36;
  Rng rng(615);
  // Mildly dependent joint data.
  MatrixXd sigma = MatrixXd::Identity(2 + 6, 2 + 6);
  sigma(0, 2) = sigma(2, 0) = 0.6;  // x1 ~ a
  sigma(1, 1) = 1.0;
  MatrixXd l = chol_lower(sigma);
  MatrixXd coords(n, 8);
  for (int i = 0; i < n; ++i) {
    VectorXd z(8);
    for (int j = 0; j < 8; ++j) z[j] = rng.normal();
    coords.row(i) = (l * z).transpose();
  }
  MatrixXd yv(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      yv(i, j) = (i == j) ? 0.0
                          : coords(i, 2) + coords(j, 3) + coords(i, 4) * coords(j, 6) +
                                0.5 * rng.normal();
  RelationalMatrix y = RelationalMatrix::make(yv, RelationKind::continuous);
  AttributeMatrix x = AttributeMatrix::make(coords.leftCols(2));

  McmcSchedule schedule{400, 100, 3, 1};
  CvReport report = crossval(y, x, {}, 1, 3, 0.1, schedule, 616, 2);
  REQUIRE(report.folds == 3);
  REQUIRE(report.baseline_mse.size() == 2);
  REQUIRE(report.joint_mse.minCoeff() >= 0.0);
  REQUIRE(report.fold_baseline_mse.rows() == 3);
  for (int j = 0; j < 2; ++j)
    REQUIRE(report.improvement_pct[j] ==
            Catch::Approx(100.0 * (report.baseline_mse[j] - report.joint_mse[j]) /
                          report.baseline_mse[j]));
}

TEST_CASE("crossval report is invariant to affine attribute rescaling", "[experiments]") {
  const int n = 30;
  Rng rng(618);
  MatrixXd yv(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) yv(i, j) = (i == j) ? 0.0 : rng.normal();
  RelationalMatrix y = RelationalMatrix::make(yv, RelationKind::continuous);
  MatrixXd xv(n, 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 2; ++j) xv(i, j) = rng.normal();
  AttributeMatrix x = AttributeMatrix::make(xv);
  McmcSchedule schedule{200, 50, 2, 1};
  CvReport a = crossval(y, x, {}, 1, 3, 0.2, schedule, 619, 1);

  SECTION("positive unit changes leave the whole report unchanged") {
    AttributeMatrix x_scaled = x;
    x_scaled.values.col(0) = 10.0 * x.values.col(0).array() + 3.0;
    x_scaled.values.col(1) = 0.25 * x.values.col(1).array() - 7.0;
    CvReport b = crossval(y, x_scaled, {}, 1, 3, 0.2, schedule, 619, 1);
    for (int j = 0; j < 2; ++j) {
      REQUIRE(a.baseline_mse[j] == Catch::Approx(b.baseline_mse[j]).margin(1e-10));
      REQUIRE(a.joint_mse[j] == Catch::Approx(b.joint_mse[j]).margin(1e-10));
      REQUIRE(a.improvement_pct[j] == Catch::Approx(b.improvement_pct[j]).margin(1e-8));
    }
  }

  SECTION("sign flips keep the deterministic baseline; the chain agrees in law") {
    AttributeMatrix x_scaled = x;
    x_scaled.values.col(1) = -0.25 * x.values.col(1).array() - 7.0;
    CvReport b = crossval(y, x_scaled, {}, 1, 3, 0.2, schedule, 619, 1);
    for (int j = 0; j < 2; ++j) {
      REQUIRE(a.baseline_mse[j] == Catch::Approx(b.baseline_mse[j]).margin(1e-10));
      // A negated standardized column changes the chain's noise realization
      // but not the model, so the joint MSE matches only statistically.
      REQUIRE(std::abs(a.joint_mse[j] - b.joint_mse[j]) <
              0.3 * std::max(a.joint_mse[j], b.joint_mse[j]));
    }
  }
}

TEST_CASE("power grid emits one row per cell", "[experiments]") {
  PowerStudySettings settings;
  settings.null_draws = 5000;
  settings.threads = 2;
  std::vector<PowerRow> rows = run_power_grid({Scenario::A}, {Observation::latent()}, {30, 50},
                                              {0.0, 0.1}, 50, 617, settings);
  REQUIRE(rows.size() == 4);
  REQUIRE(rows[0].n == 30);
  REQUIRE(rows[1].estimate.gamma_sq == Catch::Approx(0.1));
  REQUIRE(rows[3].estimate.reps == 50);
}
