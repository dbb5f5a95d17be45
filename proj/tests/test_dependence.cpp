#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "netfactor/dependence_test.hpp"
#include "netfactor/rng.hpp"

using namespace netfactor;

namespace {

MatrixXd gaussian_matrix(int n, int m, Rng& rng) {
  MatrixXd out(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out(i, j) = rng.normal();
  return out;
}

/// Test-side oracle: eigenvalues of the explicit product
/// (X'X)^{-1/2} X'N (N'N)^{-1} N'X (X'X)^{-1/2}.
VectorXd cca_brute_force(const MatrixXd& x, const MatrixXd& n) {
  MatrixXd xx = x.transpose() * x;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(xx);
  MatrixXd xx_inv_half = es.eigenvectors() *
                         es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                         es.eigenvectors().transpose();
  MatrixXd core = xx_inv_half * (x.transpose() * n) * (n.transpose() * n).inverse() *
                  (n.transpose() * x) * xx_inv_half;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es2(0.5 * (core + core.transpose()));
  VectorXd ev = es2.eigenvalues();
  const int m = static_cast<int>(std::min(x.cols(), n.cols()));
  VectorXd r(m);
  for (int i = 0; i < m; ++i) r[i] = std::sqrt(std::max(ev[ev.size() - 1 - i], 0.0));
  return r;
}

/// Beta(a, b) CDF by Simpson quadrature of the density; independent of the
/// sampler under test.
double beta_cdf_oracle(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const int steps = 20000;  // even
  double log_norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  auto density = [&](double t) {
    if (t <= 0.0 || t >= 1.0) return 0.0;
    return std::exp(log_norm + (a - 1.0) * std::log(t) + (b - 1.0) * std::log1p(-t));
  };
  double h = x / steps;
  double acc = density(1e-300) + density(x);
  for (int i = 1; i < steps; ++i) acc += density(i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

double two_sample_ks(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  size_t ia = 0, ib = 0;
  while (ia < a.size() && ib < b.size()) {
    if (a[ia] <= b[ib]) ++ia;
    else ++ib;
    d = std::max(d, std::abs(static_cast<double>(ia) / a.size() -
                             static_cast<double>(ib) / b.size()));
  }
  return d;
}

}  // namespace

TEST_CASE("canonical correlations match the explicit eigenvalue formula", "[dependence]") {
  Rng rng(301);
  for (int trial = 0; trial < 20; ++trial) {
    MatrixXd x = gaussian_matrix(8, 2, rng);
    MatrixXd n = gaussian_matrix(8, 4, rng);
    VectorXd r = canonical_correlations(x, n);
    VectorXd oracle = cca_brute_force(x, n);
    REQUIRE(r.size() == 2);
    REQUIRE((r - oracle).cwiseAbs().maxCoeff() < 1e-10);
    for (int i = 0; i < r.size(); ++i) {
      REQUIRE(r[i] >= 0.0);
      REQUIRE(r[i] <= 1.0);
      if (i > 0) REQUIRE(r[i] <= r[i - 1]);
    }
  }
}

TEST_CASE("perfect linear dependence saturates the statistic", "[dependence]") {
  Rng rng(302);
  MatrixXd x = gaussian_matrix(12, 1, rng);
  MatrixXd n(12, 4);
  n.col(0) = x.col(0);
  n.rightCols(3) = gaussian_matrix(12, 3, rng);
  VectorXd r = canonical_correlations(x, n);
  REQUIRE(r[0] == Catch::Approx(1.0).margin(1e-10));
  LrtStat stat = lrt_statistic(x, n);
  REQUIRE(stat.saturated);
  REQUIRE(stat.wilks == 0.0);
  REQUIRE(std::isinf(stat.lambda));

  WilksNullTable table(1, 4, 12, 2000, 5);
  TestResult res = test_independence(x, n, 0.05, table);
  REQUIRE(res.p_value == 0.0);
  REQUIRE(res.p_value <= 1.0 / 2000);
  REQUIRE(res.reject);
  REQUIRE(res.saturated);
}

TEST_CASE("exactly orthogonal blocks give zero correlations", "[dependence]") {
  Rng rng(303);
  MatrixXd x = gaussian_matrix(20, 2, rng);
  MatrixXd raw = gaussian_matrix(20, 3, rng);
  // Project X out of N.
  MatrixXd proj = x * (x.transpose() * x).inverse() * x.transpose();
  MatrixXd n = raw - proj * raw;
  VectorXd r = canonical_correlations(x, n);
  REQUIRE(r.cwiseAbs().maxCoeff() < 1e-10);
  LrtStat stat = lrt_statistic(x, n);
  REQUIRE(stat.lambda == Catch::Approx(1.0).margin(1e-8));
  REQUIRE(stat.wilks == Catch::Approx(1.0).margin(1e-8));
}

TEST_CASE("lrt arithmetic follows the displayed formula", "[dependence]") {
  VectorXd r(1);
  r << 0.5;
  LrtStat stat = lrt_from_correlations(r, 10);
  REQUIRE(stat.wilks == Catch::Approx(0.75).margin(1e-12));
  REQUIRE(stat.lambda == Catch::Approx(std::pow(0.75, -5.0)).margin(1e-9));

  Rng rng(304);
  MatrixXd x = gaussian_matrix(15, 2, rng);
  MatrixXd n = gaussian_matrix(15, 4, rng);
  LrtStat s = lrt_statistic(x, n);
  double direct = 0.0;
  for (int i = 0; i < s.canonical_correlations.size(); ++i)
    direct += std::log1p(-s.canonical_correlations[i] * s.canonical_correlations[i]);
  REQUIRE(s.log_lambda == Catch::Approx(-0.5 * 15 * direct).margin(1e-10));
}

TEST_CASE("conditional LRT equals the canonical-correlation LRT", "[dependence]") {
  Rng rng(305);
  for (int trial = 0; trial < 25; ++trial) {
    MatrixXd x = gaussian_matrix(14, 2, rng);
    MatrixXd n = gaussian_matrix(14, 4, rng);
    LrtStat direct = lrt_statistic(x, n);
    LrtStat xg = conditional_lrt(x, n, RegressionDirection::x_given_n);
    LrtStat ng = conditional_lrt(x, n, RegressionDirection::n_given_x);
    REQUIRE(xg.log_lambda == Catch::Approx(direct.log_lambda).epsilon(1e-8).margin(1e-8));
    REQUIRE(ng.log_lambda == Catch::Approx(direct.log_lambda).epsilon(1e-8).margin(1e-8));
    REQUIRE(xg.wilks == Catch::Approx(ng.wilks).epsilon(1e-8));
  }
  // Orthogonal data: Lambda = 1 in both directions.
  MatrixXd x = gaussian_matrix(16, 2, rng);
  MatrixXd raw = gaussian_matrix(16, 3, rng);
  MatrixXd n = raw - x * (x.transpose() * x).inverse() * (x.transpose() * raw);
  REQUIRE(conditional_lrt(x, n, RegressionDirection::x_given_n).lambda ==
          Catch::Approx(1.0).margin(1e-8));
  REQUIRE(conditional_lrt(x, n, RegressionDirection::n_given_x).lambda ==
          Catch::Approx(1.0).margin(1e-8));
}

TEST_CASE("Wilks null draws have the Beta-product mean", "[dependence]") {
  Rng rng(306);
  const int p = 2, q = 4, n = 30;
  auto draws = wilks_null_draws(p, q, n, 100000, rng);
  double expected = 1.0, var_term = 1.0;
  for (int i = 1; i <= p; ++i) {
    double a = 0.5 * (n - q - p + i), b = 0.5 * q;
    expected *= a / (a + b);
    var_term *= (a + 1.0) * a / ((a + b + 1.0) * (a + b));
  }
  double mean = 0.0;
  for (double w : draws) mean += w;
  mean /= draws.size();
  double sd = std::sqrt(var_term - expected * expected);
  REQUIRE(std::abs(mean - expected) < 4.0 * sd / std::sqrt(static_cast<double>(draws.size())));
  REQUIRE_THROWS_AS(wilks_null_draws(2, 4, 5, 10, rng), ValidationError);
}

TEST_CASE("p=1 null is a single Beta", "[dependence]") {
  Rng rng(307);
  const int p = 1, q = 4, n = 20;
  auto draws = wilks_null_draws(p, q, n, 100000, rng);
  std::sort(draws.begin(), draws.end());
  const double a = 0.5 * (n - q - p + 1), b = 0.5 * q;
  double sup = 0.0;
  for (int g = 1; g < 40; ++g) {
    double x = g / 40.0;
    auto it = std::upper_bound(draws.begin(), draws.end(), x);
    double emp = static_cast<double>(it - draws.begin()) / draws.size();
    sup = std::max(sup, std::abs(emp - beta_cdf_oracle(a, b, x)));
  }
  REQUIRE(sup < 0.01);
}

TEST_CASE("observed W matches the Beta-product null under independence", "[dependence]") {
  Rng rng(308);
  const int n = 30, p = 2, q = 4;
  std::vector<double> observed(2000);
  for (auto& w : observed) {
    MatrixXd x = gaussian_matrix(n, p, rng);
    MatrixXd nm = gaussian_matrix(n, q, rng);
    w = lrt_statistic(x, nm).wilks;
  }
  auto null_draws = wilks_null_draws(p, q, n, 20000, rng);
  REQUIRE(two_sample_ks(observed, null_draws) < 0.035);
}

TEST_CASE("test level is near alpha under independence", "[dependence]") {
  Rng rng(309);
  const int n = 40, reps = 400;
  WilksNullTable table(1, 4, n, 20000, 11);
  int rejections = 0;
  for (int r = 0; r < reps; ++r) {
    MatrixXd x = gaussian_matrix(n, 1, rng);
    MatrixXd nm = gaussian_matrix(n, 4, rng);
    if (test_independence(x, nm, 0.05, table).reject) ++rejections;
  }
  double rate = static_cast<double>(rejections) / reps;
  REQUIRE(std::abs(rate - 0.05) < 4.0 * std::sqrt(0.05 * 0.95 / reps));
}

TEST_CASE("appending a noise column preserves the level", "[dependence]") {
  // Level check: under independence the test rejects at rate ~alpha for both
  // p and p+1 attributes, so extra noise columns cannot systematically
  // inflate apparent evidence.
  Rng rng(313);
  const int n = 40, reps = 400;
  WilksNullTable table1(1, 4, n, 20000, 21);
  WilksNullTable table2(2, 4, n, 20000, 21);
  int rej1 = 0, rej2 = 0;
  for (int r = 0; r < reps; ++r) {
    MatrixXd x1 = gaussian_matrix(n, 1, rng);
    MatrixXd nm = gaussian_matrix(n, 4, rng);
    MatrixXd x2(n, 2);
    x2.col(0) = x1.col(0);
    x2.col(1) = gaussian_matrix(n, 1, rng).col(0);
    if (test_independence(x1, nm, 0.05, table1).reject) ++rej1;
    if (test_independence(x2, nm, 0.05, table2).reject) ++rej2;
  }
  const double band = 4.0 * std::sqrt(0.05 * 0.95 / reps);
  REQUIRE(std::abs(rej1 / static_cast<double>(reps) - 0.05) < band);
  REQUIRE(std::abs(rej2 / static_cast<double>(reps) - 0.05) < band);
}

TEST_CASE("statistics are invariant under the full transform group", "[dependence]") {
  Rng rng(310);
  MatrixXd x = gaussian_matrix(18, 2, rng);
  MatrixXd n = gaussian_matrix(18, 4, rng);
  WilksNullTable table(2, 4, 18, 5000, 3);
  TestResult base = test_independence(x, n, 0.05, table);

  SECTION("identity transform changes nothing") {
    InvarianceTransform id = InvarianceTransform::general(MatrixXd::Identity(2, 2),
                                                          MatrixXd::Identity(4, 4));
    auto [x2, n2] = apply_transform(x, n, id);
    REQUIRE((x2 - x).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((n2 - n).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("general nonsingular blocks leave the test unchanged") {
    for (int trial = 0; trial < 20; ++trial) {
      MatrixXd bx = MatrixXd::Identity(2, 2) + 0.5 * gaussian_matrix(2, 2, rng);
      MatrixXd bn = MatrixXd::Identity(4, 4) + 0.5 * gaussian_matrix(4, 4, rng);
      InvarianceTransform t = InvarianceTransform::general(bx, bn);
      auto [x2, n2] = apply_transform(x, n, t);
      TestResult moved = test_independence(x2, n2, 0.05, table);
      REQUIRE(moved.log_lambda == Catch::Approx(base.log_lambda).epsilon(1e-8).margin(1e-8));
      REQUIRE(moved.wilks == Catch::Approx(base.wilks).epsilon(1e-8));
      REQUIRE(moved.p_value == base.p_value);
      REQUIRE((moved.canonical_correlations - base.canonical_correlations).cwiseAbs().maxCoeff() <
              1e-8);
    }
  }

  SECTION("model-preserving elements leave x and UV' unchanged") {
    MatrixXd u = gaussian_matrix(18, 1, rng), v = gaussian_matrix(18, 1, rng);
    MatrixXd nm(18, 4);
    nm << n.col(0), n.col(1), u, v;
    MatrixXd a(1, 1);
    a << -2.5;
    InvarianceTransform g = InvarianceTransform::model_preserving(a, 2, 1);
    auto [x2, n2] = apply_transform(x, nm, g);
    REQUIRE((x2 - x).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((n2.col(0) - nm.col(0)).cwiseAbs().maxCoeff() == 0.0);
    MatrixXd uv_before = nm.col(2) * nm.col(3).transpose();
    MatrixXd uv_after = n2.col(2) * n2.col(3).transpose();
    REQUIRE((uv_before - uv_after).cwiseAbs().maxCoeff() < 1e-10);
    TestResult moved = test_independence(x2, n2, 0.05, table);
    TestResult orig = test_independence(x, nm, 0.05, table);
    REQUIRE(moved.log_lambda == Catch::Approx(orig.log_lambda).epsilon(1e-8).margin(1e-8));
  }

  SECTION("singular blocks are rejected") {
    REQUIRE_THROWS_AS(InvarianceTransform::general(MatrixXd::Zero(2, 2), MatrixXd::Identity(4, 4)),
                      ValidationError);
  }
}

TEST_CASE("correlations are invariant to column permutations", "[dependence]") {
  Rng rng(311);
  MatrixXd x = gaussian_matrix(15, 2, rng);
  MatrixXd n = gaussian_matrix(15, 4, rng);
  VectorXd base = canonical_correlations(x, n);
  MatrixXd xp(15, 2);
  xp << x.col(1), x.col(0);
  MatrixXd np(15, 4);
  np << n.col(2), n.col(0), n.col(3), n.col(1);
  REQUIRE((canonical_correlations(xp, np) - base).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("rank-deficient designs are reported", "[dependence]") {
  Rng rng(312);
  MatrixXd x(12, 2);
  x.col(0) = gaussian_matrix(12, 1, rng);
  x.col(1) = 2.0 * x.col(0);
  MatrixXd n = gaussian_matrix(12, 4, rng);
  REQUIRE_THROWS_WITH(canonical_correlations(x, n),
                      Catch::Matchers::ContainsSubstring("attribute block X"));
  REQUIRE_THROWS_AS(canonical_correlations(n, x), ValidationError);
}

TEST_CASE("null table cache returns shared instances", "[dependence]") {
  NullQuantileCache cache;
  auto t1 = cache.get(1, 4, 30, 1000, 7);
  auto t2 = cache.get(1, 4, 30, 1000, 7);
  auto t3 = cache.get(1, 4, 31, 1000, 7);
  REQUIRE(t1.get() == t2.get());
  REQUIRE(t1.get() != t3.get());
  REQUIRE(t1->size() == 1000);
}
