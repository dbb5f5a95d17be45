#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "netfactor/lowrank.hpp"
#include "netfactor/rng.hpp"

using namespace netfactor;

namespace {

MatrixXd random_matrix(int n, int m, Rng& rng) {
  MatrixXd out(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out(i, j) = rng.normal();
  return out;
}

}  // namespace

TEST_CASE("truncated svd of the identity has unit singular values", "[lowrank]") {
  TruncatedSvd svd = truncated_svd(MatrixXd::Identity(3, 3), 3);
  REQUIRE(svd.singular_values.size() == 3);
  for (int i = 0; i < 3; ++i) REQUIRE(svd.singular_values[i] == Catch::Approx(1.0));
}

TEST_CASE("rank-one input is reconstructed exactly at k=1", "[lowrank]") {
  Rng rng(3);
  VectorXd a = VectorXd::Random(5), b = VectorXd::Random(5);
  MatrixXd m = a * b.transpose();
  TruncatedSvd svd = truncated_svd(m, 1);
  REQUIRE((svd.reconstruct() - m).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE(svd.singular_values[0] >= 0.0);
}

TEST_CASE("truncated svd satisfies the contract", "[lowrank]") {
  Rng rng(5);
  MatrixXd m = random_matrix(7, 5, rng);
  TruncatedSvd svd = truncated_svd(m, 3);
  // Non-increasing non-negative singular values, orthonormal factors.
  for (int i = 1; i < 3; ++i) REQUIRE(svd.singular_values[i] <= svd.singular_values[i - 1]);
  REQUIRE(svd.singular_values.minCoeff() >= 0.0);
  REQUIRE((svd.left.transpose() * svd.left - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((svd.right.transpose() * svd.right - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE_THROWS_AS(truncated_svd(m, 0), ValidationError);
  REQUIRE_THROWS_AS(truncated_svd(m, 6), ValidationError);
  MatrixXd bad = m;
  bad(0, 0) = std::nan("");
  REQUIRE_THROWS_AS(truncated_svd(bad, 2), ValidationError);
}

TEST_CASE("Eckart-Young: svd beats random rank-k competitors", "[lowrank]") {
  Rng rng(7);
  MatrixXd m = random_matrix(6, 6, rng);
  const int k = 2;
  TruncatedSvd svd = truncated_svd(m, k);
  const double best = (m - svd.reconstruct()).squaredNorm();
  for (int trial = 0; trial < 100; ++trial) {
    MatrixXd cand;
    if (trial % 2 == 0) {
      cand = random_matrix(6, k, rng) * random_matrix(k, 6, rng);
    } else {
      // Perturbations of the optimum are stronger competitors.
      MatrixXd left = svd.left + 0.1 * random_matrix(6, k, rng);
      MatrixXd right = svd.right + 0.1 * random_matrix(6, k, rng);
      cand = left * svd.singular_values.asDiagonal() * right.transpose();
    }
    REQUIRE(best <= (m - cand).squaredNorm() + 1e-9);
  }
}

TEST_CASE("ame_decompose of the all-ones matrix isolates the mean", "[lowrank]") {
  const int n = 5;
  RankKDecomposition d = ame_decompose(MatrixXd::Ones(n, n), 1);
  REQUIRE(d.mu_ab == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(d.a_tilde.cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE(d.b_tilde.cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE((d.A_tilde * d.B_tilde.transpose()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("ame_decompose of a doubly centered matrix has no additive part", "[lowrank]") {
  Rng rng(9);
  const int n = 6;
  MatrixXd m = random_matrix(n, n, rng);
  MatrixXd h = MatrixXd::Identity(n, n) - MatrixXd::Constant(n, n, 1.0 / n);
  MatrixXd centered = h * m * h;  // zero row and column means
  RankKDecomposition d = ame_decompose(centered, n);
  REQUIRE(std::abs(d.mu_ab) < 1e-10);
  REQUIRE(d.a_tilde.cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE(d.b_tilde.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("ame_decompose reconstructs the rank-k approximation", "[lowrank]") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 8;
    const int k = 1 + static_cast<int>(rng.uniform_int(4));
    MatrixXd m = random_matrix(n, n, rng);
    RankKDecomposition d = ame_decompose(m, k);
    MatrixXd target = truncated_svd(m, k).reconstruct();
    REQUIRE((d.reconstruct() - target).cwiseAbs().maxCoeff() < 1e-10);
    // Column means of the multiplicative parts vanish.
    REQUIRE(d.A_tilde.colwise().mean().cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE(d.B_tilde.colwise().mean().cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("scree proportions follow the squared singular values", "[lowrank]") {
  Rng rng(13);
  // Build a matrix with known singular values (2, 1, 1).
  MatrixXd q1 = Eigen::HouseholderQR<MatrixXd>(random_matrix(5, 3, rng)).householderQ() *
                MatrixXd::Identity(5, 3);
  MatrixXd q2 = Eigen::HouseholderQR<MatrixXd>(random_matrix(5, 3, rng)).householderQ() *
                MatrixXd::Identity(5, 3);
  VectorXd sv(3);
  sv << 2.0, 1.0, 1.0;
  MatrixXd m = q1 * sv.asDiagonal() * q2.transpose();
  ScreeProfile scree = scree_proportions(m, 3);
  REQUIRE(scree.proportions[0] == Catch::Approx(4.0 / 6.0).margin(1e-10));
  REQUIRE(scree.proportions[1] == Catch::Approx(1.0 / 6.0).margin(1e-10));
  REQUIRE(scree.proportions[2] == Catch::Approx(1.0 / 6.0).margin(1e-10));
  REQUIRE(scree.proportions.sum() == Catch::Approx(1.0).margin(1e-10));
  REQUIRE(scree.suggested_rank(0.9) == 3);
  REQUIRE(scree.suggested_rank(0.6) == 1);
}

TEST_CASE("scree of a rank-one matrix is concentrated", "[lowrank]") {
  VectorXd a = VectorXd::Random(6), b = VectorXd::Random(6);
  ScreeProfile scree = scree_proportions(a * b.transpose(), 4);
  REQUIRE(scree.proportions[0] == Catch::Approx(1.0).margin(1e-10));
  for (int i = 1; i < 4; ++i) REQUIRE(scree.proportions[i] == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("scree is scale invariant", "[lowrank]") {
  Rng rng(17);
  MatrixXd m = random_matrix(6, 6, rng);
  ScreeProfile s1 = scree_proportions(m, 4);
  ScreeProfile s2 = scree_proportions(-3.7 * m, 4);
  REQUIRE((s1.proportions - s2.proportions).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("extract_factors depends only on the posterior summaries", "[lowrank]") {
  Rng rng(19);
  const int n = 8, k = 2;
  VectorXd a = VectorXd::Random(n), b = VectorXd::Random(n);
  MatrixXd u = random_matrix(n, k, rng), v = random_matrix(n, k, rng);
  MatrixXd uv = u * v.transpose();

  LatentFactors f = extract_factors(a, b, uv, k);
  REQUIRE((f.a - a).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((f.b - b).cwiseAbs().maxCoeff() == 0.0);
  // The extracted product reproduces the posterior-mean product.
  REQUIRE((f.U * f.V.transpose() - uv).cwiseAbs().maxCoeff() < 1e-10);
  // Sign convention: each U column's largest-magnitude entry is positive.
  for (int j = 0; j < k; ++j) {
    int idx = 0;
    f.U.col(j).cwiseAbs().maxCoeff(&idx);
    REQUIRE(f.U(idx, j) > 0.0);
  }
  // Invariance: any factor pair with the same product yields the same output.
  MatrixXd g(k, k);
  g << 2.0, 0.3, -0.5, 1.5;
  LatentFactors f2 = extract_factors(a, b, (u * g.transpose()) * (v * g.inverse()).transpose(), k);
  REQUIRE((f2.U - f.U).cwiseAbs().maxCoeff() < 1e-8);
  REQUIRE((f2.V - f.V).cwiseAbs().maxCoeff() < 1e-8);

  LatentFactors zero = extract_factors(a, b, MatrixXd::Zero(n, n), k);
  REQUIRE(zero.U.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(zero.V.cwiseAbs().maxCoeff() == 0.0);

  REQUIRE_THROWS_AS(extract_factors(a, b, uv, n + 1), ValidationError);
  // The stacked factor matrix is [a, b, U, V].
  MatrixXd nm = f.as_matrix();
  REQUIRE(nm.cols() == 2 + 2 * k);
  REQUIRE((nm.col(0) - a).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("three dominant factors dominate the scree profile", "[lowrank]") {
  Rng rng(23);
  const int n = 40;
  MatrixXd m = MatrixXd::Zero(n, n);
  for (int f = 0; f < 3; ++f) {
    VectorXd u(n), v(n);
    for (int i = 0; i < n; ++i) {
      u[i] = rng.normal() * (3.0 - 0.5 * f);
      v[i] = rng.normal();
    }
    m += u * v.transpose();
  }
  m += 0.05 * random_matrix(n, n, rng);  // weak residual structure
  ScreeProfile scree = scree_proportions(m, 8);
  REQUIRE(scree.proportions.head(3).sum() > 0.9);
  REQUIRE(scree.suggested_rank(0.9) <= 3);
}
