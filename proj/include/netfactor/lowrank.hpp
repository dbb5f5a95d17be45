#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>

#include "netfactor/errors.hpp"

namespace netfactor {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct TruncatedSvd {
  MatrixXd left;             // n x k, orthonormal columns
  VectorXd singular_values;  // k, non-negative, non-increasing
  MatrixXd right;            // m x k, orthonormal columns

  MatrixXd reconstruct() const { return left * singular_values.asDiagonal() * right.transpose(); }
};

/// Leading k terms of the SVD; the product of the parts is the best rank-k
/// approximation in squared-error loss.
inline TruncatedSvd truncated_svd(const MatrixXd& m, int k) {
  if (!m.allFinite()) throw ValidationError("truncated_svd: non-finite entries");
  const int kmax = static_cast<int>(std::min(m.rows(), m.cols()));
  if (k < 1 || k > kmax) throw ValidationError("truncated_svd: rank out of range");
  Eigen::BDCSVD<MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  TruncatedSvd out;
  out.left = svd.matrixU().leftCols(k);
  out.singular_values = svd.singularValues().head(k);
  out.right = svd.matrixV().leftCols(k);
  return out;
}

/// Mean / additive / multiplicative split of the best rank-k approximation:
///   Mhat = mu_ab 11' + a_tilde 1' + 1 b_tilde' + A_tilde B_tilde'
/// with mean-zero columns in A_tilde, B_tilde and singular values absorbed
/// as square roots into both factor matrices.
struct RankKDecomposition {
  double mu_ab = 0.0;
  VectorXd a_tilde;
  VectorXd b_tilde;
  MatrixXd A_tilde;
  MatrixXd B_tilde;

  MatrixXd reconstruct() const {
    const auto n = a_tilde.size();
    return MatrixXd::Constant(n, n, mu_ab) + a_tilde * Eigen::RowVectorXd::Ones(n) +
           VectorXd::Ones(n) * b_tilde.transpose() + A_tilde * B_tilde.transpose();
  }
};

inline RankKDecomposition ame_decompose(const MatrixXd& m, int k) {
  if (m.rows() != m.cols()) throw ValidationError("ame_decompose: matrix must be square");
  TruncatedSvd svd = truncated_svd(m, k);
  VectorXd root = svd.singular_values.array().sqrt();
  MatrixXd A_breve = svd.left * root.asDiagonal();
  MatrixXd B_breve = svd.right * root.asDiagonal();
  VectorXd mu_a = A_breve.colwise().mean().transpose();
  VectorXd mu_b = B_breve.colwise().mean().transpose();
  RankKDecomposition out;
  out.A_tilde = A_breve.rowwise() - mu_a.transpose();
  out.B_tilde = B_breve.rowwise() - mu_b.transpose();
  out.a_tilde = out.A_tilde * mu_b;
  out.b_tilde = out.B_tilde * mu_a;
  out.mu_ab = mu_a.dot(mu_b);
  return out;
}

/// Proportion of squared-singular-value variation per factor of a
/// posterior-mean multiplicative effect; the factor-dimension analogue of a
/// scree plot.
struct ScreeProfile {
  VectorXd proportions;  // non-negative, non-increasing, sums to 1

  /// Smallest k whose cumulative proportion exceeds the cutoff.
  int suggested_rank(double cumulative_cutoff = 0.9) const {
    double acc = 0.0;
    for (int i = 0; i < proportions.size(); ++i) {
      acc += proportions[i];
      if (acc > cumulative_cutoff) return i + 1;
    }
    return static_cast<int>(proportions.size());
  }
};

inline ScreeProfile scree_proportions(const MatrixXd& m_mean, int k_max) {
  if (k_max < 1 || k_max > std::min(m_mean.rows(), m_mean.cols()))
    throw ValidationError("scree_proportions: k_max out of range");
  if (!m_mean.allFinite()) throw ValidationError("scree_proportions: non-finite entries");
  Eigen::BDCSVD<MatrixXd> svd(m_mean);
  VectorXd sq = svd.singularValues().head(k_max).array().square();
  double total = sq.sum();
  ScreeProfile out;
  if (total <= 0.0) {
    out.proportions = VectorXd::Zero(k_max);
    if (k_max > 0) out.proportions[0] = 1.0;
    return out;
  }
  out.proportions = sq / total;
  return out;
}

/// Node-level network factors: additive sender/receiver effects and
/// k-dimensional multiplicative sender/receiver factors.
struct LatentFactors {
  VectorXd a;
  VectorXd b;
  MatrixXd U;
  MatrixXd V;

  int n() const { return static_cast<int>(a.size()); }
  int k() const { return static_cast<int>(U.cols()); }

  /// The n x (2k+2) factor matrix [a, b, U, V].
  MatrixXd as_matrix() const {
    MatrixXd m(n(), 2 + 2 * k());
    m.col(0) = a;
    m.col(1) = b;
    m.middleCols(2, k()) = U;
    m.middleCols(2 + k(), k()) = V;
    return m;
  }
};

/// Point-estimate factors from posterior summaries: additive effects are the
/// posterior means; multiplicative factors are the first k singular vectors
/// of the posterior mean of UV', scaled by the square roots of the singular
/// values, with each U column's largest-magnitude entry made positive.
inline LatentFactors extract_factors(const VectorXd& a_mean, const VectorXd& b_mean,
                                     const MatrixXd& uv_mean, int k) {
  LatentFactors f;
  f.a = a_mean;
  f.b = b_mean;
  const int n = static_cast<int>(uv_mean.rows());
  if (k < 1 || k > n) throw ValidationError("extract_factors: rank exceeds available dimension");
  if (uv_mean.norm() == 0.0) {
    f.U = MatrixXd::Zero(n, k);
    f.V = MatrixXd::Zero(n, k);
    return f;
  }
  TruncatedSvd svd = truncated_svd(uv_mean, k);
  VectorXd root = svd.singular_values.array().sqrt();
  f.U = svd.left * root.asDiagonal();
  f.V = svd.right * root.asDiagonal();
  for (int j = 0; j < k; ++j) {
    int idx = 0;
    f.U.col(j).cwiseAbs().maxCoeff(&idx);
    if (f.U(idx, j) < 0.0) {
      f.U.col(j) = -f.U.col(j);
      f.V.col(j) = -f.V.col(j);
    }
  }
  return f;
}

}  // namespace netfactor
