#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "netfactor/errors.hpp"
#include "netfactor/rng.hpp"

namespace netfactor {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

/// Lower Cholesky factor with jitter escalation (1e-10 -> 1e-6 of the mean
/// diagonal) before giving up.
inline MatrixXd chol_lower(const MatrixXd& A) {
  const double scale = std::max(A.diagonal().mean(), 1e-300);
  double jitter = 0.0;
  for (int attempt = 0; attempt < 4; ++attempt) {
    MatrixXd Aj = A;
    if (jitter > 0.0) Aj.diagonal().array() += jitter;
    Eigen::LLT<MatrixXd> llt(Aj);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    jitter = (jitter == 0.0) ? 1e-10 * scale : jitter * 100.0;
  }
  throw NumericalError("chol_lower: matrix not positive definite after jitter escalation");
}

inline double log_det_from_chol(const MatrixXd& L) {
  return 2.0 * L.diagonal().array().log().sum();
}

/// Draw from N(mean, L L^T) given the lower Cholesky factor L.
inline VectorXd mvn_sample_chol(const VectorXd& mean, const MatrixXd& L, Rng& rng) {
  VectorXd z(mean.size());
  for (int i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mean + L * z;
}

inline VectorXd mvn_sample(const VectorXd& mean, const MatrixXd& cov, Rng& rng) {
  return mvn_sample_chol(mean, chol_lower(cov), rng);
}

/// Draw from the Gaussian with precision P and linear term h, i.e.
/// N(P^{-1} h, P^{-1}).
inline VectorXd mvn_sample_precision(const MatrixXd& P, const VectorXd& h, Rng& rng) {
  MatrixXd L = chol_lower(P);
  VectorXd mean = L.transpose().triangularView<Eigen::Upper>().solve(
      L.triangularView<Eigen::Lower>().solve(h));
  VectorXd z(h.size());
  for (int i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mean + L.transpose().triangularView<Eigen::Upper>().solve(z);
}

inline double log_mvn_density(const VectorXd& x, const MatrixXd& L_cov) {
  VectorXd w = L_cov.triangularView<Eigen::Lower>().solve(x);
  return -0.5 * (x.size() * std::log(2.0 * M_PI) + log_det_from_chol(L_cov) + w.squaredNorm());
}

/// Wishart(df, S) draw with E[W] = df * S, via Bartlett decomposition.
inline MatrixXd wishart_sample(double df, const MatrixXd& S, Rng& rng) {
  const int d = static_cast<int>(S.rows());
  if (df < d) throw ValidationError("wishart_sample: df below dimension");
  MatrixXd L = chol_lower(S);
  MatrixXd A = MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    A(i, i) = std::sqrt(rng.chi_squared(df - i));
    for (int j = 0; j < i; ++j) A(i, j) = rng.normal();
  }
  MatrixXd LA = L * A;
  return LA * LA.transpose();
}

/// Inverse-Wishart(df, G) draw: Sigma with Sigma^{-1} ~ Wishart(df, G^{-1}).
inline MatrixXd inverse_wishart_sample(double df, const MatrixXd& G, Rng& rng) {
  MatrixXd Ginv = chol_lower(G);
  MatrixXd I = MatrixXd::Identity(G.rows(), G.cols());
  MatrixXd Ginv_full = Ginv.transpose().triangularView<Eigen::Upper>().solve(
      Ginv.triangularView<Eigen::Lower>().solve(I));
  MatrixXd W = wishart_sample(df, Ginv_full, rng);
  MatrixXd Lw = chol_lower(W);
  MatrixXd Sigma = Lw.transpose().triangularView<Eigen::Upper>().solve(
      Lw.triangularView<Eigen::Lower>().solve(I));
  return 0.5 * (Sigma + Sigma.transpose());
}

/// Symmetric positive-definite square root (and inverse square root).
inline void sym_sqrt(const MatrixXd& A, MatrixXd& root, MatrixXd& inv_root,
                     double cond_limit = 1e12) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(A);
  if (es.info() != Eigen::Success) throw NumericalError("sym_sqrt: eigendecomposition failed");
  const VectorXd& ev = es.eigenvalues();
  if (ev.minCoeff() <= 0.0 || ev.maxCoeff() / ev.minCoeff() > cond_limit)
    throw NumericalError("sym_sqrt: matrix singular or condition number above limit");
  VectorXd s = ev.array().sqrt();
  root = es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
  inv_root = es.eigenvectors() * s.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

/// Coefficients and covariance of x_A | x_B for x ~ N(0, Sigma):
/// E[x_A|x_B] = coef * x_B, Cov = cond_cov.
struct GaussianConditional {
  MatrixXd coef;
  MatrixXd cond_cov;
};

inline GaussianConditional gaussian_condition(const MatrixXd& Sigma,
                                              const std::vector<int>& targets,
                                              const std::vector<int>& given) {
  const int na = static_cast<int>(targets.size());
  const int nb = static_cast<int>(given.size());
  GaussianConditional out;
  if (nb == 0) {
    out.coef = MatrixXd::Zero(na, 0);
    out.cond_cov = MatrixXd(na, na);
    for (int i = 0; i < na; ++i)
      for (int j = 0; j < na; ++j) out.cond_cov(i, j) = Sigma(targets[i], targets[j]);
    return out;
  }
  MatrixXd Saa(na, na), Sab(na, nb), Sbb(nb, nb);
  for (int i = 0; i < na; ++i) {
    for (int j = 0; j < na; ++j) Saa(i, j) = Sigma(targets[i], targets[j]);
    for (int j = 0; j < nb; ++j) Sab(i, j) = Sigma(targets[i], given[j]);
  }
  for (int i = 0; i < nb; ++i)
    for (int j = 0; j < nb; ++j) Sbb(i, j) = Sigma(given[i], given[j]);
  MatrixXd L = chol_lower(Sbb);
  MatrixXd SbbInvSba = L.transpose().triangularView<Eigen::Upper>().solve(
      L.triangularView<Eigen::Lower>().solve(Sab.transpose()));
  out.coef = SbbInvSba.transpose();
  out.cond_cov = Saa - out.coef * Sab.transpose();
  out.cond_cov = 0.5 * (out.cond_cov + out.cond_cov.transpose());
  return out;
}

}  // namespace netfactor
