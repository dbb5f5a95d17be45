#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "netfactor/errors.hpp"
#include "netfactor/linalg.hpp"
#include "netfactor/links.hpp"
#include "netfactor/lowrank.hpp"
#include "netfactor/relational_data.hpp"
#include "netfactor/rng.hpp"

namespace netfactor {

using Eigen::Matrix2d;
using Eigen::Vector2d;

struct PriorConfig {
  double sigma_e_shape = 0.5;     // gamma(1/2, 1/2) on the error precision
  double sigma_e_rate = 0.5;
  int wishart_df = 0;             // 0 = default p + 2 + 2k + 1
  MatrixXd Sigma_X0;              // empty = ridge-inflated empirical covariance of X
  double rho_proposal_sd = 0.05;  // Metropolis step size, adapted during burn-in
  bool adapt_rho = true;
  double mu_beta_prior_var = 100.0;  // N(0, v) prior on mu and the dyadic coefficients

  void validate() const {
    if (!(sigma_e_shape > 0.0) || !(sigma_e_rate > 0.0))
      throw ValidationError("PriorConfig: sigma_e hyperparameters must be positive");
    if (!(rho_proposal_sd > 0.0)) throw ValidationError("PriorConfig: rho_proposal_sd must be positive");
    if (!(mu_beta_prior_var > 0.0)) throw ValidationError("PriorConfig: mu_beta_prior_var must be positive");
    if (wishart_df < 0) throw ValidationError("PriorConfig: wishart_df must be non-negative");
  }
};

struct McmcSchedule {
  int iterations = 4000;
  int burn_in = 500;
  int thin = 5;
  std::uint64_t seed = 1;

  int stored() const { return (iterations - burn_in) / thin; }

  void validate() const {
    if (iterations <= 0 || burn_in < 0 || thin <= 0 || burn_in >= iterations)
      throw ValidationError("McmcSchedule: need 0 <= burn_in < iterations and thin > 0");
  }
};

enum class SamplerMode { joint, network_only };

/// One MCMC iterate of the joint network-attribute model.
struct ModelState {
  double mu = 0.0;
  VectorXd beta;     // dyadic covariate coefficients
  VectorXd a, b;     // additive sender/receiver effects
  MatrixXd U, V;     // multiplicative factors, n x k
  MatrixXd Z;        // latent continuous relations (diagonal unused)
  MatrixXd X;        // completed attributes (imputed at missing entries)
  double sigma2_e = 1.0;
  double rho = 0.0;
  MatrixXd Sigma_XN;  // joint covariance of (x, a, b, u, v); (a,b,u,v) block only in network mode
};

/// Regression coefficients of the factors on the attributes implied by
/// Sigma_XN. The bilinear attribute-interaction coefficient matrix
/// beta_U_x' beta_V_x has rank at most min(p, k).
struct ConditionalCoefficients {
  VectorXd beta_a_x;
  VectorXd beta_b_x;
  MatrixXd beta_U_x;  // k x p
  MatrixXd beta_V_x;  // k x p
};

/// Geyer initial-positive-sequence effective sample size.
inline double effective_sample_size(const std::vector<double>& x) {
  const int s = static_cast<int>(x.size());
  if (s < 4) return s;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= s;
  auto gamma_lag = [&](int t) {
    double acc = 0.0;
    for (int i = 0; i + t < s; ++i) acc += (x[i] - mean) * (x[i + t] - mean);
    return acc / s;
  };
  const double g0 = gamma_lag(0);
  if (g0 <= 0.0) return s;
  double var_est = -g0;
  for (int m = 0; 2 * m + 1 < s; ++m) {
    double pair = gamma_lag(2 * m) + gamma_lag(2 * m + 1);
    if (pair <= 0.0) break;
    var_est += 2.0 * pair;
  }
  if (var_est <= 0.0) return s;
  return std::min(static_cast<double>(s), s * g0 / var_est);
}

/// Thinned posterior draws plus running summaries of the quantities the
/// factor extraction and imputation consumers need.
struct PosteriorSamples {
  int n = 0, p = 0, q = 0, k = 0;
  SamplerMode mode = SamplerMode::network_only;
  RelationKind kind = RelationKind::continuous;
  bool restrict_ab_uv = false;
  McmcSchedule schedule;

  std::vector<double> mu, sigma2_e, rho;
  MatrixXd beta;  // stored x q
  MatrixXd a, b;  // stored x n
  std::vector<MatrixXd> U, V;
  std::vector<MatrixXd> Sigma_XN;

  VectorXd a_mean, b_mean;
  MatrixXd uv_mean;
  MatrixXd x_imputed_mean;  // n x p, meaningful where x_missing
  MatrixXd y_imputed_mean;  // n x n, meaningful where y_missing
  BoolMatrix x_missing, y_missing;

  double rho_acceptance = 0.0;
  double rho_proposal_sd_final = 0.0;

  int count() const { return static_cast<int>(mu.size()); }

  std::map<std::string, double> effective_sample_sizes() const {
    std::map<std::string, double> out;
    out["mu"] = effective_sample_size(mu);
    out["sigma2_e"] = effective_sample_size(sigma2_e);
    out["rho"] = effective_sample_size(rho);
    auto column_ess = [&](const MatrixXd& m, const std::string& prefix) {
      for (int j = 0; j < m.cols(); ++j) {
        std::vector<double> trace(m.rows());
        for (int i = 0; i < m.rows(); ++i) trace[i] = m(i, j);
        out[prefix + std::to_string(j + 1)] = effective_sample_size(trace);
      }
    };
    column_ess(beta, "beta_");
    column_ess(a, "a_");
    column_ess(b, "b_");
    return out;
  }
};

/// Point-estimate factors from a fitted chain (posterior means of a, b and
/// the truncated SVD of the posterior mean of UV').
inline LatentFactors extract_factors(const PosteriorSamples& posterior, int k) {
  if (posterior.count() == 0) throw ValidationError("extract_factors: empty posterior");
  return extract_factors(posterior.a_mean, posterior.b_mean, posterior.uv_mean, k);
}

inline ConditionalCoefficients conditional_coefficients(const MatrixXd& Sigma_XN, int p, int k) {
  const int dim = p + 2 + 2 * k;
  if (Sigma_XN.rows() != dim || p < 1)
    throw ValidationError("conditional_coefficients: need a joint covariance with an attribute block");
  std::vector<int> nidx(2 + 2 * k), xidx(p);
  for (int i = 0; i < 2 + 2 * k; ++i) nidx[i] = p + i;
  for (int j = 0; j < p; ++j) xidx[j] = j;
  GaussianConditional cond = gaussian_condition(Sigma_XN, nidx, xidx);
  ConditionalCoefficients out;
  out.beta_a_x = cond.coef.row(0).transpose();
  out.beta_b_x = cond.coef.row(1).transpose();
  out.beta_U_x = cond.coef.middleRows(2, k);
  out.beta_V_x = cond.coef.middleRows(2 + k, k);
  return out;
}

/// E[y_ij | x_i, x_j] under the joint model: mu + beta_a'x_i + beta_b'x_j +
/// x_i' beta_U' beta_V x_j.
inline double conditional_expectation(const VectorXd& x_i, const VectorXd& x_j,
                                      const ModelState& state, int p, int k) {
  ConditionalCoefficients c = conditional_coefficients(state.Sigma_XN, p, k);
  return state.mu + c.beta_a_x.dot(x_i) + c.beta_b_x.dot(x_j) +
         x_i.dot(c.beta_U_x.transpose() * c.beta_V_x * x_j);
}

namespace detail {

inline Matrix2d inv2_spd(const Matrix2d& m, const char* what) {
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  if (!(m(0, 0) > 0.0) || !(det > 0.0)) throw NumericalError(std::string(what) + ": 2x2 block not positive definite");
  Matrix2d inv;
  inv << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
  return inv / det;
}

inline Matrix2d chol2_lower(const Matrix2d& m, const char* what) {
  if (!(m(0, 0) > 0.0)) throw NumericalError(std::string(what) + ": 2x2 block not positive definite");
  Matrix2d L = Matrix2d::Zero();
  L(0, 0) = std::sqrt(m(0, 0));
  L(1, 0) = m(1, 0) / L(0, 0);
  const double d = m(1, 1) - L(1, 0) * L(1, 0);
  if (!(d > 0.0)) throw NumericalError(std::string(what) + ": 2x2 block not positive definite");
  L(1, 1) = std::sqrt(d);
  return L;
}

}  // namespace detail

/// The exchangeable Gaussian full conditional of the stacked additive
/// effects given everything else: precision I (x) C + (11' - I) (x) D over
/// per-node blocks (a_i, b_i), linear term column i = h.col(i).
struct AbFullConditional {
  Matrix2d C;
  Matrix2d D;
  MatrixXd h;  // 2 x n

  /// Solve (precision) * theta = rhs for a 2 x n right-hand side.
  MatrixXd solve(const MatrixXd& rhs) const {
    const int n = static_cast<int>(rhs.cols());
    Matrix2d CmD = C - D;
    Matrix2d Cn = C + (n - 1.0) * D;
    Matrix2d CmD_inv = detail::inv2_spd(CmD, "ab_full_conditional");
    Matrix2d Cn_inv = detail::inv2_spd(Cn, "ab_full_conditional");
    Vector2d total = rhs.rowwise().sum();
    Vector2d block_sum = Cn_inv * total;
    return CmD_inv * (rhs - (D * block_sum).replicate(1, n));
  }

  MatrixXd mean() const { return solve(h); }
};

/// Gibbs/Metropolis engine for the additive-plus-multiplicative effects
/// network model, network-only or joint with nodal attributes. A sampler is
/// immutable once constructed; chains run against caller-owned ModelState
/// and Rng, so independent chains can execute concurrently.
class AmeSampler {
 public:
  AmeSampler(RelationalMatrix y, std::optional<AttributeMatrix> x, std::vector<DyadCovariate> w,
             int k, PriorConfig prior = {}, SamplerMode mode = SamplerMode::network_only,
             bool restrict_ab_uv = false)
      : y_(std::move(y)),
        x_(std::move(x)),
        w_(std::move(w)),
        k_(k),
        prior_(std::move(prior)),
        mode_(mode),
        restrict_ab_uv_(restrict_ab_uv) {
    y_.validate();
    prior_.validate();
    n_ = y_.n;
    if (k_ < 1 || k_ >= n_) throw ValidationError("AmeSampler: factor dimension must satisfy 1 <= k < n");
    if (mode_ == SamplerMode::joint) {
      if (!x_) throw ValidationError("AmeSampler: joint mode requires attributes");
      x_->validate();
      if (x_->n != n_) throw ValidationError("AmeSampler: attribute rows do not match network size");
      p_ = x_->p;
    } else {
      p_ = 0;
    }
    if (restrict_ab_uv_ && mode_ == SamplerMode::joint)
      throw ValidationError("AmeSampler: the restricted ab/uv covariance applies to network-only mode");
    q_ = static_cast<int>(w_.size());
    for (const auto& cov : w_) cov.validate(n_);
    dim_ = p_ + 2 + 2 * k_;
    if (n_ < 2) throw ValidationError("AmeSampler: need at least two nodes");
    nu0_ = (prior_.wishart_df > 0) ? prior_.wishart_df : dim_ + 1;

    y_has_missing_ = !y_.fully_observed_offdiag();
    x_has_missing_ = false;
    if (x_) {
      for (int i = 0; i < n_ && !x_has_missing_; ++i)
        for (int j = 0; j < p_; ++j)
          if (!x_->observed(i, j)) {
            x_has_missing_ = true;
            break;
          }
    }

    build_regression_sums();
    build_prior_scale();
    if (y_.kind == RelationKind::rank) build_rank_rows();
  }

  int n() const { return n_; }
  int p() const { return p_; }
  int q() const { return q_; }
  int k() const { return k_; }
  int latent_dim() const { return dim_; }
  SamplerMode mode() const { return mode_; }
  const RelationalMatrix& network() const { return y_; }
  const std::optional<AttributeMatrix>& attributes() const { return x_; }
  const PriorConfig& prior() const { return prior_; }
  double wishart_df() const { return nu0_; }
  const MatrixXd& wishart_prior_scale() const { return G0_; }
  bool network_has_missing() const { return y_has_missing_; }
  bool attributes_have_missing() const { return x_has_missing_; }

  /// mu + sum_c beta_c W_c + a1' + 1b' + UV' (diagonal meaningless).
  MatrixXd mean_matrix(const ModelState& s) const {
    MatrixXd m = MatrixXd::Constant(n_, n_, s.mu);
    for (int c = 0; c < q_; ++c) m += s.beta[c] * w_[c].values;
    m += s.a * Eigen::RowVectorXd::Ones(n_) + VectorXd::Ones(n_) * s.b.transpose();
    m += s.U * s.V.transpose();
    return m;
  }

  /// Stacked per-node coordinates (x_i, a_i, b_i, u_i, v_i) as rows.
  MatrixXd node_rows(const ModelState& s) const {
    MatrixXd rows(n_, dim_);
    if (p_ > 0) rows.leftCols(p_) = s.X;
    rows.col(p_) = s.a;
    rows.col(p_ + 1) = s.b;
    rows.middleCols(p_ + 2, k_) = s.U;
    rows.middleCols(p_ + 2 + k_, k_) = s.V;
    return rows;
  }

  // ---------------------------------------------------------------------
  // Initialization
  // ---------------------------------------------------------------------

  ModelState init_state(Rng& rng) const {
    ModelState s;
    s.beta = VectorXd::Zero(q_);
    s.Z = MatrixXd::Zero(n_, n_);
    init_latent_relations(s.Z, rng);

    // Completed attributes: observed values, zeros at missing entries
    // (columns are centered, so zero is the observed-column mean).
    if (p_ > 0) {
      s.X = MatrixXd::Zero(n_, p_);
      for (int i = 0; i < n_; ++i)
        for (int j = 0; j < p_; ++j)
          if (x_->observed(i, j)) s.X(i, j) = x_->values(i, j);
    }

    double offdiag_mean = 0.0;
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j)
        if (i != j) offdiag_mean += s.Z(i, j);
    offdiag_mean /= static_cast<double>(n_) * (n_ - 1);
    MatrixXd centered = s.Z.array() - offdiag_mean;
    centered.diagonal().setZero();
    RankKDecomposition dec = ame_decompose(centered, k_);
    s.mu = offdiag_mean + dec.mu_ab;
    s.a = dec.a_tilde;
    s.b = dec.b_tilde;
    s.U = dec.A_tilde;
    s.V = dec.B_tilde;

    MatrixXd recon = mean_matrix(s);
    double ss = 0.0;
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j)
        if (i != j) ss += (s.Z(i, j) - recon(i, j)) * (s.Z(i, j) - recon(i, j));
    s.sigma2_e = std::max(ss / (static_cast<double>(n_) * (n_ - 1)), 1e-4);
    s.rho = 0.0;

    MatrixXd rows = node_rows(s);
    MatrixXd emp = rows.transpose() * rows / static_cast<double>(n_);
    double ridge = std::max(1e-3 * emp.diagonal().mean(), 1e-6);
    emp.diagonal().array() += ridge;
    s.Sigma_XN = emp;
    return s;
  }

  // ---------------------------------------------------------------------
  // Step 1: joint conjugate draw of (mu, beta) and all (a_i, b_i)
  // ---------------------------------------------------------------------

  /// The (a,b) full conditional given the current mu/beta and everything
  /// else; exposed for oracle tests.
  AbFullConditional ab_full_conditional(const ModelState& s) const {
    const double w = 1.0 / (s.sigma2_e * (1.0 - s.rho * s.rho));
    const double wr = w * s.rho;
    MatrixXd T = s.Z - s.U * s.V.transpose();
    for (int c = 0; c < q_; ++c) T -= s.beta[c] * w_[c].values;
    T.array() -= s.mu;
    T.diagonal().setZero();

    AbFullConditional fc;
    prior_ab_pieces(s, fc.C, fc.h);
    VectorXd rs = T.rowwise().sum();
    VectorXd cs = T.colwise().sum().transpose();
    fc.h.row(0) += (w * rs - wr * cs).transpose();
    fc.h.row(1) += (w * cs - wr * rs).transpose();
    fc.C += (n_ - 1.0) * (Matrix2d() << w, -wr, -wr, w).finished();
    fc.D << -wr, w, w, -wr;
    return fc;
  }

  /// Samples (mu, beta, a, b) from their joint normal full conditional.
  void update_additive(ModelState& s, Rng& rng) const {
    const int gdim = 1 + q_;
    const double w = 1.0 / (s.sigma2_e * (1.0 - s.rho * s.rho));
    const double wr = w * s.rho;

    MatrixXd T = s.Z - s.U * s.V.transpose();
    T.diagonal().setZero();

    // Prior pieces for (a_i, b_i) | (x_i, u_i, v_i).
    Matrix2d Q;
    MatrixXd h(2, n_);
    prior_ab_pieces(s, Q, h);

    VectorXd rs = T.rowwise().sum();
    VectorXd cs = T.colwise().sum().transpose();
    h.row(0) += (w * rs - wr * cs).transpose();
    h.row(1) += (w * cs - wr * rs).transpose();

    AbFullConditional fc;
    fc.C = Q + (n_ - 1.0) * (Matrix2d() << w, -wr, -wr, w).finished();
    fc.D << -wr, w, w, -wr;
    fc.h = h;

    // Regression block: precision, linear term, and coupling to (a, b).
    MatrixXd P_gg = w * Sgg_same_ - wr * Sgg_cross_;
    P_gg.diagonal().array() += 1.0 / prior_.mu_beta_prior_var;
    VectorXd h_g(gdim);
    for (int c = 0; c < gdim; ++c) {
      const MatrixXd& gc = (c == 0) ? ones_ : w_[c - 1].values;
      h_g[c] = w * (gc.cwiseProduct(T)).sum() - wr * (gc.cwiseProduct(T.transpose())).sum();
    }
    // Coupling columns: node i block for gamma component c is
    // (w Ga_ic - wr Gb_ic, w Gb_ic - wr Ga_ic).
    std::vector<MatrixXd> coupling(gdim);
    for (int c = 0; c < gdim; ++c) {
      MatrixXd col(2, n_);
      col.row(0) = (w * Ga_.col(c) - wr * Gb_.col(c)).transpose();
      col.row(1) = (w * Gb_.col(c) - wr * Ga_.col(c)).transpose();
      coupling[c] = col;
    }

    // Schur complement for the regression block.
    MatrixXd S_g = P_gg;
    VectorXd rhs_g = h_g;
    MatrixXd h_solved = fc.solve(h);
    std::vector<MatrixXd> coup_solved(gdim);
    for (int c = 0; c < gdim; ++c) coup_solved[c] = fc.solve(coupling[c]);
    for (int c = 0; c < gdim; ++c) {
      rhs_g[c] -= (coupling[c].cwiseProduct(h_solved)).sum();
      for (int c2 = 0; c2 <= c; ++c2) {
        double v = (coupling[c].cwiseProduct(coup_solved[c2])).sum();
        S_g(c, c2) -= v;
        if (c2 != c) S_g(c2, c) -= v;
      }
    }
    VectorXd gamma = mvn_sample_precision(S_g, rhs_g, rng);
    s.mu = gamma[0];
    s.beta = gamma.tail(q_);

    // (a, b) | gamma.
    MatrixXd h2 = h;
    for (int c = 0; c < gdim; ++c) h2 -= gamma[c] * coupling[c];
    fc.h = h2;
    MatrixXd mean = fc.mean();

    Matrix2d cov_perp = detail::inv2_spd(fc.C - fc.D, "update_additive");
    Matrix2d cov_one = detail::inv2_spd(fc.C + (n_ - 1.0) * fc.D, "update_additive");
    Matrix2d L_perp = detail::chol2_lower(cov_perp, "update_additive");
    Matrix2d L_one = detail::chol2_lower(cov_one, "update_additive");
    MatrixXd eps(2, n_);
    for (int i = 0; i < n_; ++i) {
      Vector2d z(rng.normal(), rng.normal());
      eps.col(i) = L_perp * z;
    }
    Vector2d eps_bar = eps.rowwise().mean();
    Vector2d eta = L_one * Vector2d(rng.normal(), rng.normal());
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n_));
    MatrixXd theta = mean + eps;
    theta.colwise() -= eps_bar;
    theta.colwise() += (inv_sqrt_n * eta).eval();
    s.a = theta.row(0).transpose();
    s.b = theta.row(1).transpose();
  }

  // ---------------------------------------------------------------------
  // Step 2: covariance of (x, a, b, u, v)
  // ---------------------------------------------------------------------

  /// Inverse-Wishart full conditional: df nu0 + n, scale G0 + sum w_i w_i'.
  void update_cov(ModelState& s, Rng& rng) const {
    MatrixXd rows = node_rows(s);
    MatrixXd scatter = rows.transpose() * rows;
    if (restrict_ab_uv_) {
      // Separate inverse-Wishart draws for the (a,b) and (u,v) blocks.
      MatrixXd Sigma = MatrixXd::Zero(dim_, dim_);
      MatrixXd Gab = MatrixXd::Identity(2, 2) + scatter.block(0, 0, 2, 2);
      Sigma.block(0, 0, 2, 2) = inverse_wishart_sample(3.0 + n_, Gab, rng);
      const int f = 2 * k_;
      MatrixXd Guv = MatrixXd::Identity(f, f) + scatter.block(2, 2, f, f);
      Sigma.block(2, 2, f, f) = inverse_wishart_sample(f + 1.0 + n_, Guv, rng);
      s.Sigma_XN = Sigma;
    } else {
      s.Sigma_XN = inverse_wishart_sample(nu0_ + n_, G0_ + scatter, rng);
    }
  }

  /// The full-conditional pieces, exposed so tests can check the n = 0
  /// (prior-only) case and the scatter accumulation directly.
  std::pair<double, MatrixXd> cov_full_conditional(const MatrixXd& scatter, int n_obs) const {
    return {nu0_ + n_obs, G0_ + scatter};
  }

  // ---------------------------------------------------------------------
  // Step 3: reciprocity
  // ---------------------------------------------------------------------

  double dyad_log_likelihood(const ModelState& s, double rho) const {
    double s11, s12;
    residual_cross_sums(s, s11, s12);
    const double m_dyads = 0.5 * n_ * (n_ - 1.0);
    return -0.5 * m_dyads * std::log(1.0 - rho * rho) -
           (s11 - 2.0 * rho * s12) / (2.0 * s.sigma2_e * (1.0 - rho * rho));
  }

  /// Log acceptance ratio for a rho proposal, including the asymmetric
  /// truncated-normal proposal correction; the uniform prior cancels.
  double rho_log_acceptance(const ModelState& s, double current, double proposal,
                            double proposal_sd) const {
    auto log_norm = [&](double center) {
      return std::log(norm_cdf((1.0 - center) / proposal_sd) -
                      norm_cdf((-1.0 - center) / proposal_sd));
    };
    return dyad_log_likelihood(s, proposal) - dyad_log_likelihood(s, current) +
           log_norm(current) - log_norm(proposal);
  }

  /// Metropolis-Hastings with a truncated-normal proposal on (-1, 1);
  /// returns whether the proposal was accepted.
  bool update_rho(ModelState& s, Rng& rng, double proposal_sd) const {
    TruncationRegion box{-1.0, 1.0};
    double prop = sample_truncated_normal(s.rho, proposal_sd, box, rng);
    double log_acc = rho_log_acceptance(s, s.rho, prop, proposal_sd);
    if (std::log(rng.uniform()) < log_acc) {
      s.rho = prop;
      return true;
    }
    return false;
  }

  // ---------------------------------------------------------------------
  // Step 4: error variance
  // ---------------------------------------------------------------------

  /// Conjugate inverse-gamma draw from the rho-whitened dyadic residuals.
  void update_sigma_e(ModelState& s, Rng& rng) const {
    double s11, s12;
    residual_cross_sums(s, s11, s12);
    const double whitened = (s11 - 2.0 * s.rho * s12) / (1.0 - s.rho * s.rho);
    const double shape = prior_.sigma_e_shape + 0.5 * n_ * (n_ - 1.0);
    const double rate = prior_.sigma_e_rate + 0.5 * whitened;
    s.sigma2_e = 1.0 / rng.gamma(shape, rate);
  }

  // ---------------------------------------------------------------------
  // Step 5: multiplicative factor columns
  // ---------------------------------------------------------------------

  void update_multiplicative(ModelState& s, Rng& rng) const {
    const double w = 1.0 / (s.sigma2_e * (1.0 - s.rho * s.rho));
    const double wr = w * s.rho;
    MatrixXd mean_full = mean_matrix(s);
    for (int l = 0; l < k_; ++l) {
      update_factor_column(s, rng, l, true, w, wr, mean_full);
      update_factor_column(s, rng, l, false, w, wr, mean_full);
    }
  }

  /// One factor-column draw (sender = U[,l], otherwise V[,l]) from its
  /// normal full conditional; sub-step of update_multiplicative.
  void update_factor_column(ModelState& s, Rng& rng, int l, bool sender) const {
    const double w = 1.0 / (s.sigma2_e * (1.0 - s.rho * s.rho));
    const double wr = w * s.rho;
    MatrixXd mean_full = mean_matrix(s);
    update_factor_column(s, rng, l, sender, w, wr, mean_full);
  }

  // ---------------------------------------------------------------------
  // Latent relations and imputation
  // ---------------------------------------------------------------------

  /// Gibbs scan over latent relations: observed non-continuous entries are
  /// redrawn inside their link regions, missing entries (any kind) are drawn
  /// unconstrained from the dyadic conditional.
  void update_latent_relations(ModelState& s, Rng& rng) const {
    const bool has_link = y_.kind != RelationKind::continuous;
    if (!has_link && !y_has_missing_) return;
    MatrixXd m = mean_matrix(s);
    const double sd = std::sqrt(s.sigma2_e * (1.0 - s.rho * s.rho));

    if (y_.kind == RelationKind::rank) {
      for (int i = 0; i < n_; ++i) {
        const auto& targets = rank_targets_[i];
        VectorXd z_row(targets.size());
        for (size_t t = 0; t < targets.size(); ++t) z_row[t] = s.Z(i, targets[t]);
        for (size_t t = 0; t < targets.size(); ++t) {
          const int j = targets[t];
          double cm = m(i, j) + s.rho * (s.Z(j, i) - m(j, i));
          TruncationRegion region = region_frn(rank_rows_[i], static_cast<int>(t), z_row);
          double z = sample_truncated_normal(cm, sd, region, rng);
          z_row[t] = z;
          s.Z(i, j) = z;
        }
        for (int j = 0; j < n_; ++j) {
          if (j == i || y_.observed(i, j)) continue;
          double cm = m(i, j) + s.rho * (s.Z(j, i) - m(j, i));
          s.Z(i, j) = rng.normal(cm, sd);
        }
      }
      return;
    }

    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < n_; ++j) {
        if (i == j) continue;
        const bool obs = y_.observed(i, j);
        if (obs && y_.kind == RelationKind::continuous) continue;
        double cm = m(i, j) + s.rho * (s.Z(j, i) - m(j, i));
        if (!obs) {
          s.Z(i, j) = rng.normal(cm, sd);
        } else {
          TruncationRegion region = region_binary(static_cast<int>(y_.values(i, j)));
          s.Z(i, j) = sample_truncated_normal(cm, sd, region, rng);
        }
      }
    }
  }

  /// Draws missing attribute entries from the Gaussian conditional of
  /// Sigma_XN given the node's observed attributes and current factors.
  void impute_missing(ModelState& s, Rng& rng) const {
    if (!x_has_missing_ || p_ == 0) return;
    MatrixXd rows = node_rows(s);
    for (int i = 0; i < n_; ++i) {
      std::vector<int> missing, given;
      for (int j = 0; j < p_; ++j)
        (x_->observed(i, j) ? given : missing).push_back(j);
      if (missing.empty()) continue;
      for (int j = p_; j < dim_; ++j) given.push_back(j);
      GaussianConditional cond = gaussian_condition(s.Sigma_XN, missing, given);
      VectorXd gv(given.size());
      for (size_t t = 0; t < given.size(); ++t) gv[t] = rows(i, given[t]);
      VectorXd draw = mvn_sample(cond.coef * gv, cond.cond_cov, rng);
      for (size_t t = 0; t < missing.size(); ++t) s.X(i, missing[t]) = draw[t];
    }
  }

  /// Observed-scale value of a latent draw for reporting imputation of a
  /// missing relation.
  double link_apply(const ModelState& s, int i, int j) const {
    switch (y_.kind) {
      case RelationKind::continuous: return s.Z(i, j);
      case RelationKind::binary: return s.Z(i, j) > 0.0 ? 1.0 : 0.0;
      case RelationKind::rank: {
        // Rank the positive latent relations in the row, capped.
        if (s.Z(i, j) <= 0.0) return 0.0;
        int above = 0;
        for (int l = 0; l < n_; ++l)
          if (l != i && l != j && s.Z(i, l) > s.Z(i, j)) ++above;
        const int cap = y_.max_nominations.value_or(n_ - 1);
        if (above >= cap) return 0.0;
        int positive = 1;
        for (int l = 0; l < n_; ++l)
          if (l != i && l != j && s.Z(i, l) > 0.0) ++positive;
        return std::min(positive, cap) - above;
      }
    }
    return 0.0;
  }

  // ---------------------------------------------------------------------
  // Chain driver
  // ---------------------------------------------------------------------

  PosteriorSamples run(const McmcSchedule& schedule) const {
    schedule.validate();
    Rng rng = Rng::derive(schedule.seed, {0});
    ModelState s = init_state(rng);

    PosteriorSamples out;
    out.n = n_;
    out.p = p_;
    out.q = q_;
    out.k = k_;
    out.mode = mode_;
    out.kind = y_.kind;
    out.restrict_ab_uv = restrict_ab_uv_;
    out.schedule = schedule;
    const int stored = schedule.stored();
    out.beta = MatrixXd::Zero(stored, q_);
    out.a = MatrixXd::Zero(stored, n_);
    out.b = MatrixXd::Zero(stored, n_);
    out.mu.reserve(stored);
    out.sigma2_e.reserve(stored);
    out.rho.reserve(stored);
    out.U.reserve(stored);
    out.V.reserve(stored);
    out.Sigma_XN.reserve(stored);
    out.a_mean = VectorXd::Zero(n_);
    out.b_mean = VectorXd::Zero(n_);
    out.uv_mean = MatrixXd::Zero(n_, n_);
    out.y_missing = BoolMatrix::Constant(n_, n_, false);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) out.y_missing(i, j) = (i != j) && !y_.observed(i, j);
    out.y_imputed_mean = MatrixXd::Zero(n_, n_);
    if (p_ > 0) {
      out.x_missing = BoolMatrix::Constant(n_, p_, false);
      for (int i = 0; i < n_; ++i)
        for (int j = 0; j < p_; ++j) out.x_missing(i, j) = !x_->observed(i, j);
      out.x_imputed_mean = MatrixXd::Zero(n_, p_);
    }

    double proposal_sd = prior_.rho_proposal_sd;
    int accepted_window = 0, window = 0;
    long accepted_total = 0;

    for (int it = 1; it <= schedule.iterations; ++it) {
      update_additive(s, rng);
      update_cov(s, rng);
      bool acc = update_rho(s, rng, proposal_sd);
      accepted_window += acc ? 1 : 0;
      accepted_total += acc ? 1 : 0;
      ++window;
      update_sigma_e(s, rng);
      update_multiplicative(s, rng);
      update_latent_relations(s, rng);
      impute_missing(s, rng);

      if (prior_.adapt_rho && it <= schedule.burn_in && window == 50) {
        double rate = accepted_window / 50.0;
        if (rate > 0.45) proposal_sd = std::min(proposal_sd * 1.5, 1.0);
        else if (rate < 0.30) proposal_sd = std::max(proposal_sd / 1.5, 1e-4);
        accepted_window = 0;
        window = 0;
      }

      if (it > schedule.burn_in && (it - schedule.burn_in) % schedule.thin == 0) {
        out.mu.push_back(s.mu);
        out.sigma2_e.push_back(s.sigma2_e);
        out.rho.push_back(s.rho);
        const int idx = static_cast<int>(out.mu.size()) - 1;
        out.beta.row(idx) = s.beta.transpose();
        out.a.row(idx) = s.a.transpose();
        out.b.row(idx) = s.b.transpose();
        out.U.push_back(s.U);
        out.V.push_back(s.V);
        out.Sigma_XN.push_back(s.Sigma_XN);
        out.a_mean += s.a;
        out.b_mean += s.b;
        out.uv_mean += s.U * s.V.transpose();
        for (int i = 0; i < n_; ++i)
          for (int j = 0; j < n_; ++j)
            if (out.y_missing(i, j)) out.y_imputed_mean(i, j) += link_apply(s, i, j);
        if (p_ > 0)
          for (int i = 0; i < n_; ++i)
            for (int j = 0; j < p_; ++j)
              if (out.x_missing(i, j)) out.x_imputed_mean(i, j) += s.X(i, j);
      }
    }

    const double c = std::max(out.count(), 1);
    out.a_mean /= c;
    out.b_mean /= c;
    out.uv_mean /= c;
    out.y_imputed_mean /= c;
    if (p_ > 0) out.x_imputed_mean /= c;
    out.rho_acceptance = static_cast<double>(accepted_total) / schedule.iterations;
    out.rho_proposal_sd_final = proposal_sd;
    return out;
  }

  /// Complete-data log density: the dyadic Gaussian likelihood of Z plus the
  /// joint Gaussian density of the per-node coordinate vectors.
  double complete_data_log_density(const ModelState& s) const {
    MatrixXd e = s.Z - mean_matrix(s);
    e.diagonal().setZero();
    const double s11 = e.squaredNorm();
    const double s12 = 0.5 * e.cwiseProduct(e.transpose()).sum();
    const double m_dyads = 0.5 * n_ * (n_ - 1.0);
    const double det2 = s.sigma2_e * s.sigma2_e * (1.0 - s.rho * s.rho);
    double logp = -m_dyads * (std::log(2.0 * M_PI) + 0.5 * std::log(det2)) -
                  (s11 - 2.0 * s.rho * s12) / (2.0 * s.sigma2_e * (1.0 - s.rho * s.rho));
    MatrixXd L = chol_lower(s.Sigma_XN);
    MatrixXd rows = node_rows(s);
    for (int i = 0; i < n_; ++i) logp += log_mvn_density(rows.row(i).transpose(), L);
    return logp;
  }

 private:
  void build_regression_sums() {
    const int gdim = 1 + q_;
    ones_ = MatrixXd::Ones(n_, n_);
    ones_.diagonal().setZero();
    Ga_ = MatrixXd::Zero(n_, gdim);
    Gb_ = MatrixXd::Zero(n_, gdim);
    Sgg_same_ = MatrixXd::Zero(gdim, gdim);
    Sgg_cross_ = MatrixXd::Zero(gdim, gdim);
    VectorXd g(gdim), gt(gdim);
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < n_; ++j) {
        if (i == j) continue;
        g[0] = 1.0;
        gt[0] = 1.0;
        for (int c = 0; c < q_; ++c) {
          g[1 + c] = w_[c].values(i, j);
          gt[1 + c] = w_[c].values(j, i);
        }
        Ga_.row(i) += g.transpose();
        Gb_.row(j) += g.transpose();
        Sgg_same_ += g * g.transpose();
        Sgg_cross_ += g * gt.transpose();
      }
    }
  }

  void build_prior_scale() {
    G0_ = MatrixXd::Identity(dim_, dim_);
    if (mode_ == SamplerMode::joint) {
      MatrixXd SX0 = prior_.Sigma_X0;
      if (SX0.size() == 0) {
        // Pairwise-complete empirical covariance of the observed attributes,
        // ridge-inflated to positive definite.
        SX0 = MatrixXd::Zero(p_, p_);
        for (int j = 0; j < p_; ++j) {
          for (int l = 0; l <= j; ++l) {
            double acc = 0.0;
            int c = 0;
            for (int i = 0; i < n_; ++i)
              if (x_->observed(i, j) && x_->observed(i, l)) {
                acc += x_->values(i, j) * x_->values(i, l);
                ++c;
              }
            double v = (c > 1) ? acc / c : (j == l ? 1.0 : 0.0);
            SX0(j, l) = v;
            SX0(l, j) = v;
          }
        }
        SX0.diagonal().array() += std::max(1e-3 * SX0.diagonal().mean(), 1e-6);
      } else if (SX0.rows() != p_ || SX0.cols() != p_) {
        throw ValidationError("PriorConfig: Sigma_X0 must be p x p");
      }
      chol_lower(SX0);  // must be positive definite
      G0_.block(0, 0, p_, p_) = SX0;
    }
  }

  void build_rank_rows() {
    rank_targets_.resize(n_);
    rank_rows_.reserve(n_);
    for (int i = 0; i < n_; ++i) {
      std::vector<int>& targets = rank_targets_[i];
      for (int j = 0; j < n_; ++j)
        if (j != i && y_.observed(i, j)) targets.push_back(j);
      Eigen::VectorXi ranks(targets.size());
      for (size_t t = 0; t < targets.size(); ++t)
        ranks[static_cast<int>(t)] = static_cast<int>(y_.values(i, targets[t]));
      rank_rows_.push_back(FrnRow::make(std::move(ranks), *y_.max_nominations));
    }
  }

  /// Prior precision Q of (a_i, b_i) | rest and linear terms Q m_i into h.
  void prior_ab_pieces(const ModelState& s, Matrix2d& Q, MatrixXd& h) const {
    std::vector<int> ab{p_, p_ + 1};
    std::vector<int> rest;
    for (int j = 0; j < dim_; ++j)
      if (j != p_ && j != p_ + 1) rest.push_back(j);
    GaussianConditional cond = gaussian_condition(s.Sigma_XN, ab, rest);
    Q = detail::inv2_spd(cond.cond_cov, "update_additive prior");
    MatrixXd rows = node_rows(s);
    MatrixXd rest_rows(n_, rest.size());
    for (size_t t = 0; t < rest.size(); ++t) rest_rows.col(t) = rows.col(rest[t]);
    h = Q * (rest_rows * cond.coef.transpose()).transpose();
  }

  /// Conditional mean/sd cross sums of the dyadic residuals.
  void residual_cross_sums(const ModelState& s, double& s11, double& s12) const {
    MatrixXd e = s.Z - mean_matrix(s);
    e.diagonal().setZero();
    s11 = e.squaredNorm();
    s12 = 0.5 * e.cwiseProduct(e.transpose()).sum();
  }

  void update_factor_column(ModelState& s, Rng& rng, int l, bool sender, double w, double wr,
                            MatrixXd& mean_full) const {
    // Residual with column l's contribution added back.
    MatrixXd E = s.Z - mean_full + s.U.col(l) * s.V.col(l).transpose();
    E.diagonal().setZero();

    const int coord = sender ? (p_ + 2 + l) : (p_ + 2 + k_ + l);
    std::vector<int> target{coord}, rest;
    for (int j = 0; j < dim_; ++j)
      if (j != coord) rest.push_back(j);
    GaussianConditional cond = gaussian_condition(s.Sigma_XN, target, rest);
    const double tau2 = cond.cond_cov(0, 0);
    if (!(tau2 > 0.0)) throw NumericalError("update_multiplicative: conditional variance not positive");
    MatrixXd rows = node_rows(s);
    MatrixXd rest_rows(n_, rest.size());
    for (size_t t = 0; t < rest.size(); ++t) rest_rows.col(t) = rows.col(rest[t]);
    VectorXd prior_mean = rest_rows * cond.coef.transpose();

    const VectorXd& other = sender ? s.V.col(l) : s.U.col(l);
    const double total_sq = other.squaredNorm();
    MatrixXd P = (-wr) * other * other.transpose();
    P.diagonal() = (w * (total_sq - other.array().square())).matrix();
    P.diagonal().array() += 1.0 / tau2;

    VectorXd rhs;
    if (sender) {
      rhs = w * (E * other) - wr * (E.transpose() * other);
    } else {
      rhs = w * (E.transpose() * other) - wr * (E * other);
    }
    rhs += prior_mean / tau2;

    VectorXd draw = mvn_sample_precision(P, rhs, rng);
    if (sender) {
      mean_full += (draw - s.U.col(l)) * s.V.col(l).transpose();
      s.U.col(l) = draw;
    } else {
      mean_full += s.U.col(l) * (draw - s.V.col(l)).transpose();
      s.V.col(l) = draw;
    }
  }

  void init_latent_relations(MatrixXd& z, Rng& rng) const {
    if (y_.kind == RelationKind::continuous) {
      for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j)
          if (i != j) z(i, j) = y_.observed(i, j) ? y_.values(i, j) : 0.0;
      return;
    }
    if (y_.kind == RelationKind::binary) {
      for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j) {
          if (i == j) continue;
          if (!y_.observed(i, j)) {
            z(i, j) = 0.0;
          } else if (y_.values(i, j) > 0.5) {
            z(i, j) = 0.1 + std::abs(rng.normal()) * 0.5;
          } else {
            z(i, j) = -0.1 - std::abs(rng.normal()) * 0.5;
          }
        }
      return;
    }
    // Rank rows: normal scores placed by rank order, listed above zero in
    // rank order, unlisted below zero.
    for (int i = 0; i < n_; ++i) {
      std::vector<std::pair<int, int>> listed;  // (rank, column)
      std::vector<int> unlisted;
      for (int j = 0; j < n_; ++j) {
        if (j == i) continue;
        if (!y_.observed(i, j)) {
          z(i, j) = 0.0;
          continue;
        }
        int r = static_cast<int>(y_.values(i, j));
        if (r > 0) listed.push_back({r, j});
        else unlisted.push_back(j);
      }
      std::sort(listed.begin(), listed.end());
      for (size_t t = 0; t < listed.size(); ++t) {
        double pr = 0.5 + 0.5 * (t + 0.5) / listed.size();
        z(i, listed[t].second) = norm_quantile(pr);
      }
      for (size_t t = 0; t < unlisted.size(); ++t) {
        double pr = 0.5 * (t + 0.5) / unlisted.size();
        z(i, unlisted[t]) = norm_quantile(pr);
      }
    }
  }

  RelationalMatrix y_;
  std::optional<AttributeMatrix> x_;
  std::vector<DyadCovariate> w_;
  int k_;
  PriorConfig prior_;
  SamplerMode mode_;
  bool restrict_ab_uv_;

  int n_ = 0, p_ = 0, q_ = 0, dim_ = 0;
  double nu0_ = 0.0;
  bool y_has_missing_ = false;
  bool x_has_missing_ = false;

  MatrixXd ones_;                  // off-diagonal indicator
  MatrixXd Ga_, Gb_;               // per-node sender/receiver regression sums
  MatrixXd Sgg_same_, Sgg_cross_;  // regression cross-products over ordered pairs
  MatrixXd G0_;                    // inverse-Wishart prior scale
  std::vector<std::vector<int>> rank_targets_;
  std::vector<FrnRow> rank_rows_;
};

/// Fit the model end to end with the standard scan order.
inline PosteriorSamples run_chain(const RelationalMatrix& y, std::optional<AttributeMatrix> x,
                                  const std::vector<DyadCovariate>& w, int k,
                                  const PriorConfig& prior, const McmcSchedule& schedule,
                                  SamplerMode mode, bool restrict_ab_uv = false) {
  AmeSampler sampler(y, std::move(x), w, k, prior, mode, restrict_ab_uv);
  return sampler.run(schedule);
}

/// Transform a state to the identified parameterization: a model-preserving
/// factor transformation making the U and V covariance blocks equal to a
/// common decreasing diagonal, with residual signs fixed by making each U
/// column's largest-magnitude entry positive. Preserves UV' and the
/// complete-data log density exactly.
inline ModelState to_identified(const ModelState& state) {
  const int k = static_cast<int>(state.U.cols());
  const int dim = static_cast<int>(state.Sigma_XN.rows());
  const int head = dim - 2 * k;  // p + 2 leading coordinates
  if (head < 2) throw ValidationError("to_identified: covariance dimensions inconsistent with factors");
  MatrixXd Su = state.Sigma_XN.block(head, head, k, k);
  MatrixXd Sv = state.Sigma_XN.block(head + k, head + k, k, k);

  MatrixXd Su_half, Su_half_inv;
  sym_sqrt(Su, Su_half, Su_half_inv);  // throws on condition number past the guard
  MatrixXd S = Su_half * Sv * Su_half;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (S + S.transpose()));
  if (es.info() != Eigen::Success) throw NumericalError("to_identified: eigendecomposition failed");
  // Decreasing eigenvalue order.
  VectorXd lambda(k);
  MatrixXd Qm(k, k);
  for (int i = 0; i < k; ++i) {
    lambda[i] = es.eigenvalues()[k - 1 - i];
    Qm.col(i) = es.eigenvectors().col(k - 1 - i);
  }
  if (lambda.minCoeff() <= 0.0) throw NumericalError("to_identified: V block not positive definite");
  VectorXd quarter = lambda.array().pow(0.25);
  MatrixXd A = Su_half_inv * Qm * quarter.asDiagonal();
  MatrixXd A_invT = Su_half * Qm * quarter.cwiseInverse().asDiagonal();

  ModelState out = state;
  out.U = state.U * A;
  out.V = state.V * A_invT;
  MatrixXd G = MatrixXd::Identity(dim, dim);
  G.block(head, head, k, k) = A.transpose();
  G.block(head + k, head + k, k, k) = A_invT.transpose();
  out.Sigma_XN = G * state.Sigma_XN * G.transpose();

  // Residual sign ambiguity.
  VectorXd signs(k);
  for (int j = 0; j < k; ++j) {
    int idx = 0;
    out.U.col(j).cwiseAbs().maxCoeff(&idx);
    signs[j] = (out.U(idx, j) < 0.0) ? -1.0 : 1.0;
  }
  out.U = out.U * signs.asDiagonal();
  out.V = out.V * signs.asDiagonal();
  MatrixXd Gs = MatrixXd::Identity(dim, dim);
  Gs.block(head, head, k, k) = MatrixXd(signs.asDiagonal());
  Gs.block(head + k, head + k, k, k) = MatrixXd(signs.asDiagonal());
  out.Sigma_XN = Gs * out.Sigma_XN * Gs.transpose();
  out.Sigma_XN = 0.5 * (out.Sigma_XN + out.Sigma_XN.transpose());
  return out;
}

}  // namespace netfactor
