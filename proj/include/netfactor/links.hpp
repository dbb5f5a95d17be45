#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "netfactor/errors.hpp"
#include "netfactor/rng.hpp"

namespace netfactor {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Admissible interval for a latent relation given the observed value and the
/// rest of the current state.
struct TruncationRegion {
  double lower = -kInf;
  double upper = kInf;

  bool unbounded() const { return lower == -kInf && upper == kInf; }
  bool contains(double z) const { return z > lower && z <= upper; }

  static TruncationRegion unconstrained() { return {}; }
};

/// Probit link: observed 1 means z > 0, observed 0 means z <= 0.
inline TruncationRegion region_binary(int y) {
  if (y == 1) return {0.0, kInf};
  if (y == 0) return {-kInf, 0.0};
  throw ValidationError("region_binary: value must be 0 or 1");
}

/// One sender's fixed-rank-nomination row over its n-1 potential targets.
/// ranks[j] is the observed rank of target j (0 = not listed); nonzero ranks
/// are distinct and listing is capped at `cap` nominations.
struct FrnRow {
  Eigen::VectorXi ranks;
  int cap = 0;
  int listed_count = 0;

  static FrnRow make(Eigen::VectorXi ranks, int cap) {
    FrnRow row;
    row.ranks = std::move(ranks);
    row.cap = cap;
    if (cap <= 0) throw ValidationError("FrnRow: cap must be positive");
    for (int j = 0; j < row.ranks.size(); ++j) {
      int r = row.ranks[j];
      if (r < 0 || r > cap) throw ValidationError("FrnRow: rank out of range");
      if (r > 0) {
        ++row.listed_count;
        for (int l = 0; l < j; ++l)
          if (row.ranks[l] == r) throw ValidationError("FrnRow: duplicate nonzero rank");
      }
    }
    if (row.listed_count > cap) throw ValidationError("FrnRow: more nominations than cap");
    return row;
  }

  bool at_cap() const { return listed_count == cap; }
};

/// Interval for z_j implied jointly by the rank-consistency constraints:
/// listed targets sit above 0 and above every lower-ranked listed target and
/// below every higher-ranked one; unlisted targets sit below 0 when the
/// sender listed fewer than `cap`, and below every listed target when the
/// sender hit the cap (censoring: unlisted relations need only fall under
/// the lowest listed one).
inline TruncationRegion region_frn(const FrnRow& row, int j, const Eigen::VectorXd& z_row) {
  if (j < 0 || j >= row.ranks.size()) throw ValidationError("region_frn: target index out of range");
  if (z_row.size() != row.ranks.size()) throw ValidationError("region_frn: z_row size mismatch");
  const int rj = row.ranks[j];
  TruncationRegion region;
  if (rj > 0) {
    region.lower = 0.0;
    for (int l = 0; l < row.ranks.size(); ++l) {
      if (l == j) continue;
      const int rl = row.ranks[l];
      if (rl > 0 && rl < rj) region.lower = std::max(region.lower, z_row[l]);
      if (rl > rj) region.upper = std::min(region.upper, z_row[l]);
      if (rl == 0 && row.at_cap()) region.lower = std::max(region.lower, z_row[l]);
    }
  } else {
    if (row.at_cap()) {
      for (int l = 0; l < row.ranks.size(); ++l)
        if (row.ranks[l] > 0) region.upper = std::min(region.upper, z_row[l]);
    } else {
      region.upper = 0.0;
    }
  }
  if (!(region.lower < region.upper))
    throw NumericalError("region_frn: empty truncation region (inconsistent latent state)");
  return region;
}

/// Ordered-probit interval: level l of L lies between cutpoints l-1 and l.
inline TruncationRegion region_ordinal(int level, const Eigen::VectorXd& cutpoints) {
  const int levels = static_cast<int>(cutpoints.size()) + 1;
  for (int i = 1; i < cutpoints.size(); ++i)
    if (!(cutpoints[i] > cutpoints[i - 1]))
      throw ValidationError("region_ordinal: cutpoints must be strictly increasing");
  if (level < 1 || level > levels) throw ValidationError("region_ordinal: invalid level");
  TruncationRegion region;
  if (level > 1) region.lower = cutpoints[level - 2];
  if (level < levels) region.upper = cutpoints[level - 1];
  return region;
}

/// Data-driven initial cutpoints: standard-normal quantiles at the empirical
/// level frequencies.
inline Eigen::VectorXd quantile_cutpoints(const Eigen::VectorXi& level_counts) {
  const int levels = static_cast<int>(level_counts.size());
  if (levels < 2) throw ValidationError("quantile_cutpoints: need at least two levels");
  double total = level_counts.cast<double>().sum();
  if (total <= 0) throw ValidationError("quantile_cutpoints: empty counts");
  Eigen::VectorXd cuts(levels - 1);
  double acc = 0.0;
  for (int l = 0; l + 1 < levels; ++l) {
    acc += level_counts[l];
    double p = std::min(std::max(acc / total, 1e-6), 1.0 - 1e-6);
    cuts[l] = norm_quantile(p);
  }
  for (int l = 1; l < cuts.size(); ++l)
    if (cuts[l] <= cuts[l - 1]) cuts[l] = cuts[l - 1] + 1e-6;
  return cuts;
}

namespace detail {

/// Robert's shifted-exponential rejection for a standard normal conditioned
/// to (alpha, beta) with alpha far in the upper tail.
inline double tail_truncnorm(double alpha, double beta, Rng& rng) {
  const double lambda = 0.5 * (alpha + std::sqrt(alpha * alpha + 4.0));
  for (int attempt = 0; attempt < 10000; ++attempt) {
    double z = alpha - std::log(rng.uniform()) / lambda;
    if (z > beta) continue;
    double d = z - lambda;
    if (std::log(rng.uniform()) <= -0.5 * d * d) return z;
  }
  // Pathologically thin region; fall back to its lower edge neighborhood.
  return std::isfinite(beta) ? 0.5 * (alpha + beta) : alpha + 1.0 / lambda;
}

inline double std_truncnorm(double alpha, double beta, Rng& rng) {
  if (alpha == -kInf && beta == kInf) return rng.normal();
  const double tail = 8.0;
  if (alpha > tail) return tail_truncnorm(alpha, beta, rng);
  if (beta < -tail) return -tail_truncnorm(-beta, -alpha, rng);
  // Pick the CDF scale with more precision: the survival side for regions
  // leaning positive, the plain CDF side otherwise.
  double lean;
  if (alpha == -kInf) lean = beta;
  else if (beta == kInf) lean = alpha;
  else lean = 0.5 * (alpha + beta);
  double z;
  if (lean >= 0.0) {
    double s_hi = (alpha == -kInf) ? 1.0 : norm_cdf(-alpha);
    double s_lo = (beta == kInf) ? 0.0 : norm_cdf(-beta);
    double s = s_lo + rng.uniform() * (s_hi - s_lo);
    z = -norm_quantile(s);
  } else {
    double p_lo = (alpha == -kInf) ? 0.0 : norm_cdf(alpha);
    double p_hi = (beta == kInf) ? 1.0 : norm_cdf(beta);
    double p = p_lo + rng.uniform() * (p_hi - p_lo);
    z = norm_quantile(p);
  }
  if (!std::isfinite(z)) z = std::isfinite(alpha) ? alpha : beta;
  if (std::isfinite(alpha) && z < alpha) z = alpha;
  if (std::isfinite(beta) && z > beta) z = beta;
  return z;
}

}  // namespace detail

/// Draw from normal(mean, sd^2) conditioned to the region.
inline double sample_truncated_normal(double mean, double sd, const TruncationRegion& region,
                                      Rng& rng) {
  if (!(sd > 0.0)) throw ValidationError("sample_truncated_normal: sd must be positive");
  if (region.unbounded()) return rng.normal(mean, sd);
  double alpha = (region.lower == -kInf) ? -kInf : (region.lower - mean) / sd;
  double beta = (region.upper == kInf) ? kInf : (region.upper - mean) / sd;
  return mean + sd * detail::std_truncnorm(alpha, beta, rng);
}

}  // namespace netfactor
