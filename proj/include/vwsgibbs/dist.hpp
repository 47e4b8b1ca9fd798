#pragma once

// Scalar kernels and exact samplers for the distributions in the joint
// small-area model. Tail quantities are carried on the log scale so that
// regions far from the bulk of a lognormal keep relative accuracy.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "vwsgibbs/error.hpp"
#include "vwsgibbs/rng.hpp"

namespace vwsgibbs {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct InverseGammaParams {
  double shape;  // kappa
  double rate;   // lambda
};

struct LognormalParams {
  double location;  // mu, log scale
  double scale;     // tau, log-scale standard deviation
};

/// Unnormalized inverse-gamma log density, (-shape - 1) log x - rate / x.
inline double ig_log_kernel(double x, const InverseGammaParams& p) {
  if (!(x > 0.0)) throw std::domain_error("ig_log_kernel: x must be positive");
  return (-p.shape - 1.0) * std::log(x) - p.rate / x;
}

inline double ig_mode(const InverseGammaParams& p) {
  if (!(p.rate > 0.0)) throw std::domain_error("ig_mode: rate must be positive");
  if (!(p.shape > -1.0)) throw std::domain_error("ig_mode: shape must exceed -1");
  return p.rate / (p.shape + 1.0);
}

namespace detail {

inline constexpr double kLogHalf = -0.69314718055994530942;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

/// log of the standard normal CDF.
inline double log_ndtr(double z) {
  if (z == kInf) return 0.0;
  if (z == -kInf) return -kInf;
  if (z > 5.0) return std::log1p(-0.5 * std::erfc(z / std::numbers::sqrt2));
  if (z > -35.0) return std::log(0.5 * std::erfc(-z / std::numbers::sqrt2));
  // Asymptotic expansion of the Mills ratio.
  const double r = 1.0 / (z * z);
  const double series =
      1.0 + r * (-1.0 + r * (3.0 + r * (-15.0 + r * (105.0 + r * (-945.0 + r * 10395.0)))));
  return -0.5 * z * z - kLogSqrt2Pi - std::log(-z) + std::log(series);
}

inline double log_ndtr_upper(double z) { return log_ndtr(-z); }

/// z with log_ndtr(z) == logp, for logp <= log(1/2).
inline double ndtri_from_log(double logp) {
  if (logp == -kInf) return -kInf;
  if (logp >= kLogHalf) return 0.0;
  if (logp > -700.0) {
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * std::exp(logp));
  }
  // Newton on the log CDF; the asymptotic guess is already close here.
  double z = -std::sqrt(-2.0 * logp - std::log(-4.0 * std::numbers::pi * logp));
  for (int it = 0; it < 50; ++it) {
    const double lf = log_ndtr(z);
    const double dlf = std::exp(-0.5 * z * z - kLogSqrt2Pi - lf);
    const double step = (lf - logp) / dlf;
    z -= step;
    if (std::abs(step) <= 1e-14 * std::abs(z)) break;
  }
  return z;
}

/// log(1 - exp(x)) for x <= 0.
inline double log1mexp(double x) {
  if (x == -kInf) return 0.0;
  return x > -0.6931471805599453 ? std::log(-std::expm1(x)) : std::log1p(-std::exp(x));
}

/// Quantile of N(0,1) restricted to (za, zb] with zb <= 0.
inline double left_truncated_quantile(double za, double zb, double u) {
  const double lfa = log_ndtr(za);
  const double lfb = log_ndtr(zb);
  const double r = std::exp(lfa - lfb);
  const double logp = lfb + std::log(r + u * (1.0 - r));
  return std::clamp(ndtri_from_log(logp), za, zb);
}

}  // namespace detail

/// log P(T <= x) and log P(T > x) for a base variable T.
struct TailPair {
  double log_below;
  double log_above;
};

/// log P(a < T <= b) from the tail pairs at a and b, taking the difference
/// on whichever side keeps relative accuracy.
inline double log_interval_prob(const TailPair& lo, const TailPair& hi) {
  if (hi.log_below <= detail::kLogHalf) {
    return hi.log_below + detail::log1mexp(lo.log_below - hi.log_below);
  }
  if (lo.log_above <= detail::kLogHalf) {
    return lo.log_above + detail::log1mexp(hi.log_above - lo.log_above);
  }
  const double outside = std::exp(lo.log_below) + std::exp(hi.log_above);
  return outside >= 1.0 ? -kInf : std::log1p(-outside);
}

/// Standardized log-scale coordinate of x under a lognormal.
inline double lognormal_z(double x, const LognormalParams& p) {
  if (x == 0.0) return -kInf;
  if (x == kInf) return kInf;
  return (std::log(x) - p.location) / p.scale;
}

inline TailPair lognormal_tails(double x, const LognormalParams& p) {
  const double z = lognormal_z(x, p);
  // One CDF evaluation on the short side; the other tail by complement.
  if (z <= 0.0) {
    const double below = detail::log_ndtr(z);
    return {below, detail::log1mexp(below)};
  }
  const double above = detail::log_ndtr_upper(z);
  return {detail::log1mexp(above), above};
}

inline double lognormal_log_density(double x, const LognormalParams& p) {
  if (!(x > 0.0)) return -kInf;
  const double lx = std::log(x);
  const double z = (lx - p.location) / p.scale;
  return -0.5 * z * z - lx - std::log(p.scale) - detail::kLogSqrt2Pi;
}

/// P(a < T <= b) for T lognormal.
inline double ln_interval_prob(double a, double b, const LognormalParams& p) {
  if (!(a >= 0.0) || !(a < b)) throw std::domain_error("ln_interval_prob: need 0 <= a < b");
  return std::exp(log_interval_prob(lognormal_tails(a, p), lognormal_tails(b, p)));
}

/// Quantile at level u of N(0,1) restricted to (za, zb].
inline double trunc_std_normal_quantile(double za, double zb, double u) {
  if (zb <= 0.0) return detail::left_truncated_quantile(za, zb, u);
  if (za >= 0.0) return -detail::left_truncated_quantile(-zb, -za, 1.0 - u);
  // Straddles zero: pick the side, then invert within it.
  const double left = -std::expm1(detail::log_ndtr(za) - detail::kLogHalf);
  const double right = -std::expm1(detail::log_ndtr_upper(zb) - detail::kLogHalf);
  const double t = u * (left + right);
  if (t < left) return detail::left_truncated_quantile(za, 0.0, t / left);
  return -detail::left_truncated_quantile(-zb, 0.0, 1.0 - (t - left) / right);
}

/// Exact draw from N(0,1) restricted to (za, zb].
inline double sample_trunc_std_normal(double za, double zb, Rng& rng) {
  if (!(za < zb)) throw DegenerateIntervalError("truncated normal: empty interval");
  if (za == -kInf && zb == kInf) return rng.normal();
  const double width = zb - za;
  const double reach = std::max(std::abs(za), std::abs(zb));
  if (std::isfinite(width) && width * reach <= 0.5) {
    // Narrow interval: uniform proposal accepts with probability >= e^-0.5.
    const double nearest = (za <= 0.0 && zb >= 0.0) ? 0.0 : std::min(std::abs(za), std::abs(zb));
    for (;;) {
      const double z = zb - width * rng.uniform();  // in [za, zb)
      if (z <= za) continue;
      if (rng.uniform() < std::exp(-0.5 * (z * z - nearest * nearest))) return z;
    }
  }
  if (zb <= 0.0) return detail::left_truncated_quantile(za, zb, rng.uniform());
  if (za >= 0.0) return -detail::left_truncated_quantile(-zb, -za, rng.uniform());
  return trunc_std_normal_quantile(za, zb, rng.uniform());
}

/// Exact draw from the lognormal restricted to (a, b].
inline double sample_trunc_lognormal(double a, double b, const LognormalParams& p, Rng& rng) {
  if (!(a >= 0.0) || !(a < b)) throw std::domain_error("sample_trunc_lognormal: need 0 <= a < b");
  const double za = lognormal_z(a, p);
  const double zb = lognormal_z(b, p);
  if (!(za < zb) || log_interval_prob(lognormal_tails(a, p), lognormal_tails(b, p)) == -kInf) {
    throw DegenerateIntervalError("sample_trunc_lognormal: interval mass underflows");
  }
  const double x = std::exp(p.location + p.scale * sample_trunc_std_normal(za, zb, rng));
  if (x <= a) return std::nextafter(a, kInf);
  if (x > b) return b;
  return x;
}

// Standard building blocks.

inline double draw_normal(Rng& rng, double mean, double sd) { return mean + sd * rng.normal(); }

inline double draw_gamma(Rng& rng, double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw std::domain_error("draw_gamma: nonpositive parameter");
  return rng.gamma(shape, rate);
}

inline double draw_chisq(Rng& rng, double df) { return draw_gamma(rng, 0.5 * df, 0.5); }

inline double draw_inverse_gamma(Rng& rng, double shape, double rate) {
  return 1.0 / draw_gamma(rng, shape, rate);
}

/// Draw from N(mean, cov) through the Cholesky factor of cov.
inline Eigen::VectorXd draw_mvnormal(Rng& rng, const Eigen::VectorXd& mean,
                                     const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw LinearAlgebraError("draw_mvnormal: covariance is not positive definite");
  }
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
  return mean + llt.matrixL() * z;
}

}  // namespace vwsgibbs
