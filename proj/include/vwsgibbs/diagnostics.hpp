#pragma once

// Batch-means effective sample size, autocorrelation and summary tables.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vwsgibbs/error.hpp"

namespace vwsgibbs::diag {

struct FlaggedValue {
  double value;
  bool degenerate;
};

namespace detail {

inline double mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline bool is_constant(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); });
}

}  // namespace detail

inline std::size_t batch_size(std::size_t r) {
  return static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(r))));
}

/// Batch-means ESS with batch size floor(sqrt(R)), clamped to (0, 1.05 R].
/// A constant chain gives 0 with the degenerate flag set.
inline FlaggedValue ess(std::span<const double> x) {
  const std::size_t r = x.size();
  if (r < 100) throw ValidationError("ess: chain must have at least 100 draws");
  if (detail::is_constant(x)) return {0.0, true};
  const double mu = detail::mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - mu) * (v - mu);
  const double var = ss / static_cast<double>(r - 1);
  const std::size_t b = batch_size(r);
  const std::size_t a = r / b;
  double bm = 0.0;
  for (std::size_t k = 0; k < a; ++k) {
    const double mk = detail::mean(x.subspan(k * b, b));
    bm += (mk - mu) * (mk - mu);
  }
  const double sigma2 = static_cast<double>(b) * bm / static_cast<double>(a - 1);
  const double cap = 1.05 * static_cast<double>(r);
  if (!(var > 0.0)) return {0.0, true};
  if (!(sigma2 > 0.0)) return {cap, false};
  return {std::clamp(static_cast<double>(r) * var / sigma2, 0.0, cap), false};
}

inline FlaggedValue ess(const Eigen::VectorXd& x) { return ess(std::span<const double>(x.data(), static_cast<std::size_t>(x.size()))); }

/// Multivariate batch-means ESS: R (det Lambda / det Sigma)^(1/p).
inline double multivariate_ess(const Eigen::MatrixXd& chains) {
  const auto r = chains.rows();
  const auto p = chains.cols();
  if (p < 1) throw ValidationError("multivariate_ess: need at least one column");
  if (r <= p * p) throw ValidationError("multivariate_ess: need more draws than p^2");
  const Eigen::RowVectorXd mu = chains.colwise().mean();
  const Eigen::MatrixXd centered = chains.rowwise() - mu;
  const Eigen::MatrixXd lambda = centered.transpose() * centered / static_cast<double>(r - 1);

  // Singularity test on the correlation scale so it is scale free.
  const Eigen::VectorXd sd = lambda.diagonal().cwiseSqrt();
  if ((sd.array() <= 0.0).any()) throw NumericalError("multivariate_ess: constant column");
  const Eigen::MatrixXd corr = sd.cwiseInverse().asDiagonal() * lambda * sd.cwiseInverse().asDiagonal();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < 1e-10 * eig.eigenvalues().maxCoeff()) {
    throw NumericalError("multivariate_ess: singular sample covariance");
  }

  const auto b = static_cast<Eigen::Index>(batch_size(static_cast<std::size_t>(r)));
  const Eigen::Index a = r / b;
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index k = 0; k < a; ++k) {
    const Eigen::RowVectorXd dk = chains.middleRows(k * b, b).colwise().mean() - mu;
    sigma.noalias() += dk.transpose() * dk;
  }
  sigma *= static_cast<double>(b) / static_cast<double>(a - 1);

  const Eigen::LLT<Eigen::MatrixXd> ll(lambda);
  const Eigen::LLT<Eigen::MatrixXd> ls(sigma);
  if (ll.info() != Eigen::Success || ls.info() != Eigen::Success) {
    throw NumericalError("multivariate_ess: covariance is not positive definite");
  }
  const double logdet_l = 2.0 * ll.matrixLLT().diagonal().array().log().sum();
  const double logdet_s = 2.0 * ls.matrixLLT().diagonal().array().log().sum();
  return static_cast<double>(r) * std::exp((logdet_l - logdet_s) / static_cast<double>(p));
}

/// Biased sample autocorrelation at `lag`.
inline FlaggedValue autocorr(std::span<const double> x, std::size_t lag) {
  if (lag >= x.size()) throw ValidationError("autocorr: lag must be shorter than the chain");
  if (detail::is_constant(x)) return {0.0, true};
  if (lag == 0) return {1.0, false};
  const double mu = detail::mean(x);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double c = x[t] - mu;
    den += c * c;
    if (t + lag < x.size()) num += c * (x[t + lag] - mu);
  }
  return {std::clamp(num / den, -1.0, 1.0), false};
}

/// Type-7 (inclusive linear interpolation) quantile.
inline double quantile(std::vector<double> x, double prob) {
  if (x.empty()) throw ValidationError("quantile: empty input");
  if (!(prob >= 0.0 && prob <= 1.0)) throw ValidationError("quantile: probability outside [0, 1]");
  std::sort(x.begin(), x.end());
  const double h = prob * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

inline std::vector<double> quantiles(std::vector<double> x, std::span<const double> probs) {
  std::sort(x.begin(), x.end());
  std::vector<double> out;
  out.reserve(probs.size());
  for (double p : probs) out.push_back(quantile(x, p));
  return out;
}

/// Per-column ESS of a draws x variables matrix.
inline std::vector<double> column_ess(const Eigen::MatrixXd& chains) {
  std::vector<double> out(static_cast<std::size_t>(chains.cols()));
  for (Eigen::Index j = 0; j < chains.cols(); ++j) {
    out[static_cast<std::size_t>(j)] =
        ess(std::span<const double>(chains.col(j).data(), static_cast<std::size_t>(chains.rows()))).value;
  }
  return out;
}

struct SummaryRow {
  std::string name;
  double mean;
  double sd;
  std::vector<double> quantiles;
  double ess;
  bool ess_degenerate;
};

struct SummaryTable {
  std::vector<double> probs;
  std::vector<SummaryRow> rows;

  std::string to_csv() const {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "variable,mean,sd";
    for (double p : probs) os << ",q" << p * 100.0;
    os << ",ess\n";
    for (const auto& r : rows) {
      os << r.name << ',' << r.mean << ',' << r.sd;
      for (double q : r.quantiles) os << ',' << q;
      os << ',' << r.ess << '\n';
    }
    return os.str();
  }
};

/// Mean, SD, quantiles and ESS per column, in column order.
inline SummaryTable summarize(const Eigen::MatrixXd& chains, const std::vector<std::string>& names,
                              std::vector<double> probs = {0.05, 0.95}) {
  if (chains.rows() == 0 || chains.cols() == 0) throw ValidationError("summarize: empty chains");
  if (static_cast<Eigen::Index>(names.size()) != chains.cols()) {
    throw ValidationError("summarize: one name per column is required");
  }
  SummaryTable t{probs, {}};
  for (Eigen::Index j = 0; j < chains.cols(); ++j) {
    const Eigen::VectorXd c = chains.col(j);
    std::vector<double> v(c.data(), c.data() + c.size());
    SummaryRow row;
    row.name = names[static_cast<std::size_t>(j)];
    row.mean = c.mean();
    row.sd = c.size() > 1 ? std::sqrt((c.array() - row.mean).square().sum() / static_cast<double>(c.size() - 1)) : 0.0;
    row.quantiles = quantiles(v, probs);
    if (c.size() >= 100) {
      const FlaggedValue e = ess(c);
      row.ess = e.value;
      row.ess_degenerate = e.degenerate;
    } else {
      row.ess = std::numeric_limits<double>::quiet_NaN();
      row.ess_degenerate = true;
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace vwsgibbs::diag
