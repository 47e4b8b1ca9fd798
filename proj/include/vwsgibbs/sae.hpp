#pragma once

// Joint small-area model: data-augmented Gibbs sampler with an
// interchangeable draw for the latent sampling variances (step 6).

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/QR>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vwsgibbs/dist.hpp"
#include "vwsgibbs/error.hpp"
#include "vwsgibbs/parallel.hpp"
#include "vwsgibbs/rng.hpp"
#include "vwsgibbs/vws.hpp"

namespace vwsgibbs::sae {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct ModelData {
  VectorXd y;   // log point estimates
  VectorXd s2;  // sampling variances on the log scale
  VectorXd n;   // sample sizes
  VectorXd d;   // degrees of freedom
  MatrixXd X;
  MatrixXd Z;
  std::vector<std::string> ids;
  std::vector<std::string> x_names;
  std::vector<std::string> z_names;

  std::size_t m() const { return static_cast<std::size_t>(y.size()); }
  std::size_t p() const { return static_cast<std::size_t>(X.cols()); }
  std::size_t q() const { return static_cast<std::size_t>(Z.cols()); }

  void validate() const {
    const auto rows = y.size();
    if (rows == 0) throw DataError("model data has no areas");
    if (s2.size() != rows || n.size() != rows || d.size() != rows || X.rows() != rows ||
        Z.rows() != rows) {
      throw DataError("model data vectors and design matrices disagree in length");
    }
    if (!ids.empty() && static_cast<Eigen::Index>(ids.size()) != rows) {
      throw DataError("area id count does not match the data");
    }
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (!std::isfinite(y[i])) throw DataError("non-finite y at row " + std::to_string(i));
      if (!(s2[i] > 0.0) || !std::isfinite(s2[i])) {
        throw DataError("sampling variance must be positive at row " + std::to_string(i));
      }
      if (!(n[i] > 0.0)) throw DataError("sample size must be positive at row " + std::to_string(i));
      if (!(d[i] >= 1.0) || !std::isfinite(d[i])) {
        throw DataError("degrees of freedom below one at row " + std::to_string(i));
      }
    }
    if (!X.allFinite() || !Z.allFinite()) throw DataError("non-finite design matrix entry");
    if (X.cols() == 0 || Z.cols() == 0) throw DataError("design matrices need at least one column");
    if (Eigen::ColPivHouseholderQR<MatrixXd>(X).rank() != X.cols()) {
      throw DataError("X does not have full column rank");
    }
    if (Eigen::ColPivHouseholderQR<MatrixXd>(Z).rank() != Z.cols()) {
      throw DataError("Z does not have full column rank");
    }
  }
};

struct ParamState {
  VectorXd theta;   // latent means
  VectorXd sigma2;  // latent variances
  VectorXd beta;
  VectorXd gamma;
  double phi2 = 1.0;
  double tau2 = 1.0;
};

struct ConditionalParams {
  double mu;
  double kappa;
  double lambda;
  double tau2;
};

enum class SamplerKind { mwg, vwg, vwg_basic };

inline std::string to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::mwg: return "mwg";
    case SamplerKind::vwg: return "vwg";
    case SamplerKind::vwg_basic: return "vwg-basic";
  }
  return "?";
}

inline SamplerKind parse_sampler_kind(const std::string& s) {
  if (s == "mwg") return SamplerKind::mwg;
  if (s == "vwg") return SamplerKind::vwg;
  if (s == "vwg-basic") return SamplerKind::vwg_basic;
  throw ValidationError("unknown sampler '" + s + "' (expected mwg, vwg or vwg-basic)");
}

struct SamplerConfig {
  std::size_t iters = 3000;
  std::size_t burn = 1000;
  std::size_t thin = 1;
  double eps1 = 0.85;
  double eps2 = 1e-4;
  SamplerKind kind = SamplerKind::vwg;
  std::size_t basic_max_regions = 50;
  std::uint64_t seed = 1;
  std::uint64_t max_rejections = 1'000'000;
  unsigned threads = 1;

  void validate(std::size_t m) const {
    if (iters == 0) throw ValidationError("iters must be positive");
    if (burn > iters) throw ValidationError("burn must not exceed iters");
    if (thin == 0) throw ValidationError("thin must be positive");
    if (!(eps1 >= 0.0 && eps1 <= 1.0) || !(eps2 >= 0.0 && eps2 <= 1.0)) {
      throw ValidationError("tolerances must lie in [0, 1]");
    }
    if (basic_max_regions < 1) throw ValidationError("basic_max_regions must be >= 1");
    if (m < 3) throw ValidationError("at least three areas are needed for proper variance updates");
  }

  vws::TuningOptions tuning() const { return {eps1, eps2, max_rejections}; }

  nlohmann::json to_json() const {
    return {{"iters", iters},
            {"burn", burn},
            {"thin", thin},
            {"eps1", eps1},
            {"eps2", eps2},
            {"sampler", to_string(kind)},
            {"basic_max_regions", basic_max_regions},
            {"seed", seed},
            {"max_rejections", max_rejections}};
  }
};

using Sigma2Target = vws::WeightedTarget<vws::InverseGammaWeight, vws::LognormalBase>;
using Sigma2Proposal = vws::StripProposal<Sigma2Target>;

inline ConditionalParams conditional_params(const ParamState& s, const ModelData& data, std::size_t i) {
  const auto k = static_cast<Eigen::Index>(i);
  const double r = data.y[k] - s.theta[k];
  return {data.Z.row(k).dot(s.gamma), 0.5 * (data.d[k] - 1.0),
          0.5 * r * r + 0.5 * data.d[k] * data.s2[k], s.tau2};
}

inline Sigma2Target sigma2_target(const ConditionalParams& c) {
  return {vws::InverseGammaWeight({c.kappa, c.lambda}),
          vws::LognormalBase{{c.mu, std::sqrt(c.tau2)}}};
}

/// Point beyond which the lognormal log density is convex in x, so the
/// step-6 target is not log-concave on (0, inf).
inline double logconcavity_boundary(double mu, double tau2) {
  if (!(tau2 > 0.0)) throw std::domain_error("logconcavity_boundary: tau2 must be positive");
  return std::exp(mu + 1.0 - tau2);
}

/// Log acceptance ratio for moving from `current` to `proposed`.
inline double imh_log_ratio(double proposed, double current, double mu, double tau2) {
  const double a = std::log(proposed) - mu;
  const double b = std::log(current) - mu;
  return (b * b - a * a) / (2.0 * tau2) - std::log(proposed) + std::log(current);
}

struct ImhResult {
  double value;
  bool accepted;
};

/// Independent Metropolis-Hastings step with an IG(kappa, lambda) proposal.
inline ImhResult imh_step_sigma2(double current, const ConditionalParams& c, Rng& rng) {
  if (!(c.kappa > 0.0)) throw ValidationError("imh_step_sigma2: kappa must be positive");
  if (!(current > 0.0)) throw std::domain_error("imh_step_sigma2: current must be positive");
  const double proposed = draw_inverse_gamma(rng, c.kappa, c.lambda);
  const double lr = imh_log_ratio(proposed, current, c.mu, c.tau2);
  if (lr >= 0.0 || std::log(rng.uniform()) < lr) return {proposed, true};
  return {current, false};
}

/// Maximizer of the step-6 density in x. Works on t = log x where the log
/// kernel is strictly concave. Accepts kappa > -2 and lambda >= 0 so the
/// pure lognormal case (kappa = -1, lambda = 0) is covered.
inline double target_mode(const ConditionalParams& c) {
  if (!(c.tau2 > 0.0) || !(c.lambda >= 0.0) || !(c.kappa > -2.0)) {
    throw std::domain_error("target_mode: invalid parameters");
  }
  const double a = -c.kappa - 2.0;
  auto grad = [&](double t) { return a + c.lambda * std::exp(-t) - (t - c.mu) / c.tau2; };
  auto hess = [&](double t) { return -c.lambda * std::exp(-t) - 1.0 / c.tau2; };
  double t = c.mu + a * c.tau2;
  if (c.lambda > 0.0) t = std::max(t, std::log(c.lambda / (c.kappa + 2.0)));
  double lo = t, hi = t;
  for (double step = 1.0; grad(lo) <= 0.0; step *= 2.0) lo -= step;
  for (double step = 1.0; grad(hi) >= 0.0; step *= 2.0) hi += step;
  for (int it = 0; it < 100; ++it) {
    const double g = grad(t);
    if (std::abs(g) < 1e-10) return std::exp(t);
    (g > 0.0 ? lo : hi) = t;
    double next = t - g / hess(t);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (hi - lo < 1e-15 * std::max(1.0, std::abs(t))) break;
    t = next;
  }
  return std::exp(t);
}

/// Per-area draw of sigma_i^2 given its conditional parameters. Calls for
/// distinct areas may run concurrently.
class Sigma2Step {
 public:
  virtual ~Sigma2Step() = default;
  virtual double draw(std::size_t area, const ConditionalParams& c, double current, Rng& rng,
                      std::uint64_t stamp, vws::DrawStats& stats) = 0;
  virtual std::string name() const = 0;
};

class ImhStep final : public Sigma2Step {
 public:
  double draw(std::size_t, const ConditionalParams& c, double current, Rng& rng, std::uint64_t,
              vws::DrawStats& stats) override {
    const ImhResult r = imh_step_sigma2(current, c, rng);
    ++stats.proposals;
    if (!r.accepted) ++stats.rejections;
    return r.value;
  }
  std::string name() const override { return "mwg"; }
};

/// Self-tuned VWS with one persistent proposal per area, starting from a
/// single region.
class SelfTunedStep final : public Sigma2Step {
 public:
  SelfTunedStep(std::size_t m, vws::TuningOptions opts) : opts_(opts) {
    opts_.validate();
    const Sigma2Target placeholder = sigma2_target({0.0, 0.0, 1.0, 1.0});
    proposals_.assign(m, Sigma2Proposal(placeholder));
  }

  double draw(std::size_t area, const ConditionalParams& c, double, Rng& rng, std::uint64_t stamp,
              vws::DrawStats& stats) override {
    return vws::self_tuned_draw(proposals_[area], sigma2_target(c), opts_, rng, stamp, stats);
  }
  std::string name() const override { return "vwg"; }

  const std::vector<Sigma2Proposal>& proposals() const { return proposals_; }

 private:
  vws::TuningOptions opts_;
  std::vector<Sigma2Proposal> proposals_;
};

/// Rebuilds a proposal for every draw: greedy refinement until rho_+ < eps1
/// or the region cap, then plain rejection sampling.
class BasicVwsStep final : public Sigma2Step {
 public:
  BasicVwsStep(double eps1, std::size_t max_regions, std::uint64_t max_rejections)
      : eps1_(eps1), max_regions_(max_regions), max_rejections_(max_rejections) {}

  double draw(std::size_t, const ConditionalParams& c, double, Rng& rng, std::uint64_t,
              vws::DrawStats& stats) override {
    Sigma2Proposal p(sigma2_target(c));
    vws::refine_to_tolerance(p, eps1_, max_regions_);
    stats.knots_added += p.num_knots();
    return vws::rejection_draw(p, rng, stats, max_rejections_);
  }
  std::string name() const override { return "vwg-basic"; }

 private:
  double eps1_;
  std::size_t max_regions_;
  std::uint64_t max_rejections_;
};

inline std::unique_ptr<Sigma2Step> make_sigma2_step(const SamplerConfig& cfg, std::size_t m) {
  switch (cfg.kind) {
    case SamplerKind::mwg: return std::make_unique<ImhStep>();
    case SamplerKind::vwg: return std::make_unique<SelfTunedStep>(m, cfg.tuning());
    case SamplerKind::vwg_basic:
      return std::make_unique<BasicVwsStep>(cfg.eps1, cfg.basic_max_regions, cfg.max_rejections);
  }
  throw ValidationError("unknown sampler kind");
}

/// Cholesky factors of the cross-product matrices, computed once per run.
struct GibbsContext {
  Eigen::LLT<MatrixXd> xtx;
  Eigen::LLT<MatrixXd> ztz;

  explicit GibbsContext(const ModelData& data)
      : xtx(data.X.transpose() * data.X), ztz(data.Z.transpose() * data.Z) {
    if (xtx.info() != Eigen::Success) throw LinearAlgebraError("Cholesky of X'X failed");
    if (ztz.info() != Eigen::Success) throw LinearAlgebraError("Cholesky of Z'Z failed");
  }
};

namespace detail {

/// Draw from N((A'A)^{-1} A'v, scale2 (A'A)^{-1}) given the factor of A'A.
inline VectorXd draw_regression(const Eigen::LLT<MatrixXd>& llt, const MatrixXd& A, const VectorXd& v,
                                double scale2, Rng& rng) {
  const VectorXd mean = llt.solve(A.transpose() * v);
  VectorXd z(mean.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
  // cov = L^{-T} L^{-1}
  return mean + std::sqrt(scale2) * llt.matrixU().solve(z);
}

inline double draw_scale(double m, double rss, Rng& rng, const char* what) {
  const double rate = 0.5 * rss;
  if (!(rate > 0.0) || !std::isfinite(rate)) {
    throw NumericalError(std::string(what) + ": nonpositive inverse-gamma rate (degenerate residuals)");
  }
  return draw_inverse_gamma(rng, 0.5 * m - 1.0, rate);
}

}  // namespace detail

/// Step 1: theta_i ~ N(p_i y_i + (1 - p_i) x_i'beta, p_i sigma2_i).
inline void draw_theta(ParamState& s, const ModelData& data, Rng& rng) {
  const VectorXd xb = data.X * s.beta;
  for (Eigen::Index i = 0; i < xb.size(); ++i) {
    const double p = s.phi2 / (s.phi2 + s.sigma2[i]);
    const double mean = p * data.y[i] + (1.0 - p) * xb[i];
    s.theta[i] = mean + std::sqrt(p * s.sigma2[i]) * rng.normal();
  }
}

/// Step 2: beta ~ N((X'X)^{-1} X'theta, phi2 (X'X)^{-1}).
inline void draw_beta(ParamState& s, const ModelData& data, const GibbsContext& ctx, Rng& rng) {
  s.beta = detail::draw_regression(ctx.xtx, data.X, s.theta, s.phi2, rng);
}

/// Step 3: gamma ~ N((Z'Z)^{-1} Z' log sigma2, tau2 (Z'Z)^{-1}).
inline void draw_gamma(ParamState& s, const ModelData& data, const GibbsContext& ctx, Rng& rng) {
  const VectorXd log_s2 = s.sigma2.array().log().matrix();
  s.gamma = detail::draw_regression(ctx.ztz, data.Z, log_s2, s.tau2, rng);
}

/// Step 4: phi2 ~ IG(m/2 - 1, |theta - X beta|^2 / 2).
inline void draw_phi2(ParamState& s, const ModelData& data, Rng& rng) {
  s.phi2 = detail::draw_scale(static_cast<double>(data.m()), (s.theta - data.X * s.beta).squaredNorm(), rng, "phi2");
}

/// Step 5: tau2 ~ IG(m/2 - 1, |log sigma2 - Z gamma|^2 / 2).
inline void draw_tau2(ParamState& s, const ModelData& data, Rng& rng) {
  const VectorXd log_s2 = s.sigma2.array().log().matrix();
  s.tau2 = detail::draw_scale(static_cast<double>(data.m()), (log_s2 - data.Z * s.gamma).squaredNorm(), rng, "tau2");
}

/// Steps 1-5 of one scan, in order, using `rng`.
inline void gibbs_steps_1_to_5(ParamState& s, const ModelData& data, const GibbsContext& ctx, Rng& rng) {
  draw_theta(s, data, rng);
  draw_beta(s, data, ctx, rng);
  draw_gamma(s, data, ctx, rng);
  draw_phi2(s, data, rng);
  draw_tau2(s, data, rng);
}

/// Step 6 over all areas. Area i draws from area_rngs[i] only, so the
/// result does not depend on the thread count.
inline vws::DrawStats gibbs_step_6(ParamState& s, const ModelData& data, Sigma2Step& step,
                                   std::span<Rng> area_rngs, std::uint64_t stamp, unsigned threads) {
  const std::size_t m = data.m();
  if (area_rngs.size() != m) throw ValidationError("one generator stream per area is required");
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(m)));
  std::vector<vws::DrawStats> local(workers);
  parallel_for(m, workers, [&](std::size_t b, std::size_t e, unsigned w) {
    for (std::size_t i = b; i < e; ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      const ConditionalParams c = conditional_params(s, data, i);
      try {
        s.sigma2[k] = step.draw(i, c, s.sigma2[k], area_rngs[i], stamp, local[w]);
      } catch (const vws::TuningCapError& err) {
        nlohmann::json snap = err.snapshot();
        snap["area"] = i;
        snap["iteration"] = stamp;
        throw vws::TuningCapError(std::string(err.what()) + " at area " + std::to_string(i), snap);
      }
    }
  });
  vws::DrawStats total;
  for (const auto& l : local) total += l;
  return total;
}

/// One full scan, steps 1 to 6.
inline vws::DrawStats gibbs_scan(ParamState& s, const ModelData& data, const GibbsContext& ctx,
                                 Sigma2Step& step, Rng& rng, std::span<Rng> area_rngs,
                                 std::uint64_t stamp, unsigned threads = 1) {
  gibbs_steps_1_to_5(s, data, ctx, rng);
  return gibbs_step_6(s, data, step, area_rngs, stamp, threads);
}

/// Starting sigma2: all ones, or the direct estimates s2.
enum class Sigma2Init { ones, direct };

inline Sigma2Init parse_sigma2_init(const std::string& s) {
  if (s == "ones") return Sigma2Init::ones;
  if (s == "direct") return Sigma2Init::direct;
  throw ValidationError("unknown sigma2 init '" + s + "' (expected ones or direct)");
}

inline std::string to_string(Sigma2Init i) { return i == Sigma2Init::ones ? "ones" : "direct"; }

/// OLS starting values for beta, phi2 (on y) and gamma, tau2 (on log s2);
/// theta = y, which is overwritten by the first scan.
inline ParamState default_init(const ModelData& data, Sigma2Init init = Sigma2Init::direct) {
  const auto m = static_cast<double>(data.m());
  auto ols = [&](const MatrixXd& A, const VectorXd& v, double& ms) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(A);
    if (qr.rank() != A.cols()) throw DataError("default_init: design matrix is rank deficient");
    VectorXd coef = qr.solve(v);
    const double dof = m - static_cast<double>(A.cols());
    ms = dof > 0.0 ? (v - A * coef).squaredNorm() / dof : 0.0;
    ms = std::max(ms, 1e-8);
    return coef;
  };
  ParamState s;
  s.beta = ols(data.X, data.y, s.phi2);
  s.gamma = ols(data.Z, data.s2.array().log().matrix(), s.tau2);
  s.sigma2 = init == Sigma2Init::ones ? VectorXd::Ones(data.y.size()) : data.s2;
  s.theta = data.y;
  return s;
}

struct ChainCounters {
  vws::DrawStats burn;
  vws::DrawStats keep;
  std::vector<std::uint64_t> knot_updates_per_iter;
  std::vector<std::uint64_t> rejections_per_iter;

  std::uint64_t rejections() const { return burn.rejections + keep.rejections; }
  std::uint64_t proposals() const { return burn.proposals + keep.proposals; }
};

/// Saved draws (one row per kept iteration; column-major, so each variable's
/// chain is contiguous) plus counters.
struct ChainOutput {
  SamplerConfig config;
  MatrixXd theta;   // saved x m
  MatrixXd sigma2;  // saved x m
  MatrixXd beta;    // saved x p
  MatrixXd gamma;   // saved x q
  VectorXd phi2;
  VectorXd tau2;
  ChainCounters counters;
  double elapsed_seconds = 0.0;
  ParamState final_state;

  std::size_t saved() const { return static_cast<std::size_t>(phi2.size()); }

  /// beta, gamma, phi2, tau2 as one saved x (p + q + 2) matrix.
  MatrixXd theta_params() const {
    MatrixXd out(phi2.size(), beta.cols() + gamma.cols() + 2);
    out << beta, gamma, phi2, tau2;
    return out;
  }
};

inline std::vector<std::string> theta_param_names(std::size_t p, std::size_t q) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < p; ++k) names.push_back("beta_" + std::to_string(k));
  for (std::size_t k = 0; k < q; ++k) names.push_back("gamma_" + std::to_string(k));
  names.emplace_back("phi2");
  names.emplace_back("tau2");
  return names;
}

/// Runs `cfg.iters` scans with a caller-provided step 6. Stream policy:
/// Rng(seed).split(0) drives steps 1-5 and split(i + 1) drives area i.
inline ChainOutput run_sampler(const ModelData& data, const SamplerConfig& cfg, Sigma2Step& step,
                               const std::optional<ParamState>& init = std::nullopt) {
  data.validate();
  cfg.validate(data.m());
  const auto t0 = std::chrono::steady_clock::now();
  const GibbsContext ctx(data);
  const Rng root(cfg.seed);
  Rng main = root.split(0);
  std::vector<Rng> area_rngs;
  area_rngs.reserve(data.m());
  for (std::size_t i = 0; i < data.m(); ++i) area_rngs.push_back(root.split(i + 1));

  ParamState s = init ? *init : default_init(data);
  if (static_cast<std::size_t>(s.sigma2.size()) != data.m() || static_cast<std::size_t>(s.beta.size()) != data.p() ||
      static_cast<std::size_t>(s.gamma.size()) != data.q()) {
    throw ValidationError("initial state dimensions do not match the data");
  }
  if (s.theta.size() != s.sigma2.size()) s.theta = data.y;
  if (!(s.phi2 > 0.0) || !(s.tau2 > 0.0) || !(s.sigma2.array() > 0.0).all()) {
    throw ValidationError("initial variances must be positive");
  }

  ChainOutput out;
  out.config = cfg;
  const std::size_t saved = (cfg.iters - cfg.burn) / cfg.thin;
  const auto m = static_cast<Eigen::Index>(data.m());
  out.theta.resize(static_cast<Eigen::Index>(saved), m);
  out.sigma2.resize(static_cast<Eigen::Index>(saved), m);
  out.beta.resize(static_cast<Eigen::Index>(saved), static_cast<Eigen::Index>(data.p()));
  out.gamma.resize(static_cast<Eigen::Index>(saved), static_cast<Eigen::Index>(data.q()));
  out.phi2.resize(static_cast<Eigen::Index>(saved));
  out.tau2.resize(static_cast<Eigen::Index>(saved));
  out.counters.knot_updates_per_iter.reserve(cfg.iters);
  out.counters.rejections_per_iter.reserve(cfg.iters);

  const unsigned threads = resolve_threads(cfg.threads);
  Eigen::Index row = 0;
  for (std::size_t r = 0; r < cfg.iters; ++r) {
    const vws::DrawStats st = gibbs_scan(s, data, ctx, step, main, area_rngs, r + 1, threads);
    (r < cfg.burn ? out.counters.burn : out.counters.keep) += st;
    out.counters.knot_updates_per_iter.push_back(st.knot_updates());
    out.counters.rejections_per_iter.push_back(st.rejections);
    if (r >= cfg.burn && (r - cfg.burn + 1) % cfg.thin == 0 && row < static_cast<Eigen::Index>(saved)) {
      out.theta.row(row) = s.theta.transpose();
      out.sigma2.row(row) = s.sigma2.transpose();
      out.beta.row(row) = s.beta.transpose();
      out.gamma.row(row) = s.gamma.transpose();
      out.phi2[row] = s.phi2;
      out.tau2[row] = s.tau2;
      ++row;
    }
  }
  out.final_state = std::move(s);
  out.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline ChainOutput run_sampler(const ModelData& data, const SamplerConfig& cfg,
                               const std::optional<ParamState>& init = std::nullopt) {
  data.validate();
  cfg.validate(data.m());
  auto step = make_sigma2_step(cfg, data.m());
  return run_sampler(data, cfg, *step, init);
}

}  // namespace vwsgibbs::sae
