#pragma once

// Study drivers: single-conditional study, posterior simulation study and
// the three-sampler data analysis. Each repetition owns a generator stream
// split from the master seed, so results do not depend on thread count.

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <array>
#include <chrono>
#include <cstdint>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vwsgibbs/diagnostics.hpp"
#include "vwsgibbs/error.hpp"
#include "vwsgibbs/ingest.hpp"
#include "vwsgibbs/parallel.hpp"
#include "vwsgibbs/rng.hpp"
#include "vwsgibbs/sae.hpp"
#include "vwsgibbs/vws.hpp"

namespace vwsgibbs::sim {

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

/// Quotes a CSV field when it holds a delimiter, quote or newline.
inline std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\r\n") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

template <class T>
std::vector<T> json_list(const nlohmann::json& j, const char* key, std::vector<T> fallback) {
  return j.contains(key) ? j.at(key).get<std::vector<T>>() : fallback;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Single-conditional study

struct TuningPair {
  double eps1;
  double eps2;
};

struct ConditionalStudyConfig {
  std::vector<double> kappas{10.0, 50.0};
  std::vector<double> taus{0.5, 1.0};
  std::vector<TuningPair> tunings{{0.75, 0.01}, {0.75, 0.001}, {0.50, 0.01}, {0.50, 0.001}};
  double mu = 0.0;
  double lambda = 1.0;
  std::size_t reps = 1000;
  std::size_t draws = 20;
  std::size_t imh_steps = 200'000;
  bool run_imh = true;
  bool run_vws = true;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  void validate() const {
    if (kappas.empty() || taus.empty()) throw ValidationError("conditional study: empty grid");
    for (double k : kappas) {
      if (!(k > 0.0)) throw ValidationError("conditional study: kappa must be positive");
    }
    for (double t : taus) {
      if (!(t > 0.0)) throw ValidationError("conditional study: tau must be positive");
    }
    for (const auto& e : tunings) vws::TuningOptions{e.eps1, e.eps2}.validate();
    if (!(lambda > 0.0)) throw ValidationError("conditional study: lambda must be positive");
    if (reps == 0) throw ValidationError("conditional study: reps must be positive");
    if (run_imh && imh_steps < 100) throw ValidationError("conditional study: imh_steps must be >= 100");
  }

  static ConditionalStudyConfig from_json(const nlohmann::json& j) {
    ConditionalStudyConfig c;
    try {
      c.kappas = detail::json_list(j, "kappa", c.kappas);
      c.taus = detail::json_list(j, "tau", c.taus);
      if (j.contains("tolerances")) {
        c.tunings.clear();
        for (const auto& t : j.at("tolerances")) c.tunings.push_back({t.at(0).get<double>(), t.at(1).get<double>()});
      }
      c.mu = j.value("mu", c.mu);
      c.lambda = j.value("lambda", c.lambda);
      c.reps = j.value("reps", c.reps);
      c.draws = j.value("draws", c.draws);
      c.imh_steps = j.value("imh_steps", c.imh_steps);
      c.run_imh = j.value("run_imh", c.run_imh);
      c.run_vws = j.value("run_vws", c.run_vws);
      c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("conditional study config: ") + e.what());
    }
    c.validate();
    return c;
  }

  nlohmann::json to_json() const {
    nlohmann::json tol = nlohmann::json::array();
    for (const auto& t : tunings) tol.push_back({t.eps1, t.eps2});
    return {{"kappa", kappas}, {"tau", taus},   {"tolerances", tol},   {"mu", mu},
            {"lambda", lambda}, {"reps", reps}, {"draws", draws},      {"imh_steps", imh_steps},
            {"run_imh", run_imh}, {"run_vws", run_vws}, {"seed", seed}};
  }
};

struct ImhCellResult {
  double kappa, tau;
  std::size_t steps;
  double ess;
  bool ess_degenerate;
  std::uint64_t rejections;
  double rho1;
  double elapsed;
};

struct VwsCellResult {
  double kappa, tau, eps1, eps2;
  std::vector<double> median_bound;  // after each draw
  std::vector<double> median_knots;
  std::vector<double> final_bounds;  // per repetition, after the last draw
  std::vector<double> final_knots;
  std::uint64_t proposals = 0;
  std::uint64_t rejections = 0;
  double elapsed = 0.0;
};

struct ConditionalStudyResult {
  std::vector<ImhCellResult> imh;
  std::vector<VwsCellResult> vws;
};

inline sae::ConditionalParams study_params(double kappa, double tau, double mu, double lambda) {
  return {mu, kappa, lambda, tau * tau};
}

/// IMH chain started at the target mode; ESS, rejections and lag-1
/// autocorrelation over the whole chain.
inline ImhCellResult run_imh_cell(double kappa, double tau, const ConditionalStudyConfig& cfg, Rng rng) {
  const auto t0 = std::chrono::steady_clock::now();
  const sae::ConditionalParams c = study_params(kappa, tau, cfg.mu, cfg.lambda);
  std::vector<double> chain(cfg.imh_steps);
  double x = sae::target_mode(c);
  std::uint64_t rejections = 0;
  for (auto& v : chain) {
    const auto r = sae::imh_step_sigma2(x, c, rng);
    rejections += !r.accepted;
    x = r.value;
    v = x;
  }
  const auto e = diag::ess(chain);
  const auto a = diag::autocorr(chain, 1);
  return {kappa, tau, cfg.imh_steps, e.value, e.degenerate, rejections, a.value, detail::seconds_since(t0)};
}

inline VwsCellResult run_vws_cell(double kappa, double tau, TuningPair tol, const ConditionalStudyConfig& cfg,
                                  const Rng& cell_rng) {
  const auto target = sae::sigma2_target(study_params(kappa, tau, cfg.mu, cfg.lambda));
  const vws::TuningOptions opts{tol.eps1, tol.eps2};
  const std::size_t n = cfg.draws;
  std::vector<std::vector<double>> bound(n, std::vector<double>(cfg.reps));
  std::vector<std::vector<double>> knots(n, std::vector<double>(cfg.reps));
  std::vector<vws::DrawStats> stats(cfg.reps);
  std::vector<double> elapsed(cfg.reps, 0.0);
  parallel_for(cfg.reps, cfg.threads, [&](std::size_t b, std::size_t e, unsigned) {
    for (std::size_t r = b; r < e; ++r) {
      Rng rng = cell_rng.split(r);
      const auto t0 = std::chrono::steady_clock::now();
      // Fresh proposal with no internal knots per repetition.
      sae::Sigma2Proposal p(target);
      for (std::size_t k = 0; k < n; ++k) {
        vws::self_tuned_draw(p, opts, rng, k + 1, stats[r]);
        bound[k][r] = p.bound();
        knots[k][r] = static_cast<double>(p.num_knots());
      }
      elapsed[r] = detail::seconds_since(t0);
    }
  });
  VwsCellResult out{kappa, tau, tol.eps1, tol.eps2, {}, {}, {}, {}};
  for (std::size_t k = 0; k < n; ++k) {
    out.median_bound.push_back(diag::quantile(bound[k], 0.5));
    out.median_knots.push_back(diag::quantile(knots[k], 0.5));
  }
  if (n > 0) {
    out.final_bounds = bound[n - 1];
    out.final_knots = knots[n - 1];
  }
  for (std::size_t r = 0; r < cfg.reps; ++r) {
    out.proposals += stats[r].proposals;
    out.rejections += stats[r].rejections;
    out.elapsed += elapsed[r];
  }
  return out;
}

/// Stream layout: cell c of the IMH arm uses split(c); VWS cell c uses
/// split(1000 + c), and repetition r within it uses a further split(r).
inline ConditionalStudyResult run_conditional_study(const ConditionalStudyConfig& cfg) {
  cfg.validate();
  const Rng root(cfg.seed);
  ConditionalStudyResult out;
  std::uint64_t cell = 0;
  for (double kappa : cfg.kappas) {
    for (double tau : cfg.taus) {
      if (cfg.run_imh) out.imh.push_back(run_imh_cell(kappa, tau, cfg, root.split(cell)));
      ++cell;
    }
  }
  cell = 0;
  for (const auto& tol : cfg.tunings) {
    for (double kappa : cfg.kappas) {
      for (double tau : cfg.taus) {
        if (cfg.run_vws) out.vws.push_back(run_vws_cell(kappa, tau, tol, cfg, root.split(1000 + cell)));
        ++cell;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Posterior study

struct Schedule {
  std::size_t iters;
  std::size_t burn;
};

struct RunMetrics {
  std::string sampler;
  std::size_t m = 0;
  double eps1 = 0.0;
  double eps2 = 0.0;
  std::size_t rep = 0;
  std::array<double, 3> sigma2_ess{};  // min, 1%, 2.5%
  std::array<double, 3> theta_ess{};
  double mess = 0.0;
  double elapsed = 0.0;
  std::uint64_t rejections = 0;
  std::uint64_t knots_burn = 0;
  std::uint64_t knots_keep = 0;
};

inline constexpr std::array<double, 3> kEssProbs{0.0, 0.01, 0.025};

inline std::array<double, 3> ess_quantiles(const Eigen::MatrixXd& chains) {
  const auto e = diag::column_ess(chains);
  std::array<double, 3> out{};
  for (std::size_t k = 0; k < 3; ++k) out[k] = diag::quantile(e, kEssProbs[k]);
  return out;
}

inline RunMetrics chain_metrics(const sae::ChainOutput& c, std::size_t m, std::size_t rep) {
  RunMetrics r;
  r.sampler = sae::to_string(c.config.kind);
  r.m = m;
  if (c.config.kind != sae::SamplerKind::mwg) {
    r.eps1 = c.config.eps1;
    r.eps2 = c.config.kind == sae::SamplerKind::vwg ? c.config.eps2 : 0.0;
  }
  r.rep = rep;
  r.sigma2_ess = ess_quantiles(c.sigma2);
  r.theta_ess = ess_quantiles(c.theta);
  try {
    r.mess = diag::multivariate_ess(c.theta_params());
  } catch (const NumericalError&) {
    r.mess = 0.0;
  }
  r.elapsed = c.elapsed_seconds;
  r.rejections = c.counters.rejections();
  r.knots_burn = c.counters.burn.knot_updates();
  r.knots_keep = c.counters.keep.knot_updates();
  return r;
}

struct PosteriorStudyConfig {
  std::vector<std::size_t> ms{500};
  std::vector<double> eps1s{0.50, 0.75, 0.85};
  std::vector<double> eps2s{1e-4, 1e-3, 1e-2};
  std::size_t reps = 10;
  Schedule mwg{30'000, 28'000};
  Schedule vwg{3'000, 1'000};
  bool include_mwg = true;
  bool include_vwg = true;
  sae::Sigma2Init init = sae::Sigma2Init::direct;
  ingest::GeneratorConfig gen{};
  std::uint64_t seed = 1;
  unsigned threads = 1;

  void validate() const {
    if (reps == 0) throw ValidationError("posterior study: reps must be positive");
    if (ms.empty()) throw ValidationError("posterior study: no m levels");
    if (include_vwg && (eps1s.empty() || eps2s.empty())) throw ValidationError("posterior study: no tolerance levels");
    for (const Schedule& s : {mwg, vwg}) {
      if (s.iters == 0 || s.burn > s.iters || s.iters - s.burn < 100) {
        throw ValidationError("posterior study: schedules need at least 100 saved draws");
      }
    }
    for (double e1 : eps1s) {
      for (double e2 : eps2s) vws::TuningOptions{e1, e2}.validate();
    }
    for (std::size_t m : ms) {
      if (m < 3) throw ValidationError("posterior study: m must be at least 3");
    }
  }

  static PosteriorStudyConfig from_json(const nlohmann::json& j) {
    PosteriorStudyConfig c;
    try {
      c.ms = detail::json_list(j, "m", c.ms);
      c.eps1s = detail::json_list(j, "eps1", c.eps1s);
      c.eps2s = detail::json_list(j, "eps2", c.eps2s);
      c.reps = j.value("reps", c.reps);
      if (j.contains("mwg_schedule")) c.mwg = {j["mwg_schedule"].at(0), j["mwg_schedule"].at(1)};
      if (j.contains("vwg_schedule")) c.vwg = {j["vwg_schedule"].at(0), j["vwg_schedule"].at(1)};
      c.include_mwg = j.value("include_mwg", c.include_mwg);
      c.include_vwg = j.value("include_vwg", c.include_vwg);
      if (j.contains("sigma2_init")) c.init = sae::parse_sigma2_init(j.at("sigma2_init").get<std::string>());
      c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("posterior study config: ") + e.what());
    }
    c.validate();
    return c;
  }

  nlohmann::json to_json() const {
    return {{"m", ms},
            {"eps1", eps1s},
            {"eps2", eps2s},
            {"reps", reps},
            {"mwg_schedule", {mwg.iters, mwg.burn}},
            {"vwg_schedule", {vwg.iters, vwg.burn}},
            {"include_mwg", include_mwg},
            {"include_vwg", include_vwg},
            {"sigma2_init", sae::to_string(init)},
            {"seed", seed}};
  }
};

/// Level averages over repetitions; same fields as RunMetrics.
struct PosteriorStudyResult {
  std::vector<RunMetrics> runs;
  std::vector<RunMetrics> levels;
};

inline std::vector<RunMetrics> average_levels(const std::vector<RunMetrics>& runs) {
  std::vector<RunMetrics> out;
  std::vector<std::size_t> counts;
  for (const auto& r : runs) {
    auto it = std::find_if(out.begin(), out.end(), [&](const RunMetrics& l) {
      return l.sampler == r.sampler && l.m == r.m && l.eps1 == r.eps1 && l.eps2 == r.eps2;
    });
    if (it == out.end()) {
      RunMetrics l;
      l.sampler = r.sampler;
      l.m = r.m;
      l.eps1 = r.eps1;
      l.eps2 = r.eps2;
      out.push_back(l);
      counts.push_back(0);
      it = out.end() - 1;
    }
    auto& l = *it;
    ++counts[static_cast<std::size_t>(it - out.begin())];
    for (std::size_t k = 0; k < 3; ++k) {
      l.sigma2_ess[k] += r.sigma2_ess[k];
      l.theta_ess[k] += r.theta_ess[k];
    }
    l.mess += r.mess;
    l.elapsed += r.elapsed;
    l.rejections += r.rejections;
    l.knots_burn += r.knots_burn;
    l.knots_keep += r.knots_keep;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double n = static_cast<double>(counts[i]);
    auto& l = out[i];
    l.rep = counts[i];
    for (std::size_t k = 0; k < 3; ++k) {
      l.sigma2_ess[k] /= n;
      l.theta_ess[k] /= n;
    }
    l.mess /= n;
    l.elapsed /= n;
    // Counts are averaged with rounding to keep them integral.
    l.rejections = static_cast<std::uint64_t>(std::llround(static_cast<double>(l.rejections) / n));
    l.knots_burn = static_cast<std::uint64_t>(std::llround(static_cast<double>(l.knots_burn) / n));
    l.knots_keep = static_cast<std::uint64_t>(std::llround(static_cast<double>(l.knots_keep) / n));
  }
  return out;
}

/// Dataset s for size level k comes from split(k).split(s); every sampler
/// at that size sees the same datasets. Chain seeds are derived from the
/// dataset stream as well.
inline PosteriorStudyResult run_posterior_study(const PosteriorStudyConfig& cfg) {
  cfg.validate();
  const Rng root(cfg.seed);
  struct Job {
    std::size_t m_level, rep;
    sae::SamplerKind kind;
    double eps1, eps2;
  };
  std::vector<Job> jobs;
  for (std::size_t k = 0; k < cfg.ms.size(); ++k) {
    for (std::size_t s = 0; s < cfg.reps; ++s) {
      if (cfg.include_mwg) jobs.push_back({k, s, sae::SamplerKind::mwg, 0.0, 0.0});
      if (cfg.include_vwg) {
        for (double e1 : cfg.eps1s) {
          for (double e2 : cfg.eps2s) jobs.push_back({k, s, sae::SamplerKind::vwg, e1, e2});
        }
      }
    }
  }
  std::vector<RunMetrics> runs(jobs.size());
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t b, std::size_t e, unsigned) {
    for (std::size_t j = b; j < e; ++j) {
      const Job& job = jobs[j];
      ingest::GeneratorConfig gen = cfg.gen;
      gen.m = cfg.ms[job.m_level];
      const Rng data_stream = root.split(job.m_level).split(job.rep);
      Rng data_rng = data_stream.split(0);
      const auto sim = ingest::simulate_dataset(gen, data_rng);
      sae::SamplerConfig sc;
      sc.kind = job.kind;
      const Schedule sched = job.kind == sae::SamplerKind::mwg ? cfg.mwg : cfg.vwg;
      sc.iters = sched.iters;
      sc.burn = sched.burn;
      sc.eps1 = job.kind == sae::SamplerKind::mwg ? 0.85 : job.eps1;
      sc.eps2 = job.kind == sae::SamplerKind::mwg ? 1e-4 : job.eps2;
      sc.seed = data_stream.split(1).operator()();
      sc.threads = 1;
      const auto chain = sae::run_sampler(sim.data, sc, sae::default_init(sim.data, cfg.init));
      runs[j] = chain_metrics(chain, gen.m, job.rep);
    }
  });
  return {runs, average_levels(runs)};
}

// ---------------------------------------------------------------------------
// Data analysis

struct AnalysisConfig {
  std::vector<sae::SamplerKind> samplers{sae::SamplerKind::mwg, sae::SamplerKind::vwg_basic, sae::SamplerKind::vwg};
  Schedule mwg{30'000, 28'000};
  Schedule vwg{3'000, 1'000};
  double eps1 = 0.85;
  double eps2 = 1e-4;
  std::size_t basic_max_regions = 50;
  sae::Sigma2Init init = sae::Sigma2Init::direct;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct RatioRow {
  std::string id;
  double mwg_ess;
  double vwg_ess;
  double mean_ratio;   // VWG posterior mean / MWG posterior mean
  double width_ratio;  // VWG 90% width / MWG 90% width
};

struct AnalysisResult {
  std::vector<RunMetrics> comparison;
  std::map<std::string, diag::SummaryTable> theta_summaries;
  std::map<std::string, sae::ChainOutput> chains;
  std::vector<RatioRow> ratios;
};

/// Runs each configured sampler on `data` with seed `cfg.seed`.
inline AnalysisResult run_data_analysis(const sae::ModelData& data, const AnalysisConfig& cfg) {
  data.validate();
  AnalysisResult out;
  const auto names = sae::theta_param_names(data.p(), data.q());
  for (const auto kind : cfg.samplers) {
    sae::SamplerConfig sc;
    sc.kind = kind;
    const Schedule sched = kind == sae::SamplerKind::mwg ? cfg.mwg : cfg.vwg;
    sc.iters = sched.iters;
    sc.burn = sched.burn;
    sc.eps1 = cfg.eps1;
    sc.eps2 = cfg.eps2;
    sc.basic_max_regions = cfg.basic_max_regions;
    sc.seed = cfg.seed;
    sc.threads = cfg.threads;
    auto chain = sae::run_sampler(data, sc, sae::default_init(data, cfg.init));
    out.comparison.push_back(chain_metrics(chain, data.m(), 0));
    out.theta_summaries.emplace(sae::to_string(kind), diag::summarize(chain.theta_params(), names));
    out.chains.emplace(sae::to_string(kind), std::move(chain));
  }
  const auto mwg = out.chains.find("mwg");
  const auto vwg = out.chains.find("vwg");
  if (mwg != out.chains.end() && vwg != out.chains.end()) {
    const auto e_m = diag::column_ess(mwg->second.sigma2);
    const auto e_v = diag::column_ess(vwg->second.sigma2);
    for (Eigen::Index i = 0; i < mwg->second.sigma2.cols(); ++i) {
      auto col = [&](const sae::ChainOutput& c) {
        const Eigen::VectorXd v = c.sigma2.col(i);
        return std::vector<double>(v.data(), v.data() + v.size());
      };
      const auto a = col(vwg->second);
      const auto b = col(mwg->second);
      const double width_a = diag::quantile(a, 0.95) - diag::quantile(a, 0.05);
      const double width_b = diag::quantile(b, 0.95) - diag::quantile(b, 0.05);
      const auto k = static_cast<std::size_t>(i);
      out.ratios.push_back({data.ids.empty() ? std::to_string(k + 1) : data.ids[k], e_m[k], e_v[k],
                            vwg->second.sigma2.col(i).mean() / mwg->second.sigma2.col(i).mean(),
                            width_b > 0.0 ? width_a / width_b : std::numeric_limits<double>::infinity()});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tables. Elapsed times go to separate files so the remaining tables are
// byte-identical across reruns.

inline std::string imh_table_csv(const ConditionalStudyResult& r) {
  std::ostringstream os;
  os << "kappa,tau,steps,ess,ess_degenerate,rejections,rho1\n";
  for (const auto& c : r.imh) {
    os << detail::fmt(c.kappa) << ',' << detail::fmt(c.tau) << ',' << c.steps << ',' << detail::fmt(c.ess) << ','
       << (c.ess_degenerate ? 1 : 0) << ',' << c.rejections << ',' << detail::fmt(c.rho1) << '\n';
  }
  return os.str();
}

inline std::string vws_rejections_csv(const ConditionalStudyResult& r) {
  std::ostringstream os;
  os << "kappa,tau,eps1,eps2,proposals,rejections\n";
  for (const auto& c : r.vws) {
    os << detail::fmt(c.kappa) << ',' << detail::fmt(c.tau) << ',' << detail::fmt(c.eps1) << ','
       << detail::fmt(c.eps2) << ',' << c.proposals << ',' << c.rejections << '\n';
  }
  return os.str();
}

inline std::string vws_trajectories_csv(const ConditionalStudyResult& r) {
  std::ostringstream os;
  os << "kappa,tau,eps1,eps2,draw,median_bound,median_log_bound,median_knots\n";
  for (const auto& c : r.vws) {
    for (std::size_t k = 0; k < c.median_bound.size(); ++k) {
      os << detail::fmt(c.kappa) << ',' << detail::fmt(c.tau) << ',' << detail::fmt(c.eps1) << ','
         << detail::fmt(c.eps2) << ',' << k + 1 << ',' << detail::fmt(c.median_bound[k]) << ','
         << detail::fmt(std::log(c.median_bound[k])) << ',' << detail::fmt(c.median_knots[k]) << '\n';
    }
  }
  return os.str();
}

inline std::string conditional_timings_csv(const ConditionalStudyResult& r) {
  std::ostringstream os;
  os << "arm,kappa,tau,eps1,eps2,elapsed_seconds\n";
  for (const auto& c : r.imh) os << "imh," << detail::fmt(c.kappa) << ',' << detail::fmt(c.tau) << ",,," << detail::fmt(c.elapsed) << '\n';
  for (const auto& c : r.vws) {
    os << "vws," << detail::fmt(c.kappa) << ',' << detail::fmt(c.tau) << ',' << detail::fmt(c.eps1) << ','
       << detail::fmt(c.eps2) << ',' << detail::fmt(c.elapsed) << '\n';
  }
  return os.str();
}

/// Metrics table; `with_elapsed` adds the measured time column.
inline std::string metrics_csv(const std::vector<RunMetrics>& rows, bool with_elapsed, bool with_rep) {
  std::ostringstream os;
  os << "sampler,m,eps1,eps2";
  if (with_rep) os << ",rep";
  os << ",sigma2_ess_min,sigma2_ess_q01,sigma2_ess_q025,theta_ess_min,theta_ess_q01,theta_ess_q025,"
        "mess_params,rejections,knots_burn,knots_keep";
  if (with_elapsed) os << ",elapsed_seconds";
  os << '\n';
  for (const auto& r : rows) {
    os << r.sampler << ',' << r.m << ',' << detail::fmt(r.eps1) << ',' << detail::fmt(r.eps2);
    if (with_rep) os << ',' << r.rep;
    for (double v : r.sigma2_ess) os << ',' << detail::fmt(v);
    for (double v : r.theta_ess) os << ',' << detail::fmt(v);
    os << ',' << detail::fmt(r.mess) << ',' << r.rejections << ',' << r.knots_burn << ',' << r.knots_keep;
    if (with_elapsed) os << ',' << detail::fmt(r.elapsed);
    os << '\n';
  }
  return os.str();
}

inline std::string ratios_csv(const std::vector<RatioRow>& rows) {
  std::ostringstream os;
  os << "id,mwg_ess,vwg_ess,mean_ratio,width_ratio\n";
  for (const auto& r : rows) {
    os << detail::csv_field(r.id) << ',' << detail::fmt(r.mwg_ess) << ',' << detail::fmt(r.vwg_ess) << ',' << detail::fmt(r.mean_ratio)
       << ',' << detail::fmt(r.width_ratio) << '\n';
  }
  return os.str();
}

inline std::string knot_series_csv(const sae::ChainOutput& c) {
  std::ostringstream os;
  os << "iteration,knot_updates,log10_1p_knot_updates,rejections\n";
  for (std::size_t r = 0; r < c.counters.knot_updates_per_iter.size(); ++r) {
    const auto k = c.counters.knot_updates_per_iter[r];
    os << r + 1 << ',' << k << ',' << detail::fmt(std::log10(1.0 + static_cast<double>(k))) << ','
       << c.counters.rejections_per_iter[r] << '\n';
  }
  return os.str();
}

}  // namespace vwsgibbs::sim
