// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any
// criterion fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "grid_step.hpp"
#include "oracles.hpp"
#include "vwsgibbs/diagnostics.hpp"
#include "vwsgibbs/ingest.hpp"
#include "vwsgibbs/sae.hpp"
#include "vwsgibbs/sim.hpp"
#include "vwsgibbs/vws.hpp"

using namespace vwsgibbs;

namespace {

const std::string kDataDir = VWSGIBBS_TEST_DATA_DIR;

// Tolerances.
constexpr double kImhRej50 = 0.871, kImhRej10 = 0.212, kImhRejTol = 0.02;
constexpr double kImhRho50Min = 0.95, kImhRho10 = 0.41, kImhRhoTol = 0.06;
constexpr double kImhMaxSeconds = 60.0;
constexpr double kDecayTarget = 0.75;
constexpr double kDecayMaxSeconds = 120.0;
constexpr double kPlateauLo = 35.0, kPlateauHi = 50.0, kOtherPlateauMax = 25.0;
constexpr double kGofLevel = 0.01;
constexpr double kMajorizeRelTol = 1e-12;
constexpr double kSeZ = 3.0;
constexpr double kVwgMinEss = 1300.0, kMwgMaxMinEss = 200.0, kVwgMinMess = 300.0, kMwgMaxMess = 320.0;
constexpr double kPosteriorMaxSeconds = 1800.0;
constexpr double kMcseZ = 3.0;
constexpr double kCostRatio = 5.0, kAnalysisMinEss = 1000.0;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void verdict(int n, bool ok, const std::string& detail) {
  std::printf("criterion %d %s: %s\n", n, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void info(const std::string& s) {
  std::printf("  info: %s\n", s.c_str());
  std::fflush(stdout);
}

std::string f(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

using IgTarget = sae::Sigma2Target;

IgTarget ig_target(double kappa, double lambda, double mu, double tau) {
  return sae::sigma2_target({mu, kappa, lambda, tau * tau});
}

const std::vector<std::pair<double, double>> kSettings{{10, 0.5}, {10, 1.0}, {50, 0.5}, {50, 1.0}};

void imh_chains() {
  sim::ConditionalStudyConfig cfg;
  cfg.imh_steps = 200'000;
  const Rng root(101);
  const auto a = sim::run_imh_cell(50, 0.5, cfg, root.split(0));
  const auto b = sim::run_imh_cell(10, 1.0, cfg, root.split(1));
  const double ra = static_cast<double>(a.rejections) / static_cast<double>(a.steps);
  const double rb = static_cast<double>(b.rejections) / static_cast<double>(b.steps);
  const bool ok = std::abs(ra - kImhRej50) <= kImhRejTol && a.rho1 >= kImhRho50Min &&
                  std::abs(rb - kImhRej10) <= kImhRejTol && std::abs(b.rho1 - kImhRho10) <= kImhRhoTol &&
                  a.elapsed <= kImhMaxSeconds && b.elapsed <= kImhMaxSeconds;
  verdict(1, ok,
          "(50,0.5) rej " + f(ra) + " rho1 " + f(a.rho1) + " " + f(a.elapsed, 3) + "s; (10,1.0) rej " + f(rb) +
              " rho1 " + f(b.rho1) + " " + f(b.elapsed, 3) + "s");
}

sim::ConditionalStudyResult conditional_vws(double& seconds) {
  sim::ConditionalStudyConfig cfg;
  cfg.run_imh = false;
  cfg.reps = 1000;
  cfg.draws = 20;
  cfg.seed = 102;
  const auto t0 = Clock::now();
  auto r = sim::run_conditional_study(cfg);
  seconds = since(t0);
  return r;
}

const sim::VwsCellResult& cell(const sim::ConditionalStudyResult& r, double kappa, double tau, double eps1,
                               double eps2) {
  for (const auto& c : r.vws) {
    if (c.kappa == kappa && c.tau == tau && c.eps1 == eps1 && c.eps2 == eps2) return c;
  }
  throw std::logic_error("missing cell");
}

void bound_decay(const sim::ConditionalStudyResult& r, double seconds) {
  bool all_075 = true;
  bool some_unmet = false;
  int unmet_050 = 0;
  std::string worst;
  double worst_val = 0.0;
  for (double eps2 : {0.01, 0.001}) {
    for (const auto& [kappa, tau] : kSettings) {
      const double b75 = cell(r, kappa, tau, 0.75, eps2).median_bound.back();
      const double b50 = cell(r, kappa, tau, 0.50, eps2).median_bound.back();
      if (!(b75 < kDecayTarget)) all_075 = false;
      if (b75 > worst_val) {
        worst_val = b75;
        worst = "(" + f(kappa) + "," + f(tau) + ",eps2=" + f(eps2) + ")";
      }
      if (b50 > b75 && b50 < kDecayTarget) some_unmet = true;
      if (b50 > 0.50 && b50 < kDecayTarget) ++unmet_050;
      info("(" + f(kappa) + "," + f(tau) + ",eps2=" + f(eps2) + ") median bound at draw 20: eps1=0.75 " + f(b75) +
           ", eps1=0.50 " + f(b50));
    }
  }
  info("eps1=0.50 median bound between 0.50 and 0.75 at draw 20 in " + std::to_string(unmet_050) + " of 8 settings");
  verdict(2, all_075 && some_unmet && seconds <= kDecayMaxSeconds,
          "eps1=0.75 all below 0.75: " + std::string(all_075 ? "yes" : "no") + " (largest " + f(worst_val) + " at " +
              worst + "); eps1=0.50 above eps1=0.75 terminal somewhere: " + (some_unmet ? "yes" : "no") + "; " +
              f(seconds, 3) + "s");
}

void knot_plateau(const sim::ConditionalStudyResult& r) {
  bool ok = true;
  std::string detail;
  for (double eps2 : {0.01, 0.001}) {
    for (const auto& [kappa, tau] : kSettings) {
      const double k = cell(r, kappa, tau, 0.75, eps2).median_knots.back();
      if (kappa == 50 && tau == 1.0) {
        ok = ok && k >= kPlateauLo && k <= kPlateauHi;
        detail += "(50,1.0,eps2=" + f(eps2) + ") " + f(k) + "; ";
      } else {
        ok = ok && k < kOtherPlateauMax;
      }
    }
  }
  double top = 0.0;
  std::string top_cell;
  for (const auto& c : r.vws) {
    info("median knots at draw 20 (" + f(c.kappa) + "," + f(c.tau) + ",eps1=" + f(c.eps1) + ",eps2=" + f(c.eps2) +
         "): " + f(c.median_knots.back()));
    if (c.median_knots.back() > top) {
      top = c.median_knots.back();
      top_cell = "(" + f(c.kappa) + "," + f(c.tau) + ",eps1=" + f(c.eps1) + ",eps2=" + f(c.eps2) + ")";
    }
  }
  verdict(3, ok, detail + "largest plateau " + f(top) + " at " + top_cell);
}

void frozen_gof() {
  bool ok = true;
  std::string detail;
  Rng rng(104);
  for (const auto& [kappa, tau] : kSettings) {
    auto p = sae::Sigma2Proposal(ig_target(kappa, 1, 0, tau));
    vws::DrawStats stats;
    for (std::uint64_t k = 1; k <= 20; ++k) vws::self_tuned_draw(p, {0.75, 0.01}, rng, k, stats);
    const std::size_t n_knots = p.num_knots();
    std::vector<double> t;
    t.reserve(100'000);
    while (t.size() < 100'000) {
      const auto d = p.sample(rng);
      if (p.accept(d.x, d.region, rng.uniform())) t.push_back(std::log(d.x));
    }
    const oracle::TargetDensity dens(kappa, 1, 0, tau);
    const double pv = oracle::chisq_gof_pvalue(t, dens.equiprobable_edges(50));
    ok = ok && pv > kGofLevel && p.num_knots() == n_knots;
    detail += "(" + f(kappa) + "," + f(tau) + ") p=" + f(pv, 3) + " knots " + std::to_string(n_knots) + "; ";
  }
  verdict(4, ok, detail);
}

void envelope_properties() {
  Rng rng(105);
  std::size_t major_bad = 0, add_bad = 0, remove_bad = 0, rate_bad = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const double kappa = 60.0 * rng.uniform();
    const double lambda = std::exp(std::log(0.01) + std::log(1000.0) * rng.uniform());
    const double mu = -3.0 + 6.0 * rng.uniform();
    const double tau = 0.2 + 1.8 * rng.uniform();
    const double eta = lambda / (kappa + 1.0);
    std::vector<double> knots;
    const int n = static_cast<int>(rng.uniform() * 16);
    for (int k = 0; k < n; ++k) knots.push_back(eta * std::exp(-3.0 + 6.0 * rng.uniform()));
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
    const auto target = ig_target(kappa, lambda, mu, tau);
    auto p = vws::build_proposal(target, knots);

    // 10^4 points spanning the bulk of both weight and base on the log scale.
    const double lo = std::min(std::log(eta), mu) - 12.0;
    const double hi = std::max(std::log(eta), mu) + 12.0;
    for (int k = 0; k < 10'000; ++k) {
      const double x = std::exp(lo + (hi - lo) * (k + 0.5) / 10'000.0);
      const double lw = oracle::ig_log_weight(x, kappa, lambda);
      const auto& reg = p.region(p.locate(x));
      if (lw > reg.log_upper + kMajorizeRelTol * std::max(1.0, std::abs(lw))) ++major_bad;
    }

    const double rho = p.bound();
    const int trials = 2000;
    int rejected = 0;
    for (int k = 0; k < trials; ++k) {
      const auto d = p.sample(rng);
      rejected += !p.accept(d.x, d.region, rng.uniform());
    }
    const double se = std::sqrt(std::max(rho * (1.0 - rho), 1e-12) / trials);
    if (static_cast<double>(rejected) / trials > rho + kSeZ * se) ++rate_bad;

    auto q = p;
    q.add_knot(eta * std::exp(-3.0 + 6.0 * rng.uniform()));
    if (q.bound() > rho * (1 + kMajorizeRelTol) + 1e-15) ++add_bad;
    if (p.num_knots() > 0) {
      auto r = p;
      r.remove_knot(static_cast<std::size_t>(rng.uniform() * static_cast<double>(p.num_knots())));
      if (r.bound() < rho * (1 - kMajorizeRelTol) - 1e-15) ++remove_bad;
    }
  }
  verdict(5, major_bad + add_bad + remove_bad + rate_bad == 0,
          "violations over 1000 targets: majorization " + std::to_string(major_bad) + ", add_knot " +
              std::to_string(add_bad) + ", remove_knot " + std::to_string(remove_bad) + ", rejection rate " +
              std::to_string(rate_bad));
}

void posterior_study() {
  sim::PosteriorStudyConfig cfg;
  cfg.ms = {500};
  cfg.eps1s = {0.85};
  cfg.eps2s = {1e-4};
  cfg.reps = 10;
  cfg.seed = 106;
  const auto t0 = Clock::now();
  const auto r = sim::run_posterior_study(cfg);
  const double seconds = since(t0);
  const sim::RunMetrics* mwg = nullptr;
  const sim::RunMetrics* vwg = nullptr;
  for (const auto& l : r.levels) (l.sampler == "mwg" ? mwg : vwg) = &l;
  const bool ok = vwg->sigma2_ess[0] >= kVwgMinEss && mwg->sigma2_ess[0] <= kMwgMaxMinEss &&
                  vwg->mess >= kVwgMinMess && mwg->mess <= kMwgMaxMess && seconds <= kPosteriorMaxSeconds;
  verdict(6, ok,
          "VWG min ESS " + f(vwg->sigma2_ess[0]) + " mESS " + f(vwg->mess) + "; MWG min ESS " +
              f(mwg->sigma2_ess[0]) + " mESS " + f(mwg->mess) + "; " + f(seconds, 3) + "s");
  info("VWG 1%/2.5% ESS quantiles " + f(vwg->sigma2_ess[1]) + " / " + f(vwg->sigma2_ess[2]) +
       "; MWG rejections " + f(mwg->rejections, 6));
  // Same statistic on exactly independent chains of the same shape.
  Rng rng(1061);
  double iid = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::MatrixXd m(2000, 500);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.normal();
    iid += sim::ess_quantiles(m)[0] / 10.0;
  }
  info("min ESS over 500 independent chains of 2000 draws, averaged over 10 reps: " + f(iid));
}

void gibbs_agreement() {
  ingest::GeneratorConfig g;
  g.m = 50;
  Rng data_rng(107);
  const auto data = ingest::simulate_dataset(g, data_rng).data;
  const auto init = sae::default_init(data, sae::Sigma2Init::direct);
  sae::SamplerConfig c;
  c.seed = 1071;
  c.iters = 30'000;
  c.burn = 5'000;
  oracle::GridExactStep grid;
  const auto t0 = Clock::now();
  const auto ref = sae::run_sampler(data, c, grid, init);
  const auto vwg = sae::run_sampler(data, c, init);
  c.kind = sae::SamplerKind::mwg;
  c.iters = 200'000;
  c.burn = 20'000;
  const auto mwg = sae::run_sampler(data, c, init);
  const double seconds = since(t0);

  const auto names = sae::theta_param_names(data.p(), data.q());
  const std::vector<std::pair<std::string, const sae::ChainOutput*>> chains{
      {"grid", &ref}, {"vwg", &vwg}, {"mwg", &mwg}};
  struct Est {
    double mean, se;
  };
  std::map<std::string, std::vector<Est>> est;
  for (const auto& [name, ch] : chains) {
    const Eigen::MatrixXd th = ch->theta_params();
    for (Eigen::Index j = 0; j < th.cols(); ++j) {
      const Eigen::VectorXd v = th.col(j);
      const std::vector<double> s(v.data(), v.data() + v.size());
      const double ess = diag::ess(v).value;
      est[name].push_back({v.mean(), oracle::sample_sd(s) / std::sqrt(ess)});
    }
  }
  bool ok = true;
  double worst = 0.0;
  std::string worst_at;
  for (std::size_t a = 0; a < chains.size(); ++a) {
    for (std::size_t b = a + 1; b < chains.size(); ++b) {
      for (std::size_t j = 0; j < names.size(); ++j) {
        const Est& x = est[chains[a].first][j];
        const Est& y = est[chains[b].first][j];
        const double z = std::abs(x.mean - y.mean) / std::sqrt(x.se * x.se + y.se * y.se);
        if (z > kMcseZ) ok = false;
        if (z > worst) {
          worst = z;
          worst_at = chains[a].first + " vs " + chains[b].first + " " + names[j];
        }
      }
    }
  }
  for (std::size_t j = 0; j < names.size(); ++j) {
    info(names[j] + ": grid " + f(est["grid"][j].mean, 5) + " (" + f(est["grid"][j].se, 2) + "), vwg " +
         f(est["vwg"][j].mean, 5) + " (" + f(est["vwg"][j].se, 2) + "), mwg " + f(est["mwg"][j].mean, 5) + " (" +
         f(est["mwg"][j].se, 2) + ")");
  }
  verdict(7, ok, "largest standardized difference " + f(worst, 3) + " (" + worst_at + "); " + f(seconds, 3) + "s");
}

void tuning_economy() {
  sim::PosteriorStudyConfig cfg;
  cfg.ms = {500};
  cfg.reps = 3;
  cfg.include_mwg = false;
  cfg.seed = 108;
  const auto r = sim::run_posterior_study(cfg);
  std::map<std::pair<double, double>, const sim::RunMetrics*> lv;
  for (const auto& l : r.levels) lv[{l.eps2, l.eps1}] = &l;
  bool ok = true;
  for (double e2 : cfg.eps2s) {
    for (std::size_t k = 0; k < cfg.eps1s.size(); ++k) {
      const auto* cur = lv.at({e2, cfg.eps1s[k]});
      info("eps1 " + f(cur->eps1) + " eps2 " + f(cur->eps2) + ": rejections " + f(cur->rejections, 8) +
           ", knot updates burn " + f(cur->knots_burn, 8) + " keep " + f(cur->knots_keep, 8));
      ok = ok && cur->knots_burn > cur->knots_keep;
      if (k == 0) continue;
      const auto* prev = lv.at({e2, cfg.eps1s[k - 1]});
      ok = ok && cur->rejections > prev->rejections;
      ok = ok && cur->knots_burn + cur->knots_keep < prev->knots_burn + prev->knots_keep;
    }
  }
  verdict(8, ok, "rejections rise and knot updates fall with eps1 at each eps2; burn updates exceed keep updates");
}

void basic_cost() {
  const auto schema =
      ingest::Schema::from_json(nlohmann::json::parse(ingest::read_file(kDataDir + "/acs_counties_schema.json")));
  const auto loaded = ingest::load_dataset(kDataDir + "/acs_counties.csv", schema);
  sim::AnalysisConfig cfg;
  cfg.samplers = {sae::SamplerKind::vwg, sae::SamplerKind::vwg_basic};
  cfg.seed = 109;
  const auto r = sim::run_data_analysis(loaded.data, cfg);
  const auto& tuned = r.comparison[0];
  const auto& basic = r.comparison[1];
  const double ratio = basic.elapsed / tuned.elapsed;
  const bool ok = loaded.data.m() >= 500 && ratio >= kCostRatio && basic.sigma2_ess[0] >= kAnalysisMinEss &&
                  tuned.sigma2_ess[0] >= kAnalysisMinEss;
  verdict(9, ok,
          "m=" + std::to_string(loaded.data.m()) + "; basic " + f(basic.elapsed, 3) + "s min ESS " +
              f(basic.sigma2_ess[0]) + "; self-tuned " + f(tuned.elapsed, 3) + "s min ESS " +
              f(tuned.sigma2_ess[0]) + "; time ratio " + f(ratio, 3));
  info("rejections basic " + f(basic.rejections, 8) + " self-tuned " + f(tuned.rejections, 8) +
       "; knot updates basic " + f(basic.knots_burn + basic.knots_keep, 8) + " self-tuned " +
       f(tuned.knots_burn + tuned.knots_keep, 8));
}

void ingestion() {
  const auto schema =
      ingest::Schema::from_json(nlohmann::json::parse(ingest::read_file(kDataDir + "/five_rows_schema.json")));
  const auto r = ingest::load_dataset(kDataDir + "/five_rows.csv", schema);
  std::set<std::string> reasons;
  for (const auto& e : r.exclusions) reasons.insert(ingest::to_string(e.reason));
  const auto t = ingest::delta_transform(100.0, 400.0);
  const bool ok = r.data.m() == 3 && reasons == std::set<std::string>{"ZERO_ESTIMATE", "DF_BELOW_ONE"} && t &&
                  t->y == std::log(100.0) && t->s2 == 0.04;
  std::string rs;
  for (const auto& s : reasons) rs += s + " ";
  verdict(10, ok, "m=" + std::to_string(r.data.m()) + ", exclusions " + rs + "; delta_transform(100, 400) = (" +
                      f(t->y, 17) + ", " + f(t->s2, 17) + ")");
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto want = [&](int n) { return only.empty() || only.count(n) > 0; };
  try {
    if (want(1)) imh_chains();
    if (want(2) || want(3)) {
      double seconds = 0.0;
      const auto r = conditional_vws(seconds);
      if (want(2)) bound_decay(r, seconds);
      if (want(3)) knot_plateau(r);
    }
    if (want(4)) frozen_gof();
    if (want(5)) envelope_properties();
    if (want(6)) posterior_study();
    if (want(7)) gibbs_agreement();
    if (want(8)) tuning_economy();
    if (want(9)) basic_cost();
    if (want(10)) ingestion();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
