// vwsgibbs command-line tool: ingest data, fit the joint model, run the
// simulation studies and summarize chains.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "vwsgibbs/chain_io.hpp"
#include "vwsgibbs/diagnostics.hpp"
#include "vwsgibbs/error.hpp"
#include "vwsgibbs/ingest.hpp"
#include "vwsgibbs/sae.hpp"
#include "vwsgibbs/sim.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace vwsgibbs;

namespace {

using Clock = std::chrono::steady_clock;

std::vector<std::string> g_argv;

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Relative output paths land under $VWSGIBBS_OUT_DIR when it is set.
std::string resolve_out(const std::string& p) {
  const char* dir = std::getenv("VWSGIBBS_OUT_DIR");
  if (dir == nullptr || *dir == '\0' || fs::path(p).is_absolute()) return p;
  return (fs::path(dir) / p).string();
}

unsigned env_threads() {
  const char* v = std::getenv("VWSGIBBS_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  try {
    std::size_t used = 0;
    const long n = std::stol(v, &used);
    if (used != std::string(v).size() || n < 0) throw std::invalid_argument(v);
    return static_cast<unsigned>(n);
  } catch (const std::exception&) {
    throw ValidationError(std::string("VWSGIBBS_THREADS must be a non-negative integer, got '") + v + "'");
  }
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_text(const fs::path& p, const std::string& text) {
  ensure_parent(p);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + p.string() + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + p.string() + "'");
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

json read_json(const std::string& path) {
  const std::string text = ingest::read_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError("'" + path + "' is not valid JSON: " + e.what());
  }
}

/// Written next to each artifact (or inside an output directory) so the
/// run can be repeated exactly.
void write_manifest(const fs::path& where, const std::string& command, const json& flags,
                    std::optional<std::uint64_t> seed, Clock::time_point t0, const std::vector<std::string>& outputs) {
  json m;
  m["tool"] = "vwsgibbs";
  m["version"] = VWSGIBBS_VERSION;
  m["command"] = command;
  m["argv"] = g_argv;
  m["flags"] = flags;
  m["seed"] = seed ? json(*seed) : json(nullptr);
  m["finished_utc"] = utc_now();
  m["wall_clock_seconds"] = std::chrono::duration<double>(Clock::now() - t0).count();
  m["outputs"] = outputs;
  write_json(where, m);
}

fs::path manifest_for_file(const fs::path& artifact) { return fs::path(artifact.string() + ".manifest.json"); }

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string csv, schema, out, report;
};

int run_ingest(const IngestArgs& a) {
  const auto t0 = Clock::now();
  const auto schema = ingest::Schema::from_json(read_json(a.schema));
  const auto result = ingest::load_dataset(a.csv, schema);
  result.data.validate();
  const fs::path out = resolve_out(a.out);
  const fs::path report = a.report.empty() ? fs::path(out.string() + ".exclusions.json") : fs::path(resolve_out(a.report));
  write_json(out, ingest::bundle_json(result.data));
  write_json(report, result.report_json());
  write_manifest(manifest_for_file(out), "ingest",
                 {{"csv", a.csv}, {"schema", a.schema}, {"out", out.string()}, {"report", report.string()}},
                 std::nullopt, t0, {out.string(), report.string()});
  std::cout << "retained " << result.data.m() << " of " << result.input_rows << " rows; wrote " << out.string()
            << "\n";
  return 0;
}

struct SimulateArgs {
  std::size_t m = 500;
  std::uint64_t seed = 1;
  std::string out, config, truth;
};

int run_simulate(const SimulateArgs& a) {
  const auto t0 = Clock::now();
  ingest::GeneratorConfig g;
  if (!a.config.empty()) {
    const json j = read_json(a.config);
    try {
      g.beta = j.value("beta", g.beta);
      g.gamma = j.value("gamma", g.gamma);
      g.phi2 = j.value("phi2", g.phi2);
      g.tau2 = j.value("tau2", g.tau2);
      g.n_df = j.value("n_df", g.n_df);
      g.min_n = j.value("min_n", g.min_n);
      g.x_mean = j.value("x_mean", g.x_mean);
      g.x_sd = j.value("x_sd", g.x_sd);
    } catch (const json::exception& e) {
      throw ValidationError(std::string("generator config: ") + e.what());
    }
  }
  g.m = a.m;
  Rng rng(a.seed);
  const auto sim = ingest::simulate_dataset(g, rng);
  const fs::path out = resolve_out(a.out);
  const fs::path truth = a.truth.empty() ? fs::path(out.string() + ".truth.json") : fs::path(resolve_out(a.truth));
  write_json(out, ingest::bundle_json(sim.data));
  const auto& t = sim.truth;
  write_json(truth, {{"beta", ingest::vector_json(t.beta)},
                     {"gamma", ingest::vector_json(t.gamma)},
                     {"phi2", t.phi2},
                     {"tau2", t.tau2},
                     {"theta", ingest::vector_json(t.theta)},
                     {"sigma2", ingest::vector_json(t.sigma2)}});
  write_manifest(manifest_for_file(out), "simulate-data",
                 {{"m", a.m}, {"seed", a.seed}, {"config", a.config}, {"out", out.string()}, {"truth", truth.string()}},
                 a.seed, t0, {out.string(), truth.string()});
  std::cout << "simulated m=" << a.m << "; wrote " << out.string() << "\n";
  return 0;
}

struct FitArgs {
  std::string bundle, out, sampler = "vwg", init = "direct";
  std::optional<std::size_t> iters, burn;
  std::size_t thin = 1, max_regions = 50;
  double eps1 = 0.85, eps2 = 1e-4;
  std::uint64_t seed = 1, max_rejections = 1'000'000;
  std::optional<unsigned> threads;
};

int run_fit(const FitArgs& a) {
  const auto t0 = Clock::now();
  sae::SamplerConfig c;
  c.kind = sae::parse_sampler_kind(a.sampler);
  const bool mwg = c.kind == sae::SamplerKind::mwg;
  c.iters = a.iters.value_or(mwg ? 30'000 : 3'000);
  c.burn = a.burn.value_or(mwg ? 28'000 : 1'000);
  if (c.burn >= c.iters) throw ValidationError("--burn must be smaller than --iters");
  if (a.thin == 0) throw ValidationError("--thin must be positive");
  c.thin = a.thin;
  c.eps1 = a.eps1;
  c.eps2 = a.eps2;
  c.basic_max_regions = a.max_regions;
  c.seed = a.seed;
  c.max_rejections = a.max_rejections;
  c.threads = a.threads.value_or(env_threads());
  const auto init = sae::parse_sigma2_init(a.init);
  const auto data = ingest::bundle_from_json(read_json(a.bundle));
  const auto chain = sae::run_sampler(data, c, sae::default_init(data, init));
  const fs::path out = resolve_out(a.out);
  ensure_parent(out);
  chain_io::write_chain(out.string(), chain,
                        {{"data", a.bundle}, {"ids", data.ids}, {"x_names", data.x_names}, {"z_names", data.z_names},
                         {"sigma2_init", a.init}});
  json flags = c.to_json();
  flags["bundle"] = a.bundle;
  flags["out"] = out.string();
  flags["sigma2_init"] = a.init;
  flags["threads"] = c.threads;
  write_manifest(manifest_for_file(out), "fit", flags, c.seed, t0, {out.string()});
  std::cout << sae::to_string(c.kind) << ": " << chain.saved() << " saved draws, " << chain.counters.rejections()
            << " rejections, " << chain.elapsed_seconds << " s; wrote " << out.string() << "\n";
  return 0;
}

struct ConditionalArgs {
  std::string grid, out;
  std::optional<std::size_t> reps;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

int run_study_conditional(const ConditionalArgs& a) {
  const auto t0 = Clock::now();
  auto cfg = a.grid.empty() ? sim::ConditionalStudyConfig{} : sim::ConditionalStudyConfig::from_json(read_json(a.grid));
  if (a.reps) cfg.reps = *a.reps;
  if (a.seed) cfg.seed = *a.seed;
  cfg.threads = a.threads.value_or(env_threads());
  cfg.validate();
  const auto r = sim::run_conditional_study(cfg);
  const fs::path dir = resolve_out(a.out);
  fs::create_directories(dir);
  const std::vector<std::pair<std::string, std::string>> files{{"imh_table.csv", sim::imh_table_csv(r)},
                                                               {"vws_rejections.csv", sim::vws_rejections_csv(r)},
                                                               {"vws_trajectories.csv", sim::vws_trajectories_csv(r)},
                                                               {"timings.csv", sim::conditional_timings_csv(r)}};
  std::vector<std::string> outputs;
  for (const auto& [name, text] : files) {
    write_text(dir / name, text);
    outputs.push_back((dir / name).string());
  }
  json flags = cfg.to_json();
  flags["grid"] = a.grid;
  flags["threads"] = cfg.threads;
  flags["out"] = dir.string();
  write_manifest(dir / "manifest.json", "study-conditional", flags, cfg.seed, t0, outputs);
  std::cout << "conditional study: " << r.imh.size() << " IMH cells, " << r.vws.size() << " VWS cells; wrote "
            << dir.string() << "\n";
  return 0;
}

struct PosteriorArgs {
  std::string levels, out, init;
  std::optional<std::size_t> reps;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

int run_study_posterior(const PosteriorArgs& a) {
  const auto t0 = Clock::now();
  auto cfg = a.levels.empty() ? sim::PosteriorStudyConfig{} : sim::PosteriorStudyConfig::from_json(read_json(a.levels));
  if (a.reps) cfg.reps = *a.reps;
  if (a.seed) cfg.seed = *a.seed;
  if (!a.init.empty()) cfg.init = sae::parse_sigma2_init(a.init);
  cfg.threads = a.threads.value_or(env_threads());
  cfg.validate();
  const auto r = sim::run_posterior_study(cfg);
  const fs::path dir = resolve_out(a.out);
  fs::create_directories(dir);
  const std::vector<std::pair<std::string, std::string>> files{
      {"levels.csv", sim::metrics_csv(r.levels, false, false)},
      {"runs.csv", sim::metrics_csv(r.runs, false, true)},
      {"timings.csv", sim::metrics_csv(r.levels, true, false)}};
  std::vector<std::string> outputs;
  for (const auto& [name, text] : files) {
    write_text(dir / name, text);
    outputs.push_back((dir / name).string());
  }
  json flags = cfg.to_json();
  flags["levels"] = a.levels;
  flags["threads"] = cfg.threads;
  flags["out"] = dir.string();
  write_manifest(dir / "manifest.json", "study-posterior", flags, cfg.seed, t0, outputs);
  std::cout << "posterior study: " << r.runs.size() << " runs in " << r.levels.size() << " levels; wrote "
            << dir.string() << "\n";
  return 0;
}

struct AnalyzeArgs {
  std::string bundle, out, init = "direct";
  std::vector<std::string> samplers{"mwg", "vwg-basic", "vwg"};
  std::size_t mwg_iters = 30'000, mwg_burn = 28'000, vwg_iters = 3'000, vwg_burn = 1'000, max_regions = 50;
  double eps1 = 0.85, eps2 = 1e-4;
  std::uint64_t seed = 1;
  std::optional<unsigned> threads;
  bool save_chains = false;
};

std::vector<std::string> labelled_names(const sae::ModelData& d) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < d.p(); ++k) {
    names.push_back("beta[" + (k < d.x_names.size() ? d.x_names[k] : std::to_string(k)) + "]");
  }
  for (std::size_t k = 0; k < d.q(); ++k) {
    names.push_back("gamma[" + (k < d.z_names.size() ? d.z_names[k] : std::to_string(k)) + "]");
  }
  names.emplace_back("phi2");
  names.emplace_back("tau2");
  return names;
}

int run_analyze(const AnalyzeArgs& a) {
  const auto t0 = Clock::now();
  const auto data = ingest::bundle_from_json(read_json(a.bundle));
  sim::AnalysisConfig cfg;
  cfg.samplers.clear();
  for (const auto& s : a.samplers) cfg.samplers.push_back(sae::parse_sampler_kind(s));
  cfg.mwg = {a.mwg_iters, a.mwg_burn};
  cfg.vwg = {a.vwg_iters, a.vwg_burn};
  for (const auto& s : {cfg.mwg, cfg.vwg}) {
    if (s.burn >= s.iters) throw ValidationError("burn-in must be smaller than the iteration count");
  }
  cfg.eps1 = a.eps1;
  cfg.eps2 = a.eps2;
  cfg.basic_max_regions = a.max_regions;
  cfg.init = sae::parse_sigma2_init(a.init);
  cfg.seed = a.seed;
  cfg.threads = a.threads.value_or(env_threads());
  const auto r = sim::run_data_analysis(data, cfg);

  const fs::path dir = resolve_out(a.out);
  fs::create_directories(dir);
  std::vector<std::string> outputs;
  auto emit = [&](const std::string& name, const std::string& text) {
    write_text(dir / name, text);
    outputs.push_back((dir / name).string());
  };
  emit("comparison.csv", sim::metrics_csv(r.comparison, false, false));
  emit("timings.csv", sim::metrics_csv(r.comparison, true, false));
  const auto names = labelled_names(data);
  for (const auto& [sampler, chain] : r.chains) {
    emit("theta_" + sampler + ".csv", diag::summarize(chain.theta_params(), names).to_csv());
    if (chain.config.kind != sae::SamplerKind::mwg) emit("knots_" + sampler + ".csv", sim::knot_series_csv(chain));
    if (a.save_chains) {
      const auto p = dir / (sampler + ".chain");
      chain_io::write_chain(p.string(), chain, {{"data", a.bundle}, {"ids", data.ids}, {"x_names", data.x_names},
                                                {"z_names", data.z_names}});
      outputs.push_back(p.string());
    }
  }
  if (!r.ratios.empty()) emit("ratios.csv", sim::ratios_csv(r.ratios));
  json flags{{"bundle", a.bundle},     {"samplers", a.samplers}, {"mwg_schedule", {a.mwg_iters, a.mwg_burn}},
             {"vwg_schedule", {a.vwg_iters, a.vwg_burn}}, {"eps1", a.eps1}, {"eps2", a.eps2},
             {"basic_max_regions", a.max_regions}, {"sigma2_init", a.init}, {"seed", a.seed},
             {"threads", cfg.threads}, {"save_chains", a.save_chains}, {"out", dir.string()}};
  write_manifest(dir / "manifest.json", "analyze", flags, a.seed, t0, outputs);
  for (const auto& m : r.comparison) {
    std::cout << m.sampler << ": min sigma2 ESS " << m.sigma2_ess[0] << ", elapsed " << m.elapsed << " s\n";
  }
  return 0;
}

struct ReportArgs {
  std::string input, out, what = "theta";
};

json metrics_json(const sim::RunMetrics& m) {
  return {{"sampler", m.sampler},
          {"m", m.m},
          {"eps1", m.eps1},
          {"eps2", m.eps2},
          {"sigma2_ess", m.sigma2_ess},
          {"theta_ess", m.theta_ess},
          {"mess_params", m.mess},
          {"rejections", m.rejections},
          {"knots_burn", m.knots_burn},
          {"knots_keep", m.knots_keep}};
}

std::vector<std::string> chain_names(const chain_io::ChainFile& f) {
  sae::ModelData shape;
  const auto& meta = f.header.value("meta", json::object());
  shape.X.resize(0, f.chain.beta.cols());
  shape.Z.resize(0, f.chain.gamma.cols());
  shape.x_names = meta.value("x_names", std::vector<std::string>{});
  shape.z_names = meta.value("z_names", std::vector<std::string>{});
  return labelled_names(shape);
}

std::vector<std::string> area_names(const chain_io::ChainFile& f, const std::string& prefix) {
  const auto ids = f.header.value("meta", json::object()).value("ids", std::vector<std::string>{});
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < f.chain.sigma2.cols(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    names.push_back(prefix + "[" + (k < ids.size() ? ids[k] : std::to_string(k + 1)) + "]");
  }
  return names;
}

int run_report(const ReportArgs& a) {
  const auto t0 = Clock::now();
  const fs::path out = resolve_out(a.out);
  const bool as_json = out.extension() == ".json";
  std::string text;
  if (fs::is_directory(a.input)) {
    std::vector<fs::path> chains;
    for (const auto& e : fs::directory_iterator(a.input)) {
      if (e.path().extension() == ".chain") chains.push_back(e.path());
    }
    std::sort(chains.begin(), chains.end());
    if (chains.empty()) throw DataError("no .chain files in '" + a.input + "'");
    std::vector<sim::RunMetrics> rows;
    json arr = json::array();
    for (const auto& p : chains) {
      const auto f = chain_io::read_chain(p.string());
      rows.push_back(sim::chain_metrics(f.chain, static_cast<std::size_t>(f.chain.sigma2.cols()), 0));
      json j = metrics_json(rows.back());
      j["file"] = p.filename().string();
      arr.push_back(j);
    }
    text = as_json ? arr.dump(2) + "\n" : sim::metrics_csv(rows, false, false);
  } else {
    const auto f = chain_io::read_chain(a.input);
    if (f.chain.saved() == 0) throw DataError("chain '" + a.input + "' has no saved draws");
    if (as_json) {
      json j = metrics_json(sim::chain_metrics(f.chain, static_cast<std::size_t>(f.chain.sigma2.cols()), 0));
      j["config"] = f.header.at("config");
      j["counters"] = chain_io::counters_json(f.chain.counters);
      j["counters"].erase("knot_updates_per_iter");
      j["counters"].erase("rejections_per_iter");
      j["saved"] = f.chain.saved();
      text = j.dump(2) + "\n";
    } else if (a.what == "theta") {
      text = diag::summarize(f.chain.theta_params(), chain_names(f)).to_csv();
    } else if (a.what == "sigma2") {
      text = diag::summarize(f.chain.sigma2, area_names(f, "sigma2")).to_csv();
    } else if (a.what == "latent") {
      text = diag::summarize(f.chain.theta, area_names(f, "theta")).to_csv();
    } else if (a.what == "knots") {
      text = sim::knot_series_csv(f.chain);
    } else {
      throw ValidationError("--what must be theta, sigma2, latent or knots");
    }
  }
  write_text(out, text);
  write_manifest(manifest_for_file(out), "report", {{"input", a.input}, {"out", out.string()}, {"what", a.what}},
                 std::nullopt, t0, {out.string()});
  return 0;
}

// ---------------------------------------------------------------------------

int fail(const std::string& kind, int code, const std::string& message, const json& extra = nullptr) {
  json e{{"error", {{"kind", kind}, {"exit_code", code}, {"message", message}}}};
  if (!extra.is_null()) e["error"]["detail"] = extra;
  std::cerr << e.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  g_argv.assign(argv, argv + argc);
  CLI::App app{"Self-tuned vertical weighted strips Gibbs sampler for joint small area models", "vwsgibbs"};
  app.set_version_flag("--version", std::string(VWSGIBBS_VERSION));
  app.require_subcommand(1);

  IngestArgs ia;
  auto* ingest_cmd = app.add_subcommand("ingest", "Load a CSV into a model-data bundle");
  ingest_cmd->add_option("csv", ia.csv, "Input CSV")->required();
  ingest_cmd->add_option("--schema", ia.schema, "Schema JSON")->required();
  ingest_cmd->add_option("--out", ia.out, "Output bundle JSON")->required();
  ingest_cmd->add_option("--report", ia.report, "Exclusion report JSON (default <out>.exclusions.json)");

  SimulateArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate-data", "Generate a synthetic dataset");
  sim_cmd->add_option("--m", sa.m, "Number of areas")->capture_default_str();
  sim_cmd->add_option("--seed", sa.seed, "Seed")->capture_default_str();
  sim_cmd->add_option("--out", sa.out, "Output bundle JSON")->required();
  sim_cmd->add_option("--config", sa.config, "Generator overrides JSON");
  sim_cmd->add_option("--truth", sa.truth, "True parameters JSON (default <out>.truth.json)");

  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "Run one Gibbs chain");
  fit_cmd->add_option("bundle", fa.bundle, "Model-data bundle JSON")->required();
  fit_cmd->add_option("--sampler", fa.sampler, "mwg, vwg or vwg-basic")->capture_default_str();
  fit_cmd->add_option("--iters", fa.iters, "Total scans (default 30000 for mwg, 3000 otherwise)");
  fit_cmd->add_option("--burn", fa.burn, "Burn-in scans (default 28000 for mwg, 1000 otherwise)");
  fit_cmd->add_option("--thin", fa.thin, "Keep every k-th scan")->capture_default_str();
  fit_cmd->add_option("--eps1", fa.eps1, "Bound tolerance")->capture_default_str();
  fit_cmd->add_option("--eps2", fa.eps2, "Knot removal tolerance")->capture_default_str();
  fit_cmd->add_option("--max-regions", fa.max_regions, "Region cap for vwg-basic")->capture_default_str();
  fit_cmd->add_option("--max-rejections", fa.max_rejections, "Rejections allowed per draw")->capture_default_str();
  fit_cmd->add_option("--seed", fa.seed, "Seed")->capture_default_str();
  fit_cmd->add_option("--init", fa.init, "Starting sigma2: ones or direct")->capture_default_str();
  fit_cmd->add_option("--threads", fa.threads, "Worker threads for step 6 (0 = all cores)");
  fit_cmd->add_option("--out", fa.out, "Output chain file")->required();

  ConditionalArgs ca;
  auto* cond_cmd = app.add_subcommand("study-conditional", "Single-conditional study (IMH and self-tuned VWS)");
  cond_cmd->add_option("--grid", ca.grid, "Grid config JSON");
  cond_cmd->add_option("--reps", ca.reps, "Repetitions per VWS cell");
  cond_cmd->add_option("--seed", ca.seed, "Seed (overrides the config)");
  cond_cmd->add_option("--threads", ca.threads, "Worker threads (0 = all cores)");
  cond_cmd->add_option("--out", ca.out, "Output directory")->required();

  PosteriorArgs pa;
  auto* post_cmd = app.add_subcommand("study-posterior", "Posterior study over simulated datasets");
  post_cmd->add_option("--levels", pa.levels, "Levels config JSON");
  post_cmd->add_option("--reps", pa.reps, "Datasets per level");
  post_cmd->add_option("--seed", pa.seed, "Seed (overrides the config)");
  post_cmd->add_option("--init", pa.init, "Starting sigma2: ones or direct");
  post_cmd->add_option("--threads", pa.threads, "Worker threads (0 = all cores)");
  post_cmd->add_option("--out", pa.out, "Output directory")->required();

  AnalyzeArgs aa;
  auto* an_cmd = app.add_subcommand("analyze", "Compare samplers on one dataset");
  an_cmd->add_option("bundle", aa.bundle, "Model-data bundle JSON")->required();
  an_cmd->add_option("--samplers", aa.samplers, "Samplers to run")->capture_default_str();
  an_cmd->add_option("--mwg-iters", aa.mwg_iters)->capture_default_str();
  an_cmd->add_option("--mwg-burn", aa.mwg_burn)->capture_default_str();
  an_cmd->add_option("--vwg-iters", aa.vwg_iters)->capture_default_str();
  an_cmd->add_option("--vwg-burn", aa.vwg_burn)->capture_default_str();
  an_cmd->add_option("--eps1", aa.eps1)->capture_default_str();
  an_cmd->add_option("--eps2", aa.eps2)->capture_default_str();
  an_cmd->add_option("--max-regions", aa.max_regions)->capture_default_str();
  an_cmd->add_option("--init", aa.init, "Starting sigma2: ones or direct")->capture_default_str();
  an_cmd->add_option("--seed", aa.seed)->capture_default_str();
  an_cmd->add_option("--threads", aa.threads, "Worker threads for step 6 (0 = all cores)");
  an_cmd->add_flag("--save-chains", aa.save_chains, "Also write each chain file");
  an_cmd->add_option("--out", aa.out, "Output directory")->required();

  ReportArgs ra;
  auto* rep_cmd = app.add_subcommand("report", "Summarize a chain file or a directory of chains");
  rep_cmd->add_option("input", ra.input, "Chain file or directory")->required();
  rep_cmd->add_option("--what", ra.what, "theta, sigma2, latent or knots (single chain, CSV output)")
      ->capture_default_str();
  rep_cmd->add_option("--out", ra.out, "Output .csv or .json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", 2, e.what());
  }

  try {
    if (*ingest_cmd) return run_ingest(ia);
    if (*sim_cmd) return run_simulate(sa);
    if (*fit_cmd) return run_fit(fa);
    if (*cond_cmd) return run_study_conditional(ca);
    if (*post_cmd) return run_study_posterior(pa);
    if (*an_cmd) return run_analyze(aa);
    if (*rep_cmd) return run_report(ra);
  } catch (const ValidationError& e) {
    return fail("validation", 2, e.what());
  } catch (const DataError& e) {
    return fail("data", 3, e.what());
  } catch (const vws::TuningCapError& e) {
    return fail("numerical", 4, e.what(), e.snapshot());
  } catch (const NumericalError& e) {
    return fail("numerical", 4, e.what());
  } catch (const fs::filesystem_error& e) {
    return fail("data", 3, e.what());
  } catch (const std::domain_error& e) {
    return fail("validation", 2, e.what());
  } catch (const std::exception& e) {
    return fail("internal", 1, e.what());
  }
  return 0;
}
