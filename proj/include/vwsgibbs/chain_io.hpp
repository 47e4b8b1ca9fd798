#pragma once

// Chain files: an 8-byte magic, a little-endian u64 header length, a JSON
// header, then each draw block as raw column-major doubles in header order.
// Only deterministic content is stored, so identical runs give identical
// files; timings belong in the run manifest.

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "vwsgibbs/error.hpp"
#include "vwsgibbs/sae.hpp"

namespace vwsgibbs::chain_io {

static_assert(std::endian::native == std::endian::little, "chain files assume a little-endian host");

inline constexpr char kMagic[8] = {'V', 'W', 'S', 'C', 'H', 'N', '0', '1'};

inline nlohmann::json stats_json(const vws::DrawStats& s) {
  return {{"proposals", s.proposals},
          {"rejections", s.rejections},
          {"knots_added", s.knots_added},
          {"knots_removed", s.knots_removed},
          {"duplicate_knots", s.duplicate_knots}};
}

inline vws::DrawStats stats_from_json(const nlohmann::json& j) {
  vws::DrawStats s;
  s.proposals = j.at("proposals").get<std::uint64_t>();
  s.rejections = j.at("rejections").get<std::uint64_t>();
  s.knots_added = j.at("knots_added").get<std::uint64_t>();
  s.knots_removed = j.at("knots_removed").get<std::uint64_t>();
  s.duplicate_knots = j.value("duplicate_knots", std::uint64_t{0});
  return s;
}

inline nlohmann::json counters_json(const sae::ChainCounters& c) {
  return {{"burn", stats_json(c.burn)},
          {"keep", stats_json(c.keep)},
          {"knot_updates_per_iter", c.knot_updates_per_iter},
          {"rejections_per_iter", c.rejections_per_iter}};
}

inline sae::SamplerConfig config_from_json(const nlohmann::json& j) {
  sae::SamplerConfig c;
  c.iters = j.at("iters").get<std::size_t>();
  c.burn = j.at("burn").get<std::size_t>();
  c.thin = j.value("thin", std::size_t{1});
  c.eps1 = j.at("eps1").get<double>();
  c.eps2 = j.at("eps2").get<double>();
  c.kind = sae::parse_sampler_kind(j.at("sampler").get<std::string>());
  c.basic_max_regions = j.value("basic_max_regions", std::size_t{50});
  c.seed = j.at("seed").get<std::uint64_t>();
  c.max_rejections = j.value("max_rejections", std::uint64_t{1'000'000});
  return c;
}

struct ChainFile {
  sae::ChainOutput chain;
  nlohmann::json header;
};

/// Writes `chain` with optional caller metadata (area ids, variable names,
/// data provenance) under "meta".
inline void write_chain(const std::string& path, const sae::ChainOutput& chain,
                        const nlohmann::json& meta = nlohmann::json::object()) {
  const std::vector<std::pair<std::string, const Eigen::MatrixXd*>> blocks{
      {"theta", &chain.theta}, {"sigma2", &chain.sigma2}, {"beta", &chain.beta}, {"gamma", &chain.gamma}};
  nlohmann::json h;
  h["format"] = "vwsgibbs-chain";
  h["version"] = 1;
  h["saved"] = chain.saved();
  h["config"] = chain.config.to_json();
  h["counters"] = counters_json(chain.counters);
  h["meta"] = meta;
  h["blocks"] = nlohmann::json::array();
  for (const auto& [name, M] : blocks) h["blocks"].push_back({{"name", name}, {"rows", M->rows()}, {"cols", M->cols()}});
  h["blocks"].push_back({{"name", "phi2"}, {"rows", chain.phi2.size()}, {"cols", 1}});
  h["blocks"].push_back({{"name", "tau2"}, {"rows", chain.tau2.size()}, {"cols", 1}});
  const std::string text = h.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write chain file '" + path + "'");
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  auto put = [&](const double* p, Eigen::Index count) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
  };
  for (const auto& [name, M] : blocks) put(M->data(), M->size());
  put(chain.phi2.data(), chain.phi2.size());
  put(chain.tau2.data(), chain.tau2.size());
  if (!out) throw DataError("failed writing chain file '" + path + "'");
}

inline ChainFile read_chain(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open chain file '" + path + "'");
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw DataError("'" + path + "' is not a chain file");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1ull << 34)) throw DataError("chain file header is corrupt");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("chain file header is truncated");

  ChainFile f;
  try {
    f.header = nlohmann::json::parse(text);
    auto& c = f.chain;
    c.config = config_from_json(f.header.at("config"));
    const auto& ct = f.header.at("counters");
    c.counters.burn = stats_from_json(ct.at("burn"));
    c.counters.keep = stats_from_json(ct.at("keep"));
    c.counters.knot_updates_per_iter = ct.at("knot_updates_per_iter").get<std::vector<std::uint64_t>>();
    c.counters.rejections_per_iter = ct.at("rejections_per_iter").get<std::vector<std::uint64_t>>();
    for (const auto& b : f.header.at("blocks")) {
      const auto name = b.at("name").get<std::string>();
      const auto rows = b.at("rows").get<Eigen::Index>();
      const auto cols = b.at("cols").get<Eigen::Index>();
      Eigen::MatrixXd M(rows, cols);
      in.read(reinterpret_cast<char*>(M.data()), static_cast<std::streamsize>(M.size() * sizeof(double)));
      if (!in) throw DataError("chain file payload is truncated");
      if (name == "theta") c.theta = std::move(M);
      else if (name == "sigma2") c.sigma2 = std::move(M);
      else if (name == "beta") c.beta = std::move(M);
      else if (name == "gamma") c.gamma = std::move(M);
      else if (name == "phi2") c.phi2 = M.col(0);
      else if (name == "tau2") c.tau2 = M.col(0);
      else throw DataError("chain file has unknown block '" + name + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("chain file header: ") + e.what());
  }
  return f;
}

}  // namespace vwsgibbs::chain_io
