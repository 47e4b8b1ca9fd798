#pragma once

// Survey CSV ingestion, published-scale transforms, exclusion rules and the
// synthetic data generator.

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "vwsgibbs/dist.hpp"
#include "vwsgibbs/error.hpp"
#include "vwsgibbs/rng.hpp"
#include "vwsgibbs/sae.hpp"

namespace vwsgibbs::ingest {

struct Transformed {
  double y;
  double s2;
};

/// y = log(est), s2 = var / est^2. Returns nothing when est <= 0 (the row
/// is excluded upstream).
inline std::optional<Transformed> delta_transform(double estimate, double variance) {
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    throw std::domain_error("delta_transform: variance must be positive and finite");
  }
  if (!(estimate > 0.0) || !std::isfinite(estimate)) return std::nullopt;
  return Transformed{std::log(estimate), variance / (estimate * estimate)};
}

inline double acs_degrees_of_freedom(double n) {
  if (!(n > 0.0)) throw std::domain_error("acs_degrees_of_freedom: n must be positive");
  return 0.36 * std::sqrt(n);
}

// ---------------------------------------------------------------------------
// CSV

/// Parses delimited text with double-quote escaping. Quoted fields may hold
/// delimiters, doubled quotes and newlines.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text, char delim = ',') {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  std::size_t i = 0;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      if (!field.empty()) throw DataError("csv: quote inside an unquoted field");
      quoted = true;
      any = true;
    } else if (c == delim) {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field.push_back(c);
      any = true;
    }
  }
  if (quoted) throw DataError("csv: unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

/// Parses a number; empty and NA-like cells are missing.
inline std::optional<double> parse_number(const std::string& raw, std::size_t line, const std::string& col) {
  const std::string s = trim(raw);
  if (s.empty() || s == "NA" || s == "N/A" || s == "NaN" || s == ".") return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("csv line " + std::to_string(line) + ": column '" + col + "' is not numeric: '" + s + "'");
  }
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Schema

enum class Transform { identity, log, log1p };
enum class MissingPolicy { exclude, zero };
enum class DfRule { acs, n_minus_1, column };

struct CovariateSpec {
  std::string column;
  Transform transform = Transform::identity;
  MissingPolicy missing = MissingPolicy::exclude;
  std::string name;  // label for the design column
};

struct Schema {
  std::string id;
  std::string estimate;
  std::string variance;     // either variance ...
  std::string moe;          // ... or margin of error with a divisor
  double moe_divisor = 0.0;
  std::string sample_size;
  DfRule df_rule = DfRule::acs;
  std::string df_column;
  std::vector<CovariateSpec> x;
  std::vector<CovariateSpec> z;
  bool x_intercept = true;
  bool z_intercept = true;
  char delimiter = ',';

  static Schema from_json(const nlohmann::json& j) {
    Schema s;
    try {
      s.id = j.value("id", "");
      s.estimate = j.at("estimate").get<std::string>();
      s.variance = j.value("variance", "");
      s.moe = j.value("moe", "");
      s.moe_divisor = j.value("moe_divisor", 0.0);
      s.sample_size = j.at("sample_size").get<std::string>();
      const std::string rule = j.value("df_rule", "acs");
      if (rule == "acs") {
        s.df_rule = DfRule::acs;
      } else if (rule == "n_minus_1") {
        s.df_rule = DfRule::n_minus_1;
      } else if (rule == "column") {
        s.df_rule = DfRule::column;
        s.df_column = j.at("df_column").get<std::string>();
      } else {
        throw ValidationError("schema: unknown df_rule '" + rule + "'");
      }
      auto covs = [](const nlohmann::json& arr) {
        std::vector<CovariateSpec> out;
        for (const auto& c : arr) {
          CovariateSpec cs;
          cs.column = c.at("column").get<std::string>();
          const std::string t = c.value("transform", "identity");
          if (t == "identity") cs.transform = Transform::identity;
          else if (t == "log") cs.transform = Transform::log;
          else if (t == "log1p") cs.transform = Transform::log1p;
          else throw ValidationError("schema: unknown transform '" + t + "'");
          const std::string miss = c.value("missing", "exclude");
          if (miss == "exclude") cs.missing = MissingPolicy::exclude;
          else if (miss == "zero") cs.missing = MissingPolicy::zero;
          else throw ValidationError("schema: unknown missing policy '" + miss + "'");
          cs.name = c.value("name", (t == "identity" ? "" : t + "_") + cs.column);
          out.push_back(cs);
        }
        return out;
      };
      if (j.contains("x")) s.x = covs(j.at("x"));
      if (j.contains("z")) s.z = covs(j.at("z"));
      s.x_intercept = j.value("x_intercept", true);
      s.z_intercept = j.value("z_intercept", true);
      const std::string delim = j.value("delimiter", ",");
      if (delim.size() != 1) throw ValidationError("schema: delimiter must be one character");
      s.delimiter = delim[0];
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("schema: ") + e.what());
    }
    if (s.variance.empty() == s.moe.empty()) {
      throw ValidationError("schema: give exactly one of 'variance' or 'moe'");
    }
    if (!s.moe.empty() && !(s.moe_divisor > 0.0)) {
      throw ValidationError("schema: 'moe' requires a positive 'moe_divisor'");
    }
    return s;
  }
};

enum class ExclusionReason { zero_estimate, df_below_one, missing_required, zero_variance };

inline std::string to_string(ExclusionReason r) {
  switch (r) {
    case ExclusionReason::zero_estimate: return "ZERO_ESTIMATE";
    case ExclusionReason::df_below_one: return "DF_BELOW_ONE";
    case ExclusionReason::missing_required: return "MISSING_REQUIRED";
    case ExclusionReason::zero_variance: return "ZERO_VARIANCE";
  }
  return "?";
}

struct Exclusion {
  std::size_t row;  // 1-based data row (header excluded)
  std::string id;
  ExclusionReason reason;
  std::string detail;
};

struct LoadResult {
  sae::ModelData data;
  std::vector<Exclusion> exclusions;
  std::size_t input_rows = 0;

  nlohmann::json report_json() const {
    nlohmann::json j;
    j["input_rows"] = input_rows;
    j["retained_rows"] = data.m();
    j["excluded_rows"] = exclusions.size();
    j["exclusions"] = nlohmann::json::array();
    for (const auto& e : exclusions) {
      j["exclusions"].push_back(
          {{"row", e.row}, {"id", e.id}, {"reason", to_string(e.reason)}, {"detail", e.detail}});
    }
    return j;
  }
};

inline double apply_transform(Transform t, double v) {
  switch (t) {
    case Transform::identity: return v;
    case Transform::log: return std::log(v);
    case Transform::log1p: return std::log1p(v);
  }
  return v;
}

/// Builds ModelData from CSV text. Rows are kept in file order; every
/// input row is either retained or listed in the exclusion report.
inline LoadResult load_dataset_text(std::string_view text, const Schema& schema) {
  const auto table = parse_csv(text, schema.delimiter);
  if (table.empty()) throw DataError("csv: no header row");
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t k = 0; k < table[0].size(); ++k) col[detail::trim(table[0][k])] = k;
  auto need = [&](const std::string& name) -> std::size_t {
    const auto it = col.find(name);
    if (it == col.end()) throw DataError("csv: missing required column '" + name + "'");
    return it->second;
  };
  const std::optional<std::size_t> id_col = schema.id.empty() ? std::nullopt : std::optional(need(schema.id));
  const std::size_t est_col = need(schema.estimate);
  const std::size_t var_col = need(schema.variance.empty() ? schema.moe : schema.variance);
  const std::size_t n_col = need(schema.sample_size);
  const std::optional<std::size_t> df_col =
      schema.df_rule == DfRule::column ? std::optional(need(schema.df_column)) : std::nullopt;
  std::vector<std::size_t> x_cols, z_cols;
  for (const auto& c : schema.x) x_cols.push_back(need(c.column));
  for (const auto& c : schema.z) z_cols.push_back(need(c.column));

  LoadResult out;
  std::vector<double> y, s2, n, d;
  std::vector<std::vector<double>> xs, zs;
  std::vector<std::string> ids;
  const std::size_t width = table[0].size();
  for (std::size_t r = 1; r < table.size(); ++r) {
    const auto& row = table[r];
    if (row.size() != width) {
      throw DataError("csv line " + std::to_string(r + 1) + ": expected " + std::to_string(width) +
                      " fields, found " + std::to_string(row.size()));
    }
    ++out.input_rows;
    const std::string id = id_col ? detail::trim(row[*id_col]) : std::to_string(r);
    auto exclude = [&](ExclusionReason why, std::string what) {
      out.exclusions.push_back({r, id, why, std::move(what)});
    };
    auto num = [&](std::size_t c) { return detail::parse_number(row[c], r + 1, table[0][c]); };

    const auto est = num(est_col);
    const auto var_raw = num(var_col);
    const auto nn = num(n_col);
    if (!est || !var_raw || !nn) {
      exclude(ExclusionReason::missing_required, "estimate, variance or sample size missing");
      continue;
    }
    auto covariates = [&](const std::vector<CovariateSpec>& specs, const std::vector<std::size_t>& cols,
                          std::vector<double>& vals) -> bool {
      for (std::size_t k = 0; k < specs.size(); ++k) {
        auto v = num(cols[k]);
        if (!v) {
          if (specs[k].missing == MissingPolicy::exclude) {
            exclude(ExclusionReason::missing_required, "covariate '" + specs[k].column + "' missing");
            return false;
          }
          v = 0.0;
        }
        const double t = apply_transform(specs[k].transform, *v);
        if (!std::isfinite(t)) {
          throw DataError("csv line " + std::to_string(r + 1) + ": transform of '" + specs[k].column +
                          "' is not finite");
        }
        vals.push_back(t);
      }
      return true;
    };
    std::vector<double> xr, zr;
    if (!covariates(schema.x, x_cols, xr) || !covariates(schema.z, z_cols, zr)) continue;

    if (!(*est > 0.0)) {
      exclude(ExclusionReason::zero_estimate, "point estimate is not positive");
      continue;
    }
    const double variance =
        schema.variance.empty() ? std::pow(*var_raw / schema.moe_divisor, 2) : *var_raw;
    if (!(variance > 0.0)) {
      exclude(ExclusionReason::zero_variance, "sampling variance is not positive");
      continue;
    }
    if (!(*nn > 0.0)) throw DataError("csv line " + std::to_string(r + 1) + ": sample size must be positive");
    double df = 0.0;
    switch (schema.df_rule) {
      case DfRule::acs: df = acs_degrees_of_freedom(*nn); break;
      case DfRule::n_minus_1: df = *nn - 1.0; break;
      case DfRule::column: {
        const auto v = num(*df_col);
        if (!v) {
          exclude(ExclusionReason::missing_required, "degrees of freedom missing");
          continue;
        }
        df = *v;
        break;
      }
    }
    if (!(df >= 1.0)) {
      exclude(ExclusionReason::df_below_one, "degrees of freedom " + std::to_string(df) + " < 1");
      continue;
    }
    const Transformed t = *delta_transform(*est, variance);
    y.push_back(t.y);
    s2.push_back(t.s2);
    n.push_back(*nn);
    d.push_back(df);
    xs.push_back(std::move(xr));
    zs.push_back(std::move(zr));
    ids.push_back(id);
  }
  if (y.empty()) throw DataError("no rows remain after exclusions");

  auto design = [&](const std::vector<std::vector<double>>& vals, const std::vector<CovariateSpec>& specs,
                    bool intercept, std::vector<std::string>& names) {
    const auto rows = static_cast<Eigen::Index>(vals.size());
    const auto cols = static_cast<Eigen::Index>(specs.size() + (intercept ? 1 : 0));
    Eigen::MatrixXd M(rows, cols);
    if (intercept) names.emplace_back("intercept");
    for (const auto& s : specs) names.push_back(s.name);
    for (Eigen::Index i = 0; i < rows; ++i) {
      Eigen::Index c = 0;
      if (intercept) M(i, c++) = 1.0;
      for (double v : vals[static_cast<std::size_t>(i)]) M(i, c++) = v;
    }
    return M;
  };
  auto& md = out.data;
  md.y = Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  md.s2 = Eigen::Map<Eigen::VectorXd>(s2.data(), static_cast<Eigen::Index>(s2.size()));
  md.n = Eigen::Map<Eigen::VectorXd>(n.data(), static_cast<Eigen::Index>(n.size()));
  md.d = Eigen::Map<Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
  md.X = design(xs, schema.x, schema.x_intercept, md.x_names);
  md.Z = design(zs, schema.z, schema.z_intercept, md.z_names);
  md.ids = std::move(ids);
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline LoadResult load_dataset(const std::string& path, const Schema& schema) {
  return load_dataset_text(read_file(path), schema);
}

// ---------------------------------------------------------------------------
// Bundles

inline nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline nlohmann::json matrix_json(const Eigen::MatrixXd& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    rows.push_back(std::vector<double>(M.cols()));
    for (Eigen::Index k = 0; k < M.cols(); ++k) rows.back()[static_cast<std::size_t>(k)] = M(i, k);
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const auto cols = rows.empty() ? 0 : rows.front().size();
  Eigen::MatrixXd M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) throw DataError("bundle: ragged matrix");
    for (std::size_t k = 0; k < cols; ++k) M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  }
  return M;
}

inline nlohmann::json bundle_json(const sae::ModelData& d) {
  return {{"format", "vwsgibbs-model-data"},
          {"version", 1},
          {"m", d.m()},
          {"ids", d.ids},
          {"y", vector_json(d.y)},
          {"s2", vector_json(d.s2)},
          {"n", vector_json(d.n)},
          {"d", vector_json(d.d)},
          {"x_names", d.x_names},
          {"z_names", d.z_names},
          {"X", matrix_json(d.X)},
          {"Z", matrix_json(d.Z)}};
}

inline sae::ModelData bundle_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "vwsgibbs-model-data") throw DataError("bundle: unexpected format tag");
    sae::ModelData d;
    d.y = vector_from_json(j.at("y"));
    d.s2 = vector_from_json(j.at("s2"));
    d.n = vector_from_json(j.at("n"));
    d.d = vector_from_json(j.at("d"));
    d.X = matrix_from_json(j.at("X"));
    d.Z = matrix_from_json(j.at("Z"));
    d.ids = j.value("ids", std::vector<std::string>{});
    d.x_names = j.value("x_names", std::vector<std::string>{});
    d.z_names = j.value("z_names", std::vector<std::string>{});
    d.validate();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bundle: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Synthetic data

struct GeneratorConfig {
  std::size_t m = 500;
  std::vector<double> beta{1.5, 0.85};
  std::vector<double> gamma{2.6, -1.0};
  double phi2 = 0.2;
  double tau2 = 0.25;
  double n_df = 16.0;   // n_i ~ chi-square(n_df)
  double min_n = 2.0;   // smaller n_i are redrawn so d_i = n_i - 1 >= 1
  double x_mean = 8.0;
  double x_sd = 2.0;

  void validate() const {
    if (m < 3) throw ValidationError("simulate: m must be at least 3");
    if (beta.size() != 2 || gamma.size() != 2) throw ValidationError("simulate: beta and gamma need two entries");
    if (!(phi2 > 0.0) || !(tau2 > 0.0) || !(n_df > 0.0) || !(x_sd > 0.0)) {
      throw ValidationError("simulate: variances and df must be positive");
    }
    if (!(min_n > 1.0)) throw ValidationError("simulate: min_n must exceed 1");
  }
};

struct SimulatedData {
  sae::ModelData data;
  sae::ParamState truth;
};

/// Draws (n, X, Z), then sigma2, theta, y and s2 in that order, so a fixed
/// seed reproduces the dataset bit for bit.
inline SimulatedData simulate_dataset(const GeneratorConfig& g, Rng& rng) {
  g.validate();
  const auto m = static_cast<Eigen::Index>(g.m);
  SimulatedData out;
  auto& d = out.data;
  auto& t = out.truth;
  d.n.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double v = 0.0;
    do v = draw_chisq(rng, g.n_df);
    while (v < g.min_n);
    d.n[i] = v;
  }
  d.d = d.n.array() - 1.0;
  d.X.resize(m, 2);
  d.Z.resize(m, 2);
  for (Eigen::Index i = 0; i < m; ++i) {
    d.X(i, 0) = 1.0;
    d.X(i, 1) = draw_normal(rng, g.x_mean, g.x_sd);
    d.Z(i, 0) = 1.0;
    d.Z(i, 1) = std::log(d.n[i]);
  }
  t.beta = Eigen::Map<const Eigen::VectorXd>(g.beta.data(), 2);
  t.gamma = Eigen::Map<const Eigen::VectorXd>(g.gamma.data(), 2);
  t.phi2 = g.phi2;
  t.tau2 = g.tau2;
  const Eigen::VectorXd zg = d.Z * t.gamma;
  const Eigen::VectorXd xb = d.X * t.beta;
  t.sigma2.resize(m);
  t.theta.resize(m);
  d.y.resize(m);
  d.s2.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) t.sigma2[i] = std::exp(draw_normal(rng, zg[i], std::sqrt(g.tau2)));
  for (Eigen::Index i = 0; i < m; ++i) t.theta[i] = draw_normal(rng, xb[i], std::sqrt(g.phi2));
  for (Eigen::Index i = 0; i < m; ++i) d.y[i] = draw_normal(rng, t.theta[i], std::sqrt(t.sigma2[i]));
  for (Eigen::Index i = 0; i < m; ++i) d.s2[i] = t.sigma2[i] * draw_chisq(rng, d.d[i]) / d.d[i];
  d.x_names = {"intercept", "x"};
  d.z_names = {"intercept", "log_n"};
  d.ids.reserve(g.m);
  for (std::size_t i = 0; i < g.m; ++i) d.ids.push_back(std::to_string(i + 1));
  return out;
}

}  // namespace vwsgibbs::ingest
