#pragma once

// Constant vertical-weighted-strips proposals over a weighted target
// f(x) = w(x) g(x) / psi on (0, inf), and the self-tuned draw that refines
// and coarsens a persistent proposal from its own rejections.
//
// Region j covers (a_{j-1}, a_j] with a_0 = 0 and a_N = inf. Region
// constants are kept on the log scale; masses are scaled by a common factor
// chosen at bind time so the largest region mass is 1. The scale cancels in
// every quantity the sampler uses (mixing weights, rho_j, rho_+).

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vwsgibbs/dist.hpp"
#include "vwsgibbs/error.hpp"
#include "vwsgibbs/rng.hpp"

namespace vwsgibbs::vws {

/// Weight function with a unimodality descriptor. `log_weight` must accept
/// 0 and inf and return the corresponding limits. `mode` lies in [0, inf];
/// 0 means nonincreasing and inf means nondecreasing.
template <class W>
concept Weight = requires(const W& w, double x) {
  { w.log_weight(x) } -> std::convertible_to<double>;
  { w.mode() } -> std::convertible_to<double>;
};

/// Base distribution on (0, inf) with interval probabilities and exact
/// truncated sampling.
template <class B>
concept Base = requires(const B& b, double x, double y, double u, Rng& rng) {
  { b.tails(x) } -> std::same_as<TailPair>;
  { b.log_density(x) } -> std::convertible_to<double>;
  { b.draw(x, y, rng) } -> std::convertible_to<double>;
  { b.quantile(x, y, u) } -> std::convertible_to<double>;
};

template <Weight W, Base B>
struct WeightedTarget {
  using weight_type = W;
  using base_type = B;

  W weight;
  B base;

  /// log w(x) + log g(x); the unnormalized log density of the target.
  double log_kernel(double x) const { return weight.log_weight(x) + base.log_density(x); }
};

struct InverseGammaWeight {
  InverseGammaParams params;

  explicit InverseGammaWeight(InverseGammaParams p) : params(p) {
    if (!(p.rate > 0.0) || !(p.shape > -1.0)) {
      throw std::domain_error("InverseGammaWeight: need rate > 0 and shape > -1");
    }
  }

  double log_weight(double x) const {
    if (x == 0.0 || x == kInf) return -kInf;
    return ig_log_kernel(x, params);
  }
  double mode() const { return ig_mode(params); }
};

struct ConstantWeight {
  double log_value = 0.0;

  double log_weight(double) const { return log_value; }
  double mode() const { return 0.0; }
};

struct LognormalBase {
  LognormalParams params;

  TailPair tails(double x) const { return lognormal_tails(x, params); }
  double log_density(double x) const { return lognormal_log_density(x, params); }
  double draw(double a, double b, Rng& rng) const { return sample_trunc_lognormal(a, b, params, rng); }
  double quantile(double a, double b, double u) const {
    const double z = trunc_std_normal_quantile(lognormal_z(a, params), lognormal_z(b, params), u);
    return std::clamp(std::exp(params.location + params.scale * z), a, b);
  }
};

/// Scaled region constants. `upper` and `lower` are the majorizer and
/// minorizer masses divided by exp(log_scale) of the owning proposal.
struct Region {
  double log_upper;  // log of the majorizer constant
  double log_lower;  // log of the minorizer constant
  double log_prob;   // log P(lo < T <= hi) under the base
  double upper;
  double lower;
};

struct ProposalDraw {
  double x;
  std::size_t region;
};

namespace detail {

// Neumaier compensated accumulator.
struct CompensatedSum {
  double sum = 0.0;
  double carry = 0.0;

  void add(double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      carry += (sum - t) + v;
    } else {
      carry += (v - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + carry; }
  void reset() { sum = carry = 0.0; }
};

inline constexpr double kZeroMass = 1e-300;

}  // namespace detail

template <class Target>
class StripProposal {
 public:
  using target_type = Target;

  struct Knot {
    double x;
    std::uint64_t stamp;
    double log_w;
    TailPair tails;
  };

  /// Full rebuild every this many incremental mutations.
  static constexpr std::uint64_t kRefreshPeriod = std::uint64_t{1} << 16;

  explicit StripProposal(const Target& target) : target_(target) { rebind(target); }

  StripProposal(const Target& target, std::span<const double> knots,
                std::span<const std::uint64_t> stamps = {})
      : target_(target) {
    if (!stamps.empty() && stamps.size() != knots.size()) {
      throw std::invalid_argument("StripProposal: knots and stamps differ in length");
    }
    double prev = 0.0;
    knots_.reserve(knots.size());
    for (std::size_t k = 0; k < knots.size(); ++k) {
      const double x = knots[k];
      if (!std::isfinite(x) || !(x > prev)) {
        throw std::invalid_argument("StripProposal: knots must be positive, finite and strictly increasing");
      }
      knots_.push_back({x, stamps.empty() ? 0 : stamps[k], 0.0, {}});
      prev = x;
    }
    rebind(target);
  }

  /// Recompute every region for a new target, keeping knots and stamps.
  void rebind(const Target& target) {
    target_ = target;
    mode_ = target_.weight.mode();
    log_w_mode_ = target_.weight.log_weight(mode_);
    log_w_zero_ = target_.weight.log_weight(0.0);
    log_w_inf_ = target_.weight.log_weight(kInf);
    for (Knot& k : knots_) {
      k.log_w = target_.weight.log_weight(k.x);
      k.tails = target_.base.tails(k.x);
    }
    regions_.resize(knots_.size() + 1);
    log_scale_ = -kInf;
    for (std::size_t j = 0; j < regions_.size(); ++j) {
      regions_[j] = shape_region(left(j), right(j));
      log_scale_ = std::max(log_scale_, regions_[j].log_upper + regions_[j].log_prob);
    }
    if (!std::isfinite(log_scale_)) log_scale_ = 0.0;
    for (Region& r : regions_) scale_region(r);
    refresh_totals();
  }

  const Target& target() const { return target_; }
  std::size_t num_regions() const { return regions_.size(); }
  std::size_t num_knots() const { return knots_.size(); }
  const std::vector<Knot>& knots() const { return knots_; }
  const Region& region(std::size_t j) const { return regions_.at(j); }
  double region_lo(std::size_t j) const { return j == 0 ? 0.0 : knots_[j - 1].x; }
  double region_hi(std::size_t j) const { return j == knots_.size() ? kInf : knots_[j].x; }
  double log_scale() const { return log_scale_; }
  double sum_upper() const { return sum_upper_.value(); }
  double sum_lower() const { return sum_upper_.value() - sum_gap_.value(); }

  std::vector<double> knot_positions() const {
    std::vector<double> out;
    out.reserve(knots_.size());
    for (const Knot& k : knots_) out.push_back(k.x);
    return out;
  }

  /// rho_+ = 1 - sum(lower) / sum(upper).
  double bound() const {
    const double up = sum_upper_.value();
    if (!(up > 0.0)) return 1.0;
    return std::clamp(sum_gap_.value() / up, 0.0, 1.0);
  }

  /// rho_j, region j's share of the bound.
  double contribution(std::size_t j) const {
    const double up = sum_upper_.value();
    if (!(up > 0.0)) return 0.0;
    return (regions_[j].upper - regions_[j].lower) / up;
  }

  /// Region index containing x (regions are right-closed).
  std::size_t locate(double x) const {
    auto it = std::lower_bound(knots_.begin(), knots_.end(), x,
                               [](const Knot& k, double v) { return k.x < v; });
    return static_cast<std::size_t>(it - knots_.begin());
  }

  ProposalDraw sample(Rng& rng) const {
    if (cumulative_dirty_) rebuild_cumulative();
    const double total = cumulative_.back();
    if (!(total > 0.0)) throw NumericalError("StripProposal: all regions have zero mass");
    std::size_t j = 0;
    if (cumulative_.size() > 1) {
      const double t = rng.uniform() * total;
      auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), t);
      j = std::min(static_cast<std::size_t>(it - cumulative_.begin()), cumulative_.size() - 1);
    }
    return {target_.base.draw(region_lo(j), region_hi(j), rng), j};
  }

  /// u < w(x) / wbar_j; the base density cancels on region j.
  bool accept(double x, std::size_t j, double u) const {
    return u < std::exp(target_.weight.log_weight(x) - regions_[j].log_upper);
  }

  /// Split the region containing x at x. Returns false, leaving the
  /// proposal untouched, when x is within 1e-12 relative of a knot.
  bool add_knot(double x, std::uint64_t stamp = 0) {
    if (!(x > 0.0) || !std::isfinite(x)) throw std::domain_error("add_knot: knot must be positive and finite");
    const std::size_t j = locate(x);
    const auto near = [x](double k) { return std::abs(x - k) <= 1e-12 * std::max(x, k); };
    if ((j > 0 && near(knots_[j - 1].x)) || (j < knots_.size() && near(knots_[j].x))) return false;

    const Knot knot{x, stamp, target_.weight.log_weight(x), target_.base.tails(x)};
    Region lo_part = shape_region(left(j), knot);
    Region hi_part = shape_region(knot, right(j));
    scale_region(lo_part);
    scale_region(hi_part);

    remove_from_totals(regions_[j]);
    add_to_totals(lo_part);
    add_to_totals(hi_part);
    knots_.insert(knots_.begin() + static_cast<std::ptrdiff_t>(j), knot);
    regions_[j] = lo_part;
    regions_.insert(regions_.begin() + static_cast<std::ptrdiff_t>(j) + 1, hi_part);
    mutated();
    return true;
  }

  /// Bound after merging the regions on either side of internal knot k
  /// (0-based), without modifying the proposal.
  double bound_without_knot(std::size_t k) const {
    check_knot_index(k);
    const Region merged = merged_region(k);
    const double up = sum_upper_.value() - regions_[k].upper - regions_[k + 1].upper + merged.upper;
    const double gap = sum_gap_.value() - (regions_[k].upper - regions_[k].lower) -
                       (regions_[k + 1].upper - regions_[k + 1].lower) + (merged.upper - merged.lower);
    if (!(up > 0.0)) return 1.0;
    return std::clamp(gap / up, 0.0, 1.0);
  }

  /// Remove internal knot k (0-based), merging its two regions.
  void remove_knot(std::size_t k) {
    check_knot_index(k);
    const Region merged = merged_region(k);
    remove_from_totals(regions_[k]);
    remove_from_totals(regions_[k + 1]);
    add_to_totals(merged);
    regions_[k] = merged;
    regions_.erase(regions_.begin() + static_cast<std::ptrdiff_t>(k) + 1);
    knots_.erase(knots_.begin() + static_cast<std::ptrdiff_t>(k));
    mutated();
  }

  /// Recompute totals from the region table.
  void refresh_totals() {
    sum_upper_.reset();
    sum_gap_.reset();
    for (const Region& r : regions_) add_to_totals(r);
    mutations_ = 0;
    cumulative_dirty_ = true;
  }

 private:
  struct Endpoint {
    double x;
    double log_w;
    TailPair tails;
  };

  Endpoint left(std::size_t j) const {
    if (j == 0) return {0.0, log_w_zero_, {-kInf, 0.0}};
    const Knot& k = knots_[j - 1];
    return {k.x, k.log_w, k.tails};
  }
  Endpoint right(std::size_t j) const {
    if (j == knots_.size()) return {kInf, log_w_inf_, {0.0, -kInf}};
    const Knot& k = knots_[j];
    return {k.x, k.log_w, k.tails};
  }
  static Endpoint as_endpoint(const Knot& k) { return {k.x, k.log_w, k.tails}; }
  Region shape_region(const Endpoint& lo, const Knot& hi) const { return shape_region(lo, as_endpoint(hi)); }
  Region shape_region(const Knot& lo, const Endpoint& hi) const { return shape_region(as_endpoint(lo), hi); }

  // Unimodal rule: the majorizer takes the endpoint nearer the mode, or the
  // mode itself when the region contains it; the minorizer mirrors it.
  Region shape_region(const Endpoint& lo, const Endpoint& hi) const {
    Region r{};
    if (mode_ <= lo.x) {
      r.log_upper = lo.log_w;
      r.log_lower = hi.log_w;
    } else if (mode_ > hi.x) {
      r.log_upper = hi.log_w;
      r.log_lower = lo.log_w;
    } else {
      r.log_upper = log_w_mode_;
      r.log_lower = std::min(lo.log_w, hi.log_w);
    }
    r.log_lower = std::min(r.log_lower, r.log_upper);
    r.log_prob = log_interval_prob(lo.tails, hi.tails);
    return r;
  }

  void scale_region(Region& r) const {
    const auto mass = [this](double log_w, double log_p) {
      if (log_w == -kInf || log_p == -kInf) return 0.0;
      const double v = std::exp(log_w + log_p - log_scale_);
      return v < detail::kZeroMass ? 0.0 : v;
    };
    r.upper = mass(r.log_upper, r.log_prob);
    r.lower = std::min(mass(r.log_lower, r.log_prob), r.upper);
  }

  Region merged_region(std::size_t k) const {
    Region r = shape_region(left(k), right(k + 1));
    scale_region(r);
    return r;
  }

  void check_knot_index(std::size_t k) const {
    if (k >= knots_.size()) throw std::out_of_range("StripProposal: knot index out of range");
  }

  void add_to_totals(const Region& r) {
    sum_upper_.add(r.upper);
    sum_gap_.add(r.upper - r.lower);
  }
  void remove_from_totals(const Region& r) {
    sum_upper_.add(-r.upper);
    sum_gap_.add(-(r.upper - r.lower));
  }

  void mutated() {
    cumulative_dirty_ = true;
    if (++mutations_ >= kRefreshPeriod) refresh_totals();
  }

  void rebuild_cumulative() const {
    cumulative_.resize(regions_.size());
    double acc = 0.0;
    for (std::size_t j = 0; j < regions_.size(); ++j) {
      acc += regions_[j].upper;
      cumulative_[j] = acc;
    }
    cumulative_dirty_ = false;
  }

  Target target_;
  std::vector<Knot> knots_;
  std::vector<Region> regions_;
  double mode_ = 0.0;
  double log_w_mode_ = 0.0;
  double log_w_zero_ = 0.0;
  double log_w_inf_ = 0.0;
  double log_scale_ = 0.0;
  detail::CompensatedSum sum_upper_;
  detail::CompensatedSum sum_gap_;
  std::uint64_t mutations_ = 0;
  mutable std::vector<double> cumulative_;
  mutable bool cumulative_dirty_ = true;
};

template <Weight W, Base B>
StripProposal<WeightedTarget<W, B>> build_proposal(const WeightedTarget<W, B>& target,
                                                   std::span<const double> knots = {}) {
  return StripProposal<WeightedTarget<W, B>>(target, knots);
}

template <class Target>
ProposalDraw sample_proposal(const StripProposal<Target>& p, Rng& rng) {
  return p.sample(rng);
}

template <class Target>
bool accept_test(double x, std::size_t j, double u, const StripProposal<Target>& p) {
  return p.accept(x, j, u);
}

struct TuningOptions {
  double eps1 = 0.85;
  double eps2 = 1e-4;
  std::uint64_t max_rejections = 1'000'000;
  std::size_t max_knots = std::numeric_limits<std::size_t>::max();

  void validate() const {
    if (!(eps1 >= 0.0 && eps1 <= 1.0) || !(eps2 >= 0.0 && eps2 <= 1.0)) {
      throw ValidationError("tolerances must lie in [0, 1]");
    }
  }
};

struct DrawStats {
  std::uint64_t proposals = 0;
  std::uint64_t rejections = 0;
  std::uint64_t knots_added = 0;
  std::uint64_t knots_removed = 0;
  std::uint64_t duplicate_knots = 0;

  std::uint64_t knot_updates() const { return knots_added + knots_removed; }

  DrawStats& operator+=(const DrawStats& o) {
    proposals += o.proposals;
    rejections += o.rejections;
    knots_added += o.knots_added;
    knots_removed += o.knots_removed;
    duplicate_knots += o.duplicate_knots;
    return *this;
  }
};

/// Rejection cap exceeded inside self_tuned_draw; carries the proposal state.
class TuningCapError : public NumericalError {
 public:
  TuningCapError(const std::string& what, nlohmann::json snapshot)
      : NumericalError(what), snapshot_(std::move(snapshot)) {}
  const nlohmann::json& snapshot() const { return snapshot_; }

 private:
  nlohmann::json snapshot_;
};

/// Knots and stamps (and optionally the tolerances in force) as JSON.
template <class Target>
nlohmann::json proposal_to_json(const StripProposal<Target>& p, const TuningOptions* opts = nullptr) {
  nlohmann::json j;
  j["knots"] = nlohmann::json::array();
  j["stamps"] = nlohmann::json::array();
  for (const auto& k : p.knots()) {
    j["knots"].push_back(k.x);
    j["stamps"].push_back(k.stamp);
  }
  j["bound"] = p.bound();
  if (opts != nullptr) j["tolerances"] = {{"eps1", opts->eps1}, {"eps2", opts->eps2}};
  return j;
}

template <class Target>
StripProposal<Target> proposal_from_json(const Target& target, const nlohmann::json& j) {
  const auto knots = j.at("knots").get<std::vector<double>>();
  auto stamps = j.contains("stamps") ? j.at("stamps").get<std::vector<std::uint64_t>>()
                                     : std::vector<std::uint64_t>{};
  return StripProposal<Target>(target, knots, stamps);
}

namespace detail {

template <class Target>
void removal_sweep(StripProposal<Target>& p, const TuningOptions& opts, std::uint64_t stamp,
                   DrawStats& stats) {
  const std::size_t n = p.num_knots();
  if (n == 0) return;
  // Contributions and knot set are taken at sweep start; the bound used to
  // vet each removal is the live one.
  std::vector<double> rho(n);
  std::vector<std::uint64_t> stamps(n);
  for (std::size_t k = 0; k < n; ++k) {
    rho[k] = p.contribution(k);
    stamps[k] = p.knots()[k].stamp;
  }
  std::size_t removed = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (stamps[k] == stamp || !(rho[k] < opts.eps2)) continue;
    const std::size_t idx = k - removed;
    if (p.bound_without_knot(idx) < opts.eps1) {
      p.remove_knot(idx);
      ++removed;
      ++stats.knots_removed;
    }
  }
}

}  // namespace detail

/// One exact draw from the proposal's target, tuning the proposal on each
/// rejection. Knots added here carry `stamp` and are skipped by removal
/// sweeps within the same call.
template <class Target>
double self_tuned_draw(StripProposal<Target>& p, const TuningOptions& opts, Rng& rng,
                       std::uint64_t stamp, DrawStats& stats) {
  std::uint64_t rejected = 0;
  for (;;) {
    const ProposalDraw d = p.sample(rng);
    const double u = rng.uniform();
    ++stats.proposals;
    if (p.accept(d.x, d.region, u)) return d.x;
    ++stats.rejections;
    if (++rejected > opts.max_rejections) {
      throw TuningCapError("self_tuned_draw: rejection cap exceeded", proposal_to_json(p, &opts));
    }
    if (p.bound() < opts.eps1) {
      detail::removal_sweep(p, opts, stamp, stats);
    } else if (p.num_knots() < opts.max_knots) {
      if (p.add_knot(d.x, stamp)) {
        ++stats.knots_added;
      } else {
        ++stats.duplicate_knots;
      }
    }
  }
}

template <class Target>
double self_tuned_draw(StripProposal<Target>& p, const Target& target, const TuningOptions& opts,
                       Rng& rng, std::uint64_t stamp, DrawStats& stats) {
  p.rebind(target);
  return self_tuned_draw(p, opts, rng, stamp, stats);
}

/// Greedy refinement: while rho_+ >= eps1 and fewer than max_regions
/// regions exist, split the region with the largest contribution at its
/// conditional base median.
template <class Target>
void refine_to_tolerance(StripProposal<Target>& p, double eps1, std::size_t max_regions) {
  if (max_regions < 1) throw ValidationError("refine_to_tolerance: region cap must be >= 1");
  while (p.bound() >= eps1 && p.num_regions() < max_regions) {
    std::size_t best = 0;
    double best_rho = -1.0;
    for (std::size_t j = 0; j < p.num_regions(); ++j) {
      const double r = p.contribution(j);
      if (r > best_rho) {
        best_rho = r;
        best = j;
      }
    }
    const double lo = p.region_lo(best);
    const double hi = p.region_hi(best);
    const double split = p.target().base.quantile(lo, hi, 0.5);
    if (!(split > lo && split < hi) || !p.add_knot(split)) break;
  }
}

/// Plain rejection sampling from a fixed proposal; no tuning.
template <class Target>
double rejection_draw(const StripProposal<Target>& p, Rng& rng, DrawStats& stats,
                      std::uint64_t max_rejections = 1'000'000) {
  std::uint64_t rejected = 0;
  for (;;) {
    const ProposalDraw d = p.sample(rng);
    const double u = rng.uniform();
    ++stats.proposals;
    if (p.accept(d.x, d.region, u)) return d.x;
    ++stats.rejections;
    if (++rejected > max_rejections) {
      throw TuningCapError("rejection_draw: rejection cap exceeded", proposal_to_json(p));
    }
  }
}

}  // namespace vwsgibbs::vws
