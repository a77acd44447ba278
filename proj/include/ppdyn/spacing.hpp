#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "ppdyn/error.hpp"
#include "ppdyn/scaling_fit.hpp"

namespace ppdyn {

/// (x/(x−1))^α + (x/(x+1))^α − 2, evaluated as a sum of nonnegative terms:
/// with s = −(α/2) ln(1 − 1/x²) and d = (α/2) ln((x+1)/(x−1)),
/// margin = 2 (expm1(s) cosh d + 2 sinh²(d/2)).
inline double ws1_margin(double x, double alpha) {
  if (!(x > 1.0)) throw DomainError("ws1_margin needs x > 1");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw DomainError("ws1_margin needs alpha >= 0");
  const double s = -0.5 * alpha * std::log1p(-1.0 / (x * x));
  const double d = 0.5 * alpha * (std::log1p(1.0 / x) - std::log1p(-1.0 / x));
  const double h = std::sinh(0.5 * d);
  return 2.0 * (std::expm1(s) * std::cosh(d) + 2.0 * h * h);
}

/// Target points b_l = a + l^{-α}.
inline double ws_target(double a, double alpha, long l) { return a + std::pow(static_cast<double>(l), -alpha); }

/// K_l = b_{l−1} − 2 b_l + b_{l+1} = l^{-α} · ws1_margin(l, α) for l >= 2; +inf for l = 1.
inline double ws_second_difference(double alpha, long l) {
  if (l < 2) return std::numeric_limits<double>::infinity();
  const auto x = static_cast<double>(l);
  return std::pow(x, -alpha) * ws1_margin(x, alpha);
}

/// Width of the level-l target window [b_l, b_l + width].
inline double ws_window_width(double alpha, long l) {
  const auto x = static_cast<double>(l);
  return std::min(0.5 * ws_second_difference(alpha, l), alpha / (4.0 * std::pow(x, 1.0 + alpha)));
}

/// A selection a_{j_l}, l = first_level, first_level + 1, …; indices[k] belongs to
/// level first_level + k. Gap g_l = a_{j_l} − a_{j_{l+1}}.
struct SpacingWitness {
  double alpha = 0.0;
  double c_alpha = 0.0;  // g_l >= c_alpha / l^{1+α} for l >= L0
  double c_upper = 0.0;  // g_l <= c_upper / l^{1+α} for l >= L0
  long first_level = 1;
  long L0 = 1;
  std::vector<std::size_t> indices;
  std::vector<double> gaps;
  std::optional<long> first_empty_level;  // level whose window held no point

  std::size_t depth() const { return indices.size(); }
  long last_gap_level() const { return first_level + static_cast<long>(gaps.size()) - 1; }
};

struct SelectOptions {
  std::optional<double> lo;  // interval [a, b]; defaults to the point range
  std::optional<double> hi;
  std::size_t min_depth = 2;
  std::size_t max_levels = std::numeric_limits<std::size_t>::max();
};

namespace detail {

inline std::vector<double> witness_gaps(std::span<const double> points, const std::vector<std::size_t>& indices) {
  std::vector<double> g;
  for (std::size_t k = 0; k + 1 < indices.size(); ++k) g.push_back(points[indices[k]] - points[indices[k + 1]]);
  return g;
}

inline double level_power(long l, double alpha) { return std::pow(static_cast<double>(l), 1.0 + alpha); }

// Smallest level from which the lower bound, upper bound and monotonicity all hold
// through the last gap; last_gap_level + 1 if even the last gap fails.
inline long certified_from(const std::vector<double>& gaps, long first_level, double alpha, double c_lo, double c_hi) {
  long l0 = first_level + static_cast<long>(gaps.size());
  for (std::size_t k = gaps.size(); k-- > 0;) {
    const long l = first_level + static_cast<long>(k);
    const double p = level_power(l, alpha);
    const bool bounds = gaps[k] > 0.0 && gaps[k] >= c_lo / p && gaps[k] <= c_hi / p;
    const bool monotone = k + 1 == gaps.size() || gaps[k] >= gaps[k + 1];
    if (!(bounds && monotone)) break;
    l0 = l;
  }
  return l0;
}

}  // namespace detail

/// Constructive selection from a dense-enough finite set: for each level l with
/// b_l in [a, b), the smallest point (then smallest index) inside
/// [b_l, b_l + min(K_l/2, α/(4 l^{1+α}))]. Selection stops at the first empty
/// window; WindowEmpty(l) is raised only when fewer than `min_depth` levels were found.
inline SpacingWitness select_weakly_spaced(std::span<const double> points, double alpha, const SelectOptions& opt = {}) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError("alpha must be positive");
  if (points.empty()) throw DomainError("no input points");
  for (double x : points)
    if (!std::isfinite(x)) throw DomainError("input points must be finite");
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return points[i] < points[j]; });
  const double a = opt.lo.value_or(points[order.front()]);
  const double b = opt.hi.value_or(points[order.back()]);
  if (!(a < b)) throw DomainError("selection interval needs a < b");

  SpacingWitness w;
  w.alpha = alpha;
  w.c_alpha = 0.5 * alpha;
  w.c_upper = 2.0 * alpha;
  long l = 1;
  while (!(ws_target(a, alpha, l) < b)) ++l;
  w.first_level = l;
  for (; w.indices.size() < opt.max_levels; ++l) {
    const double lo = ws_target(a, alpha, l);
    if (!(lo > a)) {  // b_l has collapsed onto a in floating point
      w.first_empty_level = l;
      break;
    }
    const double hi = lo + ws_window_width(alpha, l);
    const auto it = std::lower_bound(order.begin(), order.end(), lo,
                                     [&](std::size_t i, double v) { return points[i] < v; });
    if (it == order.end() || points[*it] > hi) {
      w.first_empty_level = l;
      break;
    }
    w.indices.push_back(*it);  // stable sort: smallest value first, then smallest index
  }
  if (w.indices.size() < opt.min_depth) throw WindowEmpty(w.first_empty_level.value_or(l));
  w.gaps = detail::witness_gaps(points, w.indices);
  w.L0 = detail::certified_from(w.gaps, w.first_level, alpha, w.c_alpha, w.c_upper);
  return w;
}

/// Independent re-check of a witness against the points it indexes.
inline bool verify_weakly_spaced(std::span<const double> points, const SpacingWitness& w) {
  if (!(w.alpha > 0.0) || !(w.c_alpha > 0.0) || w.indices.size() < 2) return false;
  std::vector<std::size_t> seen = w.indices;
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) return false;
  for (std::size_t i : w.indices)
    if (i >= points.size()) return false;

  std::vector<double> g;
  for (std::size_t k = 0; k + 1 < w.indices.size(); ++k) g.push_back(points[w.indices[k]] - points[w.indices[k + 1]]);
  const long last = w.first_level + static_cast<long>(g.size()) - 1;
  if (w.L0 < w.first_level || w.L0 > last) return false;
  for (double x : g)
    if (!(x > 0.0)) return false;
  const auto k0 = static_cast<std::size_t>(w.L0 - w.first_level);
  for (std::size_t k = k0; k < g.size(); ++k) {
    const double lp = std::pow(static_cast<double>(w.first_level + static_cast<long>(k)), 1.0 + w.alpha);
    if (g[k] < w.c_alpha / lp) return false;
    if (w.c_upper > 0.0 && g[k] > w.c_upper / lp) return false;
    if (k + 1 < g.size() && g[k + 1] > g[k]) return false;
  }
  // finite stand-in for g_l -> 0
  return g.back() < g.front() / 10.0;
}

struct GapReport {
  double min_gap = 0.0;
  double mean_gap = 0.0;
  double max_gap = 0.0;
  double rank_exponent = 0.0;  // slope of ln(gap) vs ln(rank), gaps sorted descending
};

inline GapReport gap_statistics(std::span<const double> sorted_values) {
  if (sorted_values.size() < 3) throw DomainError("gap statistics need at least 3 values");
  std::vector<double> gaps;
  for (std::size_t i = 1; i < sorted_values.size(); ++i) {
    const double g = sorted_values[i] - sorted_values[i - 1];
    if (g < 0.0) throw DomainError("gap statistics need sorted values");
    gaps.push_back(g);
  }
  GapReport r;
  r.min_gap = *std::min_element(gaps.begin(), gaps.end());
  r.max_gap = *std::max_element(gaps.begin(), gaps.end());
  r.mean_gap = (sorted_values.back() - sorted_values.front()) / static_cast<double>(gaps.size());
  std::sort(gaps.begin(), gaps.end(), std::greater<>());
  std::vector<double> x, y;
  for (std::size_t k = 0; k < gaps.size(); ++k)
    if (gaps[k] > 0.0) {
      x.push_back(std::log(static_cast<double>(k + 1)));
      y.push_back(std::log(gaps[k]));
    }
  r.rank_exponent = x.size() >= 2 ? least_squares(x, y).slope : 0.0;
  return r;
}

inline nlohmann::json to_json(const SpacingWitness& w) {
  nlohmann::json j{{"alpha", w.alpha},     {"C_alpha", w.c_alpha}, {"C_upper", w.c_upper},
                   {"first_level", w.first_level}, {"L0", w.L0},    {"depth", w.depth()},
                   {"indices", w.indices}, {"gaps", w.gaps}};
  j["first_empty_level"] = w.first_empty_level ? nlohmann::json(*w.first_empty_level) : nlohmann::json(nullptr);
  return j;
}

inline SpacingWitness witness_from_json(const nlohmann::json& j) {
  SpacingWitness w;
  w.alpha = j.at("alpha").get<double>();
  w.c_alpha = j.at("C_alpha").get<double>();
  w.c_upper = j.at("C_upper").get<double>();
  w.first_level = j.at("first_level").get<long>();
  w.L0 = j.at("L0").get<long>();
  w.indices = j.at("indices").get<std::vector<std::size_t>>();
  w.gaps = j.at("gaps").get<std::vector<double>>();
  if (!j.at("first_empty_level").is_null()) w.first_empty_level = j.at("first_empty_level").get<long>();
  return w;
}

}  // namespace ppdyn
