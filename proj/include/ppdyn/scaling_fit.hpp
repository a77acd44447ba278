#pragma once

// Finite-data surrogates for liminf/limsup of log-log ratios.
//
// Every exponent in the library is estimated the same way: local least-squares
// slopes over sliding sub-windows of consecutive grid points, with the minimum
// standing in for the liminf and the maximum for the limsup.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ppdyn/error.hpp"

namespace ppdyn {

inline constexpr std::size_t kSlidingWindow = 6;

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double rms_residual = 0.0;
};

/// Ordinary least squares y ≈ slope·x + intercept. Needs at least two distinct abscissae.
inline LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw DegenerateWindow("least squares needs at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw DegenerateWindow("least squares abscissae are all equal");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (fit.slope * x[i] + fit.intercept);
    ss += r * r;
  }
  fit.rms_residual = std::sqrt(ss / static_cast<double>(n));
  return fit;
}

/// Result of a windowed log-log scaling analysis.
struct ScalingFit {
  std::vector<double> abscissae;
  std::vector<double> ordinates;
  std::size_t window_first = 0;  // inclusive
  std::size_t window_last = 0;   // inclusive
  std::vector<double> local_slopes;
  double lower_slope = 0.0;   // liminf surrogate
  double upper_slope = 0.0;   // limsup surrogate
  double global_slope = 0.0;  // single regression over the whole window
  double residual = 0.0;      // rms residual of the global regression

  std::size_t window_size() const { return window_last - window_first + 1; }
};

/// Fits the window [first, last] of (x, y). Local slopes use `sub_window` consecutive
/// points; windows shorter than that fall back to a single fit over all of them.
/// With `negate` the slopes are reported with opposite sign (used when the scaling
/// law carries an explicit minus, as in the correlation-integral route).
inline ScalingFit fit_scaling(std::vector<double> x, std::vector<double> y, std::size_t first,
                              std::size_t last, bool negate = false,
                              std::size_t sub_window = kSlidingWindow, std::size_t min_points = 4) {
  if (x.size() != y.size()) throw DomainError("fit_scaling: abscissae and ordinates differ in length");
  if (first > last || last >= x.size()) throw DegenerateWindow("fit_scaling: empty window");
  const std::size_t count = last - first + 1;
  if (count < min_points)
    throw DegenerateWindow("scaling window keeps " + std::to_string(count) + " points, need " +
                           std::to_string(min_points));
  for (std::size_t i = first; i <= last; ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
      throw DegenerateWindow("non-finite value inside scaling window");

  ScalingFit fit;
  fit.abscissae = std::move(x);
  fit.ordinates = std::move(y);
  fit.window_first = first;
  fit.window_last = last;

  const double sign = negate ? -1.0 : 1.0;
  std::span<const double> xs(fit.abscissae);
  std::span<const double> ys(fit.ordinates);
  const auto global = least_squares(xs.subspan(first, count), ys.subspan(first, count));
  fit.global_slope = sign * global.slope;
  fit.residual = global.rms_residual;

  const std::size_t w = std::min(sub_window, count);
  for (std::size_t i = first; i + w <= last + 1; ++i)
    fit.local_slopes.push_back(sign * least_squares(xs.subspan(i, w), ys.subspan(i, w)).slope);
  const auto [lo, hi] = std::minmax_element(fit.local_slopes.begin(), fit.local_slopes.end());
  fit.lower_slope = *lo;
  fit.upper_slope = *hi;
  return fit;
}

/// Geometric grid hi, hi·r, hi·r², … down to (and including, up to roundoff) lo.
/// The default ratio 2^{-1/4} gives four points per octave.
inline std::vector<double> geometric_grid(double lo, double hi, double ratio = std::exp2(-0.25)) {
  if (!(lo > 0.0) || !(hi >= lo) || !(ratio > 0.0 && ratio < 1.0))
    throw DomainError("geometric_grid: need 0 < lo <= hi and ratio in (0,1)");
  std::vector<double> grid;
  const double step = -std::log(ratio);
  const auto count = static_cast<std::size_t>(std::floor(std::log(hi / lo) / step + 1e-9)) + 1;
  grid.reserve(count);
  for (std::size_t k = 0; k < count; ++k) grid.push_back(hi * std::exp(-step * static_cast<double>(k)));
  return grid;
}

/// Log-spaced grid from lo to hi (both included) with `per_decade` points per decade.
inline std::vector<double> log_grid(double lo, double hi, int per_decade) {
  if (!(lo > 0.0) || !(hi > lo) || per_decade < 1)
    throw DomainError("log_grid: need 0 < lo < hi and per_decade >= 1");
  const double decades = std::log10(hi / lo);
  const auto intervals = std::max<long>(1, std::lround(std::ceil(decades * per_decade - 1e-9)));
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(intervals) + 1);
  for (long k = 0; k <= intervals; ++k)
    grid.push_back(lo * std::pow(10.0, decades * static_cast<double>(k) / static_cast<double>(intervals)));
  grid.back() = hi;
  return grid;
}

}  // namespace ppdyn
