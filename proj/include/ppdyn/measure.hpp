#pragma once

// Finite point measures and their generalized fractal dimensions.
//
// Three independent routes estimate D^±(q) for q in (0,1):
//   * ball scaling      S(q,ε) = Σ_j μ(B(λ_j,ε))^{q-1} m_j
//   * mean-q integral   ε^{-1} ∫ μ(B(x,ε))^q dx
//   * correlation       C(q,t) = t ∫ (Σ_j m_j e^{-t|x-λ_j|})^q dx, read at t = 1/ε
// The first two scale like ε^{(q-1)D}; the third like t^{-(q-1)D}.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "json.hpp"
#include "ppdyn/detail/range_sum.hpp"
#include "ppdyn/error.hpp"
#include "ppdyn/scaling_fit.hpp"

namespace ppdyn {

inline constexpr double kMergeTolerance = 1e-12;  // relative to support diameter
inline constexpr double kMassFloor = 1e-16;       // relative to total mass

struct Atom {
  double position = 0.0;
  double mass = 0.0;
  friend bool operator==(const Atom&, const Atom&) = default;
};

/// Finite positive measure with finitely many atoms.
///
/// Atoms are kept sorted by position; atoms closer than `merge_tolerance` times the
/// support diameter are merged into one (masses summed, position mass-weighted).
class PointMeasure {
 public:
  explicit PointMeasure(std::vector<Atom> atoms, double merge_tolerance = kMergeTolerance) {
    if (atoms.empty()) throw DomainError("PointMeasure needs at least one atom");
    for (const auto& a : atoms) {
      if (!std::isfinite(a.position)) throw DomainError("PointMeasure: non-finite atom position");
      if (!std::isfinite(a.mass) || a.mass < 0.0) throw DomainError("PointMeasure: atom mass must be finite and >= 0");
    }
    std::stable_sort(atoms.begin(), atoms.end(),
                     [](const Atom& a, const Atom& b) { return a.position < b.position; });
    const double diameter = atoms.back().position - atoms.front().position;
    const double tol = merge_tolerance * diameter;

    atoms_.reserve(atoms.size());
    std::size_t i = 0;
    while (i < atoms.size()) {
      std::size_t j = i + 1;
      while (j < atoms.size() && atoms[j].position - atoms[i].position <= tol) ++j;
      if (j == i + 1) {
        atoms_.push_back(atoms[i]);
      } else {
        double mass = 0.0, moment = 0.0;
        for (std::size_t k = i; k < j; ++k) {
          mass += atoms[k].mass;
          moment += atoms[k].mass * atoms[k].position;
        }
        atoms_.push_back({mass > 0.0 ? moment / mass : atoms[i].position, mass});
      }
      i = j;
    }

    positions_.reserve(atoms_.size());
    std::vector<double> masses;
    masses.reserve(atoms_.size());
    for (const auto& a : atoms_) {
      positions_.push_back(a.position);
      masses.push_back(a.mass);
    }
    total_ = 0.0;
    for (double m : masses) total_ += m;
    if (!(total_ > 0.0) || !std::isfinite(total_)) throw DomainError("PointMeasure: total mass must be positive and finite");
    sums_ = detail::RangeSum(masses);
  }

  std::span<const Atom> atoms() const { return atoms_; }
  std::span<const double> positions() const { return positions_; }
  std::size_t size() const { return atoms_.size(); }
  double total_mass() const { return total_; }
  double support_radius() const { return std::max(std::abs(positions_.front()), std::abs(positions_.back())); }
  double diameter() const { return positions_.back() - positions_.front(); }

  /// Smallest distance between consecutive atoms; +inf for a single atom.
  double min_gap() const {
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < positions_.size(); ++i) gap = std::min(gap, positions_[i] - positions_[i - 1]);
    return gap;
  }

  /// Index range [first, last) of atoms inside the open interval (lo, hi).
  std::pair<std::size_t, std::size_t> open_range(double lo, double hi) const {
    const auto first = std::upper_bound(positions_.begin(), positions_.end(), lo) - positions_.begin();
    const auto last = std::lower_bound(positions_.begin(), positions_.end(), hi) - positions_.begin();
    return {static_cast<std::size_t>(first), static_cast<std::size_t>(std::max(first, last))};
  }

  double range_mass(std::size_t first, std::size_t last) const { return sums_.sum(first, last); }

  /// Copy without atoms lighter than `relative_floor` × total mass.
  PointMeasure without_negligible(double relative_floor = kMassFloor) const {
    std::vector<Atom> kept;
    kept.reserve(atoms_.size());
    const double floor = relative_floor * total_;
    for (const auto& a : atoms_)
      if (a.mass >= floor && a.mass > 0.0) kept.push_back(a);
    return PointMeasure(std::move(kept), 0.0);
  }

  bool has_zero_mass_atom() const {
    return std::any_of(atoms_.begin(), atoms_.end(), [](const Atom& a) { return a.mass <= 0.0; });
  }

 private:
  std::vector<Atom> atoms_;
  std::vector<double> positions_;
  detail::RangeSum sums_;
  double total_ = 0.0;
};

/// μ(B(x,ε)) with the open ball B(x,ε) = (x-ε, x+ε).
inline double ball_mass(const PointMeasure& mu, double x, double eps) {
  if (!(eps > 0.0)) throw DomainError("ball_mass: eps must be positive");
  const auto [first, last] = mu.open_range(x - eps, x + eps);
  return mu.range_mass(first, last);
}

namespace detail {
inline void check_q(double q) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("q must lie in (0,1)");
}
}  // namespace detail

/// Σ_j μ(B(λ_j,ε))^{q-1} m_j.
inline double partition_sum(const PointMeasure& mu, double q, double eps) {
  detail::check_q(q);
  if (!(eps > 0.0)) throw DomainError("partition_sum: eps must be positive");
  if (mu.has_zero_mass_atom()) throw DomainError("partition_sum: zero-mass atoms must be filtered first");
  const auto atoms = mu.atoms();
  const auto pos = mu.positions();
  double sum = 0.0;
  // open_range bounds are nondecreasing in j: sweep them instead of searching
  std::size_t first = 0, last = 0;
  for (std::size_t j = 0; j < atoms.size(); ++j) {
    const double lo = atoms[j].position - eps, hi = atoms[j].position + eps;
    while (first < pos.size() && pos[first] <= lo) ++first;
    last = std::max(last, first);
    while (last < pos.size() && pos[last] < hi) ++last;
    // An atom always lies in its own ball, even when eps is below the local ulp.
    sum += std::pow(mu.range_mass(std::min(first, j), std::max(last, j + 1)), q - 1.0) * atoms[j].mass;
  }
  return sum;
}

struct QuadratureSpec {
  double tolerance = 1e-10;        // relative
  unsigned max_refinements = 40;   // bisection depth per panel
};

/// C_μ(q,t) = t ∫_{-r-1}^{r+1} (Σ_j m_j e^{-t|x-λ_j|})^q dx with r the support radius.
///
/// Between consecutive atoms the inner sum is L_k e^{-t(x-λ_k)} + R_{k+1} e^{-t(λ_{k+1}-x)},
/// where L and R are exponentially discounted running sums; each such panel is smooth
/// and integrated by adaptive Gauss–Kronrod. The two outer tails are pure exponentials
/// and integrated in closed form.
inline double correlation_integral(const PointMeasure& mu, double q, double t, const QuadratureSpec& quad = {}) {
  if (!(q > 0.0)) throw DomainError("correlation_integral: q must be positive");
  if (!(t > 0.0)) throw DomainError("correlation_integral: t must be positive");
  const auto atoms = mu.atoms();
  const std::size_t n = atoms.size();
  const double r = mu.support_radius();

  std::vector<double> left(n), right(n);
  left[0] = atoms[0].mass;
  for (std::size_t k = 1; k < n; ++k)
    left[k] = atoms[k].mass + left[k - 1] * std::exp(-t * (atoms[k].position - atoms[k - 1].position));
  right[n - 1] = atoms[n - 1].mass;
  for (std::size_t k = n - 1; k-- > 0;)
    right[k] = atoms[k].mass + right[k + 1] * std::exp(-t * (atoms[k + 1].position - atoms[k].position));

  const double qt = q * t;
  const double left_len = atoms.front().position + r + 1.0;
  const double right_len = r + 1.0 - atoms.back().position;
  double integral = std::pow(right[0], q) * -std::expm1(-qt * left_len) / qt +
                    std::pow(left[n - 1], q) * -std::expm1(-qt * right_len) / qt;

  using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
  double total_error = 0.0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double h = atoms[k + 1].position - atoms[k].position;
    const double a = left[k], b = right[k + 1];
    auto f = [a, b, h, t, q](double u) { return std::pow(a * std::exp(-t * u) + b * std::exp(-t * (h - u)), q); };
    double error = 0.0;
    integral += GK::integrate(f, 0.0, h, quad.max_refinements, quad.tolerance, &error);
    total_error += error;
  }
  if (total_error > quad.tolerance * integral)
    throw NumericalError("correlation_integral: quadrature did not reach the requested tolerance",
                         total_error / integral);
  return t * integral;
}

/// ε^{-1} ∫ μ(B(x,ε))^q dx, computed exactly: x ↦ μ(B(x,ε)) is constant between the
/// breakpoints {λ_j ± ε}.
inline double mean_q_integral(const PointMeasure& mu, double q, double eps) {
  if (!(q > 0.0)) throw DomainError("mean_q_integral: q must be positive");
  if (!(eps > 0.0)) throw DomainError("mean_q_integral: eps must be positive");
  const auto positions = mu.positions();
  std::vector<double> breaks;
  breaks.reserve(2 * positions.size());
  for (double x : positions) {
    breaks.push_back(x - eps);
    breaks.push_back(x + eps);
  }
  std::sort(breaks.begin(), breaks.end());
  double integral = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double len = breaks[i + 1] - breaks[i];
    if (!(len > 0.0)) continue;
    const double value = ball_mass(mu, 0.5 * (breaks[i] + breaks[i + 1]), eps);
    if (value > 0.0) integral += len * std::pow(value, q);
  }
  return integral / eps;
}

/// Scale window [lo, hi] for length scales ε.
struct WindowSpec {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

/// [2 × min gap, 0.25 × diameter]: below the smallest gap every finite measure is a
/// set of isolated atoms, above the diameter it is a single blob.
inline WindowSpec default_window(const PointMeasure& mu) {
  if (mu.size() < 2) throw DegenerateWindow("default window needs at least two atoms");
  WindowSpec w{2.0 * mu.min_gap(), 0.25 * mu.diameter()};
  if (!(w.lo < w.hi)) throw DegenerateWindow("default window is empty (min gap too large relative to diameter)");
  return w;
}

enum class DimensionRoute { ball, mean_q, correlation };
enum class ScaleKind { length, time };

inline const char* to_string(DimensionRoute r) {
  switch (r) {
    case DimensionRoute::ball: return "ball";
    case DimensionRoute::mean_q: return "mean_q";
    case DimensionRoute::correlation: return "correlation";
  }
  return "?";
}

/// Generic estimator: ordinate ln values(s), abscissa (q-1) ln s over the given scales.
/// Time scales (correlation route) carry a minus sign in their scaling law, so their
/// slopes are negated and lower/upper swap accordingly.
template <class ValuesFn>
ScalingFit estimate_dimensions(ValuesFn&& values, double q, std::span<const double> scales, ScaleKind kind) {
  detail::check_q(q);
  if (scales.size() < 4)
    throw DegenerateWindow("dimension estimate needs at least 4 scales, got " + std::to_string(scales.size()));
  std::vector<double> x, y;
  x.reserve(scales.size());
  y.reserve(scales.size());
  for (double s : scales) {
    x.push_back((q - 1.0) * std::log(s));
    y.push_back(std::log(values(s)));
  }
  return fit_scaling(std::move(x), std::move(y), 0, scales.size() - 1, kind == ScaleKind::time);
}

/// Dimension estimate of `mu` over the length-scale window using one of the three routes.
/// The correlation route is evaluated at t = 1/ε for each ε of the same grid.
inline ScalingFit estimate_dimensions(const PointMeasure& mu, double q, DimensionRoute route, const WindowSpec& window,
                                      const QuadratureSpec& quad = {}) {
  detail::check_q(q);
  const PointMeasure clean = mu.without_negligible();
  const auto eps = geometric_grid(window.lo, window.hi);
  switch (route) {
    case DimensionRoute::ball:
      return estimate_dimensions([&](double e) { return partition_sum(clean, q, e); }, q, eps, ScaleKind::length);
    case DimensionRoute::mean_q:
      return estimate_dimensions([&](double e) { return mean_q_integral(clean, q, e); }, q, eps, ScaleKind::length);
    case DimensionRoute::correlation: {
      std::vector<double> times;
      times.reserve(eps.size());
      for (double e : eps) times.push_back(1.0 / e);
      return estimate_dimensions([&](double t) { return correlation_integral(clean, q, t, quad); }, q, times,
                                 ScaleKind::time);
    }
  }
  throw DomainError("unknown dimension route");
}

inline ScalingFit estimate_dimensions(const PointMeasure& mu, double q, DimensionRoute route = DimensionRoute::ball) {
  return estimate_dimensions(mu, q, route, default_window(mu.without_negligible()));
}

/// limsup surrogate of ln μ(B(x,ε)) / ln ε over the scales; +inf if some ball is empty.
inline double pointwise_upper_exponent(const PointMeasure& mu, double x, std::span<const double> scales) {
  if (scales.size() < 2) throw DegenerateWindow("pointwise exponent needs at least two scales");
  std::vector<double> lx, ly;
  for (double e : scales) {
    const double m = ball_mass(mu, x, e);
    if (!(m > 0.0)) return std::numeric_limits<double>::infinity();
    lx.push_back(std::log(e));
    ly.push_back(std::log(m));
  }
  return fit_scaling(std::move(lx), std::move(ly), 0, scales.size() - 1, false, kSlidingWindow, 2).upper_slope;
}

/// Scales probing the ε↓0 regime of a finite measure: three decades below half the
/// smallest atom gap (or below 1 for a single atom).
inline std::vector<double> asymptotic_scales(const PointMeasure& mu) {
  const double gap = mu.min_gap();
  const double hi = std::isfinite(gap) ? 0.5 * gap : 1.0;
  return geometric_grid(hi * 1e-3, hi);
}

/// μ-essential supremum of the pointwise upper exponents at the atoms.
inline double packing_dimension_estimate(const PointMeasure& mu, std::span<const double> scales) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& a : mu.atoms())
    if (a.mass > 0.0) best = std::max(best, pointwise_upper_exponent(mu, a.position, scales));
  return best;
}

inline double packing_dimension_estimate(const PointMeasure& mu) {
  return packing_dimension_estimate(mu, asymptotic_scales(mu));
}

// ---------------------------------------------------------------------------
// Serialization

/// Two-column text: "position mass" per line, '#' comments.
inline void write_text(std::ostream& os, const PointMeasure& mu, const std::string& header = {}) {
  if (!header.empty()) {
    std::istringstream lines(header);
    for (std::string line; std::getline(lines, line);) os << "# " << line << '\n';
  }
  os << "# columns: position mass\n";
  char buf[64];
  for (const auto& a : mu.atoms()) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g\n", a.position, a.mass);
    os << buf;
  }
}

inline PointMeasure read_text(std::istream& is) {
  std::vector<Atom> atoms;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    std::istringstream in(line);
    Atom a;
    if (!(in >> a.position >> a.mass)) throw DomainError("measure text: malformed line " + std::to_string(lineno));
    atoms.push_back(a);
  }
  return PointMeasure(std::move(atoms));
}

inline nlohmann::json to_json(const PointMeasure& mu) {
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& a : mu.atoms()) atoms.push_back({{"position", a.position}, {"mass", a.mass}});
  return {{"total_mass", mu.total_mass()}, {"atoms", std::move(atoms)}};
}

inline PointMeasure measure_from_json(const nlohmann::json& j) {
  std::vector<Atom> atoms;
  for (const auto& a : j.at("atoms")) atoms.push_back({a.at("position").get<double>(), a.at("mass").get<double>()});
  return PointMeasure(std::move(atoms));
}

}  // namespace ppdyn
