#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "ppdyn/eigensolver.hpp"
#include "ppdyn/error.hpp"
#include "ppdyn/lattice.hpp"
#include "ppdyn/measure.hpp"
#include "ppdyn/parallel.hpp"
#include "ppdyn/rng.hpp"
#include "ppdyn/scaling_fit.hpp"
#include "ppdyn/spectral.hpp"

namespace ppdyn {

inline Eigen::VectorXd delta_state(std::size_t n, std::size_t site) {
  if (site >= n) throw DomainError("delta site outside the chain");
  return Eigen::VectorXd::Unit(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(site));
}

/// e^{-itT} xi.
inline Eigen::VectorXcd evolve(const EigenSystem& eig, const Eigen::VectorXd& xi, double t) {
  const Eigen::VectorXd c = coefficients(eig, xi);
  const Eigen::VectorXd phase = t * eig.values;
  const Eigen::VectorXd re = eig.vectors * (phase.array().cos() * c.array()).matrix();
  const Eigen::VectorXd im = eig.vectors * (-phase.array().sin() * c.array()).matrix();
  Eigen::VectorXcd out(re.size());
  out.real() = re;
  out.imag() = im;
  return out;
}

namespace detail {

/// sin(x)/x, the real part of the averaging kernel (1 - e^{-ix})/(ix).
inline double sinc(double x) {
  const double ax = std::abs(x);
  if (ax < 1e-4) return 1.0 - x * x / 6.0;
  return std::sin(x) / x;
}

}  // namespace detail

/// (1/t) ∫_0^t |<e^{-isT}xi, δ_site>|² ds in closed form, clamped to >= 0.
inline double time_avg_site_prob(const EigenSystem& eig, const Eigen::VectorXd& xi, double t, std::size_t site) {
  if (!(t > 0.0)) throw DomainError("time average needs t > 0");
  const Eigen::VectorXd c = coefficients(eig, xi);
  if (site >= static_cast<std::size_t>(c.size())) throw DomainError("site outside the chain");
  const Eigen::VectorXd a = c.cwiseProduct(eig.vectors.row(static_cast<Eigen::Index>(site)).transpose());
  const Eigen::Index n = a.size();
  double diag = 0.0, off = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    diag += a[j] * a[j];
    double row = 0.0;
    for (Eigen::Index k = j + 1; k < n; ++k) row += a[k] * detail::sinc(t * (eig.values[k] - eig.values[j]));
    off += a[j] * row;
  }
  return std::max(0.0, diag + 2.0 * off);
}

/// Orthonormal basis {ξ_n} with integer labels. Empty `vectors` means the site basis;
/// otherwise column j of `vectors` is the basis vector carrying labels[j].
struct MomentBasis {
  IndexMap index;
  Eigen::MatrixXd vectors;
  std::string tag = "site";

  static MomentBasis sites(IndexMap map) { return {std::move(map), {}, "site"}; }
};

enum class MomentPath { automatic, exact, sampled };

inline const char* to_string(MomentPath p) {
  switch (p) {
    case MomentPath::automatic: return "automatic";
    case MomentPath::exact: return "exact";
    case MomentPath::sampled: return "sampled";
  }
  return "?";
}

struct MomentOptions {
  MomentPath path = MomentPath::automatic;
  std::size_t kernel_max_size = 512;  // automatic: exact kernel up to this N
  std::size_t samples = 64;           // sampled path, even
  std::uint64_t sample_seed = 0x7061636b696e67ULL;
  unsigned threads = 1;
};

/// ⟨⟨|X|^p⟩⟩ on a time × p grid. Row i belongs to times[i], column k to p_values[k].
struct MomentSeries {
  std::vector<double> times;
  std::vector<double> p_values;
  Eigen::MatrixXd moments;
  Eigen::MatrixXd stderrs;
  std::vector<MomentPath> paths;
  std::string basis_tag = "site";

  std::vector<double> column(std::size_t k) const {
    std::vector<double> out(times.size());
    for (std::size_t i = 0; i < times.size(); ++i)
      out[i] = moments(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    return out;
  }
};

namespace detail {

inline void check_moment_inputs(std::span<const double> p_values, std::span<const double> times) {
  if (p_values.empty() || times.empty()) throw DomainError("moment grid is empty");
  for (double p : p_values)
    if (!(p > 0.0) || !std::isfinite(p)) throw DomainError("moment orders must be positive");
  for (double t : times)
    if (!(t > 0.0) || !std::isfinite(t)) throw DomainError("moment times must be positive");
}

// Stratified antithetic sample times on (lo, hi]: stratum i of width h holds
// lo + i·h + u h and lo + i·h + (1-u) h, with u from a counter stream keyed by hi.
inline std::vector<double> sample_times(double lo, double hi, std::size_t samples, std::uint64_t seed) {
  const std::size_t strata = samples / 2;
  const double h = (hi - lo) / static_cast<double>(strata);
  CounterRng rng = CounterRng(seed).split(std::bit_cast<std::uint64_t>(hi));
  std::vector<double> s(2 * strata);
  for (std::size_t i = 0; i < strata; ++i) {
    const double u = rng.uniform();
    s[2 * i] = lo + h * (static_cast<double>(i) + u);
    s[2 * i + 1] = lo + h * (static_cast<double>(i) + 1.0 - u);
  }
  return s;
}

}  // namespace detail

/// Time-averaged moments Σ_n |n|^p (1/t)∫_0^t |<e^{-isT}xi, ξ_n>|² ds.
///
/// Exact path: with A = basis coefficients of the eigenvectors and c = <e_j, xi>,
/// M_p(t) = Σ_jk B^p_jk sin(tΔ_jk)/(tΔ_jk), B^p = diag(c) Aᵀ W_p A diag(c).
/// Sampled path: each interval between consecutive grid times carries `samples`
/// stratified antithetic sample times, and M_p(t_i) is the length-weighted mean
/// over all intervals up to t_i. The reported stderr is that of plain
/// two-per-stratum sampling, an upper bound for the antithetic estimator.
inline MomentSeries moments(const EigenSystem& eig, const Eigen::VectorXd& xi, std::span<const double> p_values,
                            std::span<const double> times, const MomentBasis& basis, const MomentOptions& opt = {}) {
  detail::check_moment_inputs(p_values, times);
  const Eigen::Index n = eig.values.size();
  if (static_cast<Eigen::Index>(basis.index.size()) != n) throw DomainError("basis size does not match the system");
  const Eigen::VectorXd c = coefficients(eig, xi);
  Eigen::MatrixXd rotated;
  if (basis.vectors.size() != 0) {
    if (basis.vectors.rows() != n || basis.vectors.cols() != n) throw DomainError("basis matrix has the wrong shape");
    rotated = basis.vectors.transpose() * eig.vectors;
  }
  const Eigen::MatrixXd& amp = basis.vectors.size() == 0 ? eig.vectors : rotated;

  MomentPath path = opt.path;
  if (path == MomentPath::automatic)
    path = static_cast<std::size_t>(n) <= opt.kernel_max_size ? MomentPath::exact : MomentPath::sampled;

  const auto np = static_cast<Eigen::Index>(p_values.size());
  const auto nt = times.size();
  MomentSeries series;
  series.times.assign(times.begin(), times.end());
  series.p_values.assign(p_values.begin(), p_values.end());
  series.moments = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nt), np);
  series.stderrs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nt), np);
  series.paths.assign(nt, path);
  series.basis_tag = basis.tag;

  std::vector<Eigen::VectorXd> weights;
  for (double p : p_values) weights.push_back(basis.index.weights(p));

  if (path == MomentPath::exact) {
    std::vector<Eigen::MatrixXd> kernels;
    for (const auto& w : weights) {
      Eigen::MatrixXd wa = w.asDiagonal() * amp;
      Eigen::MatrixXd b = amp.transpose() * wa;
      b = c.asDiagonal() * b * c.asDiagonal();
      kernels.push_back(std::move(b));
    }
    parallel_for(nt, opt.threads, [&](std::size_t i) {
      const double t = times[i];
      std::vector<double> acc(static_cast<std::size_t>(np), 0.0);
      std::vector<double> row(static_cast<std::size_t>(np));
      for (Eigen::Index j = 0; j < n; ++j) {
        std::fill(row.begin(), row.end(), 0.0);
        for (Eigen::Index k = j + 1; k < n; ++k) {
          const double s = detail::sinc(t * (eig.values[k] - eig.values[j]));
          for (Eigen::Index q = 0; q < np; ++q) row[static_cast<std::size_t>(q)] += kernels[static_cast<std::size_t>(q)](k, j) * s;
        }
        for (Eigen::Index q = 0; q < np; ++q)
          acc[static_cast<std::size_t>(q)] += kernels[static_cast<std::size_t>(q)](j, j) + 2.0 * row[static_cast<std::size_t>(q)];
      }
      for (Eigen::Index q = 0; q < np; ++q)
        series.moments(static_cast<Eigen::Index>(i), q) = std::max(0.0, acc[static_cast<std::size_t>(q)]);
    });
    return series;
  }

  if (opt.samples < 4 || opt.samples % 2 != 0) throw DomainError("sampled moments need an even sample count >= 4");
  for (std::size_t i = 1; i < nt; ++i)
    if (!(times[i] > times[i - 1])) throw DomainError("sampled moments need strictly ascending times");
  // Interval k = (times[k-1], times[k]] (interval 0 starts at 0) gets its own samples;
  // the average up to times[i] is the length-weighted sum over intervals 0..i.
  Eigen::MatrixXd interval_mean(static_cast<Eigen::Index>(nt), np), interval_var(static_cast<Eigen::Index>(nt), np);
  parallel_for(nt, opt.threads, [&](std::size_t i) {
    const double lo = i == 0 ? 0.0 : times[i - 1];
    const auto s = detail::sample_times(lo, times[i], opt.samples, opt.sample_seed);
    const auto ns = static_cast<Eigen::Index>(s.size());
    Eigen::MatrixXd cs(n, ns), sn(n, ns);
    for (Eigen::Index k = 0; k < ns; ++k)
      for (Eigen::Index j = 0; j < n; ++j) {
        const double ph = eig.values[j] * s[static_cast<std::size_t>(k)];
        cs(j, k) = std::cos(ph) * c[j];
        sn(j, k) = std::sin(ph) * c[j];
      }
    const Eigen::MatrixXd re = amp * cs;
    const Eigen::MatrixXd im = amp * sn;
    const Eigen::MatrixXd prob = re.cwiseAbs2() + im.cwiseAbs2();
    const std::size_t strata = s.size() / 2;
    for (Eigen::Index q = 0; q < np; ++q) {
      const Eigen::VectorXd inst = prob.transpose() * weights[static_cast<std::size_t>(q)];
      double mean = 0.0, var = 0.0;
      for (std::size_t k = 0; k < strata; ++k) {
        const double a = inst[static_cast<Eigen::Index>(2 * k)], b = inst[static_cast<Eigen::Index>(2 * k + 1)];
        mean += 0.5 * (a + b);
        var += 0.25 * (a - b) * (a - b);
      }
      const auto st = static_cast<double>(strata);
      interval_mean(static_cast<Eigen::Index>(i), q) = mean / st;
      interval_var(static_cast<Eigen::Index>(i), q) = var / (st * st);
    }
  });
  for (Eigen::Index q = 0; q < np; ++q) {
    double integral = 0.0, var = 0.0;
    for (std::size_t i = 0; i < nt; ++i) {
      const double len = times[i] - (i == 0 ? 0.0 : times[i - 1]);
      integral += len * interval_mean(static_cast<Eigen::Index>(i), q);
      var += len * len * interval_var(static_cast<Eigen::Index>(i), q);
      series.moments(static_cast<Eigen::Index>(i), q) = std::max(0.0, integral / times[i]);
      series.stderrs(static_cast<Eigen::Index>(i), q) = std::sqrt(var) / times[i];
    }
  }
  return series;
}

inline MomentSeries moments(const EigenSystem& eig, const Eigen::VectorXd& xi, std::span<const double> p_values,
                            std::span<const double> times, const IndexMap& index, const MomentOptions& opt = {}) {
  return moments(eig, xi, p_values, times, MomentBasis::sites(index), opt);
}

/// Log grid with 16 points per decade; with a ballistic cap, times beyond
/// N / (4 v) are dropped (v = twice the largest hopping).
inline std::vector<double> time_grid(double lo, double hi, int per_decade = 16) { return log_grid(lo, hi, per_decade); }

inline double ballistic_time_cap(const TridiagonalMatrix& t) {
  return static_cast<double>(t.size()) / (4.0 * t.velocity_bound());
}

inline void write_csv(std::ostream& os, const MomentSeries& s, const std::vector<std::string>& header = {}) {
  for (const auto& h : header) os << "# " << h << '\n';
  os << "# basis=" << s.basis_tag << '\n';
  os << "t,p,moment,path,stderr\n";
  char buf[160];
  for (std::size_t i = 0; i < s.times.size(); ++i)
    for (std::size_t k = 0; k < s.p_values.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%s,%.17g\n", s.times[i], s.p_values[k],
                    s.moments(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)), to_string(s.paths[i]),
                    s.stderrs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
      os << buf;
    }
}

struct TimeWindow {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const TimeWindow&, const TimeWindow&) = default;
};

struct TransportEstimate {
  double p = 0.0;
  double alpha_plus = 0.0;
  ScalingFit fit;
};

/// limsup surrogate of ln M / ln t: the largest 6-point sliding slope inside the window.
inline TransportEstimate transport_exponent(const MomentSeries& series, double p, const TimeWindow& window) {
  const auto it = std::find(series.p_values.begin(), series.p_values.end(), p);
  if (it == series.p_values.end()) throw DomainError("moment series has no column for p = " + std::to_string(p));
  const auto k = static_cast<std::size_t>(it - series.p_values.begin());
  std::vector<double> x, y;
  for (std::size_t i = 0; i < series.times.size(); ++i) {
    const double t = series.times[i];
    const double m = series.moments(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    if (t < window.lo * (1 - 1e-12) || t > window.hi * (1 + 1e-12)) continue;
    if (!(m > 0.0)) continue;
    x.push_back(std::log(t));
    y.push_back(std::log(m));
  }
  if (x.size() < 8)
    throw DegenerateWindow("transport window keeps " + std::to_string(x.size()) + " positive moments, need 8");
  TransportEstimate est;
  est.p = p;
  const std::size_t last = x.size() - 1;
  est.fit = fit_scaling(std::move(x), std::move(y), 0, last, false, kSlidingWindow, 8);
  est.alpha_plus = est.fit.upper_slope;
  return est;
}

inline std::vector<TransportEstimate> transport_exponents(const MomentSeries& series, const TimeWindow& window) {
  std::vector<TransportEstimate> out;
  for (double p : series.p_values) out.push_back(transport_exponent(series, p, window));
  return out;
}

/// Dimension window matched to a time window through ε = 1/t, clipped to the default window.
inline WindowSpec matched_scale_window(const TimeWindow& window, const PointMeasure& mu) {
  WindowSpec w{1.0 / window.hi, 1.0 / window.lo};
  const auto clean = mu.without_negligible();
  if (clean.size() >= 2) {
    w.lo = std::max(w.lo, 2.0 * clean.min_gap());
    w.hi = std::min(w.hi, 0.25 * clean.diameter());
  }
  return w;
}

struct BoundRow {
  double p = 0.0;
  double alpha_plus = 0.0;
  double q = 0.0;
  double d_plus = 0.0;
  double gfd_bound = 0.0;      // D⁺(1/(1+p))·p
  double packing = 0.0;
  double packing_bound = 0.0;  // packing·p
  bool gfd_pass = false;
  bool packing_pass = false;
  double gfd_slack = 0.0;      // α⁺ − D⁺ p
  double packing_slack = 0.0;  // α⁺ − packing·p
};

struct BoundReport {
  double tolerance = 0.0;
  std::vector<BoundRow> rows;
  bool all_pass() const {
    return std::all_of(rows.begin(), rows.end(), [](const BoundRow& r) { return r.gfd_pass && r.packing_pass; });
  }
};

/// α⁺(p) ≥ D⁺(1/(1+p))·p − tol and α⁺(p) ≥ packing·p − tol, with D⁺ from the ball
/// route over `window`. A single-atom measure has D⁺ = 0.
inline BoundReport verify_bounds(const std::vector<TransportEstimate>& transport, const PointMeasure& mu,
                                 double tolerance, const WindowSpec& window) {
  BoundReport report;
  report.tolerance = tolerance;
  const auto clean = mu.without_negligible();
  const double packing = clean.size() >= 2 ? std::max(0.0, packing_dimension_estimate(clean)) : 0.0;
  for (const auto& est : transport) {
    BoundRow row;
    row.p = est.p;
    row.alpha_plus = est.alpha_plus;
    row.q = 1.0 / (1.0 + est.p);
    row.d_plus = clean.size() >= 2 ? estimate_dimensions(clean, row.q, DimensionRoute::ball, window).upper_slope : 0.0;
    row.gfd_bound = row.d_plus * est.p;
    row.packing = packing;
    row.packing_bound = packing * est.p;
    row.gfd_slack = row.alpha_plus - row.gfd_bound;
    row.packing_slack = row.alpha_plus - row.packing_bound;
    row.gfd_pass = row.gfd_slack >= -tolerance;
    row.packing_pass = row.packing_slack >= -tolerance;
    report.rows.push_back(row);
  }
  return report;
}

/// True iff |α⁺(p) − p| ≤ tol for every estimate.
inline bool classify_quasiballistic(const std::vector<TransportEstimate>& estimates, double tol) {
  if (estimates.empty()) return false;
  return std::all_of(estimates.begin(), estimates.end(),
                     [tol](const TransportEstimate& e) { return std::abs(e.alpha_plus - e.p) <= tol; });
}

/// α⁺ nondecreasing in p (within `mono_tol`) and α⁺ ≤ p + `cap_tol`.
inline bool moment_surrogates_hold(const std::vector<TransportEstimate>& estimates, double mono_tol = 0.05,
                                   double cap_tol = 0.1) {
  std::vector<TransportEstimate> sorted = estimates;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.p < b.p; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i].alpha_plus > sorted[i].p + cap_tol) return false;
    if (i > 0 && sorted[i].alpha_plus < sorted[i - 1].alpha_plus - mono_tol) return false;
  }
  return true;
}

inline nlohmann::json to_json(const TransportEstimate& e) {
  return {{"p", e.p},
          {"alpha_plus", e.alpha_plus},
          {"lower_slope", e.fit.lower_slope},
          {"global_slope", e.fit.global_slope},
          {"window_points", e.fit.window_size()},
          {"residual", e.fit.residual}};
}

inline nlohmann::json to_json(const BoundReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& x : r.rows)
    rows.push_back({{"p", x.p},
                    {"alpha_plus", x.alpha_plus},
                    {"q", x.q},
                    {"d_plus", x.d_plus},
                    {"gfd_bound", x.gfd_bound},
                    {"packing", x.packing},
                    {"packing_bound", x.packing_bound},
                    {"gfd_pass", x.gfd_pass},
                    {"packing_pass", x.packing_pass},
                    {"gfd_slack", x.gfd_slack},
                    {"packing_slack", x.packing_slack}});
  return {{"tolerance", r.tolerance}, {"all_pass", r.all_pass()}, {"rows", rows}};
}

}  // namespace ppdyn
