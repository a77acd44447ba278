#pragma once

// Explicit vector families: summable tails (dimension 0), tails along a weakly-spaced
// subsequence (dimension bounded below by t_{n,q}), and tails with a divergent p-moment.
// Constructions live in the eigenbasis as sparse expansions so the spectrum may be
// far larger than any dense eigenvector matrix.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "ppdyn/eigensolver.hpp"
#include "ppdyn/error.hpp"
#include "ppdyn/lattice.hpp"
#include "ppdyn/measure.hpp"
#include "ppdyn/scaling_fit.hpp"
#include "ppdyn/spacing.hpp"
#include "ppdyn/spectral.hpp"

namespace ppdyn {

struct ExpansionTerm {
  std::size_t index = 0;
  double coefficient = 0.0;
  friend bool operator==(const ExpansionTerm&, const ExpansionTerm&) = default;
};

/// Σ coefficient · e_index over an ambient basis of `dimension` vectors; indices distinct.
struct Expansion {
  std::size_t dimension = 0;
  std::vector<ExpansionTerm> terms;

  double norm() const {
    double s = 0.0;
    for (const auto& t : terms) s += t.coefficient * t.coefficient;
    return std::sqrt(s);
  }
  void normalize() {
    const double n = norm();
    if (!(n > 0.0)) throw DomainError("cannot normalize an empty expansion");
    for (auto& t : terms) t.coefficient /= n;
  }
  Eigen::VectorXd dense() const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dimension));
    for (const auto& t : terms) v[static_cast<Eigen::Index>(t.index)] = t.coefficient;
    return v;
  }
  friend bool operator==(const Expansion&, const Expansion&) = default;
};

/// Atoms (values[index], coefficient²) of an eigenbasis expansion; zero terms dropped.
inline PointMeasure expansion_measure(std::span<const double> values, const Expansion& x) {
  std::vector<Atom> atoms;
  for (const auto& t : x.terms) {
    if (t.index >= values.size()) throw DomainError("expansion index outside the spectrum");
    if (t.coefficient != 0.0) atoms.push_back({values[t.index], t.coefficient * t.coefficient});
  }
  return PointMeasure(std::move(atoms), 0.0);
}

inline Eigen::VectorXd to_vector(const EigenSystem& eig, const Expansion& x) {
  check_dimension(eig, static_cast<Eigen::Index>(x.dimension));
  return from_coefficients(eig, x.dense());
}

inline std::span<const double> value_span(const EigenSystem& eig) {
  return {eig.values.data(), static_cast<std::size_t>(eig.values.size())};
}

// ---------------------------------------------------------------------------
// Summable tails

/// Σ m_j^q over the atoms: the ε-uniform ceiling on S(q, ε).
inline double atom_power_sum(const PointMeasure& mu, double q) {
  double s = 0.0;
  for (const auto& a : mu.atoms()) s += std::pow(a.mass, q);
  return s;
}

/// head on e_1..e_k, b_j = j^{-s/2} on e_{k+1}..e_N (1-based j), normalized.
inline Expansion low_dim_expansion(std::size_t dimension, std::span<const double> head, double tail_exponent,
                                   double q_target) {
  if (!(tail_exponent * q_target > 1.0))
    throw SummabilityViolated("tail exponent s = " + std::to_string(tail_exponent) + " with q = " +
                              std::to_string(q_target) + " gives a divergent Σ|b_j|^{2q}");
  if (head.size() > dimension) throw DomainError("head longer than the basis");
  Expansion x{dimension, {}};
  for (std::size_t j = 0; j < head.size(); ++j) x.terms.push_back({j, head[j]});
  for (std::size_t j = head.size() + 1; j <= dimension; ++j)
    x.terms.push_back({j - 1, std::pow(static_cast<double>(j), -0.5 * tail_exponent)});
  x.normalize();
  return x;
}

inline Eigen::VectorXd build_low_dim_vector(const EigenSystem& eig, std::span<const double> head, double tail_exponent,
                                            double q_target) {
  return to_vector(eig, low_dim_expansion(static_cast<std::size_t>(eig.size()), head, tail_exponent, q_target));
}

// ---------------------------------------------------------------------------
// Tails along a weakly-spaced subsequence

inline void check_high_dim_n(int n, double q) {
  detail::check_q(q);
  if (!(n >= 1 && static_cast<double>(n) > q / (1.0 - q)))
    throw DomainError("high-dim construction needs integer n > q/(1-q) = " + std::to_string(q / (1.0 - q)));
}

/// (1 − (1+1/n) q) / ((1 − q)(1 + 1/n)).
inline double t_nq(int n, double q) {
  check_high_dim_n(n, q);
  const double e = 1.0 + 1.0 / static_cast<double>(n);
  return (1.0 - e * q) / ((1.0 - q) * e);
}

inline constexpr std::size_t kMinTailLevels = 8;

/// head on e_1..e_k, 1/√(l^{1+1/n}) on e_{j_l} for witness levels l >= r_k, normalized.
/// r_k = 0 selects k + 1. Witness indices refer to `values`.
inline Expansion high_dim_expansion(std::span<const double> values, const SpacingWitness& witness, int n, double q,
                                    std::span<const double> head, std::size_t r_k = 0,
                                    std::size_t min_tail = kMinTailLevels) {
  check_high_dim_n(n, q);
  const std::size_t k = head.size();
  if (r_k == 0) r_k = k + 1;
  if (r_k <= k) throw DomainError("r_k must exceed the head length");
  if (k > values.size()) throw DomainError("head longer than the basis");
  const long last = witness.first_level + static_cast<long>(witness.depth()) - 1;
  const long start = std::max<long>(static_cast<long>(r_k), witness.first_level);
  const long tail = last - start + 1;
  if (tail < static_cast<long>(min_tail))
    throw WitnessTooShallow("witness reaches level " + std::to_string(last) + "; tail from level " +
                            std::to_string(start) + " needs " + std::to_string(min_tail) + " levels");
  Expansion x{values.size(), {}};
  for (std::size_t j = 0; j < k; ++j) x.terms.push_back({j, head[j]});
  const double e = 1.0 + 1.0 / static_cast<double>(n);
  for (long l = start; l <= last; ++l) {
    const std::size_t idx = witness.indices[static_cast<std::size_t>(l - witness.first_level)];
    if (idx >= values.size()) throw DomainError("witness index outside the spectrum");
    if (idx < k) throw DomainError("witness level " + std::to_string(l) + " hits a head index; raise r_k");
    x.terms.push_back({idx, 1.0 / std::sqrt(std::pow(static_cast<double>(l), e))});
  }
  x.normalize();
  return x;
}

/// ε_m = |λ_{j_m} − λ_{j_{m+1}}| / 2 for every witnessed gap level m.
struct ScaleGrid {
  std::vector<long> levels;
  std::vector<double> eps;
};

inline ScaleGrid construction_scale_grid(const SpacingWitness& witness, std::span<const double> values) {
  ScaleGrid g;
  for (std::size_t k = 0; k + 1 < witness.indices.size(); ++k) {
    g.levels.push_back(witness.first_level + static_cast<long>(k));
    g.eps.push_back(0.5 * std::abs(values[witness.indices[k]] - values[witness.indices[k + 1]]));
  }
  return g;
}

struct HighDimReport {
  int n = 0;
  double q = 0.0;
  double t_nq = 0.0;
  long tail_start = 0;
  long M = 0;  // isolation holds for every m >= M through the last gap level
  std::vector<long> levels;  // sampled certified levels, ε descending
  std::vector<double> eps;
  std::vector<double> partition_sums;
  std::vector<double> isolated_sums;  // Σ_{tail_start <= l <= m} μ({λ_{j_l}})^q <= S(q, ε_m)
  double slope = 0.0;        // regression of ln S on (q−1) ln ε_m
  double lower_slope = 0.0;  // sliding-window extremes of the same fit
  double upper_slope = 0.0;
  double isolated_slope = 0.0;  // same regression on the isolated sums
  bool passes(double tol = 0.1) const { return slope >= t_nq - tol; }
};

/// Partition sums S(q, ε_m) of the expansion's spectral measure over the certified levels
/// m >= max(M, L0, tail_start), sampled so consecutive ε_m shrink by at least `eps_ratio`.
inline HighDimReport certify_high_dim(std::span<const double> values, const SpacingWitness& witness,
                                      const Expansion& x, int n, double q, std::size_t r_k = 0,
                                      double eps_ratio = std::exp2(-0.25)) {
  if (!(eps_ratio > 0.0 && eps_ratio <= 1.0)) throw DomainError("eps_ratio must lie in (0, 1]");
  HighDimReport r;
  r.n = n;
  r.q = q;
  r.t_nq = t_nq(n, q);
  std::vector<std::size_t> tail_idx(witness.indices);
  std::sort(tail_idx.begin(), tail_idx.end());
  std::size_t k = 0;
  for (const auto& t : x.terms)
    if (!std::binary_search(tail_idx.begin(), tail_idx.end(), t.index)) ++k;
  if (r_k == 0) r_k = k + 1;
  r.tail_start = std::max<long>(static_cast<long>(r_k), witness.first_level);
  const PointMeasure mu = expansion_measure(values, x);
  const auto grid = construction_scale_grid(witness, values);
  if (grid.eps.empty()) throw WitnessTooShallow("witness has no gaps");
  const long last = grid.levels.back();
  const long lo = std::max(r.tail_start, witness.L0);
  auto eps_at = [&](long m) { return grid.eps[static_cast<std::size_t>(m - witness.first_level)]; };
  auto atom_at = [&](long l) { return values[witness.indices[static_cast<std::size_t>(l - witness.first_level)]]; };

  // isolation of level l at ε_m needs both witness neighbours and every other atom outside the
  // ball; the neighbour distances only grow toward small l, so scan the nearest atoms per level
  std::vector<double> nearest;  // distance from atom l to its nearest other atom of mu
  const auto pos = mu.positions();
  for (long l = r.tail_start; l <= last; ++l) {
    const double v = atom_at(l);
    const auto it = std::lower_bound(pos.begin(), pos.end(), v);
    double d = std::numeric_limits<double>::infinity();
    if (it != pos.begin()) d = std::min(d, v - *(it - 1));
    if (it != pos.end() && it + 1 != pos.end()) d = std::min(d, *(it + 1) - v);
    nearest.push_back(d);
  }
  // isolated at ε_m for all l <= m  ⇔  min_{l <= m} nearest_l >= ε_m
  r.M = last + 1;
  {
    std::vector<double> prefix_min(nearest.size());
    double run = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nearest.size(); ++i) prefix_min[i] = run = std::min(run, nearest[i]);
    for (long m = last; m >= lo; --m) {
      if (prefix_min[static_cast<std::size_t>(m - r.tail_start)] < eps_at(m)) break;
      r.M = m;
    }
  }
  double iso = 0.0;
  long summed = r.tail_start - 1;
  double prev = std::numeric_limits<double>::infinity();
  for (long m = std::max(lo, r.M); m <= last; ++m) {
    const double e = eps_at(m);
    if (!(e <= prev * eps_ratio) && m != last) continue;
    if (!(e < prev)) continue;
    prev = e;
    for (; summed < m; ++summed) {
      const auto term = k + static_cast<std::size_t>(summed + 1 - r.tail_start);
      if (term >= x.terms.size() ||
          x.terms[term].index != witness.indices[static_cast<std::size_t>(summed + 1 - witness.first_level)])
        throw DomainError("expansion tail does not follow the witness from level r_k");
      iso += std::pow(x.terms[term].coefficient * x.terms[term].coefficient, q);
    }
    r.levels.push_back(m);
    r.eps.push_back(e);
    r.partition_sums.push_back(partition_sum(mu, q, e));
    r.isolated_sums.push_back(iso);
  }
  if (r.levels.size() < 4) throw WitnessTooShallow("certified scale range keeps fewer than 4 sampled levels");
  std::vector<double> lx, ly, li;
  for (std::size_t i = 0; i < r.eps.size(); ++i) {
    lx.push_back((q - 1.0) * std::log(r.eps[i]));
    ly.push_back(std::log(r.partition_sums[i]));
    li.push_back(std::log(r.isolated_sums[i]));
  }
  r.isolated_slope = least_squares(lx, li).slope;
  const auto fit = fit_scaling(std::move(lx), std::move(ly), 0, r.eps.size() - 1);
  r.slope = fit.global_slope;
  r.lower_slope = fit.lower_slope;
  r.upper_slope = fit.upper_slope;
  return r;
}

// ---------------------------------------------------------------------------
// Divergent moments in a lattice basis

/// ⟨ξ, e_n⟩ kept for |n| <= j, 1/√(|n|^{p+1}) for |n| > j, over the sites of `index`.
/// With `normalize` the result is scaled to unit length.
inline Eigen::VectorXd build_divergent_moment_vector(const IndexMap& index, double p, long j,
                                                     const Eigen::VectorXd& head, bool normalize = true) {
  if (!(p > 0.0)) throw DomainError("moment order p must be positive");
  if (j < 0) throw DomainError("cutoff j must be nonnegative");
  const auto n = static_cast<Eigen::Index>(index.size());
  if (head.size() != n) throw DomainError("head dimension does not match the basis");
  if (!(2 * j < static_cast<long>(index.size()))) throw DomainError("cutoff j must be below N/2");
  Eigen::VectorXd v(n);
  for (Eigen::Index s = 0; s < n; ++s) {
    const long label = index.labels[static_cast<std::size_t>(s)];
    v[s] = std::abs(label) <= j ? head[s] : 1.0 / std::sqrt(std::pow(std::abs(static_cast<double>(label)), p + 1.0));
  }
  if (normalize) v /= v.norm();
  return v;
}

/// Σ_{lo < |n| <= hi} |n|^p |v_n|².
inline double partial_moment(const IndexMap& index, const Eigen::VectorXd& v, double p, long lo, long hi) {
  double s = 0.0;
  for (std::size_t site = 0; site < index.size(); ++site) {
    const long a = std::abs(index.labels[site]);
    if (a > lo && a <= hi) {
      const double c = v[static_cast<Eigen::Index>(site)];
      s += std::pow(static_cast<double>(a), p) * c * c;
    }
  }
  return s;
}

struct HarmonicFit {
  std::vector<double> m;
  std::vector<double> sums;
  double c = 0.0;  // partial moment ≈ c ln m + d
  double d = 0.0;
};

/// Fits Σ_{j<|n|<=m} |n|^p |v_n|² against ln m on a log grid of m in [m_lo, m_hi].
inline HarmonicFit harmonic_fit(const IndexMap& index, const Eigen::VectorXd& v, double p, long j, long m_lo,
                                long m_hi, int per_decade = 8) {
  if (!(j < m_lo && m_lo < m_hi)) throw DomainError("harmonic fit needs j < m_lo < m_hi");
  HarmonicFit h;
  std::vector<double> lx;
  long prev = -1;
  for (double m : log_grid(static_cast<double>(m_lo), static_cast<double>(m_hi), per_decade)) {
    const long mi = std::lround(m);
    if (mi == prev) continue;
    prev = mi;
    h.m.push_back(static_cast<double>(mi));
    h.sums.push_back(partial_moment(index, v, p, j, mi));
    lx.push_back(std::log(static_cast<double>(mi)));
  }
  const auto f = least_squares(lx, h.sums);
  h.c = f.slope;
  h.d = f.intercept;
  return h;
}

// ---------------------------------------------------------------------------
// Specs and persistence

enum class ConstructionKind { low_dim, high_dim, divergent_moment };

inline const char* to_string(ConstructionKind k) {
  switch (k) {
    case ConstructionKind::low_dim: return "low_dim";
    case ConstructionKind::high_dim: return "high_dim";
    case ConstructionKind::divergent_moment: return "divergent";
  }
  return "?";
}

inline ConstructionKind construction_kind_from_string(const std::string& s) {
  if (s == "low_dim") return ConstructionKind::low_dim;
  if (s == "high_dim") return ConstructionKind::high_dim;
  if (s == "divergent") return ConstructionKind::divergent_moment;
  throw ConfigError("construction.kind", "unknown construction kind '" + s + "'");
}

struct ConstructionSpec {
  ConstructionKind kind = ConstructionKind::low_dim;
  std::vector<double> head;  // k = head.size()
  std::size_t dimension = 0;
  double tail_exponent = 4.0;  // low_dim
  double q = 0.5;              // low_dim target, high_dim probe
  int n = 3;                   // high_dim
  double alpha = 0.0;          // high_dim witness exponent; 0 selects 1/n
  std::size_t r_k = 0;         // high_dim; 0 selects k + 1
  double p = 2.0;              // divergent
  long j = 10;                 // divergent

  std::size_t k() const { return head.size(); }
  double witness_alpha() const { return alpha > 0.0 ? alpha : 1.0 / static_cast<double>(n); }

  /// Checks the family's admissibility for every q that will be probed.
  void validate(std::span<const double> probed_q = {}) const {
    switch (kind) {
      case ConstructionKind::low_dim:
        if (!(tail_exponent * q > 1.0)) throw ConfigError("construction.tail_exponent", "s·q must exceed 1");
        break;
      case ConstructionKind::high_dim:
        for (double qq : probed_q)
          if (!(static_cast<double>(n) > qq / (1.0 - qq)))
            throw ConfigError("construction.n", "n must exceed q/(1-q) for q = " + std::to_string(qq));
        if (!(static_cast<double>(n) > q / (1.0 - q))) throw ConfigError("construction.n", "n must exceed q/(1-q)");
        if (r_k != 0 && r_k <= k()) throw ConfigError("construction.r_k", "r_k must exceed the head length");
        break;
      case ConstructionKind::divergent_moment:
        if (!(p > 0.0)) throw ConfigError("construction.p", "p must be positive");
        if (j < 0) throw ConfigError("construction.j", "j must be nonnegative");
        break;
    }
  }
  friend bool operator==(const ConstructionSpec&, const ConstructionSpec&) = default;
};

inline nlohmann::json to_json(const ConstructionSpec& s) {
  return {{"kind", to_string(s.kind)}, {"head", s.head}, {"k", s.k()},   {"N", s.dimension},
          {"tail_exponent", s.tail_exponent}, {"q", s.q}, {"n", s.n}, {"alpha", s.witness_alpha()},
          {"r_k", s.r_k == 0 ? s.k() + 1 : s.r_k}, {"p", s.p}, {"j", s.j}};
}

inline nlohmann::json to_json(const HighDimReport& r) {
  return {{"n", r.n},         {"q", r.q},           {"t_nq", r.t_nq},       {"tail_start", r.tail_start},
          {"M", r.M},         {"levels", r.levels}, {"eps", r.eps},         {"partition_sums", r.partition_sums},
          {"isolated_sums", r.isolated_sums}, {"slope", r.slope}, {"lower_slope", r.lower_slope},
          {"upper_slope", r.upper_slope}, {"isolated_slope", r.isolated_slope}, {"pass", r.passes()}};
}

inline constexpr char kExpansionMagic[8] = {'P', 'P', 'D', 'Y', 'N', 'V', 'E', 'C'};

/// Binary blob: magic, u32 version, u64 dimension, u64 count, then (u64 index, f64 coefficient) pairs.
inline void save_expansion(const std::string& path, const Expansion& x) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  const std::uint32_t version = 1;
  const std::uint64_t dim = x.dimension, count = x.terms.size();
  out.write(kExpansionMagic, sizeof kExpansionMagic);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&dim), sizeof dim);
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (const auto& t : x.terms) {
    const std::uint64_t i = t.index;
    out.write(reinterpret_cast<const char*>(&i), sizeof i);
    out.write(reinterpret_cast<const char*>(&t.coefficient), sizeof t.coefficient);
  }
  if (!out) throw Error("short write to " + path);
}

inline Expansion load_expansion(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t dim = 0, count = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&dim), sizeof dim);
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in || !std::equal(magic, magic + 8, kExpansionMagic) || version != 1) throw Error(path + " is not an expansion file");
  Expansion x{static_cast<std::size_t>(dim), {}};
  x.terms.resize(static_cast<std::size_t>(count));
  for (auto& t : x.terms) {
    std::uint64_t i = 0;
    in.read(reinterpret_cast<char*>(&i), sizeof i);
    in.read(reinterpret_cast<char*>(&t.coefficient), sizeof t.coefficient);
    t.index = static_cast<std::size_t>(i);
    if (t.index >= x.dimension) throw Error(path + " holds an index outside its dimension");
  }
  if (!in) throw Error(path + " is truncated");
  return x;
}

}  // namespace ppdyn
