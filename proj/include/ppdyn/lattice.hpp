#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ppdyn/error.hpp"
#include "ppdyn/rng.hpp"

namespace ppdyn {

enum class ModelFamily { free, anderson, stark, limit_periodic };

inline const char* to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::free: return "free";
    case ModelFamily::anderson: return "anderson";
    case ModelFamily::stark: return "stark";
    case ModelFamily::limit_periodic: return "limit_periodic";
  }
  return "?";
}

inline ModelFamily model_family_from_string(const std::string& s) {
  if (s == "free") return ModelFamily::free;
  if (s == "anderson") return ModelFamily::anderson;
  if (s == "stark") return ModelFamily::stark;
  if (s == "limit_periodic") return ModelFamily::limit_periodic;
  throw ConfigError("model.family", "unknown model family '" + s + "'");
}

/// Default period-doubling coefficients c_m = 4^{-m}, m = 1..12.
inline std::vector<double> default_limit_periodic_coefficients() {
  std::vector<double> c;
  for (int m = 1; m <= 12; ++m) c.push_back(std::pow(4.0, -m));
  return c;
}

/// Declarative lattice Hamiltonian on N sites with Dirichlet ends.
/// Sites are 0-based; site j carries the integer label n = j - origin.
struct ModelSpec {
  ModelFamily family = ModelFamily::free;
  std::size_t size = 256;
  std::optional<long> index_origin;  // unset: centred, (N-1)/2

  double coupling = 1.0;  // anderson: omega_n uniform on [-a, a]
  std::uint64_t seed = 0;

  double field = 0.0;               // stark: F n + v_n
  std::vector<double> background;   // stark: v_n = background[n mod period]; empty means 0

  double hopping = 1.0;                      // limit_periodic: epsilon
  std::vector<double> potential_coefficients;  // limit_periodic: empty means the default

  long origin() const { return index_origin ? *index_origin : static_cast<long>((size - 1) / 2); }
  long label(std::size_t site) const { return static_cast<long>(site) - origin(); }

  void validate() const {
    if (size < 2) throw ConfigError("model.size", "need at least 2 sites");
    const long o = origin();
    if (o < 0 || o >= static_cast<long>(size)) throw ConfigError("model.origin", "origin must be a site of the chain");
    if (family == ModelFamily::anderson && !(coupling > 0.0 && std::isfinite(coupling)))
      throw ConfigError("model.coupling", "anderson coupling must be positive");
    if (family == ModelFamily::limit_periodic && !(hopping > 0.0 && std::isfinite(hopping)))
      throw ConfigError("model.hopping", "limit-periodic hopping must be positive");
    if (!std::isfinite(field)) throw ConfigError("model.field", "field must be finite");
    for (double v : background)
      if (!std::isfinite(v)) throw ConfigError("model.background", "background must be finite");
    for (double v : potential_coefficients)
      if (!std::isfinite(v)) throw ConfigError("model.coefficients", "coefficients must be finite");
  }

  bool operator==(const ModelSpec&) const = default;
};

struct TridiagonalMatrix {
  std::vector<double> diagonal;
  std::vector<double> offdiagonal;  // size N-1

  std::size_t size() const { return diagonal.size(); }

  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const std::size_t n = size();
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      double s = diagonal[i] * x[static_cast<Eigen::Index>(i)];
      if (i > 0) s += offdiagonal[i - 1] * x[static_cast<Eigen::Index>(i - 1)];
      if (i + 1 < n) s += offdiagonal[i] * x[static_cast<Eigen::Index>(i + 1)];
      y[static_cast<Eigen::Index>(i)] = s;
    }
    return y;
  }

  Eigen::MatrixXd dense() const {
    const auto n = static_cast<Eigen::Index>(size());
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) m(i, i) = diagonal[static_cast<std::size_t>(i)];
    for (Eigen::Index i = 0; i + 1 < n; ++i) m(i, i + 1) = m(i + 1, i) = offdiagonal[static_cast<std::size_t>(i)];
    return m;
  }

  /// Gershgorin bound on the spectral radius.
  double norm_bound() const {
    double b = 0.0;
    const std::size_t n = size();
    for (std::size_t i = 0; i < n; ++i) {
      double r = std::abs(diagonal[i]);
      if (i > 0) r += std::abs(offdiagonal[i - 1]);
      if (i + 1 < n) r += std::abs(offdiagonal[i]);
      b = std::max(b, r);
    }
    return b;
  }

  /// Group velocity proxy: twice the largest hopping amplitude.
  double velocity_bound() const {
    double h = 0.0;
    for (double e : offdiagonal) h = std::max(h, std::abs(e));
    return 2.0 * h;
  }

  /// FNV-1a over the raw bytes of both diagonals.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const std::vector<double>& v) {
      for (double x : v) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &x, sizeof(double));
        for (unsigned char b : bytes) h = (h ^ b) * 0x100000001b3ULL;
      }
    };
    const std::uint64_t n = size();
    for (int k = 0; k < 8; ++k) h = (h ^ ((n >> (8 * k)) & 0xff)) * 0x100000001b3ULL;
    mix(diagonal);
    mix(offdiagonal);
    return h;
  }

  bool operator==(const TridiagonalMatrix&) const = default;
};

/// Maps ℤ to ℕ so negative labels get their own counters.
inline std::uint64_t zigzag(long n) {
  return n >= 0 ? 2 * static_cast<std::uint64_t>(n) : 2 * static_cast<std::uint64_t>(-(n + 1)) + 1;
}

inline double anderson_potential(const ModelSpec& spec, long n) {
  return spec.coupling * (2.0 * uniform01(spec.seed, zigzag(n)) - 1.0);
}

inline double limit_periodic_potential(const std::vector<double>& coefficients, long n) {
  double v = 0.0;
  for (std::size_t m = 1; m <= coefficients.size(); ++m) {
    // n mod 2^m keeps the cosine argument exact for large |n|
    const long period = 1L << m;
    const long r = ((n % period) + period) % period;
    v += coefficients[m - 1] * std::cos(2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(period));
  }
  return v;
}

inline TridiagonalMatrix build_hamiltonian(const ModelSpec& spec) {
  spec.validate();
  const std::size_t n = spec.size;
  TridiagonalMatrix t;
  t.diagonal.assign(n, 0.0);
  t.offdiagonal.assign(n - 1, spec.family == ModelFamily::limit_periodic ? spec.hopping : 1.0);
  const std::vector<double> coefficients =
      spec.potential_coefficients.empty() ? default_limit_periodic_coefficients() : spec.potential_coefficients;
  for (std::size_t j = 0; j < n; ++j) {
    const long label = spec.label(j);
    switch (spec.family) {
      case ModelFamily::free: break;
      case ModelFamily::anderson: t.diagonal[j] = anderson_potential(spec, label); break;
      case ModelFamily::stark: {
        double v = 0.0;
        if (!spec.background.empty()) {
          const long p = static_cast<long>(spec.background.size());
          v = spec.background[static_cast<std::size_t>(((label % p) + p) % p)];
        }
        t.diagonal[j] = spec.field * static_cast<double>(label) + v;
        break;
      }
      case ModelFamily::limit_periodic: t.diagonal[j] = limit_periodic_potential(coefficients, label); break;
    }
  }
  return t;
}

/// Site-to-label assignment for position moments. Labels must be distinct.
struct IndexMap {
  std::vector<long> labels;

  static IndexMap centered(std::size_t n, long origin) {
    IndexMap m;
    m.labels.resize(n);
    for (std::size_t j = 0; j < n; ++j) m.labels[j] = static_cast<long>(j) - origin;
    return m;
  }
  static IndexMap centered(std::size_t n) { return centered(n, static_cast<long>((n - 1) / 2)); }
  static IndexMap of(const ModelSpec& spec) { return centered(spec.size, spec.origin()); }

  std::size_t size() const { return labels.size(); }

  /// Site carrying label n, or -1.
  long site_of(long n) const {
    for (std::size_t j = 0; j < labels.size(); ++j)
      if (labels[j] == n) return static_cast<long>(j);
    return -1;
  }

  /// |n|^p per site; zero at n = 0 for every p > 0.
  Eigen::VectorXd weights(double p) const {
    Eigen::VectorXd w(static_cast<Eigen::Index>(labels.size()));
    for (std::size_t j = 0; j < labels.size(); ++j)
      w[static_cast<Eigen::Index>(j)] = labels[j] == 0 ? 0.0 : std::pow(std::abs(static_cast<double>(labels[j])), p);
    return w;
  }
};

}  // namespace ppdyn
