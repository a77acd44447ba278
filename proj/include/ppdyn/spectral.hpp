#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "ppdyn/eigensolver.hpp"
#include "ppdyn/error.hpp"
#include "ppdyn/measure.hpp"

namespace ppdyn {

inline constexpr double kNormTolerance = 1e-12;

inline void check_dimension(const EigenSystem& eig, Eigen::Index n) {
  if (n != eig.values.size()) throw DomainError("vector dimension does not match the eigensystem");
}

/// Eigenbasis coefficients c_j = <e_j, xi>.
inline Eigen::VectorXd coefficients(const EigenSystem& eig, const Eigen::VectorXd& xi) {
  check_dimension(eig, xi.size());
  return eig.vectors.transpose() * xi;
}

inline Eigen::VectorXd from_coefficients(const EigenSystem& eig, const Eigen::VectorXd& c) {
  check_dimension(eig, c.size());
  return eig.vectors * c;
}

/// Atoms (lambda_j, c_j^2). Masses sum to ‖xi‖²; with `require_unit` the vector must be normalized.
inline PointMeasure spectral_measure_from_coefficients(const Eigen::VectorXd& values, const Eigen::VectorXd& c,
                                                       bool require_unit = true) {
  if (require_unit && std::abs(c.norm() - 1.0) > kNormTolerance)
    throw NotNormalized("state norm " + std::to_string(c.norm()) + " differs from 1");
  std::vector<Atom> atoms;
  atoms.reserve(static_cast<std::size_t>(values.size()));
  for (Eigen::Index j = 0; j < values.size(); ++j) atoms.push_back({values[j], c[j] * c[j]});
  return PointMeasure(std::move(atoms));
}

inline PointMeasure spectral_measure(const EigenSystem& eig, const Eigen::VectorXd& xi, bool require_unit = true) {
  check_dimension(eig, xi.size());
  if (require_unit && std::abs(xi.norm() - 1.0) > kNormTolerance)
    throw NotNormalized("state norm " + std::to_string(xi.norm()) + " differs from 1");
  return spectral_measure_from_coefficients(eig.values, coefficients(eig, xi), false);
}

struct Projection {
  Eigen::VectorXd vector;
  std::size_t eigenvalue_count = 0;
  bool empty() const { return eigenvalue_count == 0; }
};

/// Spectral projection of xi onto the closed interval [a, b].
inline Projection spectral_project(const EigenSystem& eig, double a, double b, const Eigen::VectorXd& xi) {
  if (!(a < b)) throw DomainError("projection interval needs a < b");
  Eigen::VectorXd c = coefficients(eig, xi);
  Projection out;
  for (Eigen::Index j = 0; j < c.size(); ++j) {
    if (eig.values[j] >= a && eig.values[j] <= b)
      ++out.eigenvalue_count;
    else
      c[j] = 0.0;
  }
  out.vector = eig.vectors * c;
  return out;
}

/// C∞ function equal to 1 on [plateau_lo, plateau_hi] and 0 outside (support_lo, support_hi).
struct SmoothBump {
  double support_lo, plateau_lo, plateau_hi, support_hi;

  SmoothBump(double a, double a1, double b1, double b) : support_lo(a), plateau_lo(a1), plateau_hi(b1), support_hi(b) {
    if (!(a < a1 && a1 <= b1 && b1 < b)) throw DomainError("smooth bump needs a < a' <= b' < b");
  }

  double operator()(double x) const {
    if (x <= support_lo || x >= support_hi) return 0.0;
    if (x >= plateau_lo && x <= plateau_hi) return 1.0;
    if (x < plateau_lo) return step((x - support_lo) / (plateau_lo - support_lo));
    return step((support_hi - x) / (support_hi - plateau_hi));
  }

 private:
  // smooth transition 0 -> 1 on [0, 1], flat to all orders at both ends
  static double step(double u) {
    const double f0 = std::exp(-1.0 / u), f1 = std::exp(-1.0 / (1.0 - u));
    return f0 / (f0 + f1);
  }
};

/// Indicator of the closed interval [lo, hi].
struct Plateau {
  double lo, hi;
  double operator()(double x) const { return x >= lo && x <= hi ? 1.0 : 0.0; }
};

/// f(T) xi = sum_j f(lambda_j) <e_j, xi> e_j.
template <class F>
Eigen::VectorXd apply_function(const EigenSystem& eig, F&& f, const Eigen::VectorXd& xi) {
  Eigen::VectorXd c = coefficients(eig, xi);
  for (Eigen::Index j = 0; j < c.size(); ++j) c[j] *= f(eig.values[j]);
  return eig.vectors * c;
}

}  // namespace ppdyn
