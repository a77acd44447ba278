#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <lapacke.h>

#include "ppdyn/error.hpp"
#include "ppdyn/lattice.hpp"

namespace ppdyn {

inline constexpr double kResidualTolerance = 1e-10;      // times (1 + |lambda|)
inline constexpr double kOrthogonalityTolerance = 1e-10;

/// Eigenvalues ascending; column j of `vectors` belongs to values[j] and its
/// largest-magnitude entry is positive.
struct EigenSystem {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
};

enum class EigenMethod { automatic, ql, mrrr };

struct EigenOptions {
  EigenMethod method = EigenMethod::automatic;
  std::size_t ql_max_size = 256;  // automatic: implicit QL up to here, MRRR above
  int max_sweeps_per_value = 60;
};

namespace detail {

// Implicit QL with Wilkinson-type shifts on a symmetric tridiagonal matrix.
// d: diagonal (overwritten by eigenvalues), e: subdiagonal with e[n-1] = 0.
// z accumulates the rotations; columns stay contiguous in column-major storage.
inline void tql2(std::vector<double>& d, std::vector<double>& e, Eigen::MatrixXd& z, int max_sweeps) {
  const std::size_t n = d.size();
  const Eigen::Index rows = z.rows();
  const double eps = std::numeric_limits<double>::epsilon();
  double f = 0.0, tst1 = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
    std::size_t m = l;
    while (m < n - 1 && std::abs(e[m]) > eps * tst1) ++m;
    if (m > l) {
      int sweeps = 0;
      do {
        if (++sweeps > max_sweeps) throw ConvergenceFailure("implicit QL did not converge", l);
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (std::size_t i = l + 2; i < n; ++i) d[i] -= h;
        f += h;

        p = d[m];
        double c = 1.0, c2 = 1.0, c3 = 1.0, s = 0.0, s2 = 0.0;
        const double el1 = e[l + 1];
        for (std::size_t i = m; i-- > l;) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[i];
          h = c * p;
          r = std::hypot(p, e[i]);
          e[i + 1] = s * r;
          s = e[i] / r;
          c = p / r;
          p = c * d[i] - s * g;
          d[i + 1] = h + s * (c * g + s * d[i]);
          double* zi = z.col(static_cast<Eigen::Index>(i)).data();
          double* zi1 = z.col(static_cast<Eigen::Index>(i + 1)).data();
          for (Eigen::Index k = 0; k < rows; ++k) {
            const double t = zi1[k];
            zi1[k] = s * zi[k] + c * t;
            zi[k] = c * zi[k] - s * t;
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
      } while (std::abs(e[l]) > eps * tst1);
    }
    d[l] += f;
    e[l] = 0.0;
  }
}

inline void normalize_signs(Eigen::MatrixXd& v) {
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    Eigen::Index imax = 0;
    v.col(j).cwiseAbs().maxCoeff(&imax);
    if (v(imax, j) < 0) v.col(j) = -v.col(j);
  }
}

inline EigenSystem solve_ql(const TridiagonalMatrix& t, int max_sweeps) {
  const std::size_t n = t.size();
  std::vector<double> d = t.diagonal;
  std::vector<double> e(n, 0.0);
  std::copy(t.offdiagonal.begin(), t.offdiagonal.end(), e.begin());
  Eigen::MatrixXd z = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  tql2(d, e, z, max_sweeps);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
  EigenSystem es;
  es.values.resize(static_cast<Eigen::Index>(n));
  es.vectors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    es.values[static_cast<Eigen::Index>(j)] = d[order[j]];
    es.vectors.col(static_cast<Eigen::Index>(j)) = z.col(static_cast<Eigen::Index>(order[j]));
  }
  return es;
}

inline EigenSystem solve_mrrr(const TridiagonalMatrix& t) {
  const auto n = static_cast<lapack_int>(t.size());
  std::vector<double> d = t.diagonal;
  std::vector<double> e(static_cast<std::size_t>(n), 0.0);
  std::copy(t.offdiagonal.begin(), t.offdiagonal.end(), e.begin());
  EigenSystem es;
  es.values.resize(n);
  es.vectors.resize(n, n);
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(n));
  lapack_int found = 0;
  const lapack_int info = LAPACKE_dstevr(LAPACK_COL_MAJOR, 'V', 'A', n, d.data(), e.data(), 0.0, 0.0, 0, 0, 0.0,
                                         &found, es.values.data(), es.vectors.data(), n, support.data());
  if (info != 0 || found != n)
    throw ConvergenceFailure("dstevr failed with info " + std::to_string(info), static_cast<std::size_t>(std::max(info, 0)));
  return es;
}

}  // namespace detail

/// ‖T v_j − λ_j v_j‖_2 / (1 + |λ_j|) for every j.
inline Eigen::VectorXd scaled_residuals(const TridiagonalMatrix& t, const EigenSystem& es) {
  const Eigen::Index n = es.values.size();
  Eigen::VectorXd r(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double lam = es.values[j];
    r[j] = (t.apply(es.vectors.col(j)) - lam * es.vectors.col(j)).norm() / (1.0 + std::abs(lam));
  }
  return r;
}

/// ‖VᵀV − I‖_max.
inline double orthogonality_error(const EigenSystem& es) {
  const Eigen::Index n = es.vectors.cols();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
  g.selfadjointView<Eigen::Lower>().rankUpdate(es.vectors.transpose());
  g.diagonal().array() -= 1.0;
  return g.triangularView<Eigen::Lower>().toDenseMatrix().cwiseAbs().maxCoeff();
}

inline EigenSystem eigensolve(const TridiagonalMatrix& t, const EigenOptions& opt = {}) {
  if (t.size() == 0 || t.offdiagonal.size() + 1 != t.size()) throw DomainError("malformed tridiagonal matrix");
  EigenMethod method = opt.method;
  if (method == EigenMethod::automatic) method = t.size() <= opt.ql_max_size ? EigenMethod::ql : EigenMethod::mrrr;
  EigenSystem es = method == EigenMethod::ql ? detail::solve_ql(t, opt.max_sweeps_per_value) : detail::solve_mrrr(t);
  detail::normalize_signs(es.vectors);
  const Eigen::VectorXd r = scaled_residuals(t, es);
  for (Eigen::Index j = 0; j < r.size(); ++j)
    if (!(r[j] <= kResidualTolerance))
      throw ConvergenceFailure("eigenpair residual " + std::to_string(r[j]) + " above tolerance",
                               static_cast<std::size_t>(j));
  return es;
}

// Binary cache: "PPDYNEIG", u32 version, u64 N, u64 matrix hash, N eigenvalues,
// N*N column-major vector entries; all little-endian doubles/integers.
inline constexpr std::uint32_t kEigenCacheVersion = 1;

inline void save_eigensystem(const std::filesystem::path& path, const EigenSystem& es, std::uint64_t matrix_hash) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write eigensystem cache " + path.string());
  const std::uint64_t n = es.size();
  os.write("PPDYNEIG", 8);
  os.write(reinterpret_cast<const char*>(&kEigenCacheVersion), sizeof kEigenCacheVersion);
  os.write(reinterpret_cast<const char*>(&n), sizeof n);
  os.write(reinterpret_cast<const char*>(&matrix_hash), sizeof matrix_hash);
  os.write(reinterpret_cast<const char*>(es.values.data()), static_cast<std::streamsize>(n * sizeof(double)));
  os.write(reinterpret_cast<const char*>(es.vectors.data()), static_cast<std::streamsize>(n * n * sizeof(double)));
  if (!os) throw Error("short write to eigensystem cache " + path.string());
}

/// Returns false if the file is missing, malformed, or was built from a different matrix.
inline bool load_eigensystem(const std::filesystem::path& path, std::uint64_t matrix_hash, EigenSystem& out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return false;
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t n = 0, hash = 0;
  is.read(magic, 8);
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  is.read(reinterpret_cast<char*>(&n), sizeof n);
  is.read(reinterpret_cast<char*>(&hash), sizeof hash);
  if (!is || std::memcmp(magic, "PPDYNEIG", 8) != 0 || version != kEigenCacheVersion || hash != matrix_hash) return false;
  if (n == 0 || n > (1u << 20)) return false;
  EigenSystem es;
  es.values.resize(static_cast<Eigen::Index>(n));
  es.vectors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  is.read(reinterpret_cast<char*>(es.values.data()), static_cast<std::streamsize>(n * sizeof(double)));
  is.read(reinterpret_cast<char*>(es.vectors.data()), static_cast<std::streamsize>(n * n * sizeof(double)));
  if (!is) return false;
  out = std::move(es);
  return true;
}

/// Solves `t`, reusing a cache file when its hash matches.
inline EigenSystem eigensolve_cached(const TridiagonalMatrix& t, const std::filesystem::path& cache,
                                     const EigenOptions& opt = {}) {
  EigenSystem es;
  if (load_eigensystem(cache, t.hash(), es) && es.size() == t.size()) return es;
  es = eigensolve(t, opt);
  save_eigensystem(cache, es, t.hash());
  return es;
}

}  // namespace ppdyn
