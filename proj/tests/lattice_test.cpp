#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "ppdyn/eigensolver.hpp"
#include "ppdyn/lattice.hpp"
#include "ppdyn/spectral.hpp"

namespace {

using namespace ppdyn;

ModelSpec make(ModelFamily f, std::size_t n) {
  ModelSpec s;
  s.family = f;
  s.size = n;
  return s;
}

Eigen::VectorXd random_unit(Eigen::Index n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> g;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = g(rng);
  return v / v.norm();
}

TEST(BuildHamiltonian, FreeChain) {
  const auto t = build_hamiltonian(make(ModelFamily::free, 3));
  EXPECT_EQ(t.diagonal, (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(t.offdiagonal, (std::vector<double>{1, 1}));
}

TEST(BuildHamiltonian, StarkRampAroundOrigin) {
  auto s = make(ModelFamily::stark, 3);
  s.field = 0.5;
  s.index_origin = 1;  // middle site
  const auto t = build_hamiltonian(s);
  EXPECT_DOUBLE_EQ(t.diagonal[0], -0.5);
  EXPECT_DOUBLE_EQ(t.diagonal[1], 0.0);
  EXPECT_DOUBLE_EQ(t.diagonal[2], 0.5);
}

TEST(BuildHamiltonian, StarkPeriodicBackground) {
  auto s = make(ModelFamily::stark, 6);
  s.field = 0.0;
  s.background = {1.0, -1.0};
  s.index_origin = 2;
  const auto t = build_hamiltonian(s);
  // labels -2..3: even labels carry 1, odd labels -1
  EXPECT_EQ(t.diagonal, (std::vector<double>{1, -1, 1, -1, 1, -1}));
}

TEST(BuildHamiltonian, AndersonBoundedAndDeterministic) {
  auto s = make(ModelFamily::anderson, 500);
  s.coupling = 1.0;
  s.seed = 42;
  const auto a = build_hamiltonian(s);
  const auto b = build_hamiltonian(s);
  EXPECT_EQ(a, b);
  for (double v : a.diagonal) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  s.seed = 43;
  EXPECT_NE(build_hamiltonian(s).diagonal, a.diagonal);
}

TEST(BuildHamiltonian, AndersonDisorderIsKeyedByLabel) {
  auto s = make(ModelFamily::anderson, 101);
  s.seed = 7;
  const auto small = build_hamiltonian(s);
  s.size = 201;
  const auto big = build_hamiltonian(s);
  // both chains are centred on label 0, so the shared labels see the same potential
  for (std::size_t j = 0; j < 101; ++j) EXPECT_EQ(small.diagonal[j], big.diagonal[j + 50]);
}

TEST(BuildHamiltonian, LimitPeriodicDefaults) {
  auto s = make(ModelFamily::limit_periodic, 16);
  s.hopping = 0.25;
  s.index_origin = 0;
  const auto t = build_hamiltonian(s);
  for (double e : t.offdiagonal) EXPECT_EQ(e, 0.25);
  double v0 = 0.0;
  for (int m = 1; m <= 12; ++m) v0 += std::pow(4.0, -m);
  EXPECT_NEAR(t.diagonal[0], v0, 1e-15);
  double v1 = 0.0;
  for (int m = 1; m <= 12; ++m) v1 += std::pow(4.0, -m) * std::cos(2 * std::numbers::pi / std::exp2(m));
  EXPECT_NEAR(t.diagonal[1], v1, 1e-15);
}

TEST(BuildHamiltonian, Validation) {
  auto s = make(ModelFamily::anderson, 1);
  EXPECT_THROW(build_hamiltonian(s), ConfigError);
  s.size = 10;
  s.coupling = 0.0;
  EXPECT_THROW(build_hamiltonian(s), ConfigError);
  auto lp = make(ModelFamily::limit_periodic, 10);
  lp.hopping = -1;
  EXPECT_THROW(build_hamiltonian(lp), ConfigError);
  auto f = make(ModelFamily::free, 10);
  f.index_origin = 10;
  EXPECT_THROW(build_hamiltonian(f), ConfigError);
}

TEST(IndexMap, CenteredLabels) {
  const auto m = IndexMap::centered(5);
  EXPECT_EQ(m.labels, (std::vector<long>{-2, -1, 0, 1, 2}));
  EXPECT_EQ(m.site_of(0), 2);
  const auto w = m.weights(1.5);
  EXPECT_EQ(w[2], 0.0);
  EXPECT_NEAR(w[0], std::pow(2.0, 1.5), 1e-15);
}

TEST(Eigensolve, FreeTwoSites) {
  const auto es = eigensolve(build_hamiltonian(make(ModelFamily::free, 2)));
  EXPECT_NEAR(es.values[0], -1.0, 1e-15);
  EXPECT_NEAR(es.values[1], 1.0, 1e-15);
}

TEST(Eigensolve, DiagonalInput) {
  TridiagonalMatrix t{{3.0, -2.0}, {0.0}};
  const auto es = eigensolve(t);
  EXPECT_EQ(es.values[0], -2.0);
  EXPECT_EQ(es.values[1], 3.0);
  EXPECT_EQ(es.vectors(1, 0), 1.0);
  EXPECT_EQ(es.vectors(0, 1), 1.0);
  EXPECT_EQ(es.vectors(0, 0), 0.0);
}

class FreeSpectrum : public ::testing::TestWithParam<std::pair<std::size_t, EigenMethod>> {};

TEST_P(FreeSpectrum, MatchesCosineFormula) {
  const auto [n, method] = GetParam();
  const auto es = eigensolve(build_hamiltonian(make(ModelFamily::free, n)), {.method = method});
  for (std::size_t k = 1; k <= n; ++k) {
    const double exact = 2.0 * std::cos(static_cast<double>(k) * std::numbers::pi / static_cast<double>(n + 1));
    EXPECT_NEAR(es.values[static_cast<Eigen::Index>(n - k)], exact, 1e-9);
  }
  EXPECT_LE(orthogonality_error(es), kOrthogonalityTolerance);
}

INSTANTIATE_TEST_SUITE_P(Methods, FreeSpectrum,
                         ::testing::Values(std::pair{std::size_t{7}, EigenMethod::ql},
                                           std::pair{std::size_t{128}, EigenMethod::ql},
                                           std::pair{std::size_t{128}, EigenMethod::mrrr},
                                           std::pair{std::size_t{1000}, EigenMethod::mrrr}));

TEST(Eigensolve, QlAndMrrrAgreeOnAnderson) {
  auto s = make(ModelFamily::anderson, 200);
  s.coupling = 1.5;
  s.seed = 3;
  const auto t = build_hamiltonian(s);
  const auto a = eigensolve(t, {.method = EigenMethod::ql});
  const auto b = eigensolve(t, {.method = EigenMethod::mrrr});
  EXPECT_LE((a.values - b.values).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((a.vectors - b.vectors).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE(scaled_residuals(t, a).maxCoeff(), kResidualTolerance);
  EXPECT_LE(orthogonality_error(a), kOrthogonalityTolerance);
}

TEST(Eigensolve, AndersonSpectrumContained) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto s = make(ModelFamily::anderson, 300);
    s.coupling = 2.0;
    s.seed = seed;
    const auto es = eigensolve(build_hamiltonian(s));
    EXPECT_GE(es.values.minCoeff(), -4.0);
    EXPECT_LE(es.values.maxCoeff(), 4.0);
    for (Eigen::Index j = 1; j < es.values.size(); ++j) EXPECT_LE(es.values[j - 1], es.values[j]);
  }
}

TEST(Eigensolve, SignConvention) {
  auto s = make(ModelFamily::limit_periodic, 64);
  const auto es = eigensolve(build_hamiltonian(s));
  for (Eigen::Index j = 0; j < es.vectors.cols(); ++j) {
    Eigen::Index i = 0;
    es.vectors.col(j).cwiseAbs().maxCoeff(&i);
    EXPECT_GT(es.vectors(i, j), 0.0);
  }
}

TEST(Eigensolve, CacheRoundTrip) {
  auto s = make(ModelFamily::stark, 40);
  s.field = 0.1;
  const auto t = build_hamiltonian(s);
  const auto path = std::filesystem::temp_directory_path() / "ppdyn_cache_test.eig";
  const auto es = eigensolve_cached(t, path);
  EigenSystem back;
  ASSERT_TRUE(load_eigensystem(path, t.hash(), back));
  EXPECT_EQ(back.values, es.values);
  EXPECT_EQ(back.vectors, es.vectors);
  EXPECT_FALSE(load_eigensystem(path, t.hash() ^ 1, back));
  std::filesystem::remove(path);
}

TEST(SpectralMeasure, EigenvectorGivesSingleAtom) {
  const auto es = eigensolve(build_hamiltonian(make(ModelFamily::free, 10)));
  const auto mu = spectral_measure(es, es.vectors.col(4)).without_negligible();
  ASSERT_EQ(mu.size(), 1u);
  EXPECT_NEAR(mu.atoms()[0].position, es.values[4], 1e-15);
  EXPECT_NEAR(mu.atoms()[0].mass, 1.0, 1e-12);
}

TEST(SpectralMeasure, TwoEigenvectorMix) {
  const auto es = eigensolve(build_hamiltonian(make(ModelFamily::free, 10)));
  const Eigen::VectorXd xi = (es.vectors.col(0) + es.vectors.col(1)) / std::sqrt(2.0);
  const auto mu = spectral_measure(es, xi).without_negligible();
  ASSERT_EQ(mu.size(), 2u);
  EXPECT_NEAR(mu.atoms()[0].mass, 0.5, 1e-12);
  EXPECT_NEAR(mu.atoms()[1].mass, 0.5, 1e-12);
}

TEST(SpectralMeasure, FreeTwoSiteDelta) {
  const auto es = eigensolve(build_hamiltonian(make(ModelFamily::free, 2)));
  const Eigen::VectorXd xi = Eigen::VectorXd::Unit(2, 0);
  const auto mu = spectral_measure(es, xi);
  ASSERT_EQ(mu.size(), 2u);
  EXPECT_NEAR(mu.atoms()[0].position, -1.0, 1e-15);
  EXPECT_NEAR(mu.atoms()[0].mass, 0.5, 1e-15);
  EXPECT_NEAR(mu.atoms()[1].position, 1.0, 1e-15);
  EXPECT_NEAR(mu.atoms()[1].mass, 0.5, 1e-15);
}

TEST(SpectralMeasure, MassesAndNormalization) {
  auto s = make(ModelFamily::anderson, 80);
  const auto es = eigensolve(build_hamiltonian(s));
  const Eigen::VectorXd xi = random_unit(80, 1);
  EXPECT_NEAR(spectral_measure(es, xi).total_mass(), 1.0, 1e-12);
  EXPECT_THROW(spectral_measure(es, 2.0 * xi), NotNormalized);
  EXPECT_NEAR(spectral_measure(es, 2.0 * xi, false).total_mass(), 4.0, 1e-12);
  EXPECT_THROW(spectral_measure(es, Eigen::VectorXd::Ones(3)), DomainError);
}

TEST(SpectralProject, WholeAndDisjointIntervals) {
  auto s = make(ModelFamily::anderson, 60);
  const auto es = eigensolve(build_hamiltonian(s));
  const Eigen::VectorXd xi = random_unit(60, 2);
  const auto all = spectral_project(es, -10, 10, xi);
  EXPECT_LE((all.vector - xi).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_EQ(all.eigenvalue_count, 60u);
  const auto none = spectral_project(es, 20, 30, xi);
  EXPECT_TRUE(none.empty());
  EXPECT_EQ(none.vector.norm(), 0.0);
  EXPECT_THROW(spectral_project(es, 1, 1, xi), DomainError);
}

TEST(SpectralProject, FreeTwoSiteUpperHalf) {
  const auto es = eigensolve(build_hamiltonian(make(ModelFamily::free, 2)));
  const auto p = spectral_project(es, 0.0, 2.0, Eigen::VectorXd::Unit(2, 0));
  EXPECT_NEAR(p.vector[0], 0.5, 1e-15);
  EXPECT_NEAR(p.vector[1], 0.5, 1e-15);
  EXPECT_NEAR(p.vector.squaredNorm(), 0.5, 1e-15);
}

TEST(SpectralProject, IdempotentAndSelfAdjoint) {
  auto s = make(ModelFamily::anderson, 100);
  s.seed = 9;
  const auto es = eigensolve(build_hamiltonian(s));
  for (unsigned k = 0; k < 10; ++k) {
    const Eigen::VectorXd x = random_unit(100, 100 + k), y = random_unit(100, 200 + k);
    const auto px = spectral_project(es, -0.5, 1.0, x).vector;
    const auto py = spectral_project(es, -0.5, 1.0, y).vector;
    EXPECT_LE((spectral_project(es, -0.5, 1.0, px).vector - px).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_NEAR(px.dot(y), x.dot(py), 1e-13);
  }
}

TEST(ApplyFunction, ConstantsAndBumps) {
  auto s = make(ModelFamily::anderson, 50);
  s.seed = 5;
  const auto es = eigensolve(build_hamiltonian(s));
  const Eigen::VectorXd xi = random_unit(50, 3);
  EXPECT_LE((apply_function(es, [](double) { return 1.0; }, xi) - xi).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_EQ(apply_function(es, [](double) { return 0.0; }, xi).norm(), 0.0);

  const double l0 = es.values[0], l1 = es.values[1];
  const double gap = l1 - l0;
  const SmoothBump bump(l0 - 1.0, l0, l0, l0 + 0.9 * gap);
  const auto f = apply_function(es, bump, xi);
  const auto p = spectral_project(es, l0 - 0.5 * gap, l0 + 0.5 * gap, xi);
  EXPECT_LE((f - p.vector).cwiseAbs().maxCoeff(), 1e-12);

  const auto plateau = apply_function(es, Plateau{-1.0, 1.0}, xi);
  EXPECT_LE((plateau - spectral_project(es, -1.0, 1.0, xi).vector).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ApplyFunction, BumpIsSmoothAndBounded) {
  const SmoothBump b(0.0, 1.0, 2.0, 3.0);
  EXPECT_EQ(b(0.0), 0.0);
  EXPECT_EQ(b(1.5), 1.0);
  EXPECT_NEAR(b(0.5), 0.5, 1e-15);
  EXPECT_LT(b(0.01), 1e-40);
  for (double x = 0.0; x <= 3.0; x += 0.01) {
    EXPECT_GE(b(x), 0.0);
    EXPECT_LE(b(x), 1.0);
  }
  EXPECT_THROW(SmoothBump(0, 2, 1, 3), DomainError);
}

}  // namespace
