#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "ppdyn/eigensolver.hpp"
#include "ppdyn/generic_vectors.hpp"
#include "ppdyn/lattice.hpp"

using namespace ppdyn;

namespace {

const EigenSystem& free_2048() {
  static const EigenSystem eig = [] {
    ModelSpec spec;
    spec.size = 2048;
    return eigensolve(build_hamiltonian(spec));
  }();
  return eig;
}

// Spectrum {0, 1e-3} ∪ {l^{-α} : 1 <= l <= depth}; the targets are exact points.
std::vector<double> target_spectrum(double alpha, long depth) {
  std::vector<double> v = {0.0, 1e-3};
  for (long l = 1; l <= depth; ++l) v.push_back(std::pow(static_cast<double>(l), -alpha));
  return v;
}

double harmonic(long a, long b) {  // Σ_{a < n <= b} 1/n
  double s = 0.0;
  for (long n = b; n > a; --n) s += 1.0 / static_cast<double>(n);
  return s;
}

}  // namespace

TEST(Tnq, FormulaValues) {
  EXPECT_DOUBLE_EQ(t_nq(3, 0.5), 0.5);
  EXPECT_NEAR(t_nq(10, 0.5), (1 - 1.1 * 0.5) / (0.5 * 1.1), 1e-15);
  EXPECT_NEAR(t_nq(1000000, 0.5), 1.0, 1e-5);
  EXPECT_LT(t_nq(100, 0.3), t_nq(1000, 0.3));
}

TEST(Tnq, RejectsSmallN) {
  EXPECT_THROW(t_nq(1, 0.5), DomainError);  // needs n > 1
  EXPECT_THROW(t_nq(2, 0.7), DomainError);  // needs n > 2.33
  EXPECT_NO_THROW(t_nq(3, 0.7));
}

TEST(ScaleGrid, HarmonicWitness) {
  std::vector<double> pts;
  for (int l = 1; l <= 60; ++l) pts.push_back(1.0 / l);
  SpacingWitness w{.alpha = 1.0, .c_alpha = 0.5, .c_upper = 2.0, .first_level = 1, .L0 = 1};
  for (std::size_t i = 0; i < pts.size(); ++i) w.indices.push_back(i);
  const auto g = construction_scale_grid(w, pts);
  ASSERT_EQ(g.eps.size(), 59u);
  for (std::size_t i = 0; i < g.eps.size(); ++i) {
    const double m = static_cast<double>(g.levels[i]);
    EXPECT_NEAR(g.eps[i], 1.0 / (2 * m * (m + 1)), 1e-16);
    if (i > 0) EXPECT_LT(g.eps[i], g.eps[i - 1]);
  }
}

TEST(ScaleGrid, TwoLevelWitness) {
  std::vector<double> pts = {0.5, 0.25};
  SpacingWitness w{.alpha = 1.0, .c_alpha = 0.5, .first_level = 2, .L0 = 2, .indices = {0, 1}};
  const auto g = construction_scale_grid(w, pts);
  ASSERT_EQ(g.eps.size(), 1u);
  EXPECT_EQ(g.eps[0], 0.125);
  EXPECT_EQ(g.levels[0], 2);
}

TEST(LowDim, SummabilityEnforced) {
  EXPECT_THROW(low_dim_expansion(100, {}, 2.0, 0.5), SummabilityViolated);
  EXPECT_THROW(low_dim_expansion(100, {}, 3.0, 0.3), SummabilityViolated);
  EXPECT_NO_THROW(low_dim_expansion(100, {}, 4.0, 0.3));
}

TEST(LowDim, UnitNormAndHeadPlacement) {
  std::vector<double> head = {0.3, -0.4};
  const auto x = low_dim_expansion(50, head, 4.0, 0.5);
  EXPECT_NEAR(x.norm(), 1.0, 1e-12);
  EXPECT_EQ(x.terms[0].index, 0u);
  EXPECT_EQ(x.terms[2].index, 2u);
  // b_3 / a_1 survives normalization
  EXPECT_NEAR(x.terms[2].coefficient / x.terms[0].coefficient, std::pow(3.0, -2.0) / 0.3, 1e-14);
  const auto v = build_low_dim_vector(free_2048(), {}, 4.0, 0.5);
  EXPECT_NEAR(v.norm(), 1.0, 1e-12);
}

TEST(LowDim, DimensionNearZeroAndUniformBound) {
  const auto& eig = free_2048();
  const auto x = low_dim_expansion(2048, {}, 4.0, 0.5);
  const auto mu = expansion_measure(value_span(eig), x);
  for (double q : {0.3, 0.5, 0.7}) {
    const auto fit = estimate_dimensions(mu, q, DimensionRoute::ball);
    if (q >= 0.5) EXPECT_LE(fit.global_slope, 0.1) << q;
    EXPECT_GE(fit.lower_slope, -0.1) << q;
    // S climbs from 1 to at most the ceiling: the fitted slope is capped by ln(ceiling) over the window span
    const auto win = default_window(mu);
    EXPECT_LE(fit.global_slope, 1.5 * std::log(atom_power_sum(mu, q)) / ((1 - q) * std::log(win.hi / win.lo))) << q;
    const double ceiling = atom_power_sum(mu, q);
    for (double e : geometric_grid(1e-7, 4.0)) EXPECT_LE(partition_sum(mu, q, e), ceiling * (1 + 1e-12)) << q << " " << e;
  }
}

TEST(LowDim, SiteVectorMatchesExpansionMeasure) {
  const auto& eig = free_2048();
  const auto x = low_dim_expansion(2048, std::vector<double>{1.0}, 4.0, 0.5);
  const auto direct = spectral_measure(eig, to_vector(eig, x));
  const auto sparse = expansion_measure(value_span(eig), x);
  for (double e : {1e-3, 1e-2, 0.1}) EXPECT_NEAR(partition_sum(direct.without_negligible(), 0.5, e), partition_sum(sparse, 0.5, e), 1e-9);
}

TEST(LowDim, EigenvectorHasConstantPartitionSum) {
  const auto& eig = free_2048();
  const Expansion x{2048, {{5, 1.0}}};
  const auto mu = expansion_measure(value_span(eig), x);
  for (double q : {0.3, 0.7})
    for (double e : {1e-6, 1e-2, 1.0, 10.0}) EXPECT_DOUBLE_EQ(partition_sum(mu, q, e), 1.0);
}

TEST(HighDim, CoefficientsFollowWitness) {
  const auto v = target_spectrum(1.0 / 3, 200);
  const auto w = select_weakly_spaced(v, 1.0 / 3, {.lo = 0.0, .hi = 1.0 + 1e-9});
  std::vector<double> head = {0.6, 0.8};
  const auto x = high_dim_expansion(v, w, 3, 0.5, head);
  EXPECT_NEAR(x.norm(), 1.0, 1e-12);
  ASSERT_EQ(x.terms.size(), 2u + static_cast<std::size_t>(w.first_level + static_cast<long>(w.depth()) - 3));
  // level 3 carries 3^{-2/3}, level 4 carries 4^{-2/3} (up to the common normalization)
  EXPECT_NEAR(x.terms[3].coefficient / x.terms[2].coefficient, std::pow(4.0 / 3.0, -2.0 / 3.0), 1e-14);
  EXPECT_EQ(x.terms[2].index, w.indices[static_cast<std::size_t>(3 - w.first_level)]);
  EXPECT_NEAR(x.terms[0].coefficient / x.terms[1].coefficient, 0.75, 1e-14);
}

TEST(HighDim, Preconditions) {
  const auto v = target_spectrum(0.5, 40);
  const auto w = select_weakly_spaced(v, 0.5, {.lo = 0.0, .hi = 1.0 + 1e-9});
  EXPECT_THROW(high_dim_expansion(v, w, 1, 0.5, {}), DomainError);
  EXPECT_THROW(high_dim_expansion(v, w, 3, 0.5, std::vector<double>{1.0, 1.0}, 2), DomainError);
  EXPECT_THROW(high_dim_expansion(v, w, 3, 0.5, {}, 1, 100), WitnessTooShallow);
  // head over indices 0..4 collides with the witness (index 2 holds the level-1 target)
  EXPECT_THROW(high_dim_expansion(v, w, 3, 0.5, std::vector<double>(5, 0.1), 1), DomainError);
}

TEST(HighDim, IsolationAndLowerBound) {
  const double q = 0.5;
  const auto v = target_spectrum(1.0 / 3, 3000);
  const auto w = select_weakly_spaced(v, 1.0 / 3, {.lo = 0.0, .hi = 1.0 + 1e-9});
  const auto x = high_dim_expansion(v, w, 3, q, {});
  const auto r = certify_high_dim(v, w, x, 3, q);
  const auto mu = expansion_measure(v, x);
  EXPECT_EQ(r.tail_start, 1);
  EXPECT_LE(r.M, 3);
  for (std::size_t i = 0; i < r.levels.size(); ++i) {
    const long m = r.levels[i];
    EXPECT_LE(r.isolated_sums[i], r.partition_sums[i] * (1 + 1e-12));
    for (long l = r.tail_start; l <= m; l += std::max(1L, m / 17)) {
      const double at = v[w.indices[static_cast<std::size_t>(l - w.first_level)]];
      const double mass = x.terms[static_cast<std::size_t>(l - r.tail_start)].coefficient;
      EXPECT_NEAR(ball_mass(mu, at, r.eps[i]), mass * mass, 1e-15) << l << " " << m;
    }
  }
  // proof chain: Σ_{l<=m} l^{-(1+1/n)q} grows like m^{1-(1+1/n)q}
  const double e = (1 + 1.0 / 3) * q;
  for (std::size_t i = 1; i < r.levels.size(); ++i) {
    const double m0 = static_cast<double>(r.levels[0]), m = static_cast<double>(r.levels[i]);
    EXPECT_GE(r.isolated_sums[i] / r.isolated_sums[0], 0.5 * std::pow(m / m0, 1 - e));
  }
  EXPECT_GE(r.isolated_slope, r.t_nq);
}

TEST(HighDim, HeadNearWitnessDelaysIsolation) {
  const auto v = target_spectrum(0.5, 400);
  auto w = select_weakly_spaced(v, 0.5, {.lo = 0.0, .hi = 1.0 + 1e-9});
  // the head atom at 1e-3 sits between deep witness points: balls around them reach it late
  std::vector<double> head = {0.5, 0.5};
  const auto x = high_dim_expansion(v, w, 3, 0.5, head);
  const auto r = certify_high_dim(v, w, x, 3, 0.5);
  EXPECT_GE(r.M, 3);
  EXPECT_GE(r.levels.front(), r.M);
}

TEST(HighDim, SlopeOnDeepWitness) {
  const auto v = target_spectrum(1.0 / 3, 100000);
  const auto w = select_weakly_spaced(v, 1.0 / 3, {.lo = 0.0, .hi = 1.0 + 1e-9});
  ASSERT_GE(w.depth(), 300u);
  const auto x = high_dim_expansion(v, w, 3, 0.5, std::vector<double>{0.6, 0.8});
  const auto r = certify_high_dim(v, w, x, 3, 0.5);
  EXPECT_GE(r.slope, r.t_nq - 0.1);
  EXPECT_GE(r.isolated_slope, r.t_nq);
  for (std::size_t i = 1; i + 1 < r.eps.size(); ++i) EXPECT_LE(r.eps[i], r.eps[i - 1] * std::exp2(-0.25) * (1 + 1e-12));
}

TEST(Divergent, HarmonicDifferences) {
  const auto index = IndexMap::centered(4001);
  Eigen::VectorXd head = Eigen::VectorXd::Zero(4001);
  head[2000] = 1.0;
  const long j = 10;
  const auto raw = build_divergent_moment_vector(index, 2.0, j, head, false);
  const double d = partial_moment(index, raw, 2.0, j, 100 * j) - partial_moment(index, raw, 2.0, j, 10 * j);
  EXPECT_NEAR(d, 2 * harmonic(10 * j, 100 * j), 1e-12);
  EXPECT_NEAR(d, 2 * std::log(10.0), 0.01);
  // head part alone: the p-moment over |n| <= j ignores the tail
  EXPECT_EQ(partial_moment(index, raw, 2.0, -1, j), 0.0);
}

TEST(Divergent, DoublingSizeAddsTwoLnTwo) {
  Eigen::VectorXd h1 = Eigen::VectorXd::Zero(2001), h2 = Eigen::VectorXd::Zero(4001);
  const auto i1 = IndexMap::centered(2001), i2 = IndexMap::centered(4001);
  const auto a = build_divergent_moment_vector(i1, 1.0, 5, h1, false);
  const auto b = build_divergent_moment_vector(i2, 1.0, 5, h2, false);
  const double ta = partial_moment(i1, a, 1.0, 5, 1000000), tb = partial_moment(i2, b, 1.0, 5, 1000000);
  EXPECT_NEAR(tb - ta, 2 * harmonic(1000, 2000), 1e-12);
  EXPECT_NEAR(tb - ta, 2 * std::log(2.0), 1e-3);
}

TEST(Divergent, NormalizedFitNearTwo) {
  const auto index = IndexMap::centered(40001);
  Eigen::VectorXd head = Eigen::VectorXd::Zero(40001);
  head[20000] = 1.0;
  const auto v = build_divergent_moment_vector(index, 2.0, 10, head);
  EXPECT_NEAR(v.norm(), 1.0, 1e-12);
  const auto fit = harmonic_fit(index, v, 2.0, 10, 100, 10000);
  EXPECT_GE(fit.c, 1.8);
  EXPECT_LE(fit.c, 2.2);
  double z2 = 1.0;  // squared norm before scaling
  for (int n = 11; n <= 20000; ++n) z2 += 2 * std::pow(n, -3.0);
  EXPECT_NEAR(fit.c, 2.0 / z2, 5e-3);
}

TEST(Divergent, Preconditions) {
  const auto index = IndexMap::centered(101);
  Eigen::VectorXd head = Eigen::VectorXd::Zero(101);
  EXPECT_THROW(build_divergent_moment_vector(index, 0.0, 5, head), DomainError);
  EXPECT_THROW(build_divergent_moment_vector(index, 2.0, 51, head), DomainError);
  EXPECT_THROW(build_divergent_moment_vector(index, 2.0, 5, Eigen::VectorXd::Zero(7)), DomainError);
}

TEST(ConstructionSpec, ValidationAndJson) {
  ConstructionSpec s;
  s.kind = ConstructionKind::high_dim;
  s.n = 2;
  s.head = {0.6, 0.8};
  std::vector<double> qs = {0.3, 0.5, 0.7};
  EXPECT_THROW(s.validate(qs), ConfigError);  // 0.7/0.3 > 2
  s.n = 4;
  EXPECT_NO_THROW(s.validate(qs));
  s.r_k = 2;
  EXPECT_THROW(s.validate(), ConfigError);
  s.r_k = 0;
  const auto j = to_json(s);
  EXPECT_EQ(j.at("r_k").get<std::size_t>(), 3u);
  EXPECT_EQ(j.at("kind").get<std::string>(), "high_dim");
  EXPECT_DOUBLE_EQ(j.at("alpha").get<double>(), 0.25);
  EXPECT_THROW(construction_kind_from_string("mid_dim"), ConfigError);
}

TEST(Expansion, BinaryRoundTrip) {
  const auto x = low_dim_expansion(300, std::vector<double>{0.5}, 4.0, 0.5);
  const auto path = (std::filesystem::temp_directory_path() / "ppdyn_expansion_test.bin").string();
  save_expansion(path, x);
  EXPECT_EQ(load_expansion(path), x);
  std::remove(path.c_str());
  EXPECT_THROW(load_expansion(path), Error);
}
