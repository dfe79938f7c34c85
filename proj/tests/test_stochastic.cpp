#include "mechid/errors.hpp"
#include "mechid/noise.hpp"
#include "mechid/stochastic.hpp"
#include "support/random.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace mechid;
using namespace mechid::testing;

namespace {

Matrix gaussian_sample(Engine& rng, int n, int d, double shift = 0.0) {
  std::normal_distribution<double> normal;
  Matrix X(n, d);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = normal(rng) + shift;
  return X;
}

// O(n m) two-sample KS distance straight from the definition.
double brute_ks(const std::vector<double>& x, const std::vector<double>& y) {
  double best = 0.0;
  std::vector<double> points = x;
  points.insert(points.end(), y.begin(), y.end());
  for (double t : points) {
    const double fx = static_cast<double>(std::count_if(x.begin(), x.end(), [&](double v) { return v <= t; })) / x.size();
    const double fy = static_cast<double>(std::count_if(y.begin(), y.end(), [&](double v) { return v <= t; })) / y.size();
    best = std::max(best, std::abs(fx - fy));
  }
  return best;
}

StochasticMechanism laplace_walk(int d, double alpha, double scale = 1.0) {
  return additive_noise_mechanism(NoiseSpec{NoiseFamily::generalized_laplace, alpha, scale, d}, "walk");
}

Bijection shear_map() {
  return Bijection{[](const Vector& z) { return vecof({z(0) + 0.1 * z(1) * z(1), z(1)}); },
                   [](const Vector& x) { return vecof({x(0) - 0.1 * x(1) * x(1), x(1)}); }, "shear"};
}

// Passing runs out of `runs` with seeds spec.seed, spec.seed + 1, ...
int pass_count(const AffineMap& a, double alpha, DistributionalTestSpec spec, int runs) {
  const int d = a.dim();
  int passes = 0;
  const auto base = spec.seed;
  for (int r = 0; r < runs; ++r) {
    spec.seed = base + static_cast<std::uint64_t>(r);
    passes += stochastic_equivariance_test(a.as_bijection(), laplace_walk(d, alpha), laplace_walk(d, alpha), spec).pass;
  }
  return passes;
}

}  // namespace

TEST_CASE("kolmogorov_survival matches tabulated critical values") {
  CHECK(kolmogorov_survival(1.22385) == doctest::Approx(0.10).epsilon(1e-4));
  CHECK(kolmogorov_survival(1.35810) == doctest::Approx(0.05).epsilon(1e-4));
  CHECK(kolmogorov_survival(1.62762) == doctest::Approx(0.01).epsilon(1e-3));
  CHECK(kolmogorov_survival(0.0) == 1.0);
  CHECK(kolmogorov_survival(10.0) < 1e-80);
}

TEST_CASE("ks_two_sample statistic agrees with the definition") {
  Engine rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(30 + trial), y(45 - trial);
    std::normal_distribution<double> normal;
    for (auto& v : x) v = normal(rng);
    for (auto& v : y) v = normal(rng) + 0.1 * trial;
    // Ties across samples.
    y[0] = x[0];
    CHECK(ks_two_sample(x, y).statistic == doctest::Approx(brute_ks(x, y)).epsilon(1e-14));
  }
}

TEST_CASE("two_sample_test examples") {
  Engine rng(42);
  SUBCASE("identical arrays") {
    const Matrix X = gaussian_sample(rng, 500, 3);
    CHECK(two_sample_test(X, X, TestMethod::ks_bonferroni, 0).p_value == 1.0);
  }
  SUBCASE("half-sigma shift at n = 1e4") {
    const Matrix X = gaussian_sample(rng, 10000, 1);
    const Matrix Y = gaussian_sample(rng, 10000, 1, 0.5);
    CHECK(two_sample_test(X, Y, TestMethod::ks_bonferroni, 0).p_value < 1e-6);
  }
  SUBCASE("calibration over 200 repetitions") {
    int rejections = 0;
    for (int rep = 0; rep < 200; ++rep) {
      const Matrix X = gaussian_sample(rng, 10000, 1);
      const Matrix Y = gaussian_sample(rng, 10000, 1);
      rejections += two_sample_test(X, Y, TestMethod::ks_bonferroni, 0).p_value < 0.05;
    }
    CHECK(rejections >= 4);   // 0.02
    CHECK(rejections <= 18);  // 0.09
  }
  SUBCASE("energy distance") {
    const Matrix X = gaussian_sample(rng, 150, 2);
    const Matrix Y = gaussian_sample(rng, 150, 2, 1.0);
    CHECK(two_sample_test(X, Y, TestMethod::energy_permutation, 1).p_value <= 2.0 / (kEnergyPermutations + 1));
    const Matrix Z = gaussian_sample(rng, 150, 2);
    CHECK(two_sample_test(X, Z, TestMethod::energy_permutation, 1).p_value > 0.001);
    CHECK(two_sample_test(X, Z, TestMethod::energy_permutation, 7).p_value ==
          two_sample_test(X, Z, TestMethod::energy_permutation, 7).p_value);
  }
  CHECK_THROWS_AS(two_sample_test(Matrix(5, 2), Matrix(5, 3), TestMethod::ks_bonferroni, 0), InvalidInput);
  CHECK_THROWS_AS(two_sample_test(Matrix(0, 2), Matrix(5, 2), TestMethod::ks_bonferroni, 0), InvalidInput);
}

TEST_CASE("energy distance sees dependence that marginal KS misses") {
  Engine rng(43);
  const int n = 300;
  Matrix X = gaussian_sample(rng, n, 2);
  Matrix Y = gaussian_sample(rng, n, 2);
  Y.col(1) = Y.col(0);  // identical marginals, perfectly correlated
  CHECK(two_sample_test(X, Y, TestMethod::ks_bonferroni, 0).p_value > 0.01);
  CHECK(two_sample_test(X, Y, TestMethod::energy_permutation, 0).p_value < 0.01);
}

TEST_CASE("stochastic_equivariance_test examples") {
  const int d = 2;
  DistributionalTestSpec spec;
  spec.anchors = DistributionalTestSpec::default_anchors(d);
  spec.samples_per_anchor = 2000;
  spec.seed = 5;
  const AffineMap rot45(rotation2(std::numbers::pi / 4), Vector::Zero(d));
  SUBCASE("Laplace increments: signed permutation with offset passes") {
    const AffineMap a(mat2(0, -1, 1, 0), vecof({0.3, -1.2}));
    CHECK(pass_count(a, 1, spec, 20) >= 17);
    const auto r = stochastic_equivariance_test(a.as_bijection(), laplace_walk(d, 1), laplace_walk(d, 1), spec);
    CHECK(r.p_values.size() == 5);
    CHECK(r.threshold == doctest::Approx(0.01));
  }
  SUBCASE("Laplace increments: rotation fails") {
    spec.samples_per_anchor = 10000;
    const auto r = stochastic_equivariance_test(rot45.as_bijection(), laplace_walk(d, 1), laplace_walk(d, 1), spec);
    CHECK_FALSE(r.pass);
    CHECK(r.min_p_value < 1e-4);
  }
  SUBCASE("Gaussian increments: rotation passes") { CHECK(pass_count(rot45, 2, spec, 20) >= 17); }
  SUBCASE("same answer for any thread count") {
    spec.samples_per_anchor = 500;
    const auto one = stochastic_equivariance_test(rot45.as_bijection(), laplace_walk(d, 1), laplace_walk(d, 1), spec, 1);
    const auto three = stochastic_equivariance_test(rot45.as_bijection(), laplace_walk(d, 1), laplace_walk(d, 1), spec, 3);
    CHECK(one.p_values == three.p_values);
    CHECK(one.statistics == three.statistics);
  }
  SUBCASE("non-finite samples name the anchor") {
    spec.samples_per_anchor = 100;
    const Bijection bad{[](const Vector& z) { return Vector(z.array().log()); },
                        [](const Vector& z) { return Vector(z.array().exp()); }, "log"};
    try {
      stochastic_equivariance_test(bad, laplace_walk(d, 1), laplace_walk(d, 1), spec);
      FAIL("expected an error");
    } catch (const NonFiniteError& e) {
      CHECK(std::string(e.what()).find("anchor") != std::string::npos);
    }
  }
  SUBCASE("spec validation") {
    spec.samples_per_anchor = 99;
    CHECK_THROWS_AS(spec.validate(), InvalidInput);
    spec.samples_per_anchor = 100;
    spec.significance = 1.0;
    CHECK_THROWS_AS(spec.validate(), InvalidInput);
    spec.significance = 0.05;
    spec.anchors.clear();
    CHECK_THROWS_AS(spec.validate(), InvalidInput);
  }
}

TEST_CASE("identity passes the distributional test at the nominal rate") {
  // Smaller samples than the acceptance run; same Bonferroni floor.
  DistributionalTestSpec spec;
  spec.anchors = DistributionalTestSpec::default_anchors(2);
  spec.samples_per_anchor = 1000;
  int passes = 0;
  for (int rep = 0; rep < 50; ++rep) {
    spec.seed = static_cast<std::uint64_t>(100 + rep);
    passes += stochastic_equivariance_test(AffineMap::identity(2).as_bijection(), laplace_walk(2, 1.5),
                                           laplace_walk(2, 1.5), spec)
                  .pass;
  }
  CHECK(passes >= 47);
}

TEST_CASE("klindt_identifiability_test examples") {
  SUBCASE("swap with a sign flip and an offset") {
    const AffineMap a(mat2(0, 1, 1, 0) * diag({1, -1}), vecof({0.3, 0}));
    const auto v = klindt_identifiability_test(a, 1e-9);
    CHECK(v.orthonormal);
    CHECK(v.signed_permutation);
    CHECK(v.volume_preserving);
    CHECK(v.in_klindt_class);
    REQUIRE(v.pattern);
    CHECK((v.pattern->matrix() - a.A).norm() == 0.0);
  }
  SUBCASE("scaling") {
    const auto v = klindt_identifiability_test(AffineMap(2 * Matrix::Identity(2, 2), Vector::Zero(2)), 1e-9);
    CHECK_FALSE(v.orthonormal);
    CHECK_FALSE(v.in_klindt_class);
    CHECK(v.det_deviation == doctest::Approx(3.0));
  }
  SUBCASE("rotation by 30 degrees") {
    const auto v = klindt_identifiability_test(AffineMap(rotation2(std::numbers::pi / 6), Vector::Zero(2)), 1e-9);
    CHECK(v.orthonormal);
    CHECK_FALSE(v.signed_permutation);
    CHECK_FALSE(v.in_klindt_class);
    CHECK(v.volume_preserving);
  }
}

TEST_CASE("extract_signed_permutation") {
  Engine rng(44);
  for (int d = 1; d <= 6; ++d) {
    const Matrix P = random_signed_permutation(rng, d);
    const auto sp = extract_signed_permutation(P, 1e-9);
    REQUIRE(sp);
    CHECK((sp->matrix() - P).norm() == 0.0);
  }
  CHECK_FALSE(extract_signed_permutation(mat2(1, 0, 1, 0), 1e-9));  // repeated column
  CHECK_FALSE(extract_signed_permutation(mat2(1, 0.01, 0, 1), 1e-9));
}

TEST_CASE("Klindt class is closed under composition") {
  Engine rng(45);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 2 + trial % 4;
    const AffineMap a(random_signed_permutation(rng, d), gaussian_vector(rng, d));
    const AffineMap b(random_signed_permutation(rng, d), gaussian_vector(rng, d));
    CHECK(klindt_identifiability_test(a.compose(b), 1e-9).in_klindt_class);
    CHECK(klindt_identifiability_test(a.inverse(), 1e-9).in_klindt_class);
  }
}

TEST_CASE("finite_difference_jacobian on analytic maps") {
  const auto f = [](const Vector& z) { return vecof({std::sin(z(0)) * z(1), std::exp(z(1)) + z(0) * z(0)}); };
  const Vector z = vecof({0.4, -0.7});
  Matrix expected(2, 2);
  expected << std::cos(0.4) * -0.7, std::sin(0.4), 0.8, std::exp(-0.7);
  CHECK((finite_difference_jacobian(f, z) - expected).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("volume_preservation_test examples") {
  const auto points = GridSpec{64, -2, 2}.generate(2);
  SUBCASE("signed permutation with offset") {
    const AffineMap a(mat2(0, -1, 1, 0), vecof({1, 2}));
    const auto r = volume_preservation_test(a.as_bijection().forward, points, 1e-5, 1e-6);
    CHECK(r.pass);
    CHECK(r.max_deviation <= 1e-8);
  }
  SUBCASE("doubling") {
    for (int d = 1; d <= 4; ++d) {
      const auto pts = GridSpec{16, -1, 1}.generate(d);
      const auto r = volume_preservation_test([](const Vector& z) { return Vector(2 * z); }, pts, 1e-5, 1e-6);
      CHECK_FALSE(r.pass);
      CHECK(r.max_deviation == doctest::Approx(std::pow(2.0, d) - 1).epsilon(1e-6));
    }
  }
  SUBCASE("shear") {
    const auto r = volume_preservation_test(shear_map().forward, points, 1e-5, 1e-6);
    CHECK(r.pass);
  }
  SUBCASE("kinks are ill-conditioned") {
    // The coarse step straddles the kink of |z1|, the fine one does not.
    const std::vector<Vector> at_kink = {vecof({1e-5, 0.5})};
    const auto abs_map = [](const Vector& z) { return Vector(z.cwiseAbs()); };
    CHECK_THROWS_AS(volume_preservation_test(abs_map, at_kink, 1e-5, 1e-6), IllConditionedError);
  }
}

TEST_CASE("jacobian_identifiability_test examples") {
  const auto anchors = DistributionalTestSpec::default_anchors(2, 8);
  SUBCASE("quarter turn with offset") {
    const AffineMap a(mat2(0, -1, 1, 0), vecof({0.5, 0.5}));
    const auto v = jacobian_identifiability_test(a.as_bijection().forward, anchors, 1e-5, 1e-6);
    CHECK(v.in_class);
    CHECK(v.pattern_constant);
    for (const auto& an : v.anchors) {
      REQUIRE(an.pattern);
      CHECK(an.pattern->perm == std::vector<int>{1, 0});
      CHECK(an.pattern->signs == std::vector<int>{-1, 1});
    }
  }
  SUBCASE("cubic perturbation fails away from the axis") {
    const auto cubic = [](const Vector& z) { return vecof({z(0) + 0.1 * z(0) * z(0) * z(0), z(1)}); };
    const std::vector<Vector> off_axis = {vecof({0.5, 0}), vecof({-0.8, 1}), vecof({1.5, -0.3})};
    const auto v = jacobian_identifiability_test(cubic, off_axis, 1e-5, 1e-6);
    CHECK_FALSE(v.in_class);
    for (const auto& an : v.anchors) {
      CHECK_FALSE(an.pass);
      // J11 = 1 + 0.3 z1^2 is the only deviation from the identity.
      CHECK(an.orthonormality_defect >= 0.3 * an.anchor(0) * an.anchor(0));
    }
  }
  SUBCASE("identity") {
    const auto v = jacobian_identifiability_test([](const Vector& z) { return z; }, anchors, 1e-5, 1e-6);
    CHECK(v.in_class);
  }
  SUBCASE("pattern switching between anchors is out of class") {
    // Piecewise map: identity for z1 < 0, swap for z1 > 0 (a discontinuous
    // Jacobian pattern, evaluated away from the seam).
    const auto piecewise = [](const Vector& z) { return z(0) < 0 ? z : vecof({z(1), z(0)}); };
    const std::vector<Vector> pts = {vecof({-1, 0.3}), vecof({1, 0.3})};
    const auto v = jacobian_identifiability_test(piecewise, pts, 1e-5, 1e-6);
    CHECK(v.anchors[0].pass);
    CHECK(v.anchors[1].pass);
    CHECK_FALSE(v.pattern_constant);
    CHECK_FALSE(v.in_class);
  }
}

TEST_CASE("affine maps in the Klindt class pass every level") {
  Engine rng(46);
  for (int trial = 0; trial < 40; ++trial) {
    const int d = 2 + trial % 3;
    const AffineMap a(trial % 2 ? random_signed_permutation(rng, d) : well_conditioned(rng, d), gaussian_vector(rng, d));
    const double tol = 1e-6;
    const auto pts = GridSpec{8, -1, 1}.generate(d);
    const auto klindt = klindt_identifiability_test(a, tol);
    const auto jac = jacobian_identifiability_test(a.as_bijection().forward, pts, 1e-5, tol);
    const auto vol = volume_preservation_test(a.as_bijection().forward, pts, 1e-5, tol);
    CAPTURE(trial);
    if (klindt.in_klindt_class) {
      CHECK(jac.in_class);
      CHECK(vol.pass);
    }
    CHECK(jac.in_class == klindt.in_klindt_class);
  }
}

TEST_CASE("test method names") {
  CHECK(parse_test_method("ks") == TestMethod::ks_bonferroni);
  CHECK(parse_test_method("energy") == TestMethod::energy_permutation);
  CHECK(parse_test_method(to_string(TestMethod::energy_permutation)) == TestMethod::energy_permutation);
  CHECK_THROWS_AS(parse_test_method("chi2"), InvalidInput);
}
