#include "mechid/errors.hpp"
#include "mechid/noise.hpp"
#include "mechid/stochastic.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace mechid;
using namespace mechid::testing;

namespace {

double sample_variance(const Eigen::VectorXd& x) {
  const double mean = x.mean();
  return (x.array() - mean).square().sum() / static_cast<double>(x.size() - 1);
}

}  // namespace

TEST_CASE("quadrature oracle agrees with the closed-form variance") {
  for (double alpha : {0.5, 1.0, 1.5, 2.0, 3.0}) {
    const NoiseSpec spec{NoiseFamily::generalized_laplace, alpha, 1.3, 1};
    CHECK(gl_moment(2, alpha, 1.3) == doctest::Approx(spec.variance()).epsilon(1e-8));
  }
}

TEST_CASE("alpha = 2, scale = sqrt(2) has unit variance") {
  const NoiseSpec spec{NoiseFamily::generalized_laplace, 2.0, std::sqrt(2.0), 2};
  const double oracle = gl_moment(2, 2.0, std::sqrt(2.0));
  CHECK(oracle == doctest::Approx(1.0).epsilon(1e-9));
  const Matrix s = sample_generalized_laplace(spec, 100000, 5);
  for (int k = 0; k < 2; ++k) CHECK(std::abs(sample_variance(s.col(k)) - oracle) <= 0.03 * oracle);
}

TEST_CASE("alpha = 1 has excess kurtosis near 3") {
  const double m2 = gl_moment(2, 1.0, 1.0);
  const double m4 = gl_moment(4, 1.0, 1.0);
  const double oracle_excess = m4 / (m2 * m2) - 3.0;
  CHECK(oracle_excess == doctest::Approx(3.0).epsilon(1e-8));
  const NoiseSpec spec{NoiseFamily::generalized_laplace, 1.0, 1.0, 1};
  const Matrix s = sample_generalized_laplace(spec, 100000, 9);
  const Eigen::ArrayXd c = s.col(0).array() - s.col(0).mean();
  const double excess = (c.pow(4).mean()) / std::pow(c.square().mean(), 2) - 3.0;
  CHECK(std::abs(excess - oracle_excess) <= 0.2);
}

TEST_CASE("sample median is within three standard errors of zero") {
  for (double alpha : {0.7, 1.0, 2.0}) {
    const NoiseSpec spec{NoiseFamily::generalized_laplace, alpha, 1.0, 1};
    const int n = 100000;
    Matrix s = sample_generalized_laplace(spec, n, 21);
    std::vector<double> v(s.data(), s.data() + n);
    std::nth_element(v.begin(), v.begin() + n / 2, v.end());
    // Standard error of the median: 1 / (2 f(0) sqrt(n)) with f(0) the normalised density at zero.
    const double f0 = 1.0 / (2.0 * std::tgamma(1.0 + 1.0 / alpha));
    CHECK(std::abs(v[static_cast<std::size_t>(n / 2)]) <= 3.0 / (2.0 * f0 * std::sqrt(static_cast<double>(n))));
  }
}

TEST_CASE("generalized-Laplace sampler passes one-sample KS against the quadrature CDF") {
  const int n = 2000;
  const double critical = 1.628 / std::sqrt(static_cast<double>(n));  // alpha = 0.01
  for (double alpha : {0.5, 1.0, 1.5, 3.0}) {
    const NoiseSpec spec{NoiseFamily::generalized_laplace, alpha, 1.0, 1};
    const Matrix s = sample_generalized_laplace(spec, n, 77);
    std::vector<double> v(s.data(), s.data() + n);
    const double D = ks_statistic(v, [&](double x) { return gl_cdf_quadrature(x, alpha, 1.0); });
    CAPTURE(alpha);
    CHECK(D < critical);
  }
}

TEST_CASE("closed-form CDF and quantile agree with quadrature") {
  for (double alpha : {0.5, 1.0, 1.5, 2.0, 3.0}) {
    const NoiseSpec spec{NoiseFamily::generalized_laplace, alpha, 1.0, 1};
    for (double v : {-3.0, -0.7, 0.0, 0.2, 1.9}) {
      CHECK(spec.cdf(v) == doctest::Approx(gl_cdf_quadrature(v, alpha, 1.0)).epsilon(1e-9));
    }
    for (double u : {1e-6, 0.1, 0.5, 0.77, 1 - 1e-6}) {
      CHECK(spec.cdf(spec.inverse_cdf(u)) == doctest::Approx(u).epsilon(1e-9));
    }
  }
}

TEST_CASE("gaussian and uniform families") {
  const NoiseSpec g{NoiseFamily::gaussian, 1.0, 2.0, 1};
  CHECK(g.inverse_cdf(0.5) == doctest::Approx(0.0));
  CHECK(g.cdf(2.0) == doctest::Approx(0.8413447460685429));
  const NoiseSpec u{NoiseFamily::uniform, 1.0, 2.0, 1};
  CHECK(u.inverse_cdf(0.75) == doctest::Approx(1.0));
  CHECK(u.variance() == doctest::Approx(4.0 / 3.0));
}

TEST_CASE("noise parameters are validated") {
  const NoiseSpec bad{NoiseFamily::generalized_laplace, 0.0, 1.0, 1};
  CHECK_THROWS_AS(sample_generalized_laplace(bad, 10, 1), InvalidInput);
  const NoiseSpec negative{NoiseFamily::generalized_laplace, -1.0, 1.0, 1};
  CHECK_THROWS_AS(negative.validate(), InvalidInput);
  const NoiseSpec ok{NoiseFamily::generalized_laplace, 1.0, 1.0, 1};
  CHECK_THROWS_AS(sample_generalized_laplace(ok, 0, 1), InvalidInput);
  CHECK_THROWS_AS(ok.inverse_cdf(1.0), InvalidInput);
}

TEST_CASE("sampler is deterministic in the seed") {
  const NoiseSpec spec{NoiseFamily::generalized_laplace, 1.5, 1.0, 3};
  CHECK(sample_generalized_laplace(spec, 100, 4) == sample_generalized_laplace(spec, 100, 4));
  CHECK(sample_generalized_laplace(spec, 100, 4) != sample_generalized_laplace(spec, 100, 5));
}
