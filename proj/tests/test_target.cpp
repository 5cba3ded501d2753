#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "stmh/error.hpp"
#include "stmh/quadrature.hpp"
#include "stmh/rng.hpp"
#include "stmh/target.hpp"

using namespace stmh;

namespace {

GaussianMixtureTarget random_target(Rng& rng, int d, int n) {
  std::vector<Vector> means;
  for (int j = 0; j < n; ++j) {
    Vector m(d);
    for (int a = 0; a < d; ++a) m[a] = -4.0 + 8.0 * rng.uniform();
    means.push_back(m);
  }
  Matrix A(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) A(a, b) = rng.normal();
  Matrix cov = 0.3 * A * A.transpose() + 0.5 * Matrix::Identity(d, d);
  std::vector<double> w(static_cast<std::size_t>(n));
  double total = 0.0;
  for (auto& v : w) total += (v = 0.2 + rng.uniform());
  for (auto& v : w) v /= total;
  return GaussianMixtureTarget(means, cov, w);
}

}  // namespace

TEST_CASE("potential matches the direct mixture formula") {
  Rng rng(11);
  for (int d = 1; d <= 3; ++d) {
    const auto t = random_target(rng, d, 3);
    const Matrix inv = t.covariance().inverse();
    for (int k = 0; k < 20; ++k) {
      Vector x(d);
      for (int a = 0; a < d; ++a) x[a] = 6.0 * rng.normal();
      double s = 0.0;
      for (int j = 0; j < 3; ++j) {
        const Vector r = x - t.means()[static_cast<std::size_t>(j)];
        s += t.weights()[static_cast<std::size_t>(j)] * std::exp(-0.5 * r.dot(inv * r));
      }
      CHECK(t.potential(x) == doctest::Approx(-std::log(s)).epsilon(1e-12));
    }
  }
}

TEST_CASE("potential stays finite far from every mode") {
  const auto t = GaussianMixtureTarget::symmetric_pair(20.0);
  Vector x(2);
  x << 1e3, -1e3;
  CHECK(std::isfinite(t.potential(x)));
  CHECK(t.potential(x) > 1e5);
}

TEST_CASE("symmetric pair geometry") {
  const auto t = GaussianMixtureTarget::symmetric_pair(16.0);
  REQUIRE(t.components() == 2);
  CHECK(t.means()[0][0] == doctest::Approx(-16.0 / (2.0 * std::numbers::sqrt2)));
  CHECK(t.means()[1][1] == doctest::Approx(16.0 / (2.0 * std::numbers::sqrt2)));
  CHECK((t.means()[1] - t.means()[0]).norm() == doctest::Approx(16.0));
  CHECK(t.spread() == doctest::Approx(8.0));
  CHECK(t.gamma_min() == doctest::Approx(1.0));
  CHECK(t.w_min() == doctest::Approx(0.5));
}

TEST_CASE("coincident modes give a single Gaussian") {
  const auto t = GaussianMixtureTarget::symmetric_pair(0.0);
  Vector x(2);
  x << 0.3, -1.2;
  CHECK(t.potential(x) == doctest::Approx(0.5 * x.squaredNorm()));
}

TEST_CASE("constructor rejects invalid inputs") {
  Vector m(2);
  m << 0, 0;
  CHECK_THROWS_AS(GaussianMixtureTarget({m}, Matrix::Identity(3, 3), {1.0}), ArgumentError);
  Matrix bad(2, 2);
  bad << 1, 2, 2, 1;
  CHECK_THROWS_AS(GaussianMixtureTarget({m}, bad, {1.0}), ArgumentError);
  CHECK_THROWS_AS(GaussianMixtureTarget({m, m}, Matrix::Identity(2, 2), {0.5, 0.6}), ArgumentError);
  CHECK_THROWS_AS(GaussianMixtureTarget({m}, Matrix::Identity(2, 2), {-1.0}), ArgumentError);
  CHECK_THROWS_AS(GaussianMixtureTarget({}, Matrix::Identity(2, 2), {}), ArgumentError);
}

TEST_CASE("log_sum_exp is stable") {
  std::vector<double> v{1000.0, 1000.0};
  CHECK(log_sum_exp(v) == doctest::Approx(1000.0 + std::log(2.0)));
  std::vector<double> w{-1e300, 0.0};
  CHECK(log_sum_exp(w) == doctest::Approx(0.0));
}

TEST_CASE("quadrature integrates a Gaussian") {
  const double v = integrate([](double x) { return std::exp(-0.5 * x * x); }, -12.0, 12.0);
  CHECK(v == doctest::Approx(std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-10));
  const double w = integrate_2d([](double x, double y) { return std::exp(-0.5 * (x * x + 4.0 * y * y)); },
                                -12.0, 12.0, -12.0, 12.0);
  CHECK(w == doctest::Approx(std::numbers::pi).epsilon(1e-9));
}

TEST_CASE("tilde partition function has the closed form") {
  // Mixture of inflated Gaussians: Z = (2 pi / beta)^{d/2} sqrt(det Sigma).
  Rng rng(5);
  for (int d = 1; d <= 2; ++d) {
    const auto t = random_target(rng, d, 2);
    for (double beta : {0.05, 0.3, 1.0}) {
      const double exact = 0.5 * d * std::log(2.0 * std::numbers::pi / beta) + 0.5 * std::log(t.covariance().determinant());
      CHECK(log_partition_tilde(t, beta) == doctest::Approx(exact).epsilon(1e-8));
    }
  }
}

TEST_CASE("log partition at beta = 1 equals the Gaussian normalizer") {
  const auto t = GaussianMixtureTarget::symmetric_pair(6.0);
  CHECK(log_partition(t, 1.0) == doctest::Approx(std::log(2.0 * std::numbers::pi)).epsilon(1e-9));
}

TEST_CASE("tempered and tilde densities are within w_min of each other") {
  Rng rng(2024);
  int checked = 0;
  for (int rep = 0; rep < 6; ++rep) {
    const int d = 1 + rep % 2;
    const auto t = random_target(rng, d, 2 + rep % 2);
    for (double beta : {0.05, 0.4, 1.0}) {
      const double lz = log_partition(t, beta);
      const double lzt = log_partition_tilde(t, beta);
      const double lw = std::log(t.w_min());
      for (int k = 0; k < 1000; ++k) {
        Vector x(d);
        for (int a = 0; a < d; ++a) x[a] = 5.0 * rng.normal();
        const double lp = -beta * t.potential(x) - lz;
        const double lpt = t.tilde_log_density_unnorm(beta, x) - lzt;
        CHECK(lp - (lw + lpt) >= -1e-9);
        CHECK((lpt - lw) - lp >= -1e-9);
        ++checked;
      }
    }
  }
  CHECK(checked == 18000);
}

TEST_CASE("mahalanobis distance to a component") {
  const auto t = GaussianMixtureTarget::symmetric_pair(4.0);
  Vector x = t.means()[1];
  CHECK(t.mahalanobis_sq(1, std::span<const double>(x.data(), 2)) == doctest::Approx(0.0));
  CHECK(t.mahalanobis_sq(0, std::span<const double>(x.data(), 2)) == doctest::Approx(16.0));
}
