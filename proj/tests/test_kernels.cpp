#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stmh/error.hpp"
#include "stmh/kernels.hpp"
#include "stmh/ladder.hpp"

using namespace stmh;

namespace {

GaussianMixtureTarget pair_1d(double separation) {
  Vector a(1), b(1);
  a << -separation / 2.0;
  b << separation / 2.0;
  return GaussianMixtureTarget({a, b}, Matrix::Identity(1, 1), {0.5, 0.5});
}

}  // namespace

TEST_CASE("metropolis acceptance probability") {
  CHECK(mh_acceptance(0.0, 0.0) == 1.0);
  CHECK(mh_acceptance(-3.0, -1.0) == 1.0);
  CHECK(mh_acceptance(0.0, -std::log(2.0)) == doctest::Approx(0.5));
  CHECK(mh_acceptance(0.0, -INFINITY) == 0.0);
}

TEST_CASE("level moves satisfy detailed balance for the ladder weights") {
  Ladder ladder{{0.1, 0.4, 1.0}, {0.0, -0.7, -1.9}, std::nullopt};
  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    const double f = 20.0 * rng.uniform() - 2.0;
    for (int i = 1; i < 3; ++i) {
      const int j = i + 1;
      // Weight of (i, x) is exp(-beta_i f) / Zhat_i.
      const double wi = -ladder.betas[i - 1] * f - ladder.log_zhat[i - 1];
      const double wj = -ladder.betas[j - 1] * f - ladder.log_zhat[j - 1];
      const double lhs = wi + level_move_log_acceptance(ladder, i, j, f);
      const double rhs = wj + level_move_log_acceptance(ladder, j, i, f);
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
      CHECK(level_move_log_acceptance(ladder, i, j, f) <= 0.0);
    }
  }
}

TEST_CASE("level move acceptance example") {
  Ladder ladder{{0.5, 1.0}, {0.0, 0.0}, std::nullopt};
  // Moving to the colder level at f = 2 costs exp(-(1 - 0.5) * 2).
  CHECK(level_move_log_acceptance(ladder, 1, 2, 2.0) == doctest::Approx(-1.0));
  CHECK(level_move_log_acceptance(ladder, 2, 1, 2.0) == 0.0);
}

TEST_CASE("random walk step leaves a Gaussian invariant") {
  LogDensity log_pi = [](std::span<const double> x) { return -0.5 * x[0] * x[0]; };
  Rng rng(9);
  Vector x = Vector::Zero(1);
  double s1 = 0.0, s2 = 0.0;
  const int n = 400000;
  for (int k = 0; k < n; ++k) {
    x = rwmh_step(log_pi, x, 2.0, rng).x;
    s1 += x[0];
    s2 += x[0] * x[0];
  }
  CHECK(s1 / n == doctest::Approx(0.0).epsilon(0.03).scale(1.0));
  CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("random walk step rejects bad inputs") {
  LogDensity flat = [](std::span<const double>) { return -INFINITY; };
  Rng rng(1);
  CHECK_THROWS_AS(rwmh_step(flat, Vector::Zero(1), 1.0, rng), StateError);
  LogDensity ok = [](std::span<const double>) { return 0.0; };
  CHECK_THROWS_AS(rwmh_step(ok, Vector::Zero(1), 0.0, rng), ArgumentError);
}

TEST_CASE("tempering chain visits levels in proportion to the weights") {
  const auto target = pair_1d(6.0);
  STConfig cfg;
  cfg.ladder = quadrature_ladder(target, {0.1, 0.3, 1.0});
  cfg.lambda = 0.5;
  cfg.eta = 1.0;
  cfg.validate();
  Rng rng(17);
  TemperingChain chain(target, cfg, STState{1, Vector::Zero(1)});
  std::vector<double> visits(3, 0.0);
  double cold_mean = 0.0, cold_sq = 0.0, cold = 0.0;
  const int n = 600000;
  for (int k = 0; k < n; ++k) {
    chain.step(rng);
    visits[static_cast<std::size_t>(chain.level() - 1)] += 1.0;
    if (chain.level() == 3) {
      cold_mean += chain.position()[0];
      cold_sq += chain.position()[0] * chain.position()[0];
      cold += 1.0;
    }
  }
  for (double v : visits) CHECK(v / n == doctest::Approx(1.0 / 3.0).epsilon(0.06));
  // Level L is the target: mean 0, second moment 1 + 3^2.
  CHECK(cold_mean / cold == doctest::Approx(0.0).scale(1.0).epsilon(0.25));
  CHECK(cold_sq / cold == doctest::Approx(10.0).epsilon(0.05));
  CHECK(chain.level_moves_accepted() > 0);
  CHECK(chain.position_moves_accepted() > 0);
}

TEST_CASE("same stream gives the same trajectory") {
  const auto target = GaussianMixtureTarget::symmetric_pair(8.0);
  STConfig cfg;
  cfg.ladder = quadrature_ladder(target, {0.05, 0.25, 1.0});
  Vector x0(2);
  x0 << 10.0, 10.0;
  Rng a = Rng::stream(42, 7), b = Rng::stream(42, 7), c = Rng::stream(42, 8);
  const auto ta = run_chain_traced(target, cfg, x0, 1, 5000, a, 10);
  const auto tb = run_chain_traced(target, cfg, x0, 1, 5000, b, 10);
  const auto tc = run_chain_traced(target, cfg, x0, 1, 5000, c, 10);
  CHECK(ta.size() == 500);
  CHECK(ta == tb);
  CHECK_FALSE(ta == tc);
}

TEST_CASE("traced run records every k-th state") {
  const auto target = pair_1d(2.0);
  STConfig cfg;
  cfg.ladder = Ladder::unit({1.0});
  Rng rng(1);
  CHECK(run_chain_traced(target, cfg, Vector::Zero(1), 1, 0, rng, 1).empty());
  CHECK(run_chain_traced(target, cfg, Vector::Zero(1), 1, 7, rng, 3).size() == 2);
  CHECK_THROWS_AS(run_chain_traced(target, cfg, Vector::Zero(1), 1, 7, rng, 0), ArgumentError);
  CHECK_THROWS_AS(run_chain(target, cfg, Vector::Zero(1), 1, -1, rng), ArgumentError);
}

TEST_CASE("single-level chain is plain random-walk Metropolis") {
  const auto target = pair_1d(0.0);
  STConfig cfg;
  cfg.ladder = Ladder::unit({1.0});
  cfg.lambda = 0.5;
  Rng rng(4);
  TemperingChain chain(target, cfg, STState{1, Vector::Zero(1)});
  for (int k = 0; k < 10000; ++k) {
    chain.step(rng);
    REQUIRE(chain.level() == 1);
  }
  CHECK(chain.level_moves_accepted() == 0);
}

TEST_CASE("lazy chain holds with the requested probability") {
  const auto target = pair_1d(0.0);
  STConfig cfg;
  cfg.ladder = Ladder::unit({1.0});
  cfg.lambda = 0.1;
  cfg.eta = 1e-12;  // proposals are accepted almost surely, so only holds keep x
  cfg.lazy = true;
  cfg.laziness = 0.5;
  Rng rng(8);
  TemperingChain chain(target, cfg, STState{1, Vector::Zero(1)});
  int moved = 0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) moved += chain.step(rng) ? 1 : 0;
  CHECK(static_cast<double>(moved) / n == doctest::Approx(0.5 * 0.9).epsilon(0.02));
}

TEST_CASE("chain rejects inconsistent starts and configs") {
  const auto target = GaussianMixtureTarget::symmetric_pair(4.0);
  STConfig cfg;
  cfg.ladder = Ladder::unit({0.5, 1.0});
  CHECK_THROWS_AS(TemperingChain(target, cfg, STState{1, Vector::Zero(3)}), ArgumentError);
  CHECK_THROWS_AS(TemperingChain(target, cfg, STState{3, Vector::Zero(2)}), ArgumentError);
  cfg.lambda = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg.lambda = 0.5;
  cfg.lazy = true;
  cfg.laziness = 0.7;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
}

TEST_CASE("initial draw has the requested variance") {
  Rng rng(2);
  double s2 = 0.0;
  const int n = 20000;
  for (int k = 0; k < n; ++k) s2 += sample_initial(2, 9.0, rng).squaredNorm();
  CHECK(s2 / n == doctest::Approx(18.0).epsilon(0.03));
  CHECK_THROWS_AS(sample_initial(2, 0.0, rng), ArgumentError);
}
