#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

#include "stmh/error.hpp"
#include "stmh/spectral.hpp"

using namespace stmh;

namespace {

// Reversible chain built from a stationary vector and symmetric edge weights.
DiscreteChain random_reversible(int k, Rng& rng, double density = 1.0) {
  Vector pi(k);
  for (int a = 0; a < k; ++a) pi[a] = 0.1 + rng.uniform();
  pi /= pi.sum();
  Matrix W = Matrix::Zero(k, k);
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b)
      if (b == a + 1 || rng.uniform() < density) W(a, b) = W(b, a) = rng.uniform();
  Matrix P(k, k);
  // P_ab = c W_ab / pi_a keeps pi_a P_ab symmetric; c keeps rows sub-stochastic.
  double c = 1e300;
  for (int a = 0; a < k; ++a) c = std::min(c, pi[a] / W.row(a).sum());
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) P(a, b) = a == b ? 0.0 : 0.9 * c * W(a, b) / pi[a];
  for (int a = 0; a < k; ++a) P(a, a) = 1.0 - P.row(a).sum();
  return {P, pi};
}

// Independent route: smallest generalized eigenvalue of (E + c 11', V + 11')
// over the masked states, with c large enough to push constants out of the way.
double gap_oracle(const DiscreteChain& ch, const Mask& mask) {
  std::vector<int> idx;
  for (int a = 0; a < ch.size(); ++a)
    if (mask[static_cast<std::size_t>(a)]) idx.push_back(a);
  const int k = static_cast<int>(idx.size());
  Matrix E = Matrix::Zero(k, k), V = Matrix::Zero(k, k);
  double mass = 0.0;
  for (int a : idx) mass += ch.pi[a];
  for (int u = 0; u < k; ++u)
    for (int v = 0; v < k; ++v) {
      if (u == v) continue;
      const int a = idx[static_cast<std::size_t>(u)], b = idx[static_cast<std::size_t>(v)];
      const double q = 0.5 * (ch.pi[a] * ch.P(a, b) + ch.pi[b] * ch.P(b, a));
      E(u, v) -= q;
      E(u, u) += q;
      V(u, v) -= ch.pi[a] * ch.pi[b];
      V(u, u) += ch.pi[a] * ch.pi[b];
    }
  (void)mass;
  const Matrix ones = Matrix::Ones(k, k);
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(E + 1e3 * ones, V + ones);
  return es.eigenvalues().minCoeff();
}

}  // namespace

TEST_CASE("two-state chain") {
  Matrix P(2, 2);
  P << 0.7, 0.3, 0.1, 0.9;
  const Vector pi = stationary_vector(P);
  CHECK(pi[0] == doctest::Approx(0.25));
  CHECK(pi[1] == doctest::Approx(0.75));
  CHECK(restricted_spectral_gap(P, pi, Mask{true, true}) == doctest::Approx(0.4));
  CHECK(reversible_spectral_gap(P, pi) == doctest::Approx(0.4));
  CHECK_THROWS_AS(restricted_spectral_gap(P, pi, Mask{true, false}), DegenerateRestrictionError);
}

TEST_CASE("stationary vector of a random reversible chain") {
  Rng rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const auto ch = random_reversible(10, rng);
    CHECK((stationary_vector(ch.P) - ch.pi).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((stationary_vector_eigen(ch.P) - ch.pi).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK_NOTHROW(ch.validate());
  }
}

TEST_CASE("stationary solve rejects reducible chains") {
  const Matrix P = Matrix::Identity(3, 3);
  CHECK_THROWS(stationary_vector(P));
}

TEST_CASE("validate catches broken chains") {
  Matrix P(2, 2);
  P << 0.5, 0.6, 0.5, 0.5;
  CHECK_THROWS_AS((DiscreteChain{P, Vector::Constant(2, 0.5)}.validate()), InvariantError);
}

TEST_CASE("restricted gap matches a generalized eigensolve") {
  Rng rng(7);
  for (int rep = 0; rep < 30; ++rep) {
    const int k = 4 + static_cast<int>(rng.uniform() * 10);
    const auto ch = random_reversible(k, rng, 0.4);
    Mask mask(static_cast<std::size_t>(k));
    int count = 0;
    for (auto&& m : mask) count += (m = rng.uniform() < 0.7);
    if (count < 2) mask.assign(mask.size(), true);
    CHECK(restricted_spectral_gap(ch, mask) == doctest::Approx(gap_oracle(ch, mask)).epsilon(1e-8));
  }
}

TEST_CASE("full-mask gap agrees with the symmetrized spectrum") {
  Rng rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const auto ch = random_reversible(12, rng);
    const Mask all(12, true);
    CHECK(restricted_spectral_gap(ch, all) == doctest::Approx(reversible_spectral_gap(ch.P, ch.pi)).epsilon(1e-9));
  }
}

TEST_CASE("Rayleigh quotients never fall below the gap") {
  Rng rng(9);
  const auto ch = random_reversible(15, rng);
  Mask mask(15, true);
  mask[3] = mask[7] = false;
  const double gap = restricted_spectral_gap(ch, mask);
  for (int t = 0; t < 200; ++t) {
    Vector g(15);
    for (int a = 0; a < 15; ++a) g[a] = rng.normal();
    CHECK(dirichlet_form(ch.P, ch.pi, g, mask) / restricted_variance(ch.pi, g, mask) >= gap * (1.0 - 1e-10));
  }
}

TEST_CASE("Dirichlet form and variance of a tiny example") {
  Matrix P(2, 2);
  P << 0.5, 0.5, 0.25, 0.75;
  Vector pi(2);
  pi << 1.0 / 3.0, 2.0 / 3.0;
  Vector g(2);
  g << 0.0, 2.0;
  const Mask all{true, true};
  // E = pi_0 P_01 (g_1 - g_0)^2, Var = pi_0 pi_1 (g_1 - g_0)^2.
  CHECK(dirichlet_form(P, pi, g, all) == doctest::Approx(1.0 / 3.0 * 0.5 * 4.0));
  CHECK(restricted_variance(pi, g, all) == doctest::Approx(2.0 / 9.0 * 4.0));
  CHECK(restricted_variance(pi, g, Mask{true, false}) == 0.0);
}

TEST_CASE("grid Metropolis kernel is reversible and stochastic") {
  GridSpec spec{4.0, 21};
  const auto grid = make_grid(1, spec);
  REQUIRE(grid.size() == 21);
  Vector log_p(21);
  for (int g = 0; g < 21; ++g) log_p[g] = -0.5 * grid[static_cast<std::size_t>(g)].squaredNorm();
  const double h = 8.0 / 20.0;
  const Matrix K = grid_mh_kernel(grid, 21, h, log_p, 0.5);
  const Vector p = log_p.array().exp();
  for (int a = 0; a < 21; ++a) {
    CHECK(K.row(a).sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(K.row(a).minCoeff() >= 0.0);
    for (int b = 0; b < 21; ++b) CHECK(p[a] * K(a, b) == doctest::Approx(p[b] * K(b, a)).epsilon(1e-12).scale(1e-300));
  }
}

TEST_CASE("two-dimensional grid ordering") {
  const auto grid = make_grid(2, GridSpec{1.0, 3});
  REQUIRE(grid.size() == 9);
  CHECK(grid[1][0] == doctest::Approx(0.0));  // first axis fastest
  CHECK(grid[1][1] == doctest::Approx(-1.0));
  CHECK(grid[3][1] == doctest::Approx(0.0));
}

TEST_CASE("discretized tempering chain is stationary for r_i p_i") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto inst = random_instance(seed);
    const auto st = discretize_st(inst.target, inst.betas, inst.options);
    CHECK_NOTHROW(st.base.validate());
    const int G = st.grid_size();
    for (int i = 0; i < st.levels; ++i)
      for (int g = 0; g < G; ++g) CHECK(st.base.pi[st.state(i, g)] == doctest::Approx(st.r[i] * st.p(i, g)).epsilon(1e-14));
    CHECK((stationary_vector(st.base.P) - st.base.pi).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(st.theta() <= 1.0);
    CHECK(st.phi() >= 0.75 - 1e-12);
  }
}

TEST_CASE("discretization refuses oversized state spaces") {
  const auto t = GaussianMixtureTarget::symmetric_pair(4.0);
  DiscreteSTOptions o;
  o.grid.points = 200;  // 2 levels x 200^2 points
  CHECK_THROWS_AS(discretize_st(t, {0.25, 1.0}, o), CapacityError);
}

TEST_CASE("projected chain satisfies detailed balance") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst = random_instance(seed);
    const auto st = discretize_st(inst.target, inst.betas, inst.options);
    const auto proj = build_projected(st);
    CHECK(proj.Pbar.sum() == doctest::Approx(1.0));
    for (int u = 0; u < proj.Mbar.rows(); ++u) {
      CHECK(proj.Mbar.row(u).sum() == doctest::Approx(1.0).epsilon(1e-12));
      for (int v = 0; v < proj.Mbar.rows(); ++v)
        CHECK(std::abs(proj.Pbar[u] * proj.Mbar(u, v) - proj.Pbar[v] * proj.Mbar(v, u)) <= 1e-12);
    }
  }
}

TEST_CASE("Dirichlet decomposition holds on random instances") {
  Rng rng(3);
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto inst = random_instance(seed);
    const auto st = discretize_st(inst.target, inst.betas, inst.options);
    CHECK(verify_dirichlet_decomposition(st, 25, rng).max_rel_error <= 1e-10);
  }
}

TEST_CASE("path family shape") {
  const int L = 3, n = 2, size = L * n;
  const auto paths = projected_paths(L, n);
  REQUIRE(static_cast<int>(paths.size()) == size * size);
  for (int x = 0; x < size; ++x)
    for (int y = 0; y < size; ++y) {
      const auto& p = paths[static_cast<std::size_t>(x * size + y)].states;
      if (x == y) {
        CHECK(p.empty());
        continue;
      }
      REQUIRE(p.size() >= 2);
      CHECK(p.front() == x);
      CHECK(p.back() == y);
      for (std::size_t k = 1; k < p.size(); ++k) {
        const int li = p[k - 1] / n, ji = p[k - 1] % n, lj = p[k] / n, jj = p[k] % n;
        const bool vertical = ji == jj && std::abs(li - lj) == 1;
        const bool across = li == 0 && lj == 0 && ji != jj;
        CHECK((vertical || across));
      }
    }
}

TEST_CASE("edge congestion of a two-state chain is exact") {
  Matrix P(2, 2);
  P << 0.6, 0.4, 0.2, 0.8;
  const DiscreteChain ch{P, stationary_vector(P)};
  std::vector<CanonicalPath> paths(4);
  paths[1].states = {0, 1};
  paths[2].states = {1, 0};
  CHECK(edge_congestion(ch, paths) == doctest::Approx(ch.pi[1] / P(0, 1)));
  Rng rng(1);
  const auto rep = verify_canonical_path_bound(ch, paths, 20, rng);
  CHECK(rep.holds);
  CHECK(rep.max_ratio == doctest::Approx(1.0));
}

TEST_CASE("paths through missing edges are rejected") {
  Matrix P(3, 3);
  P << 0.5, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.5;
  const DiscreteChain ch{P, stationary_vector(P)};
  std::vector<CanonicalPath> paths(9);
  paths[2].states = {0, 2};
  CHECK_THROWS_AS(edge_congestion(ch, paths), PathError);
}

TEST_CASE("distribution evolution by squaring matches stepping") {
  Rng rng(5);
  const auto ch = random_reversible(8, rng);
  Vector mu = Vector::Zero(8);
  mu[0] = 1.0;
  Vector step = mu;
  for (int k = 0; k < 37; ++k) step = (step.transpose() * ch.P).transpose();
  CHECK((evolve_distribution(ch.P, mu, 37) - step).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK((evolve_distribution(ch.P, mu, 0) - mu).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("random instances follow the design") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto inst = random_instance(seed);
    CHECK(inst.target.dim() == 1);
    CHECK(inst.target.components() == 2);
    CHECK((inst.betas.size() == 2 || inst.betas.size() == 3));
    CHECK(inst.options.grid.points <= 64);
    CHECK(inst.target.w_min() >= 0.2);
    CHECK(inst.betas.back() == 1.0);
    const auto again = random_instance(seed);
    CHECK(again.betas == inst.betas);
    CHECK(again.options.radius == inst.options.radius);
  }
}

TEST_CASE("theorem, mixing and every other check pass on random instances") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto c = check_instance(random_instance(seed));
    CHECK(c.stationarity_ok());
    CHECK(c.balance_ok());
    CHECK(c.dirichlet_ok());
    CHECK(c.theorem.holds);
    CHECK(c.theorem.C1 == 1.0);
    CHECK(c.paths.holds);
    CHECK(c.mixing.hypothesis);
    CHECK(c.mixing_ok());
    CHECK(c.gap_ratio_ok());
    CHECK(c.passed());
  }
}

TEST_CASE("shrinking C3 is detected by the forced-failure hook") {
  int failures = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto inst = random_instance(seed);
    const auto st = discretize_st(inst.target, inst.betas, inst.options);
    TheoremOptions o;
    o.c3_scale = 1e-6;
    failures += verify_decomposition_theorem(st, o).holds ? 0 : 1;
  }
  CHECK(failures > 0);
}

TEST_CASE("verification report columns") {
  std::ostringstream os;
  write_verification_report(os, {VerificationRow{3, 2, 2, 40, TheoremReport{}}});
  const std::string s = os.str();
  CHECK(s.rfind("seed,L,n,m,gap,C1,C2,C3,theta,phi,C_M,holds", 0) == 0);
  CHECK(s.find("\n3,2,2,40,") != std::string::npos);
}
