#include "stmh/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "stmh/error.hpp"

namespace stmh {

namespace {

double log_sum_exp_vec(const Vector& v) {
  return log_sum_exp(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

std::vector<int> mask_indices(const Mask& mask) {
  std::vector<int> idx;
  for (std::size_t a = 0; a < mask.size(); ++a)
    if (mask[a]) idx.push_back(static_cast<int>(a));
  return idx;
}

}  // namespace

void DiscreteChain::validate() const {
  const auto k = P.rows();
  if (P.cols() != k || pi.size() != k) throw ArgumentError("chain matrix and vector sizes differ");
  if ((P.array() < 0.0).any()) throw InvariantError("transition matrix has negative entries");
  for (Eigen::Index a = 0; a < k; ++a)
    if (std::abs(P.row(a).sum() - 1.0) > 1e-12)
      throw InvariantError("row " + std::to_string(a) + " does not sum to 1");
  const Vector moved = P.transpose() * pi;
  if ((moved - pi).cwiseAbs().maxCoeff() > 1e-10) throw InvariantError("pi is not stationary");
}

Mask DiscreteSTChain::state_mask() const {
  Mask m(static_cast<std::size_t>(levels * grid_size()));
  for (int i = 0; i < levels; ++i)
    for (int g = 0; g < grid_size(); ++g)
      m[static_cast<std::size_t>(state(i, g))] = grid_mask[static_cast<std::size_t>(g)];
  return m;
}

Matrix DiscreteSTChain::component_mass() const {
  Matrix mass = Matrix::Zero(levels, components);
  for (int i = 0; i < levels; ++i)
    for (int j = 0; j < components; ++j)
      for (int g = 0; g < grid_size(); ++g)
        if (grid_mask[static_cast<std::size_t>(g)]) mass(i, j) += pc[static_cast<std::size_t>(i)](j, g);
  return mass;
}

double DiscreteSTChain::theta() const {
  double t = 0.0;
  for (int i = 0; i < levels; ++i)
    for (int g = 0; g < grid_size(); ++g)
      if (grid_mask[static_cast<std::size_t>(g)]) t += r[static_cast<std::size_t>(i)] * p(i, g);
  return t;
}

double DiscreteSTChain::phi() const { return component_mass().minCoeff(); }

std::vector<Vector> make_grid(int dim, const GridSpec& grid) {
  if (dim < 1 || dim > 2) throw ArgumentError("grid chains support d in {1, 2}");
  if (grid.points < 2) throw ArgumentError("grid needs at least 2 points per axis");
  if (!(grid.extent > 0.0)) throw ArgumentError("grid extent must be positive");
  const int m = grid.points;
  const double h = 2.0 * grid.extent / (m - 1);
  std::vector<Vector> pts;
  const int total = dim == 1 ? m : m * m;
  pts.reserve(static_cast<std::size_t>(total));
  for (int g = 0; g < total; ++g) {
    Vector x(dim);
    x[0] = -grid.extent + h * (g % m);
    if (dim == 2) x[1] = -grid.extent + h * (g / m);
    pts.push_back(x);
  }
  return pts;
}

Matrix grid_mh_kernel(const std::vector<Vector>& grid, int points_per_axis, double spacing,
                      const Vector& log_p, double eta) {
  const int G = static_cast<int>(grid.size());
  const int m = points_per_axis;
  const int dim = G == m ? 1 : 2;
  const double reach = 6.0 * std::sqrt(eta);
  const int max_off = std::min(m - 1, static_cast<int>(std::floor(reach / spacing)));
  const int span = 2 * max_off + 1;

  // Truncated Gaussian weights on lattice offsets, normalized over the ball.
  std::vector<double> kern(static_cast<std::size_t>(dim == 1 ? span : span * span), 0.0);
  double total = 0.0;
  for (int b = (dim == 1 ? 0 : -max_off); b <= (dim == 1 ? 0 : max_off); ++b)
    for (int a = -max_off; a <= max_off; ++a) {
      const double dist2 = spacing * spacing * (a * a + b * b);
      if (std::sqrt(dist2) > reach + 1e-12) continue;
      const double k = std::exp(-dist2 / (2.0 * eta));
      kern[static_cast<std::size_t>((a + max_off) + (dim == 1 ? 0 : (b + max_off) * span))] = k;
      total += k;
    }
  for (auto& k : kern) k /= total;

  Matrix M = Matrix::Zero(G, G);
  for (int g = 0; g < G; ++g) {
    const int ga = g % m;
    const int gb = dim == 1 ? 0 : g / m;
    double off = 0.0;
    for (int b = (dim == 1 ? 0 : -max_off); b <= (dim == 1 ? 0 : max_off); ++b) {
      const int tb = gb + b;
      if (tb < 0 || tb >= (dim == 1 ? 1 : m)) continue;
      for (int a = -max_off; a <= max_off; ++a) {
        if (a == 0 && b == 0) continue;
        const int ta = ga + a;
        if (ta < 0 || ta >= m) continue;
        const double q =
            kern[static_cast<std::size_t>((a + max_off) + (dim == 1 ? 0 : (b + max_off) * span))];
        if (q == 0.0) continue;
        const int t = ta + tb * m;
        const double diff = log_p[t] - log_p[g];
        const double acc = diff >= 0.0 ? 1.0 : std::exp(diff);
        M(g, t) = q * acc;
        off += M(g, t);
      }
    }
    M(g, g) = 1.0 - off;
  }
  return M;
}

DiscreteSTChain discretize_st(const GaussianMixtureTarget& target, const std::vector<double>& betas,
                              const DiscreteSTOptions& options) {
  const int d = target.dim();
  if (d < 1 || d > 2) throw ArgumentError("grid chains support d in {1, 2}");
  const int L = static_cast<int>(betas.size());
  if (L < 1) throw ArgumentError("need at least one level");
  for (int i = 0; i < L; ++i) {
    if (!(betas[static_cast<std::size_t>(i)] > 0.0 && betas[static_cast<std::size_t>(i)] <= 1.0))
      throw ArgumentError("inverse temperatures must lie in (0, 1]");
    if (i > 0 && !(betas[static_cast<std::size_t>(i)] > betas[static_cast<std::size_t>(i - 1)]))
      throw ArgumentError("inverse temperatures must be strictly increasing");
  }
  if (!(options.lambda > 0.0 && options.lambda < 1.0)) throw ArgumentError("lambda must lie in (0, 1)");
  if (!(options.eta > 0.0)) throw ArgumentError("eta must be positive");
  if (!(options.laziness >= 0.0 && options.laziness <= 0.5))
    throw ArgumentError("laziness must lie in [0, 1/2]");
  const int m = options.grid.points;
  const long long states = static_cast<long long>(L) * (d == 1 ? m : static_cast<long long>(m) * m);
  if (states > kMaxDiscreteStates)
    throw CapacityError("grid chain would have " + std::to_string(states) + " states; limit is " +
                        std::to_string(kMaxDiscreteStates));

  DiscreteSTChain st;
  st.levels = L;
  st.dim = d;
  st.points_per_axis = m;
  st.kind = options.kind;
  st.grid = make_grid(d, options.grid);
  st.betas = betas;
  st.lambda = options.lambda;
  st.laziness = options.laziness;
  st.lambda_eff = (1.0 - options.laziness) * options.lambda;
  st.local_scale = (1.0 - options.laziness) * (1.0 - options.lambda) / (1.0 - st.lambda_eff);
  st.eta = options.eta;
  const int G = st.grid_size();

  if (options.level_weights.empty()) {
    st.r.assign(static_cast<std::size_t>(L), 1.0 / L);
  } else {
    if (static_cast<int>(options.level_weights.size()) != L)
      throw ArgumentError("level weights must have one entry per level");
    double total = 0.0;
    for (double v : options.level_weights) {
      if (!(v > 0.0)) throw ArgumentError("level weights must be positive");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ArgumentError("level weights must sum to 1");
    st.r = options.level_weights;
  }

  st.radius = options.radius > 0.0 ? options.radius : std::numeric_limits<double>::infinity();
  st.grid_mask.resize(static_cast<std::size_t>(G));
  for (int g = 0; g < G; ++g)
    st.grid_mask[static_cast<std::size_t>(g)] = st.grid[static_cast<std::size_t>(g)].norm() <= st.radius;

  const double spacing = 2.0 * options.grid.extent / (m - 1);
  st.p.resize(L, G);
  st.K.resize(static_cast<std::size_t>(L));
  const double hold = options.laziness;
  auto effective = [&](Matrix M) {
    M *= (1.0 - hold) * (1.0 - options.lambda);
    M.diagonal().array() += hold;
    return Matrix(M / (1.0 - st.lambda_eff));
  };

  if (options.kind == DensityKind::tilde) {
    const int n = target.components();
    st.components = n;
    st.pc.resize(static_cast<std::size_t>(L));
    st.Kc.resize(static_cast<std::size_t>(L));
    st.w.resize(L, n);
    Matrix q(n, G);
    for (int j = 0; j < n; ++j)
      for (int g = 0; g < G; ++g) {
        const Vector& x = st.grid[static_cast<std::size_t>(g)];
        q(j, g) = target.mahalanobis_sq(j, std::span<const double>(x.data(), static_cast<std::size_t>(d)));
      }
    for (int i = 0; i < L; ++i) {
      const double beta = betas[static_cast<std::size_t>(i)];
      Matrix comp(n, G);
      Vector log_zc(n);
      for (int j = 0; j < n; ++j) {
        const Vector log_u = (-0.5 * beta) * q.row(j).transpose();
        log_zc[j] = log_sum_exp_vec(log_u);
        comp.row(j) = (log_u.array() - log_zc[j]).exp().matrix().transpose();
      }
      Vector log_wz(n);
      for (int j = 0; j < n; ++j)
        log_wz[j] = std::log(target.weights()[static_cast<std::size_t>(j)]) + log_zc[j];
      const double norm = log_sum_exp_vec(log_wz);
      for (int j = 0; j < n; ++j) st.w(i, j) = std::exp(log_wz[j] - norm);
      // p_i is assembled from its components so the mixture identity is exact.
      st.p.row(i) = st.w.row(i) * comp;
      st.pc[static_cast<std::size_t>(i)] = comp;

      Matrix log_comp(n, G);
      for (int j = 0; j < n; ++j)
        log_comp.row(j) = ((-0.5 * beta) * q.row(j).array() - log_zc[j]).matrix();
      Vector log_pi(G);
      for (int g = 0; g < G; ++g) {
        Vector terms(n);
        for (int j = 0; j < n; ++j) terms[j] = std::log(st.w(i, j)) + log_comp(j, g);
        log_pi[g] = log_sum_exp_vec(terms);
      }
      st.K[static_cast<std::size_t>(i)] =
          effective(grid_mh_kernel(st.grid, m, spacing, log_pi, options.eta));
      st.Kc[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(n));
      for (int j = 0; j < n; ++j) {
        const Vector log_c = log_comp.row(j).transpose();
        st.Kc[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
            effective(grid_mh_kernel(st.grid, m, spacing, log_c, options.eta));
      }
    }
  } else {
    for (int i = 0; i < L; ++i) {
      const double beta = betas[static_cast<std::size_t>(i)];
      Vector log_u(G);
      for (int g = 0; g < G; ++g) log_u[g] = -beta * target.potential(st.grid[static_cast<std::size_t>(g)]);
      const double z = log_sum_exp_vec(log_u);
      const Vector log_pi = (log_u.array() - z).matrix();
      st.p.row(i) = log_pi.array().exp().matrix().transpose();
      st.K[static_cast<std::size_t>(i)] =
          effective(grid_mh_kernel(st.grid, m, spacing, log_pi, options.eta));
    }
  }

  const int S = L * G;
  Matrix P = Matrix::Zero(S, S);
  Vector pi(S);
  for (int i = 0; i < L; ++i) {
    const Matrix& Ki = st.K[static_cast<std::size_t>(i)];
    for (int g = 0; g < G; ++g) {
      const int s = st.state(i, g);
      pi[s] = st.r[static_cast<std::size_t>(i)] * st.p(i, g);
      double off = 0.0;
      for (int t = 0; t < G; ++t) {
        if (t == g || Ki(g, t) == 0.0) continue;
        const double v = (1.0 - st.lambda_eff) * Ki(g, t);
        P(s, st.state(i, t)) = v;
        off += v;
      }
      for (int ip : {i - 1, i + 1}) {
        if (ip < 0 || ip >= L) continue;
        const double ratio = (st.r[static_cast<std::size_t>(ip)] * st.p(ip, g)) /
                             (st.r[static_cast<std::size_t>(i)] * st.p(i, g));
        const double v = 0.5 * st.lambda_eff * std::min(1.0, ratio);
        P(s, st.state(ip, g)) = v;
        off += v;
      }
      P(s, s) = 1.0 - off;
    }
  }
  st.base = DiscreteChain{std::move(P), std::move(pi)};
  return st;
}

Vector stationary_vector(const Matrix& P) {
  const auto k = P.rows();
  if (P.cols() != k || k < 1) throw ArgumentError("transition matrix must be square");
  if (k == 1) return Vector::Ones(1);
  // Solve (P' - I) pi = 0 with the last equation replaced by sum(pi) = 1.
  Matrix A = P.transpose() - Matrix::Identity(k, k);
  A.row(k - 1).setOnes();
  Vector b = Vector::Zero(k);
  b[k - 1] = 1.0;
  Eigen::PartialPivLU<Matrix> lu(A);
  // A singular system means more than one closed class.
  const Vector pivots = lu.matrixLU().diagonal().cwiseAbs();
  if (!(pivots.minCoeff() > 1e-13 * pivots.maxCoeff()) || !(lu.rcond() > 1e-13)) throw NumericError("stationary solve is singular; chain is reducible");
  Vector pi = lu.solve(b);
  pi += lu.solve(b - A * pi);
  if (!pi.allFinite()) throw NumericError("stationary solve failed; chain may be reducible");
  if (pi.minCoeff() < -1e-12) throw NumericError("stationary solve produced negative mass");
  pi = pi.cwiseMax(0.0);
  pi /= pi.sum();
  const double residual = (P.transpose() * pi - pi).cwiseAbs().maxCoeff();
  if (!(residual <= 1e-12))
    throw NumericError("stationary vector residual " + std::to_string(residual) + " exceeds 1e-12");
  return pi;
}

double restricted_spectral_gap(const Matrix& P, const Vector& pi, const Mask& mask) {
  const auto total = P.rows();
  if (P.cols() != total || pi.size() != total || static_cast<Eigen::Index>(mask.size()) != total)
    throw ArgumentError("chain, stationary vector and mask sizes differ");
  // States without stationary mass enter neither form for a reversible chain.
  std::vector<int> idx;
  for (int a : mask_indices(mask))
    if (pi[a] > 0.0) idx.push_back(a);
  const int k = static_cast<int>(idx.size());
  if (k < 2) throw DegenerateRestrictionError("restriction set needs at least 2 charged states");

  Vector p(k);
  for (int a = 0; a < k; ++a) p[a] = pi[idx[static_cast<std::size_t>(a)]];
  const double mass = p.sum();
  const Vector root = p.cwiseSqrt();

  // In h = sqrt(p) g the variance form is mass |h|^2 - (root . h)^2, which is
  // mass |h|^2 on the complement of root; constants map to multiples of root.
  Matrix A = Matrix::Zero(k, k);
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b) {
      const int u = idx[static_cast<std::size_t>(a)];
      const int v = idx[static_cast<std::size_t>(b)];
      const double pab = P(u, v), pba = P(v, u);
      if (pab == 0.0 && pba == 0.0) continue;
      const double ratio = root[b] / root[a];
      const double sym = 0.5 * (pab / ratio + pba * ratio);  // S_ab / sqrt(p_a p_b)
      A(a, b) = A(b, a) = -sym;
      A(a, a) += 0.5 * (pab + pba * ratio * ratio);          // S_ab / p_a
      A(b, b) += 0.5 * (pba + pab / (ratio * ratio));        // S_ab / p_b
    }

  const Matrix H = Eigen::HouseholderQR<Matrix>(Matrix(root)).householderQ();
  const Matrix Q = H.rightCols(k - 1);
  Matrix C = Q.transpose() * A * Q;
  C = 0.5 * (C + C.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> ec(C, Eigen::EigenvaluesOnly);
  if (ec.info() != Eigen::Success) throw NumericError("Dirichlet form eigensolve failed");
  return ec.eigenvalues().minCoeff() / mass;
}

double restricted_spectral_gap(const DiscreteChain& chain, const Mask& mask) {
  return restricted_spectral_gap(chain.P, chain.pi, mask);
}

double reversible_spectral_gap(const Matrix& P, const Vector& pi) {
  const auto k = P.rows();
  if (k < 2) throw ArgumentError("need at least 2 states");
  if (!(pi.minCoeff() > 0.0)) throw ArgumentError("stationary vector must be positive");
  const Vector s = pi.cwiseSqrt();
  Matrix S = s.asDiagonal() * P * s.cwiseInverse().asDiagonal();
  S = 0.5 * (S + S.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericError("symmetric eigensolve failed");
  return 1.0 - es.eigenvalues()[k - 2];
}

double dirichlet_form(const Matrix& P, const Vector& pi, const Vector& g, const Mask& mask) {
  const std::vector<int> idx = mask_indices(mask);
  double e = 0.0;
  for (int u : idx)
    for (int v : idx) {
      if (u == v || P(u, v) == 0.0) continue;
      const double diff = g[v] - g[u];
      e += diff * diff * pi[u] * P(u, v);
    }
  return 0.5 * e;
}

double restricted_variance(const Vector& pi, const Vector& g, const Mask& mask) {
  // 1/2 sum (g_b - g_a)^2 pi_a pi_b = m sum pi g^2 - (sum pi g)^2 over the mask.
  double m = 0.0, s1 = 0.0, s2 = 0.0;
  for (std::size_t a = 0; a < mask.size(); ++a) {
    if (!mask[a]) continue;
    const auto i = static_cast<Eigen::Index>(a);
    m += pi[i];
    s1 += pi[i] * g[i];
    s2 += pi[i] * g[i] * g[i];
  }
  return std::max(0.0, m * s2 - s1 * s1);
}

ProjectedChain build_projected(const DiscreteSTChain& st) {
  if (st.kind != DensityKind::tilde)
    throw ArgumentError("projected chains need the component decomposition of the tilde chain");
  const int L = st.levels;
  const int n = st.components;
  const int G = st.grid_size();
  const Matrix mass = st.component_mass();
  if (!(mass.minCoeff() > 0.0))
    throw DegenerateRestrictionError("a component has zero mass on the restriction set");

  ProjectedChain pc;
  pc.levels = L;
  pc.components = n;
  const int S = L * n;
  pc.Mbar = Matrix::Zero(S, S);
  const double lam = st.lambda_eff;
  for (int i = 0; i < L; ++i) {
    const Matrix& comp = st.pc[static_cast<std::size_t>(i)];
    for (int j = 0; j < n; ++j) {
      const int u = i * n + j;
      double off = 0.0;
      for (int g = 0; g < G; ++g) {
        if (!st.grid_mask[static_cast<std::size_t>(g)]) continue;
        const double cond = comp(j, g) / mass(i, j);
        if (cond == 0.0) continue;
        for (int jp = 0; jp < n; ++jp) {
          if (jp == j) continue;
          const double post = st.w(i, jp) * comp(jp, g) / st.p(i, g);
          pc.Mbar(u, i * n + jp) += (1.0 - lam) * cond * post;
        }
        for (int ip : {i - 1, i + 1}) {
          if (ip < 0 || ip >= L) continue;
          const double num = st.r[static_cast<std::size_t>(ip)] * st.w(ip, j) *
                             st.pc[static_cast<std::size_t>(ip)](j, g);
          const double den = st.r[static_cast<std::size_t>(i)] * st.w(i, j) * comp(j, g);
          pc.Mbar(u, ip * n + j) += 0.5 * lam * cond * std::min(1.0, num / den);
        }
      }
      for (int v = 0; v < S; ++v)
        if (v != u) off += pc.Mbar(u, v);
      const double diag = 1.0 - off;
      if (diag < -1e-12) throw InvariantError("projected chain has a negative diagonal entry");
      pc.Mbar(u, u) = std::max(0.0, diag);
    }
  }
  const double theta = st.theta();
  pc.Pbar.resize(S);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < n; ++j)
      pc.Pbar[i * n + j] = st.r[static_cast<std::size_t>(i)] * st.w(i, j) * mass(i, j) / theta;
  return pc;
}

std::pair<double, double> dirichlet_decomposition_sides(const DiscreteSTChain& st, const Vector& g) {
  const int L = st.levels;
  const int G = st.grid_size();
  const Mask full_mask = st.state_mask();
  const double lhs = dirichlet_form(st.base.P, st.base.pi, g, full_mask);

  double local = 0.0;
  for (int i = 0; i < L; ++i) {
    const Vector gi = g.segment(static_cast<Eigen::Index>(i) * G, G);
    const Vector pi_i = st.p.row(i).transpose();
    local += st.r[static_cast<std::size_t>(i)] *
             dirichlet_form(st.K[static_cast<std::size_t>(i)], pi_i, gi, st.grid_mask);
  }
  double inter = 0.0;
  for (int i = 0; i < L; ++i)
    for (int ip : {i - 1, i + 1}) {
      if (ip < 0 || ip >= L) continue;
      for (int x = 0; x < G; ++x) {
        if (!st.grid_mask[static_cast<std::size_t>(x)]) continue;
        const double ri = st.r[static_cast<std::size_t>(i)];
        const double a = std::min(1.0, st.r[static_cast<std::size_t>(ip)] * st.p(ip, x) / (ri * st.p(i, x)));
        const double diff = g[st.state(i, x)] - g[st.state(ip, x)];
        inter += diff * diff * ri * st.p(i, x) * a;
      }
    }
  inter *= 0.25;
  const double rhs = (1.0 - st.lambda_eff) * local + st.lambda_eff * inter;
  return {lhs, rhs};
}

DirichletReport verify_dirichlet_decomposition(const DiscreteSTChain& st, int trials, Rng& rng) {
  if (trials < 1) throw ArgumentError("trials must be at least 1");
  DirichletReport rep;
  rep.trials = trials;
  const int S = st.base.size();
  for (int t = 0; t < trials; ++t) {
    Vector g(S);
    for (int a = 0; a < S; ++a) g[a] = rng.normal();
    const auto [lhs, rhs] = dirichlet_decomposition_sides(st, g);
    const double scale = std::max(std::abs(lhs), std::abs(rhs));
    const double err = scale > 0.0 ? std::abs(lhs - rhs) / scale : 0.0;
    rep.max_rel_error = std::max(rep.max_rel_error, err);
  }
  return rep;
}

TheoremReport verify_decomposition_theorem(const DiscreteSTChain& st, const TheoremOptions& options) {
  if (st.kind != DensityKind::tilde)
    throw ArgumentError("the decomposition check needs the component decomposition of the tilde chain");
  TheoremReport rep;
  rep.lazy = st.laziness > 0.0;
  const Matrix mass = st.component_mass();
  if (!(mass.minCoeff() > 0.0))
    throw DegenerateRestrictionError("a component has zero mass on the restriction set");
  rep.theta = st.theta();
  rep.phi = mass.minCoeff();

  double min_gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < st.levels; ++i)
    for (int j = 0; j < st.components; ++j) {
      const Vector pij = st.pc[static_cast<std::size_t>(i)].row(j).transpose();
      const double gap = restricted_spectral_gap(
          st.Kc[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], pij, st.grid_mask);
      min_gap = std::min(min_gap, gap);
    }
  rep.C1 = 1.0;
  rep.C2 = 1.0 / min_gap;
  rep.min_local_gap = min_gap / st.local_scale;

  const ProjectedChain proj = build_projected(st);
  const Mask all(static_cast<std::size_t>(proj.Mbar.rows()), true);
  rep.C3 = options.c3_scale / restricted_spectral_gap(proj.Mbar, proj.Pbar, all);

  const double lam = st.lambda_eff;
  rep.C_M = std::max(3.0 * rep.theta * rep.C3,
                     rep.theta * rep.C1 * rep.C2 * ((2.0 + lam) * rep.C3 + 1.0) / (rep.phi * (1.0 - lam)));
  rep.gap = restricted_spectral_gap(st.base, st.state_mask());
  rep.holds = rep.gap * rep.C_M >= 1.0 - options.tolerance;

  rep.l2_bound = std::numeric_limits<double>::quiet_NaN();
  rep.l2_holds = true;
  const double R = st.radius;
  if (options.gamma_min > 0.0 && std::isfinite(R) && st.eta <= R * R) {
    const double d = st.dim;
    rep.l2_bound = std::pow(options.gamma_min, d / 2.0) * std::pow(st.eta, 1.5) /
                   (13.0 * std::pow(R, d + 3.0));
    rep.l2_holds = rep.min_local_gap >= rep.l2_bound;
  }
  return rep;
}

std::vector<CanonicalPath> projected_paths(int levels, int components) {
  if (levels < 1 || components < 1) throw ArgumentError("path family needs L, n >= 1");
  const int S = levels * components;
  auto id = [components](int i, int j) { return i * components + j; };
  std::vector<CanonicalPath> paths(static_cast<std::size_t>(S) * static_cast<std::size_t>(S));
  for (int x = 0; x < S; ++x)
    for (int y = 0; y < S; ++y) {
      if (x == y) continue;
      int i = x / components, j = x % components;
      int ip = y / components, jp = y % components;
      const bool reversed = i > ip;
      if (reversed) {
        std::swap(i, ip);
        std::swap(j, jp);
      }
      std::vector<int> states;
      if (j == jp) {
        for (int k = i; k <= ip; ++k) states.push_back(id(k, j));
      } else {
        for (int k = i; k >= 0; --k) states.push_back(id(k, j));
        for (int k = 0; k <= ip; ++k) states.push_back(id(k, jp));
      }
      if (reversed) std::reverse(states.begin(), states.end());
      paths[static_cast<std::size_t>(x) * static_cast<std::size_t>(S) + static_cast<std::size_t>(y)].states =
          std::move(states);
    }
  return paths;
}

double edge_congestion(const DiscreteChain& chain, const std::vector<CanonicalPath>& paths) {
  const int S = chain.size();
  Matrix load = Matrix::Zero(S, S);
  for (const auto& path : paths) {
    if (path.states.size() < 2) continue;
    const int x = path.states.front();
    const int y = path.states.back();
    const double len = static_cast<double>(path.states.size() - 1);
    for (std::size_t e = 0; e + 1 < path.states.size(); ++e) {
      const int u = path.states[e];
      const int v = path.states[e + 1];
      if (!(chain.P(u, v) > 0.0))
        throw PathError("path from " + std::to_string(x) + " to " + std::to_string(y) +
                        " uses the zero-probability edge " + std::to_string(u) + " -> " +
                        std::to_string(v));
      load(u, v) += chain.pi[x] * chain.pi[y] * len;
    }
  }
  double rho = 0.0;
  for (int u = 0; u < S; ++u)
    for (int v = 0; v < S; ++v)
      if (load(u, v) > 0.0) rho = std::max(rho, load(u, v) / (chain.pi[u] * chain.P(u, v)));
  return rho;
}

CanonicalPathReport verify_canonical_path_bound(const DiscreteChain& chain,
                                                const std::vector<CanonicalPath>& paths,
                                                int trials, Rng& rng) {
  if (trials < 1) throw ArgumentError("trials must be at least 1");
  CanonicalPathReport rep;
  rep.trials = trials;
  rep.rho = edge_congestion(chain, paths);
  const int S = chain.size();
  const Mask all(static_cast<std::size_t>(S), true);
  rep.holds = true;
  for (int t = 0; t < trials; ++t) {
    Vector g(S);
    for (int a = 0; a < S; ++a) g[a] = rng.normal();
    const double var = restricted_variance(chain.pi, g, all);
    const double e = dirichlet_form(chain.P, chain.pi, g, all);
    const double bound = rep.rho * e;
    const double ratio = bound > 0.0 ? var / bound : (var > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    rep.max_ratio = std::max(rep.max_ratio, ratio);
    if (var > bound * (1.0 + 1e-12)) rep.holds = false;
  }
  return rep;
}

Vector evolve_distribution(const Matrix& P, const Vector& start, std::int64_t steps) {
  if (steps < 0) throw ArgumentError("step count must be non-negative");
  Eigen::RowVectorXd mu = start.transpose();
  Matrix power = P;
  for (std::int64_t n = steps; n > 0; n >>= 1) {
    if (n & 1) mu = mu * power;
    if (n > 1) power = power * power;
  }
  return mu.transpose();
}

MixingReport verify_mixing_bound(const DiscreteSTChain& st, const Vector& start, double C_M,
                                 double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ArgumentError("epsilon must lie in (0, 1)");
  if (!(C_M > 0.0)) throw ArgumentError("C_M must be positive");
  const Vector& pi = st.base.pi;
  if (start.size() != pi.size()) throw ArgumentError("start distribution has the wrong size");
  if (std::abs(start.sum() - 1.0) > 1e-12 || start.minCoeff() < 0.0)
    throw ArgumentError("start must be a probability vector");

  MixingReport rep;
  rep.epsilon = epsilon;
  double B = 0.0;
  for (Eigen::Index a = 0; a < pi.size(); ++a) {
    if (start[a] == 0.0) continue;
    if (!(pi[a] > 0.0)) throw ArgumentError("start puts mass where the stationary law has none");
    B = std::max(B, start[a] / pi[a]);
  }
  rep.B = B;
  rep.steps = static_cast<std::int64_t>(std::ceil(C_M * std::log(2.0 * B * B / (epsilon * epsilon))));
  rep.steps = std::max<std::int64_t>(rep.steps, 0);
  rep.hypothesis = st.theta() >= 1.0 - epsilon * epsilon / (20.0 * B * B);

  const Vector mu = evolve_distribution(st.base.P, start, rep.steps);
  rep.tv = (mu - pi).cwiseAbs().sum();

  const int G = st.grid_size();
  double min_r = 1.0;
  for (double v : st.r) min_r = std::min(min_r, v);
  rep.level_bound = 3.0 * epsilon / (2.0 * min_r);
  rep.holds = rep.tv <= epsilon;
  for (int i = 0; i < st.levels; ++i) {
    const Vector mi = mu.segment(static_cast<Eigen::Index>(i) * G, G);
    const double total = mi.sum();
    double tv = 2.0;
    if (total > 0.0) tv = (mi / total - st.p.row(i).transpose()).cwiseAbs().sum();
    rep.level_tv.push_back(tv);
    if (tv > rep.level_bound) rep.holds = false;
  }
  return rep;
}

double mask_radius_for_mass(const DiscreteSTChain& st, double min_mass) {
  std::vector<double> norms;
  for (const auto& x : st.grid) norms.push_back(x.norm());
  std::sort(norms.begin(), norms.end());
  norms.erase(std::unique(norms.begin(), norms.end()), norms.end());
  const int G = st.grid_size();
  for (double R : norms) {
    bool ok = true;
    for (int i = 0; i < st.levels && ok; ++i)
      for (int j = 0; j < st.components && ok; ++j) {
        double m = 0.0;
        for (int g = 0; g < G; ++g)
          if (st.grid[static_cast<std::size_t>(g)].norm() <= R) m += st.pc[static_cast<std::size_t>(i)](j, g);
        ok = m >= min_mass;
      }
    if (ok) return R;
  }
  return norms.back();
}

RandomInstance random_instance(std::uint64_t seed) {
  Rng rng = Rng::stream(seed, 0x5eed);
  const int L = rng.uniform() < 0.5 ? 2 : 3;
  const int m = 32 + static_cast<int>(rng.uniform() * 33.0);  // 32..64
  std::vector<Vector> means(2, Vector(1));
  means[0][0] = -3.0 + 6.0 * rng.uniform();
  means[1][0] = -3.0 + 6.0 * rng.uniform();
  const double w0 = 0.2 + 0.6 * rng.uniform();
  Matrix cov(1, 1);
  cov(0, 0) = 0.5 + rng.uniform();
  GaussianMixtureTarget target(means, cov, {w0, 1.0 - w0});

  const double D = target.spread();
  const double beta1 = target.gamma_min() / (D * D);
  std::vector<double> betas(static_cast<std::size_t>(L));
  // When the target is already unimodal (beta1 = 1) fall back to a fixed ladder.
  const double b1 = std::min(beta1, 0.25);
  for (int i = 0; i < L; ++i) betas[static_cast<std::size_t>(i)] = b1 * std::pow(1.0 / b1, static_cast<double>(i) / (L - 1));
  betas.back() = 1.0;

  DiscreteSTOptions opts;
  opts.grid.extent = D + 4.0 * std::sqrt(target.gamma_max() / b1);
  opts.grid.points = m;
  opts.lambda = 1.0 / 3.0;
  opts.laziness = 0.5;
  const double h = 2.0 * opts.grid.extent / (m - 1);
  opts.eta = std::max(h * h, cov(0, 0) * (0.3 + 0.7 * rng.uniform()));
  opts.radius = 0.0;

  // Pick X0 from the full-grid chain's component masses.
  const DiscreteSTChain probe = discretize_st(target, betas, opts);
  opts.radius = mask_radius_for_mass(probe, 0.75);
  return RandomInstance{seed, std::move(target), std::move(betas), opts};
}

void write_verification_report(std::ostream& out, const std::vector<VerificationRow>& rows) {
  out << "seed,L,n,m,gap,C1,C2,C3,theta,phi,C_M,holds,lazy,min_local_gap,l2_bound\n";
  out.precision(17);
  for (const auto& row : rows) {
    const auto& r = row.report;
    out << row.seed << ',' << row.L << ',' << row.n << ',' << row.m << ',' << r.gap << ',' << r.C1
        << ',' << r.C2 << ',' << r.C3 << ',' << r.theta << ',' << r.phi << ',' << r.C_M << ','
        << (r.holds ? "true" : "false") << ',' << (r.lazy ? "true" : "false") << ','
        << r.min_local_gap << ',' << r.l2_bound << '\n';
  }
}

}  // namespace stmh
