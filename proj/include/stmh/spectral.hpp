#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "stmh/rng.hpp"
#include "stmh/target.hpp"

namespace stmh {

/// Finite chain with row-stochastic P and stationary vector pi.
struct DiscreteChain {
  Matrix P;
  Vector pi;

  int size() const { return static_cast<int>(P.rows()); }
  /// Rows sum to 1 within 1e-12, entries >= 0, pi P = pi within 1e-10.
  void validate() const;
};

/// Mask over chain states; true marks membership in the restriction set.
using Mask = std::vector<bool>;

/// Per-axis grid [-extent, extent] with `points` equally spaced nodes.
struct GridSpec {
  double extent = 5.0;
  int points = 32;
};

/// Which level densities the grid chain targets: the mixture with inflated
/// covariances (tilde) or the tempered target exp(-beta f) (tempered).
enum class DensityKind { tilde, tempered };

struct DiscreteSTOptions {
  GridSpec grid;
  double lambda = 1.0 / 3.0;
  double eta = 1.0;
  double laziness = 0.0;  // zeta in [0, 1/2]
  double radius = 0.0;    // X0 = {|x| <= radius}; <= 0 selects the whole grid
  std::vector<double> level_weights;  // r; empty selects uniform
  DensityKind kind = DensityKind::tilde;
};

/// Largest number of level x grid states discretize_st accepts.
inline constexpr int kMaxDiscreteStates = 20000;

/// Grid analogue of the tempering chain over states (i, g), index i * G + g
/// with 0-based level i and grid point g.
///
/// A lazy chain (hold with probability zeta) is stored in its equivalent
/// non-lazy form: level moves are attempted with probability
/// lambda_eff = (1 - zeta) lambda and the local kernels are
///   K_i = [zeta I + (1 - zeta)(1 - lambda) M_i] / (1 - lambda_eff),
/// so every decomposition identity below holds with (lambda_eff, K_i).
struct DiscreteSTChain {
  int levels = 0;
  int components = 0;
  int dim = 0;
  int points_per_axis = 0;
  DensityKind kind = DensityKind::tilde;

  std::vector<Vector> grid;
  std::vector<double> betas;
  std::vector<double> r;
  double lambda = 0.0;
  double laziness = 0.0;
  double lambda_eff = 0.0;
  // Off-diagonal ratio K_i / M_i; local gaps of the MH kernels are gap(K) / local_scale.
  double local_scale = 1.0;
  double eta = 0.0;
  double radius = 0.0;

  Mask grid_mask;                      // X0 over grid points
  Matrix p;                            // L x G, level densities (grid-normalized)
  std::vector<Matrix> pc;              // per level: n x G component densities (tilde only)
  Matrix w;                            // L x n component weights (tilde only)
  std::vector<Matrix> K;               // per level: G x G effective local kernel
  std::vector<std::vector<Matrix>> Kc; // [i][j]: G x G effective component kernel (tilde only)
  DiscreteChain base;                  // full chain; pi = r_i p_i(g)

  int grid_size() const { return static_cast<int>(grid.size()); }
  int state(int level, int g) const { return level * grid_size() + g; }
  Mask state_mask() const;
  /// L x n masses P_(i,j)(X0).
  Matrix component_mass() const;
  /// P([L] x X0).
  double theta() const;
  /// min_{i,j} P_(i,j)(X0).
  double phi() const;
};

/// Grid points of a d-dimensional tensor grid, first axis fastest.
std::vector<Vector> make_grid(int dim, const GridSpec& grid);

/// Builds the grid chain for `betas` (increasing, last = 1). Throws
/// CapacityError when L * m^d exceeds kMaxDiscreteStates.
DiscreteSTChain discretize_st(const GaussianMixtureTarget& target, const std::vector<double>& betas,
                              const DiscreteSTOptions& options);

/// Metropolis kernel on the grid for log density `log_p` with the truncated
/// Gaussian lattice proposal of variance eta; unused proposal mass stays put.
Matrix grid_mh_kernel(const std::vector<Vector>& grid, int points_per_axis, double spacing,
                      const Vector& log_p, double eta);

/// Left null vector of P - I normalized to sum 1, from a dense solve with one
/// refinement step. Throws NumericError when the residual exceeds 1e-12 or
/// the vector has negative mass.
Vector stationary_vector(const Matrix& P);

/// Same vector from a dense eigendecomposition of P': the real eigenvector
/// for the eigenvalue closest to 1, normalized to sum 1.
Vector stationary_vector_eigen(const Matrix& P);

/// Restricted spectral gap: min over g non-constant on the mask of
/// E_mask(g, g) / Var_mask(g). Solved in h = sqrt(pi) g with sqrt(pi)
/// deflated, where the variance form is a multiple of the identity. States
/// with pi = 0 are dropped. Throws DegenerateRestrictionError when fewer than
/// 2 masked states carry mass.
double restricted_spectral_gap(const Matrix& P, const Vector& pi, const Mask& mask);
double restricted_spectral_gap(const DiscreteChain& chain, const Mask& mask);

/// 1 - lambda_2 of the symmetrized D^{1/2} P D^{-1/2}; independent route for
/// reversible chains with a full mask.
double reversible_spectral_gap(const Matrix& P, const Vector& pi);

/// E(g, g) = 1/2 sum_{a,b in mask} (g_b - g_a)^2 pi_a P_ab.
double dirichlet_form(const Matrix& P, const Vector& pi, const Vector& g, const Mask& mask);
/// Var(g) = 1/2 sum_{a,b in mask} (g_b - g_a)^2 pi_a pi_b.
double restricted_variance(const Vector& pi, const Vector& g, const Mask& mask);

struct ProjectedChain {
  int levels = 0;
  int components = 0;
  Matrix Mbar;  // index i * n + j
  Vector Pbar;  // r_i w_ij P_ij(X0) / theta

  DiscreteChain as_chain() const { return {Mbar, Pbar}; }
};

/// Projected chain on (level, component) pairs with integrals over X0
/// replaced by grid sums. Throws DegenerateRestrictionError if some
/// P_(i,j)(X0) = 0 and InvariantError on a negative diagonal.
ProjectedChain build_projected(const DiscreteSTChain& st);

struct DirichletReport {
  int trials = 0;
  double max_rel_error = 0.0;
};

/// Compares the restricted Dirichlet form of the full chain with
/// (1 - lambda) sum_i r_i E_i + lambda E^I on `trials` standard normal g.
DirichletReport verify_dirichlet_decomposition(const DiscreteSTChain& st, int trials, Rng& rng);

/// Same identity for one caller-supplied g; returns {lhs, rhs}.
std::pair<double, double> dirichlet_decomposition_sides(const DiscreteSTChain& st, const Vector& g);

struct TheoremOptions {
  double c3_scale = 1.0;  // multiplies C3; values < 1 force a failure for testing
  double tolerance = 1e-9;
  // Inputs of the auxiliary local-gap bound gamma_min^{d/2} eta^{3/2} / (13 R^{d+3});
  // the column is NaN when gamma_min <= 0 or eta > R^2.
  double gamma_min = 0.0;
};

struct TheoremReport {
  double gap = 0.0;
  double C1 = 1.0;
  double C2 = 0.0;
  double C3 = 0.0;
  double theta = 0.0;
  double phi = 0.0;
  double C_M = 0.0;
  bool holds = false;
  bool lazy = false;
  double min_local_gap = 0.0;  // min over (i, j) of the restricted gap of M_(i,j)
  double l2_bound = 0.0;       // NaN when not applicable
  bool l2_holds = true;
};

/// C_M = max{3 theta C3, theta C1 C2 ((2 + lambda) C3 + 1) / (phi (1 - lambda))}
/// with C1 = 1, C2 = max 1 / gap_X0(K_ij), C3 = 1 / gap(Mbar); holds when
/// gap_{[L] x X0}(M) * C_M >= 1 - tolerance.
TheoremReport verify_decomposition_theorem(const DiscreteSTChain& st,
                                           const TheoremOptions& options = {});

struct CanonicalPath {
  std::vector<int> states;  // from .. to, inclusive
};

/// Path family on (level, component) pairs: for i <= i', same component goes
/// straight up; otherwise down to level 1, across, then up. Pairs with
/// i > i' use the reversed path. Indexed [x * size + y]; diagonal entries empty.
std::vector<CanonicalPath> projected_paths(int levels, int components);

struct CanonicalPathReport {
  double rho = 0.0;
  double max_ratio = 0.0;  // max Var / (rho E) over trials
  int trials = 0;
  bool holds = false;
};

/// Edge congestion rho_e and the Poincare check Var <= rho_e E on `trials`
/// random g. Throws PathError for a path that uses a zero-probability edge.
CanonicalPathReport verify_canonical_path_bound(const DiscreteChain& chain,
                                                const std::vector<CanonicalPath>& paths,
                                                int trials, Rng& rng);
double edge_congestion(const DiscreteChain& chain, const std::vector<CanonicalPath>& paths);

struct MixingReport {
  std::int64_t steps = 0;
  double B = 0.0;
  double epsilon = 0.0;
  double tv = 0.0;
  std::vector<double> level_tv;
  double level_bound = 0.0;  // 3 eps / (2 min r)
  bool hypothesis = false;   // theta >= 1 - eps^2 / (20 B^2)
  bool holds = false;
};

/// Evolves `start` exactly for N = ceil(C_M log(2 B^2 / eps^2)) steps with
/// B = max start / pi, then reports total variation (range [0, 2]) overall
/// and per level.
MixingReport verify_mixing_bound(const DiscreteSTChain& st, const Vector& start, double C_M,
                                 double epsilon);

/// Distribution after `steps` steps, by repeated squaring.
Vector evolve_distribution(const Matrix& P, const Vector& start, std::int64_t steps);

/// Randomized small instance: d = 1, n = 2, L in {2, 3}, grid <= 64 points,
/// means in [-3, 3], weights >= 0.2, lambda = 1/3 and laziness 1/2. X0 is
/// the smallest centered ball with every P_(i,j)(X0) >= 3/4.
struct RandomInstance {
  std::uint64_t seed = 0;
  GaussianMixtureTarget target;
  std::vector<double> betas;
  DiscreteSTOptions options;
};
RandomInstance random_instance(std::uint64_t seed);

/// Smallest radius among grid norms whose ball gives every component mass >= min_mass.
double mask_radius_for_mass(const DiscreteSTChain& st, double min_mass);

struct VerificationRow {
  std::uint64_t seed = 0;
  int L = 0;
  int n = 0;
  int m = 0;
  TheoremReport report;
};

/// CSV with columns seed, L, n, m, gap, C1, C2, C3, theta, phi, C_M, holds,
/// lazy, min_local_gap, l2_bound.
void write_verification_report(std::ostream& out, const std::vector<VerificationRow>& rows);

struct InstanceCheckOptions {
  int trials = 100;      // random test functions for the Dirichlet and path checks
  double epsilon = 0.1;  // mixing accuracy
  double c3_scale = 1.0;
  bool mixing = true;
};

/// Every exact check on one random instance. The mixing check runs on the
/// full-grid chain, where theta = 1 satisfies the mixing bound's hypothesis
/// theta >= 1 - eps^2 / (20 B^2).
struct InstanceChecks {
  std::uint64_t seed = 0;
  int L = 0;
  int n = 0;
  int m = 0;
  double stationarity_error = 0.0;  // L-inf, eigen stationary vector vs r_i p_i
  double balance_residual = 0.0;    // max |Pbar_u Mbar_uv - Pbar_v Mbar_vu|
  double dirichlet_error = 0.0;     // max relative error of the decomposition
  TheoremReport theorem;          // lazy chain of the instance
  TheoremReport theorem_nonlazy;  // same chain with laziness 0
  CanonicalPathReport paths;
  bool mixing_checked = false;
  MixingReport mixing;
  double gap_tilde = 0.0;      // restricted gap of the tilde-density chain
  double gap_tempered = 0.0;   // same for the tempered-density chain
  double gap_ratio_bound = 0.0;  // w_min^-5

  bool stationarity_ok() const { return stationarity_error <= 1e-10; }
  bool balance_ok() const { return balance_residual <= 1e-12; }
  bool dirichlet_ok() const { return dirichlet_error <= 1e-10; }
  bool mixing_ok() const { return !mixing_checked || (mixing.holds && mixing.hypothesis); }
  bool gap_ratio_ok() const { return gap_tilde <= gap_ratio_bound * gap_tempered; }
  bool passed() const {
    return stationarity_ok() && balance_ok() && dirichlet_ok() && theorem.holds && theorem_nonlazy.holds &&
           paths.holds &&
           mixing_ok() && gap_ratio_ok();
  }
};

InstanceChecks check_instance(const RandomInstance& instance, const InstanceCheckOptions& options = {});

/// One row per instance: the summary numbers of every check and pass flags.
void write_instance_checks(std::ostream& out, const std::vector<InstanceChecks>& rows);

}  // namespace stmh
