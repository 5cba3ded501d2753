#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stmh/rng.hpp"
#include "stmh/target.hpp"

namespace stmh {

/// Inverse temperatures beta_1 < ... < beta_L = 1 with log partition estimates
/// (log Zhat_1 = 0) and, optionally, the level weights r_i they induce.
struct Ladder {
  std::vector<double> betas;
  std::vector<double> log_zhat;
  std::optional<std::vector<double>> weights;

  int levels() const { return static_cast<int>(betas.size()); }

  /// Ladder whose estimates are all 1 (log 0).
  static Ladder unit(std::vector<double> betas);

  /// Throws ArgumentError when any invariant is broken.
  void validate() const;
};

/// Parameters of the tempering run. `steps` is kept as a double because the
/// theoretical budget overflows 64-bit integers for realistic separations.
struct ScheduleParams {
  int levels = 1;
  std::vector<double> betas;
  double ratio = 1.0;
  double radius = 0.0;
  double steps = 0.0;
  double sigma0_sq = 1.0;
  double lambda = 0.5;
  double eta = 1.0;
  std::vector<std::string> warnings;
};

/// Multiplicative constants that stand in for the orders in the parameter
/// formulas. All default to 1.
struct ScheduleConstants {
  double beta1 = 1.0;      // beta_1 = beta1 * gamma_min / D^2
  double sigma0 = 1.0;     // sigma_0^2 = sigma0 * gamma_min / beta_1
  double steps = 1.0;      // C' in the step budget
  double steps_exp = 1.0;  // c' in the step budget
  double lambda = 0.5;
};

/// KL(N(m, s1) || N(m, s2)) = (log(|s2|/|s1|) - d + tr(s2^{-1} s1)) / 2.
double kl_gaussians_equal_mean(const Matrix& sigma1, const Matrix& sigma2);

/// 1 - sqrt(kl / 2), clipped at 0: a lower bound on the overlap int min(p, q).
double tv_overlap_lower_bound(double kl);

ScheduleParams theory_schedule(const GaussianMixtureTarget& target, double epsilon,
                               const ScheduleConstants& constants = {});

/// Geometric ladder from gamma_min / D^2 to 1 with a caller-chosen number of
/// levels; radius, sigma0^2 and eta follow the theory formulas at `epsilon`.
ScheduleParams practical_schedule(const GaussianMixtureTarget& target, int levels,
                                  double epsilon = 0.1, const ScheduleConstants& constants = {});

struct EstimationOptions {
  int samples = 100;            // s: samples required at each level
  std::int64_t steps = 1000;    // N: steps per run of the sampler
  std::int64_t restart_cap = 0; // T_cap; 0 selects 10 e^2 l s ln(s + 1)
  int threads = 1;
  std::uint64_t seed = 0;
};

/// Default restart cap for level `level` (1-based): ceil(10 e^2 l s ln(s + 1)).
std::int64_t default_restart_cap(int level, int samples);

/// Sequential partition-function estimation: for each level l, repeatedly run
/// the tempering sampler on the first l levels (fresh start each run) until s
/// runs end at level l, then set
///   log Zhat_{l+1} = log Zhat_l + log mean_j exp((beta_l - beta_{l+1}) f(x_j)).
/// Runs are assigned fixed stream ids, so the result does not depend on the
/// worker count. Throws EstimationStallError past the restart cap.
Ladder estimate_partitions(const GaussianMixtureTarget& target, const ScheduleParams& schedule,
                           const EstimationOptions& options);

/// r_i = (Z_i / Zhat_i) / sum_k (Z_k / Zhat_k), with Z_i from quadrature (d <= 2).
std::vector<double> true_level_weights(const GaussianMixtureTarget& target,
                                       const std::vector<double>& betas,
                                       const std::vector<double>& log_zhat);

/// Same formula from log Z values the caller already has.
std::vector<double> level_weights_from_logs(const std::vector<double>& log_z,
                                            const std::vector<double>& log_zhat);

/// Ladder with log Zhat_i = log Z_i - log Z_1 from quadrature, so r is uniform.
Ladder quadrature_ladder(const GaussianMixtureTarget& target, const std::vector<double>& betas);

}  // namespace stmh
