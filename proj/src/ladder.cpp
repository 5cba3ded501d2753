#include "stmh/ladder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "stmh/error.hpp"
#include "stmh/kernels.hpp"
#include "stmh/parallel.hpp"
#include "stmh/quadrature.hpp"

namespace stmh {

Ladder Ladder::unit(std::vector<double> betas) {
  Ladder ladder;
  ladder.log_zhat.assign(betas.size(), 0.0);
  ladder.betas = std::move(betas);
  return ladder;
}

void Ladder::validate() const {
  if (betas.empty()) throw ArgumentError("ladder needs at least one level");
  if (log_zhat.size() != betas.size())
    throw ArgumentError("ladder has " + std::to_string(betas.size()) + " betas but " +
                        std::to_string(log_zhat.size()) + " partition estimates");
  if (!(betas.front() > 0.0)) throw ArgumentError("inverse temperatures must be positive");
  for (std::size_t i = 1; i < betas.size(); ++i)
    if (!(betas[i] > betas[i - 1]))
      throw ArgumentError("inverse temperatures must be strictly increasing");
  if (std::abs(betas.back() - 1.0) > 1e-12) throw ArgumentError("last inverse temperature must be 1");
  if (log_zhat.front() != 0.0) throw ArgumentError("log Zhat_1 must be 0");
  for (double z : log_zhat)
    if (!std::isfinite(z)) throw ArgumentError("partition estimates must be finite and positive");
  if (weights) {
    if (weights->size() != betas.size()) throw ArgumentError("level weights have the wrong length");
    double total = 0.0;
    for (double r : *weights) {
      if (!(r > 0.0)) throw ArgumentError("level weights must be positive");
      total += r;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ArgumentError("level weights must sum to 1");
  }
}

double kl_gaussians_equal_mean(const Matrix& sigma1, const Matrix& sigma2) {
  const auto d = sigma1.rows();
  if (sigma1.cols() != d || sigma2.rows() != d || sigma2.cols() != d)
    throw ArgumentError("covariances must be square and of equal size");
  auto factor = [](const Matrix& s) {
    if (!s.isApprox(s.transpose(), 1e-12)) throw ArgumentError("covariance is not symmetric");
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success) throw ArgumentError("covariance is not positive definite");
    return llt;
  };
  const auto l1 = factor(sigma1);
  const auto l2 = factor(sigma2);
  const double logdet1 = 2.0 * l1.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double logdet2 = 2.0 * l2.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double trace = l2.solve(sigma1).trace();
  return 0.5 * (logdet2 - logdet1 - static_cast<double>(d) + trace);
}

double tv_overlap_lower_bound(double kl) {
  if (!(kl >= 0.0)) throw ArgumentError("KL divergence must be non-negative");
  return std::max(0.0, 1.0 - std::sqrt(0.5 * kl));
}

namespace {

double base_beta(const GaussianMixtureTarget& target, const ScheduleConstants& c) {
  const double D = target.spread();
  return std::min(1.0, c.beta1 * target.gamma_min() / (D * D));
}

double theory_radius(const GaussianMixtureTarget& target, int levels, double epsilon) {
  const double D = target.spread();
  const double d = target.dim();
  const double kappa = target.kappa();
  const double wmin = target.w_min();
  const double L = levels;
  const double log_arg = std::log(20.0) + 6.0 + 2.0 * std::log(L) + d * std::log(kappa) -
                         2.0 * std::log(wmin) - std::log(epsilon);
  return D + std::sqrt(d * kappa * D * D) + std::sqrt(2.0 * kappa * D * D * log_arg);
}

double theory_steps(const GaussianMixtureTarget& target, int levels, double radius, double epsilon,
                    const ScheduleConstants& c) {
  const double d = target.dim();
  const double kappa = target.kappa();
  const double wmin = target.w_min();
  const double L = levels;
  const double log_prefactor = std::log(c.steps) + 4.0 * std::log(L) + d * std::log(radius) +
                               0.5 * d * std::log(kappa) + c.steps_exp * d -
                               0.5 * d * std::log(target.gamma_min()) - 5.0 * std::log(wmin);
  const double log_term = 2.0 * std::log(L) + d * std::log(kappa) - 2.0 * std::log(epsilon) -
                          2.0 * std::log(wmin);
  // L = 1, kappa = 1 and w_min = 1 can leave log_term <= 0; the budget is then
  // driven by the prefactor alone.
  return std::exp(log_prefactor) * std::max(log_term, 1.0);
}

void fill_common(ScheduleParams& p, const GaussianMixtureTarget& target, double epsilon,
                 const ScheduleConstants& c) {
  p.radius = theory_radius(target, p.levels, epsilon);
  p.sigma0_sq = c.sigma0 * target.gamma_min() / p.betas.front();
  p.eta = p.radius * p.radius;
  p.lambda = c.lambda;
  p.steps = theory_steps(target, p.levels, p.radius, epsilon, c);
}

void check_epsilon(double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ArgumentError("epsilon must lie in (0, 1)");
}

}  // namespace

ScheduleParams theory_schedule(const GaussianMixtureTarget& target, double epsilon,
                               const ScheduleConstants& constants) {
  check_epsilon(epsilon);
  const double D = target.spread();
  const double d = target.dim();
  const double nu =
      1.0 + std::log(target.kappa()) + (2.0 / d) * std::log(2.0 / target.w_min());
  const double rho = std::min(
      1.0 + 1.0 / std::sqrt(d),
      1.0 + target.gamma_min() / (D * D + 2.0 * target.gamma_max() * d * nu));

  ScheduleParams p;
  p.ratio = rho;
  const double beta1 = base_beta(target, constants);
  p.betas.push_back(beta1);
  // Smallest L with beta1 rho^{L-1} >= 1; the top level is clipped to 1.
  while (p.betas.back() < 1.0) p.betas.push_back(std::min(1.0, p.betas.back() * rho));
  p.betas.back() = 1.0;
  p.levels = static_cast<int>(p.betas.size());
  fill_common(p, target, epsilon, constants);
  return p;
}

ScheduleParams practical_schedule(const GaussianMixtureTarget& target, int levels, double epsilon,
                                  const ScheduleConstants& constants) {
  if (levels < 1) throw ArgumentError("ladder needs at least one level");
  check_epsilon(epsilon);
  const double beta1 = base_beta(target, constants);
  ScheduleParams p;
  p.levels = levels;
  if (levels == 1) {
    p.betas = {1.0};
    p.ratio = 1.0 / beta1;
    if (beta1 < 1.0)
      p.warnings.push_back("single-level ladder runs at beta = 1 although beta_1 = " +
                           std::to_string(beta1));
  } else {
    if (!(beta1 < 1.0))
      throw ArgumentError("multi-level ladder needs beta_1 < 1; the target is already unimodal");
    p.ratio = std::pow(1.0 / beta1, 1.0 / (levels - 1));
    p.betas.resize(static_cast<std::size_t>(levels));
    for (int i = 0; i < levels; ++i)
      p.betas[static_cast<std::size_t>(i)] =
          beta1 * std::exp(std::log(p.ratio) * static_cast<double>(i));
    p.betas.front() = beta1;
    p.betas.back() = 1.0;
  }
  fill_common(p, target, epsilon, constants);
  return p;
}

std::int64_t default_restart_cap(int level, int samples) {
  const double e2 = std::numbers::e * std::numbers::e;
  const double s = samples;
  return static_cast<std::int64_t>(std::ceil(10.0 * e2 * level * s * std::log(s + 1.0)));
}

Ladder estimate_partitions(const GaussianMixtureTarget& target, const ScheduleParams& schedule,
                           const EstimationOptions& options) {
  if (options.samples < 1) throw ArgumentError("samples per level must be at least 1");
  if (options.steps < 0) throw ArgumentError("steps per run must be non-negative");
  const int L = static_cast<int>(schedule.betas.size());
  Ladder ladder = Ladder::unit(schedule.betas);
  ladder.validate();
  const int d = target.dim();
  const auto s = static_cast<std::size_t>(options.samples);

  for (int level = 1; level < L; ++level) {
    STConfig sub;
    sub.ladder.betas.assign(ladder.betas.begin(), ladder.betas.begin() + level);
    sub.ladder.log_zhat.assign(ladder.log_zhat.begin(), ladder.log_zhat.begin() + level);
    sub.lambda = schedule.lambda;
    sub.eta = schedule.eta;

    const std::int64_t cap =
        options.restart_cap > 0 ? options.restart_cap : default_restart_cap(level, options.samples);
    // Run k always uses stream (level, k), and successes are taken in run
    // order, so the selected samples do not depend on the batch size.
    std::vector<double> potentials;
    potentials.reserve(s);
    std::int64_t attempted = 0;
    while (potentials.size() < s) {
      if (attempted >= cap)
        throw EstimationStallError(
            level, "partition estimation stalled at level " + std::to_string(level) + ": " +
                       std::to_string(potentials.size()) + " of " + std::to_string(s) +
                       " samples after " + std::to_string(cap) + " runs");
      const std::int64_t want = static_cast<std::int64_t>(s - potentials.size());
      const std::int64_t batch =
          std::min(cap - attempted, std::max<std::int64_t>(want, options.threads));
      std::vector<STState> finals(static_cast<std::size_t>(batch));
      parallel_for(finals.size(), options.threads, [&](std::size_t k) {
        const auto run = static_cast<std::uint64_t>(attempted) + k;
        Rng rng = Rng::stream(options.seed, (static_cast<std::uint64_t>(level) << 40) | run);
        const Vector x0 = sample_initial(d, schedule.sigma0_sq, rng);
        finals[k] = run_chain(target, sub, x0, 1, options.steps, rng);
      });
      for (const auto& st : finals) {
        if (st.level == level && potentials.size() < s) potentials.push_back(target.potential(st.x));
      }
      attempted += batch;
    }

    const double dbeta = ladder.betas[static_cast<std::size_t>(level - 1)] -
                         ladder.betas[static_cast<std::size_t>(level)];
    std::vector<double> terms(s);
    for (std::size_t j = 0; j < s; ++j) terms[j] = dbeta * potentials[j];
    const double next = ladder.log_zhat[static_cast<std::size_t>(level - 1)] + log_sum_exp(terms) -
                        std::log(static_cast<double>(s));
    if (!std::isfinite(next))
      throw NumericError("partition estimate at level " + std::to_string(level + 1) +
                         " is not finite");
    ladder.log_zhat[static_cast<std::size_t>(level)] = next;
  }
  return ladder;
}

std::vector<double> level_weights_from_logs(const std::vector<double>& log_z,
                                            const std::vector<double>& log_zhat) {
  if (log_z.size() != log_zhat.size() || log_z.empty())
    throw ArgumentError("level weight inputs must be non-empty and of equal length");
  std::vector<double> logs(log_z.size());
  for (std::size_t i = 0; i < logs.size(); ++i) logs[i] = log_z[i] - log_zhat[i];
  const double norm = log_sum_exp(logs);
  std::vector<double> r(logs.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = std::exp(logs[i] - norm);
  return r;
}

std::vector<double> true_level_weights(const GaussianMixtureTarget& target,
                                       const std::vector<double>& betas,
                                       const std::vector<double>& log_zhat) {
  std::vector<double> log_z(betas.size());
  for (std::size_t i = 0; i < betas.size(); ++i) log_z[i] = log_partition(target, betas[i]);
  return level_weights_from_logs(log_z, log_zhat);
}

Ladder quadrature_ladder(const GaussianMixtureTarget& target, const std::vector<double>& betas) {
  Ladder ladder = Ladder::unit(betas);
  std::vector<double> log_z(betas.size());
  for (std::size_t i = 0; i < betas.size(); ++i) log_z[i] = log_partition(target, betas[i]);
  for (std::size_t i = 0; i < betas.size(); ++i) ladder.log_zhat[i] = log_z[i] - log_z[0];
  ladder.weights = level_weights_from_logs(log_z, ladder.log_zhat);
  ladder.validate();
  return ladder;
}

}  // namespace stmh
