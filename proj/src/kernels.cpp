#include "stmh/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stmh/error.hpp"

namespace stmh {

void STConfig::validate() const {
  ladder.validate();
  if (!(lambda > 0.0 && lambda < 1.0)) throw ArgumentError("lambda must lie in (0, 1)");
  if (!(eta > 0.0)) throw ArgumentError("eta must be positive");
  if (lazy && !(laziness >= 0.0 && laziness <= 0.5))
    throw ArgumentError("laziness must lie in [0, 1/2]");
}

double mh_acceptance(double log_pi_x, double log_pi_y) {
  const double diff = log_pi_y - log_pi_x;
  return diff >= 0.0 ? 1.0 : std::exp(diff);
}

double level_move_log_acceptance(const Ladder& ladder, int from, int to, double potential) {
  const auto a = static_cast<std::size_t>(from - 1);
  const auto b = static_cast<std::size_t>(to - 1);
  const double log_ratio =
      (ladder.betas[a] - ladder.betas[b]) * potential + ladder.log_zhat[a] - ladder.log_zhat[b];
  return std::min(0.0, log_ratio);
}

bool rwmh_step_inplace(const LogDensity& log_pi, std::span<double> x, double& log_pi_x,
                       double eta, std::span<double> proposal, Rng& rng) {
  if (!std::isfinite(log_pi_x))
    throw StateError("random-walk step started from a point with non-finite log density");
  const double scale = std::sqrt(eta);
  for (std::size_t k = 0; k < x.size(); ++k) proposal[k] = x[k] + scale * rng.normal();
  const double log_pi_y = log_pi(proposal);
  const double diff = log_pi_y - log_pi_x;
  if (diff >= 0.0 || std::log(rng.uniform_open()) < diff) {
    std::copy(proposal.begin(), proposal.end(), x.begin());
    log_pi_x = log_pi_y;
    return true;
  }
  return false;
}

RwmhResult rwmh_step(const LogDensity& log_pi, const Vector& x, double eta, Rng& rng) {
  if (!(eta > 0.0)) throw ArgumentError("eta must be positive");
  RwmhResult out{x, false};
  double log_pi_x = log_pi(std::span<const double>(x.data(), x.size()));
  Vector proposal(x.size());
  out.accepted = rwmh_step_inplace(log_pi, std::span<double>(out.x.data(), out.x.size()), log_pi_x,
                                   eta, std::span<double>(proposal.data(), proposal.size()), rng);
  return out;
}

TemperingChain::TemperingChain(const GaussianMixtureTarget& target, const STConfig& config,
                               STState start)
    : target_(&target), config_(&config), state_(std::move(start)) {
  if (state_.x.size() != target.dim())
    throw ArgumentError("start point has dimension " + std::to_string(state_.x.size()) +
                        ", target has " + std::to_string(target.dim()));
  if (state_.level < 1 || state_.level > config.ladder.levels())
    throw ArgumentError("start level " + std::to_string(state_.level) + " outside [1, " +
                        std::to_string(config.ladder.levels()) + "]");
  f_x_ = target.potential(state_.x);
  if (!std::isfinite(f_x_)) throw StateError("start point has non-finite potential");
  proposal_.resize(target.dim());
}

bool TemperingChain::step(Rng& rng) {
  const STConfig& cfg = *config_;
  if (cfg.lazy && rng.uniform() < cfg.laziness) return false;

  if (rng.uniform() >= cfg.lambda) {
    // Position move at fixed level: Metropolis on exp(-beta_i f).
    const double beta = cfg.ladder.betas[static_cast<std::size_t>(state_.level - 1)];
    const double scale = std::sqrt(cfg.eta);
    const int d = target_->dim();
    for (int k = 0; k < d; ++k) proposal_[k] = state_.x[k] + scale * rng.normal();
    const double f_y = target_->potential(proposal_);
    const double diff = -beta * (f_y - f_x_);
    if (diff >= 0.0 || std::log(rng.uniform_open()) < diff) {
      state_.x.swap(proposal_);
      f_x_ = f_y;
      ++position_accepts_;
      return true;
    }
    return false;
  }

  // Level move: i' = i +/- 1, rejected outright outside [1, L].
  const int to = state_.level + (rng.uniform() < 0.5 ? -1 : 1);
  if (to < 1 || to > cfg.ladder.levels()) return false;
  const double log_a = level_move_log_acceptance(cfg.ladder, state_.level, to, f_x_);
  if (log_a >= 0.0 || std::log(rng.uniform_open()) < log_a) {
    state_.level = to;
    ++level_accepts_;
    return true;
  }
  return false;
}

STState st_step(const GaussianMixtureTarget& target, const STState& state, const STConfig& config,
                Rng& rng) {
  TemperingChain chain(target, config, state);
  chain.step(rng);
  return chain.state();
}

STState run_chain(const GaussianMixtureTarget& target, const STConfig& config, const Vector& x0,
                  int level0, std::int64_t steps, Rng& rng) {
  if (steps < 0) throw ArgumentError("step count must be non-negative");
  TemperingChain chain(target, config, STState{level0, x0});
  for (std::int64_t n = 0; n < steps; ++n) chain.step(rng);
  return chain.state();
}

std::vector<STState> run_chain_traced(const GaussianMixtureTarget& target, const STConfig& config,
                                      const Vector& x0, int level0, std::int64_t steps, Rng& rng,
                                      std::int64_t record_every) {
  if (record_every < 1) throw ArgumentError("record_every must be at least 1");
  if (steps < 0) throw ArgumentError("step count must be non-negative");
  TemperingChain chain(target, config, STState{level0, x0});
  std::vector<STState> trace;
  trace.reserve(static_cast<std::size_t>(steps / record_every));
  for (std::int64_t n = 1; n <= steps; ++n) {
    chain.step(rng);
    if (n % record_every == 0) trace.push_back(chain.state());
  }
  return trace;
}

Vector sample_initial(int dim, double sigma0_sq, Rng& rng) {
  if (!(sigma0_sq > 0.0)) throw ArgumentError("initial variance must be positive");
  Vector x(dim);
  const double s = std::sqrt(sigma0_sq);
  for (int k = 0; k < dim; ++k) x[k] = s * rng.normal();
  return x;
}

}  // namespace stmh
