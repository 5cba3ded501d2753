#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "stmh/ladder.hpp"
#include "stmh/rng.hpp"
#include "stmh/target.hpp"

namespace stmh {

/// Tempering chain state. `level` is 1-based: 1 is the hottest level and
/// L (beta = 1) the target level.
struct STState {
  int level = 1;
  Vector x;

  bool operator==(const STState& o) const { return level == o.level && x == o.x; }
};

struct STConfig {
  Ladder ladder;
  double lambda = 0.5;  // probability of attempting a level move
  double eta = 1.0;     // proposal variance: y = x + sqrt(eta) z
  bool lazy = false;
  double laziness = 0.0;  // hold probability when lazy
  std::uint64_t seed = 0;

  void validate() const;
};

using LogDensity = std::function<double(std::span<const double>)>;

/// min{1, exp(log_pi_y - log_pi_x)}.
double mh_acceptance(double log_pi_x, double log_pi_y);

/// log acceptance of a level move i -> j (1-based) at a point with potential f:
/// min{0, (beta_i - beta_j) f + log Zhat_i - log Zhat_j}.
double level_move_log_acceptance(const Ladder& ladder, int from, int to, double potential);

struct RwmhResult {
  Vector x;
  bool accepted = false;
};

/// One random-walk Metropolis step with proposal N(x, eta I).
/// Throws StateError when log_pi(x) is not finite.
RwmhResult rwmh_step(const LogDensity& log_pi, const Vector& x, double eta, Rng& rng);

/// In-place variant used on hot paths: `log_pi_x` caches log_pi(x) and is
/// updated on acceptance; `proposal` is caller-owned scratch of size dim.
bool rwmh_step_inplace(const LogDensity& log_pi, std::span<double> x, double& log_pi_x,
                       double eta, std::span<double> proposal, Rng& rng);

/// Simulated tempering Metropolis-Hastings sampler over levels x positions.
/// Caches f(x) so each step costs one potential evaluation at most.
class TemperingChain {
 public:
  TemperingChain(const GaussianMixtureTarget& target, const STConfig& config, STState start);

  /// Advances one step. Returns true when the state changed.
  bool step(Rng& rng);

  const STState& state() const { return state_; }
  int level() const { return state_.level; }
  const Vector& position() const { return state_.x; }
  double potential() const { return f_x_; }

  std::int64_t position_moves_accepted() const { return position_accepts_; }
  std::int64_t level_moves_accepted() const { return level_accepts_; }

 private:
  const GaussianMixtureTarget* target_;
  const STConfig* config_;
  STState state_;
  double f_x_;
  Vector proposal_;
  std::int64_t position_accepts_ = 0;
  std::int64_t level_accepts_ = 0;
};

/// One composite step; convenience wrapper over TemperingChain.
STState st_step(const GaussianMixtureTarget& target, const STState& state, const STConfig& config,
                Rng& rng);

/// Runs `steps` composite steps from (level0, x0) and returns the final state.
STState run_chain(const GaussianMixtureTarget& target, const STConfig& config, const Vector& x0,
                  int level0, std::int64_t steps, Rng& rng);

/// As run_chain but returns the state after every `record_every`-th step.
std::vector<STState> run_chain_traced(const GaussianMixtureTarget& target, const STConfig& config,
                                      const Vector& x0, int level0, std::int64_t steps, Rng& rng,
                                      std::int64_t record_every);

/// x0 ~ N(0, sigma0_sq I).
Vector sample_initial(int dim, double sigma0_sq, Rng& rng);

}  // namespace stmh
