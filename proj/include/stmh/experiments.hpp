#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "stmh/kernels.hpp"
#include "stmh/ladder.hpp"
#include "stmh/target.hpp"

namespace stmh {

enum class Algorithm { stmh, mh };
enum class ZhatSource { quadrature, estimate };

std::string to_string(Algorithm a);
std::string to_string(ZhatSource z);

/// Per-replicate summary at one recorded step: the running mean of the
/// positions seen at the target level (beta = 1) up to `step`.
struct ExperimentRecord {
  int replicate = 0;
  Algorithm algorithm = Algorithm::stmh;
  double separation = 0.0;
  std::int64_t step = 0;
  std::int64_t samples = 0;  // target-level visits so far
  Vector mean;
  double mean_norm = 0.0;
};

/// Cross-replicate average of the per-replicate means at one recorded step,
/// over replicates with at least one target-level sample.
struct Aggregate {
  std::int64_t step = 0;
  int contributing = 0;
  Vector mean;
  double norm = 0.0;
  double se = 0.0;  // delta-method standard error of the norm; inf when contributing < 2
};

struct ExperimentConfig {
  std::vector<double> separations{8.0, 12.0, 16.0, 20.0};
  std::vector<int> levels;  // one per separation, or a single shared value
  int replicates = 500;
  double threshold = 0.1;
  std::vector<double> start{10.0, 10.0};
  double lambda = 0.5;
  double eta = 1.0;
  double baseline_eta = 36.0;
  std::int64_t record_every = 250;
  std::int64_t initial_horizon = 16000;
  std::int64_t max_steps = 1'000'000;
  std::vector<Algorithm> algorithms{Algorithm::stmh, Algorithm::mh};
  ZhatSource zhat_source = ZhatSource::quadrature;
  EstimationOptions estimation;

  double accuracy_separation = 16.0;
  int accuracy_levels = 9;
  std::vector<std::int64_t> accuracy_steps;  // ascending; empty selects a default grid

  int threads = 0;
  std::uint64_t seed = 0;

  int levels_for(std::size_t separation_index) const;
  void validate() const;
};

/// Chain settings for one algorithm at one separation: the tempering ladder
/// (partition estimates from quadrature or sequential estimation) for STMH,
/// a single beta = 1 level with the baseline step size for MH.
STConfig experiment_chain(const GaussianMixtureTarget& target, Algorithm algorithm, int levels,
                          const ExperimentConfig& cfg);

/// Runs `replicates` independent chains from (start, level 1), streams
/// (seed, stream_base + k), recording at the given ascending steps. Chains
/// can be extended with further record steps; results never depend on the
/// worker count or on how the horizon was split.
class ReplicateBank {
 public:
  ReplicateBank(const GaussianMixtureTarget& target, const STConfig& config, const Vector& start,
                int replicates, std::uint64_t seed, std::uint64_t stream_base);

  void advance(const std::vector<std::int64_t>& record_steps, int threads);

  const std::vector<std::int64_t>& record_steps() const { return steps_; }
  std::vector<Aggregate> aggregate() const;
  std::vector<ExperimentRecord> records(int replicate, Algorithm algorithm, double separation) const;

 private:
  struct Replicate {
    TemperingChain chain;
    Rng rng;
    std::int64_t step = 0;
    std::int64_t samples = 0;
    Vector sum;
    // Per record: samples, then the running mean (dim values).
    std::vector<double> trace;
  };

  const GaussianMixtureTarget* target_;
  const STConfig* config_;
  int dim_;
  std::vector<Replicate> reps_;
  std::vector<std::int64_t> steps_;
};

struct ScalingRow {
  Algorithm algorithm = Algorithm::stmh;
  double separation = 0.0;
  std::int64_t crossing = 0;
  std::int64_t lo95 = 0;  // first step where the lower band is below the threshold
  std::int64_t hi95 = 0;  // first step where the upper band is below the threshold
  bool censored = false;  // crossing not reached by max_steps; steps then equal max_steps
};

struct AccuracyRow {
  Algorithm algorithm = Algorithm::stmh;
  double separation = 0.0;
  std::int64_t steps = 0;
  double mean_norm = 0.0;
  double log2_inv_norm = 0.0;  // NaN when the norm is 0 or undefined (flagged)
  double lo95 = 0.0;
  double hi95 = 0.0;
  bool flagged = false;
};

/// First recorded step with value < threshold, or -1.
std::int64_t first_crossing(const std::vector<Aggregate>& aggs, double threshold, double z);

std::vector<ScalingRow> run_scaling_experiment(const ExperimentConfig& cfg);
std::vector<AccuracyRow> run_accuracy_experiment(const ExperimentConfig& cfg);

/// Default accuracy grid: 24 steps spaced evenly between 2k and 200k.
std::vector<std::int64_t> default_accuracy_steps();

void write_scaling_csv(std::ostream& out, const std::vector<ScalingRow>& rows);
void write_accuracy_csv(std::ostream& out, const std::vector<AccuracyRow>& rows);

/// |mu|^2 / (C + |mu|^2).
double tv_lower_bound_from_mean(const Vector& mean, double C);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Least-squares y = a + b x; r2 is the squared sample correlation.
LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

/// Sum with Neumaier compensation.
class CompensatedSum {
 public:
  void add(double v);
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace stmh
