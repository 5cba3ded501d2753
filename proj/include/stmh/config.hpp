#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stmh/experiments.hpp"
#include "stmh/kernels.hpp"
#include "stmh/ladder.hpp"
#include "stmh/target.hpp"

namespace stmh {

/// Malformed or invalid configuration. `what()` carries "<source>:<line>:<col>: "
/// when the offending node is known.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TargetSpec {
  std::optional<double> symmetric_pair;  // separation D of the two-mode benchmark
  std::vector<Vector> means;
  Matrix covariance;
  std::vector<double> weights;

  GaussianMixtureTarget build() const;
};

enum class ScheduleMode { practical, theory };
enum class LadderSource { quadrature, estimate, unit };

struct ScheduleSpec {
  ScheduleMode mode = ScheduleMode::practical;
  int levels = 0;  // required in practical mode
  double epsilon = 0.1;
  ScheduleConstants constants;
  LadderSource zhat_source = LadderSource::quadrature;
  EstimationOptions estimation;
};

struct SamplerSpec {
  double lambda = 0.5;
  std::optional<double> eta;  // defaults to the schedule's eta
  bool lazy = false;
  double laziness = 0.0;
  std::int64_t steps = 10000;
  std::int64_t record_every = 1;
  std::optional<std::vector<double>> start;  // drawn from N(0, sigma0^2 I) when absent
  int start_level = 1;
};

struct VerifySpec {
  int instances = 20;
  std::uint64_t seed_offset = 1;
  int trials = 100;
  double epsilon = 0.1;
  double c3_scale = 1.0;
  bool mixing = true;
};

struct Config {
  std::string source = "<config>";
  std::string text;  // normalized document after overrides, hashed into the manifest
  std::uint64_t seed = 0;
  int threads = 0;
  bool has_target = false;
  bool has_schedule = false;
  TargetSpec target;
  ScheduleSpec schedule;
  SamplerSpec sampler;
  ExperimentConfig experiment;
  VerifySpec verify;
};

/// Parses YAML text. `overrides` are "dotted.key=value" strings applied to the
/// document before validation (value parsed as YAML). Throws ConfigError.
Config parse_config(const std::string& text, const std::string& source = "<config>",
                    const std::vector<std::string>& overrides = {});
Config load_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// Schedule for the configured target (practical or theory mode).
ScheduleParams build_schedule(const Config& cfg, const GaussianMixtureTarget& target);

/// Ladder for sampling: partition estimates from the configured source.
Ladder build_ladder(const Config& cfg, const GaussianMixtureTarget& target,
                    const ScheduleParams& schedule);

}  // namespace stmh
