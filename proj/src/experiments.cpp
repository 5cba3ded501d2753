#include "stmh/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "stmh/error.hpp"
#include "stmh/parallel.hpp"

namespace stmh {

namespace {

constexpr double kZ95 = 1.959963984540054;

}  // namespace

std::string to_string(Algorithm a) { return a == Algorithm::stmh ? "stmh" : "mh"; }
std::string to_string(ZhatSource z) { return z == ZhatSource::quadrature ? "quadrature" : "estimate"; }

void CompensatedSum::add(double v) {
  const double t = sum_ + v;
  if (std::abs(sum_) >= std::abs(v))
    comp_ += (sum_ - t) + v;
  else
    comp_ += (v - t) + sum_;
  sum_ = t;
}

int ExperimentConfig::levels_for(std::size_t separation_index) const {
  if (levels.size() == 1) return levels.front();
  return levels.at(separation_index);
}

void ExperimentConfig::validate() const {
  if (separations.empty()) throw ArgumentError("experiment needs at least one separation");
  for (double D : separations)
    if (!(D >= 0.0)) throw ArgumentError("separations must be non-negative");
  if (levels.empty()) throw ArgumentError("experiment levels are required");
  if (levels.size() != 1 && levels.size() != separations.size())
    throw ArgumentError("levels must give one value or one per separation");
  for (int L : levels)
    if (L < 1) throw ArgumentError("levels must be positive");
  if (replicates < 1) throw ArgumentError("replicates must be positive");
  if (!(threshold > 0.0)) throw ArgumentError("threshold must be positive");
  if (start.size() != 2) throw ArgumentError("start point must be 2-dimensional");
  if (!(lambda > 0.0 && lambda < 1.0)) throw ArgumentError("lambda must lie in (0, 1)");
  if (!(eta > 0.0) || !(baseline_eta > 0.0)) throw ArgumentError("step sizes must be positive");
  if (record_every < 1) throw ArgumentError("record_every must be positive");
  if (initial_horizon < record_every) throw ArgumentError("initial_horizon must be >= record_every");
  if (max_steps < initial_horizon) throw ArgumentError("max_steps must be >= initial_horizon");
  if (algorithms.empty()) throw ArgumentError("experiment needs at least one algorithm");
  if (accuracy_levels < 1) throw ArgumentError("accuracy levels must be positive");
  for (std::size_t k = 1; k < accuracy_steps.size(); ++k)
    if (accuracy_steps[k] <= accuracy_steps[k - 1])
      throw ArgumentError("accuracy steps must be strictly increasing");
  if (!accuracy_steps.empty() && accuracy_steps.front() < 1)
    throw ArgumentError("accuracy steps must be positive");
}

STConfig experiment_chain(const GaussianMixtureTarget& target, Algorithm algorithm, int levels,
                          const ExperimentConfig& cfg) {
  STConfig sc;
  sc.lambda = cfg.lambda;
  sc.seed = cfg.seed;
  if (algorithm == Algorithm::mh) {
    sc.ladder = Ladder::unit({1.0});
    sc.eta = cfg.baseline_eta;
    return sc;
  }
  sc.eta = cfg.eta;
  ScheduleParams schedule = practical_schedule(target, levels);
  schedule.lambda = cfg.lambda;
  schedule.eta = cfg.eta;
  if (cfg.zhat_source == ZhatSource::quadrature) {
    sc.ladder = quadrature_ladder(target, schedule.betas);
  } else {
    EstimationOptions est = cfg.estimation;
    est.threads = cfg.threads;
    est.seed = cfg.estimation.seed != 0 ? cfg.estimation.seed : cfg.seed ^ 0xe57e57e5ULL;
    sc.ladder = estimate_partitions(target, schedule, est);
  }
  return sc;
}

ReplicateBank::ReplicateBank(const GaussianMixtureTarget& target, const STConfig& config,
                             const Vector& start, int replicates, std::uint64_t seed,
                             std::uint64_t stream_base)
    : target_(&target), config_(&config), dim_(target.dim()) {
  if (replicates < 1) throw ArgumentError("replicates must be positive");
  reps_.reserve(static_cast<std::size_t>(replicates));
  for (int k = 0; k < replicates; ++k)
    reps_.push_back(Replicate{TemperingChain(target, config, STState{1, start}),
                              Rng::stream(seed, stream_base + static_cast<std::uint64_t>(k)), 0, 0,
                              Vector::Zero(dim_), {}});
}

void ReplicateBank::advance(const std::vector<std::int64_t>& record_steps, int threads) {
  for (std::size_t k = 0; k < record_steps.size(); ++k) {
    const std::int64_t prev = k == 0 ? (steps_.empty() ? 0 : steps_.back()) : record_steps[k - 1];
    if (record_steps[k] <= prev) throw ArgumentError("record steps must be strictly increasing");
  }
  const int top = config_->ladder.levels();
  const std::size_t width = static_cast<std::size_t>(dim_) + 1;
  parallel_for(reps_.size(), threads, [&](std::size_t r) {
    Replicate& rep = reps_[r];
    rep.trace.reserve(rep.trace.size() + record_steps.size() * width);
    for (std::int64_t target_step : record_steps) {
      while (rep.step < target_step) {
        rep.chain.step(rep.rng);
        ++rep.step;
        if (rep.chain.level() == top) {
          rep.sum += rep.chain.position();
          ++rep.samples;
        }
      }
      rep.trace.push_back(static_cast<double>(rep.samples));
      for (int c = 0; c < dim_; ++c)
        rep.trace.push_back(rep.samples > 0 ? rep.sum[c] / static_cast<double>(rep.samples) : 0.0);
    }
  });
  steps_.insert(steps_.end(), record_steps.begin(), record_steps.end());
}

std::vector<Aggregate> ReplicateBank::aggregate() const {
  const std::size_t width = static_cast<std::size_t>(dim_) + 1;
  std::vector<Aggregate> out(steps_.size());
  for (std::size_t t = 0; t < steps_.size(); ++t) {
    Aggregate& a = out[t];
    a.step = steps_[t];
    std::vector<CompensatedSum> sums(static_cast<std::size_t>(dim_));
    for (const auto& rep : reps_) {
      const double* row = rep.trace.data() + t * width;
      if (row[0] <= 0.0) continue;
      ++a.contributing;
      for (int c = 0; c < dim_; ++c) sums[static_cast<std::size_t>(c)].add(row[1 + c]);
    }
    a.mean = Vector::Zero(dim_);
    if (a.contributing == 0) {
      a.norm = std::numeric_limits<double>::quiet_NaN();
      a.se = std::numeric_limits<double>::infinity();
      continue;
    }
    for (int c = 0; c < dim_; ++c) a.mean[c] = sums[static_cast<std::size_t>(c)].value() / a.contributing;
    a.norm = a.mean.norm();
    if (a.contributing < 2) {
      a.se = std::numeric_limits<double>::infinity();
      continue;
    }
    // Delta method on |mean|: gradient mean / |mean|; at the origin the
    // largest-variance direction is the conservative choice.
    Matrix cov = Matrix::Zero(dim_, dim_);
    std::vector<CompensatedSum> cs(static_cast<std::size_t>(dim_ * dim_));
    for (const auto& rep : reps_) {
      const double* row = rep.trace.data() + t * width;
      if (row[0] <= 0.0) continue;
      for (int u = 0; u < dim_; ++u)
        for (int v = 0; v < dim_; ++v)
          cs[static_cast<std::size_t>(u * dim_ + v)].add((row[1 + u] - a.mean[u]) * (row[1 + v] - a.mean[v]));
    }
    for (int u = 0; u < dim_; ++u)
      for (int v = 0; v < dim_; ++v)
        cov(u, v) = cs[static_cast<std::size_t>(u * dim_ + v)].value() / (a.contributing - 1);
    double var_dir;
    if (a.norm > 0.0) {
      const Vector g = a.mean / a.norm;
      var_dir = g.dot(cov * g);
    } else {
      var_dir = Eigen::SelfAdjointEigenSolver<Matrix>(cov, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
    }
    a.se = std::sqrt(std::max(0.0, var_dir) / a.contributing);
  }
  return out;
}

std::vector<ExperimentRecord> ReplicateBank::records(int replicate, Algorithm algorithm,
                                                     double separation) const {
  const Replicate& rep = reps_.at(static_cast<std::size_t>(replicate));
  const std::size_t width = static_cast<std::size_t>(dim_) + 1;
  std::vector<ExperimentRecord> out;
  for (std::size_t t = 0; t < steps_.size(); ++t) {
    const double* row = rep.trace.data() + t * width;
    ExperimentRecord r;
    r.replicate = replicate;
    r.algorithm = algorithm;
    r.separation = separation;
    r.step = steps_[t];
    r.samples = static_cast<std::int64_t>(row[0]);
    r.mean = Eigen::Map<const Vector>(row + 1, dim_);
    r.mean_norm = r.mean.norm();
    out.push_back(std::move(r));
  }
  return out;
}

std::int64_t first_crossing(const std::vector<Aggregate>& aggs, double threshold, double z) {
  for (const auto& a : aggs) {
    if (a.contributing == 0) continue;
    const double v = a.norm + z * a.se;
    if (v < threshold) return a.step;
  }
  return -1;
}

std::vector<ScalingRow> run_scaling_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const Vector start = Eigen::Map<const Vector>(cfg.start.data(), 2);
  std::vector<ScalingRow> rows;
  for (Algorithm alg : cfg.algorithms) {
    for (std::size_t k = 0; k < cfg.separations.size(); ++k) {
      const double D = cfg.separations[k];
      const GaussianMixtureTarget target = GaussianMixtureTarget::symmetric_pair(D);
      const STConfig chain = experiment_chain(target, alg, cfg.levels_for(k), cfg);
      const std::uint64_t base = (static_cast<std::uint64_t>(alg == Algorithm::stmh ? 1 : 2) << 48) |
                                 (static_cast<std::uint64_t>(k) << 32);
      ReplicateBank bank(target, chain, start, cfg.replicates, cfg.seed, base);

      std::int64_t horizon = 0;
      auto round_up = [&](std::int64_t s) {
        return std::min(cfg.max_steps, (s + cfg.record_every - 1) / cfg.record_every * cfg.record_every);
      };
      std::int64_t next = round_up(cfg.initial_horizon);
      ScalingRow row{alg, D, -1, -1, -1, false};
      for (;;) {
        std::vector<std::int64_t> steps;
        for (std::int64_t s = horizon + cfg.record_every; s <= next; s += cfg.record_every) steps.push_back(s);
        if (steps.empty() || steps.back() != next) steps.push_back(next);
        bank.advance(steps, cfg.threads);
        horizon = next;
        const auto aggs = bank.aggregate();
        row.crossing = first_crossing(aggs, cfg.threshold, 0.0);
        row.lo95 = first_crossing(aggs, cfg.threshold, -kZ95);
        row.hi95 = first_crossing(aggs, cfg.threshold, kZ95);
        if (row.hi95 >= 0 || horizon >= cfg.max_steps) break;
        next = round_up(2 * horizon);
      }
      row.censored = row.crossing < 0;
      if (row.crossing < 0) row.crossing = cfg.max_steps;
      if (row.lo95 < 0) row.lo95 = cfg.max_steps;
      if (row.hi95 < 0) row.hi95 = cfg.max_steps;
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<std::int64_t> default_accuracy_steps() {
  std::vector<std::int64_t> steps;
  for (int k = 0; k < 24; ++k) steps.push_back(2000 + static_cast<std::int64_t>(k) * (198000 / 23));
  return steps;
}

std::vector<AccuracyRow> run_accuracy_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const Vector start = Eigen::Map<const Vector>(cfg.start.data(), 2);
  const std::vector<std::int64_t> steps =
      cfg.accuracy_steps.empty() ? default_accuracy_steps() : cfg.accuracy_steps;
  const double D = cfg.accuracy_separation;
  const GaussianMixtureTarget target = GaussianMixtureTarget::symmetric_pair(D);
  std::vector<AccuracyRow> rows;
  for (Algorithm alg : cfg.algorithms) {
    const STConfig chain = experiment_chain(target, alg, cfg.accuracy_levels, cfg);
    const std::uint64_t base = (static_cast<std::uint64_t>(alg == Algorithm::stmh ? 3 : 4) << 48);
    ReplicateBank bank(target, chain, start, cfg.replicates, cfg.seed, base);
    bank.advance(steps, cfg.threads);
    for (const auto& a : bank.aggregate()) {
      AccuracyRow row;
      row.algorithm = alg;
      row.separation = D;
      row.steps = a.step;
      row.mean_norm = a.norm;
      if (a.contributing == 0 || !(a.norm > 0.0)) {
        row.flagged = true;
        row.log2_inv_norm = row.lo95 = row.hi95 = std::numeric_limits<double>::quiet_NaN();
      } else {
        const double l = std::log(1.0 / a.norm);
        row.log2_inv_norm = l * l;
        const double se = a.se * std::abs(2.0 * l / a.norm);
        row.lo95 = row.log2_inv_norm - kZ95 * se;
        row.hi95 = row.log2_inv_norm + kZ95 * se;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

void write_scaling_csv(std::ostream& out, const std::vector<ScalingRow>& rows) {
  out << "algorithm,D,D_squared,crossing_N,lo95_N,hi95_N,censored\n";
  out.precision(17);
  for (const auto& r : rows)
    out << to_string(r.algorithm) << ',' << r.separation << ',' << r.separation * r.separation << ','
        << r.crossing << ',' << r.lo95 << ',' << r.hi95 << ',' << (r.censored ? "true" : "false") << '\n';
}

void write_accuracy_csv(std::ostream& out, const std::vector<AccuracyRow>& rows) {
  out << "algorithm,D,N,mean_norm,log2_inv_norm,lo95,hi95\n";
  out.precision(17);
  for (const auto& r : rows)
    out << to_string(r.algorithm) << ',' << r.separation << ',' << r.steps << ',' << r.mean_norm << ','
        << r.log2_inv_norm << ',' << r.lo95 << ',' << r.hi95 << '\n';
}

double tv_lower_bound_from_mean(const Vector& mean, double C) {
  if (!(C > 0.0)) throw ArgumentError("C must be positive");
  const double m2 = mean.squaredNorm();
  return m2 / (C + m2);
}

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ArgumentError("linear fit needs >= 2 paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    syy += (y[k] - my) * (y[k] - my);
    sxy += (x[k] - mx) * (y[k] - my);
  }
  if (!(sxx > 0.0)) throw ArgumentError("linear fit needs non-constant x");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

}  // namespace stmh
