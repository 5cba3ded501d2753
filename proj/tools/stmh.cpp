#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "stmh/config.hpp"
#include "stmh/error.hpp"
#include "stmh/experiments.hpp"
#include "stmh/kernels.hpp"
#include "stmh/ladder.hpp"
#include "stmh/parallel.hpp"
#include "stmh/spectral.hpp"

namespace fs = std::filesystem;
using namespace stmh;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitVerification = 4;

constexpr const char* kCMNote =
    "C_M = max{3 theta C3, theta C1 C2 ((2 + lambda) C3 + 1) / (phi (1 - lambda))} with C1 = 1; "
    "the second term carries no extra trailing factor, and lazy chains use lambda_eff = (1 - zeta) lambda";

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  std::optional<std::int64_t> steps;
  std::string kind = "all";
};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

class Run {
 public:
  Run(std::string command, const Options& opts, int argc, char** argv) : command_(std::move(command)), opts_(opts) {
    for (int k = 0; k < argc; ++k) argv_.emplace_back(argv[k]);
  }

  Config load() {
    cfg_ = load_config(opts_.config, opts_.overrides);
    if (opts_.seed) cfg_.seed = *opts_.seed;
    if (opts_.threads) cfg_.threads = *opts_.threads;
    loaded_ = true;
    return cfg_;
  }

  fs::path out(const std::string& name) {
    fs::create_directories(opts_.out_dir);
    outputs_.push_back(name);
    return fs::path(opts_.out_dir) / name;
  }

  void note(const std::string& s) { notes_.push_back(s); }

  void finish(int code, const std::string& error = {}) {
    nlohmann::json m;
    m["command"] = command_;
    m["argv"] = argv_;
    m["config_path"] = opts_.config;
    m["overrides"] = opts_.overrides;
    if (loaded_) {
      m["config_hash"] = "fnv1a64:" + hex(fnv1a(cfg_.text));
      m["config"] = cfg_.text;
      m["seed"] = cfg_.seed;
      m["threads"] = cfg_.threads;
      m["threads_effective"] = cfg_.threads > 0 ? cfg_.threads : default_threads();
    }
    m["versions"] = {{"stmh", STMH_VERSION},
                     {"compiler", __VERSION__},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"yaml-cpp", STMH_YAMLCPP_VERSION}};
    m["outputs"] = outputs_;
    m["notes"] = notes_;
    m["exit_code"] = code;
    if (!error.empty()) m["error"] = error;
    try {
      fs::create_directories(opts_.out_dir);
      std::ofstream(fs::path(opts_.out_dir) / "manifest.json") << m.dump(2) << '\n';
    } catch (const std::exception& e) {
      std::cerr << "warning: could not write manifest: " << e.what() << '\n';
    }
  }

 private:
  std::string command_;
  Options opts_;
  std::vector<std::string> argv_;
  Config cfg_;
  bool loaded_ = false;
  std::vector<std::string> outputs_;
  std::vector<std::string> notes_;
};

void require_target_schedule(const Config& cfg) {
  if (!cfg.has_target) throw ConfigError(cfg.source + ": a target section is required");
  if (!cfg.has_schedule) throw ConfigError(cfg.source + ": a schedule section is required");
}

void write_ladder(std::ostream& os, const Ladder& ladder) {
  os << "i,beta,log_zhat\n" << std::setprecision(17);
  for (int i = 0; i < ladder.levels(); ++i)
    os << i + 1 << ',' << ladder.betas[static_cast<std::size_t>(i)] << ','
       << ladder.log_zhat[static_cast<std::size_t>(i)] << '\n';
}

int cmd_sample(Run& run, const Options& opts) {
  const Config cfg = run.load();
  require_target_schedule(cfg);
  const GaussianMixtureTarget target = cfg.target.build();
  const ScheduleParams schedule = build_schedule(cfg, target);
  for (const auto& w : schedule.warnings) std::cerr << "warning: " << w << '\n';

  STConfig st;
  st.ladder = build_ladder(cfg, target, schedule);
  st.lambda = schedule.lambda;
  st.eta = schedule.eta;
  st.lazy = cfg.sampler.lazy;
  st.laziness = cfg.sampler.laziness;
  st.seed = cfg.seed;
  st.validate();
  if (cfg.sampler.start_level > st.ladder.levels())
    throw ConfigError(cfg.source + ": sampler.start_level exceeds the number of levels");

  Rng rng = Rng::stream(cfg.seed, 0);
  Vector x0;
  if (cfg.sampler.start) {
    if (static_cast<int>(cfg.sampler.start->size()) != target.dim())
      throw ConfigError(cfg.source + ": sampler.start has the wrong dimension");
    x0 = Eigen::Map<const Vector>(cfg.sampler.start->data(), target.dim());
  } else {
    x0 = sample_initial(target.dim(), schedule.sigma0_sq, rng);
  }
  const std::int64_t steps = opts.steps.value_or(cfg.sampler.steps);
  if (steps < 0) throw ConfigError("--steps must be >= 0");
  const std::int64_t every = cfg.sampler.record_every;

  std::ofstream os(run.out("samples.csv"));
  os << "step,level";
  for (int a = 0; a < target.dim(); ++a) os << ",x" << a + 1;
  os << '\n' << std::setprecision(17);
  auto emit = [&](std::int64_t n, const STState& s) {
    os << n << ',' << s.level;
    for (Eigen::Index a = 0; a < s.x.size(); ++a) os << ',' << s.x[a];
    os << '\n';
  };

  TemperingChain chain(target, st, STState{cfg.sampler.start_level, x0});
  emit(0, chain.state());
  std::vector<std::int64_t> visits(static_cast<std::size_t>(st.ladder.levels()), 0);
  for (std::int64_t n = 1; n <= steps; ++n) {
    chain.step(rng);
    ++visits[static_cast<std::size_t>(chain.level() - 1)];
    if (n % every == 0) emit(n, chain.state());
  }
  std::cout << "sampled " << steps << " steps over " << st.ladder.levels() << " levels\n";
  if (steps > 0) {
    std::cout << "level occupancy:";
    for (auto v : visits) std::cout << ' ' << std::setprecision(4) << static_cast<double>(v) / steps;
    std::cout << '\n';
  }
  return kExitOk;
}

int cmd_estimate_z(Run& run) {
  const Config cfg = run.load();
  require_target_schedule(cfg);
  const GaussianMixtureTarget target = cfg.target.build();
  const ScheduleParams schedule = build_schedule(cfg, target);
  for (const auto& w : schedule.warnings) std::cerr << "warning: " << w << '\n';
  EstimationOptions est = cfg.schedule.estimation;
  est.seed = cfg.seed;
  est.threads = cfg.threads;
  const Ladder ladder = estimate_partitions(target, schedule, est);
  std::ofstream os(run.out("ladder.csv"));
  write_ladder(os, ladder);
  std::cout << "estimated " << ladder.levels() << " partition ratios\n";
  return kExitOk;
}

int cmd_verify(Run& run) {
  const Config cfg = run.load();
  const VerifySpec& v = cfg.verify;
  run.note(kCMNote);
  InstanceCheckOptions copts;
  copts.trials = v.trials;
  copts.epsilon = v.epsilon;
  copts.c3_scale = v.c3_scale;
  copts.mixing = v.mixing;

  std::vector<InstanceChecks> rows(static_cast<std::size_t>(v.instances));
  parallel_for(rows.size(), cfg.threads, [&](std::size_t k) {
    const RandomInstance inst = random_instance(cfg.seed + v.seed_offset + k);
    rows[k] = check_instance(inst, copts);
  });

  std::vector<VerificationRow> report;
  int failures = 0;
  for (const auto& r : rows) {
    report.push_back({r.seed, r.L, r.n, r.m, r.theorem});
    if (!r.passed()) ++failures;
  }
  {
    std::ofstream os(run.out("verification.csv"));
    write_verification_report(os, report);
  }
  {
    std::ofstream os(run.out("checks.csv"));
    write_instance_checks(os, rows);
  }
  std::cout << rows.size() - failures << " of " << rows.size() << " instances passed every check\n";
  return failures == 0 ? kExitOk : kExitVerification;
}

int cmd_experiment(Run& run, const Options& opts) {
  const Config cfg = run.load();
  ExperimentConfig ec = cfg.experiment;
  ec.seed = cfg.seed;
  ec.threads = cfg.threads;
  ec.validate();
  const bool scaling = opts.kind == "all" || opts.kind == "scaling";
  const bool accuracy = opts.kind == "all" || opts.kind == "accuracy";
  if (scaling) {
    const auto rows = run_scaling_experiment(ec);
    std::ofstream os(run.out("scaling.csv"));
    write_scaling_csv(os, rows);
    std::vector<double> x, y;
    for (const auto& r : rows)
      if (r.algorithm == Algorithm::stmh) {
        x.push_back(r.separation * r.separation);
        y.push_back(static_cast<double>(r.crossing));
      }
    if (x.size() >= 2) std::cout << "stmh crossing vs D^2: R^2 = " << linear_fit(x, y).r2 << '\n';
  }
  if (accuracy) {
    const auto rows = run_accuracy_experiment(ec);
    std::ofstream os(run.out("accuracy.csv"));
    write_accuracy_csv(os, rows);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulated tempering sampler, partition estimation, spectral verification and experiments"};
  app.require_subcommand(1);
  Options opts;
  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", opts.config, "YAML config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", opts.seed, "Override the config seed");
    sub->add_option("--threads", opts.threads, "Worker cap (0 = all cores)")->check(CLI::NonNegativeNumber);
    sub->add_option("-o,--out-dir", opts.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--set", opts.overrides, "Override a config field: section.key=value (repeatable)");
  };
  auto* sample = app.add_subcommand("sample", "Run the tempering sampler and write samples.csv");
  common(sample);
  sample->add_option("--steps", opts.steps, "Number of steps (overrides sampler.steps)");
  auto* estimate = app.add_subcommand("estimate-z", "Estimate partition ratios and write ladder.csv");
  common(estimate);
  auto* verify = app.add_subcommand("verify", "Run the exact checks on random discrete instances");
  common(verify);
  auto* experiment = app.add_subcommand("experiment", "Run the scaling and accuracy experiments");
  common(experiment);
  experiment->add_option("--kind", opts.kind, "scaling, accuracy or all")
      ->check(CLI::IsMember({"scaling", "accuracy", "all"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  CLI::App* chosen = app.get_subcommands().front();
  Run run(chosen->get_name(), opts, argc, argv);
  int code = kExitOk;
  std::string error;
  try {
    if (chosen == sample) code = cmd_sample(run, opts);
    else if (chosen == estimate) code = cmd_estimate_z(run);
    else if (chosen == verify) code = cmd_verify(run);
    else code = cmd_experiment(run, opts);
  } catch (const ConfigError& e) {
    error = e.what();
    code = kExitConfig;
  } catch (const ArgumentError& e) {
    error = std::string("invalid parameters: ") + e.what();
    code = kExitConfig;
  } catch (const EstimationStallError& e) {
    error = e.what();
    code = kExitNumeric;
  } catch (const std::runtime_error& e) {
    error = e.what();
    code = kExitNumeric;
  } catch (const InvariantError& e) {
    error = std::string("internal error: ") + e.what();
    code = kExitNumeric;
  }
  if (!error.empty()) std::cerr << "error: " << error << '\n';
  if (code == kExitVerification) std::cerr << "verification failed\n";
  run.finish(code, error);
  return code;
}
