#include "stmh/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

#include "stmh/error.hpp"

namespace stmh {
namespace {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& msg) const {
    std::ostringstream os;
    os << source_;
    if (node && !node.Mark().is_null()) os << ':' << node.Mark().line + 1 << ':' << node.Mark().column + 1;
    os << ": " << msg;
    throw ConfigError(os.str());
  }

  void require_map(const YAML::Node& node, const std::string& where) const {
    if (!node.IsMap()) fail(node, where + " must be a mapping");
  }

  // Rejects keys outside `allowed` so typos do not silently fall back to defaults.
  void check_keys(const YAML::Node& node, const std::string& where,
                  std::initializer_list<const char*> allowed) const {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      if (!ok.count(key)) fail(kv.first, "unknown key '" + key + "' in " + where);
    }
  }

  template <class T>
  T as(const YAML::Node& node, const std::string& what) const {
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      fail(node, "cannot read " + what);
    }
  }

  template <class T>
  void get(const YAML::Node& parent, const char* key, T& out) const {
    if (const auto node = parent[key]) out = as<T>(node, key);
  }

  template <class T>
  void get(const YAML::Node& parent, const char* key, std::optional<T>& out) const {
    if (const auto node = parent[key]) out = as<T>(node, key);
  }

  Vector vector(const YAML::Node& node, const std::string& what) const {
    if (!node.IsSequence() || node.size() == 0) fail(node, what + " must be a non-empty list");
    Vector v(static_cast<Eigen::Index>(node.size()));
    for (std::size_t k = 0; k < node.size(); ++k) v(static_cast<Eigen::Index>(k)) = as<double>(node[k], what);
    return v;
  }

  const std::string& source() const { return source_; }

 private:
  std::string source_;
};

template <class E>
E parse_enum(const Reader& rd, const YAML::Node& node, const std::string& what,
             std::initializer_list<std::pair<const char*, E>> options) {
  const auto s = rd.as<std::string>(node, what);
  std::string names;
  for (const auto& [name, value] : options) {
    if (s == name) return value;
    names += names.empty() ? name : std::string(", ") + name;
  }
  rd.fail(node, what + " must be one of: " + names);
}

void apply_override(YAML::Node& root, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + spec + "': expected key.path=value");
  const std::string path = spec.substr(0, eq);
  YAML::Node value;
  try {
    value = YAML::Load(spec.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    throw ConfigError("override '" + spec + "': " + e.msg);
  }
  std::vector<std::string> keys;
  std::stringstream ss(path);
  for (std::string k; std::getline(ss, k, '.');) {
    if (k.empty()) throw ConfigError("override '" + spec + "': empty key");
    keys.push_back(k);
  }
  // yaml-cpp nodes are handles, so walk with fresh handles rather than by
  // reassigning one (assignment would overwrite the referenced node).
  std::vector<YAML::Node> chain{root};
  for (std::size_t k = 0; k + 1 < keys.size(); ++k) {
    YAML::Node next = chain.back()[keys[k]];
    if (!next) {
      chain.back()[keys[k]] = YAML::Node(YAML::NodeType::Map);
      next = chain.back()[keys[k]];
    } else if (!next.IsMap()) {
      throw ConfigError("override '" + spec + "': '" + keys[k] + "' is not a section");
    }
    chain.push_back(next);
  }
  chain.back()[keys.back()] = value;
}

void read_estimation(const Reader& rd, const YAML::Node& node, EstimationOptions& est) {
  rd.require_map(node, "estimation");
  rd.check_keys(node, "estimation", {"samples", "steps", "restart_cap"});
  rd.get(node, "samples", est.samples);
  rd.get(node, "steps", est.steps);
  rd.get(node, "restart_cap", est.restart_cap);
  if (est.samples < 1) rd.fail(node["samples"], "samples must be positive");
  if (est.steps < 1) rd.fail(node["steps"], "steps must be positive");
  if (est.restart_cap < 0) rd.fail(node["restart_cap"], "restart_cap must be >= 0");
}

void read_target(const Reader& rd, const YAML::Node& node, TargetSpec& t) {
  rd.require_map(node, "target");
  rd.check_keys(node, "target", {"separation", "means", "covariance", "weights"});
  if (node["separation"]) {
    if (node["means"] || node["covariance"] || node["weights"])
      rd.fail(node, "target: give either separation or means/covariance/weights");
    t.symmetric_pair = rd.as<double>(node["separation"], "separation");
    if (!(*t.symmetric_pair >= 0.0)) rd.fail(node["separation"], "separation must be >= 0");
  } else {
    const auto means = node["means"];
    if (!means || !means.IsSequence() || means.size() == 0) rd.fail(node, "target.means is required");
    for (std::size_t j = 0; j < means.size(); ++j) t.means.push_back(rd.vector(means[j], "mean"));
    const int d = static_cast<int>(t.means.front().size());
    const auto cov = node["covariance"];
    if (!cov) {
      t.covariance = Matrix::Identity(d, d);
    } else if (cov.IsScalar()) {
      t.covariance = rd.as<double>(cov, "covariance") * Matrix::Identity(d, d);
    } else {
      if (!cov.IsSequence() || static_cast<int>(cov.size()) != d)
        rd.fail(cov, "covariance must be a scalar or a d x d list of rows");
      t.covariance.resize(d, d);
      for (int a = 0; a < d; ++a) {
        const Vector row = rd.vector(cov[a], "covariance row");
        if (row.size() != d) rd.fail(cov[a], "covariance row has the wrong length");
        t.covariance.row(a) = row.transpose();
      }
    }
    if (const auto w = node["weights"]) {
      const Vector v = rd.vector(w, "weights");
      t.weights.assign(v.data(), v.data() + v.size());
    } else {
      t.weights.assign(t.means.size(), 1.0 / static_cast<double>(t.means.size()));
    }
  }
  try {
    (void)t.build();
  } catch (const ArgumentError& e) {
    rd.fail(node, std::string("invalid target: ") + e.what());
  }
}

void read_schedule(const Reader& rd, const YAML::Node& node, ScheduleSpec& s) {
  rd.require_map(node, "schedule");
  rd.check_keys(node, "schedule", {"mode", "levels", "epsilon", "constants", "zhat_source", "estimation"});
  if (const auto m = node["mode"])
    s.mode = parse_enum<ScheduleMode>(rd, m, "schedule.mode",
                                      {{"practical", ScheduleMode::practical}, {"theory", ScheduleMode::theory}});
  rd.get(node, "levels", s.levels);
  rd.get(node, "epsilon", s.epsilon);
  if (const auto c = node["constants"]) {
    rd.require_map(c, "schedule.constants");
    rd.check_keys(c, "schedule.constants", {"beta1", "sigma0", "steps", "steps_exp"});
    rd.get(c, "beta1", s.constants.beta1);
    rd.get(c, "sigma0", s.constants.sigma0);
    rd.get(c, "steps", s.constants.steps);
    rd.get(c, "steps_exp", s.constants.steps_exp);
    for (double v : {s.constants.beta1, s.constants.sigma0, s.constants.steps, s.constants.steps_exp})
      if (!(v > 0.0)) rd.fail(c, "schedule constants must be positive");
  }
  if (const auto z = node["zhat_source"])
    s.zhat_source = parse_enum<LadderSource>(
        rd, z, "schedule.zhat_source",
        {{"quadrature", LadderSource::quadrature}, {"estimate", LadderSource::estimate}, {"unit", LadderSource::unit}});
  if (const auto e = node["estimation"]) read_estimation(rd, e, s.estimation);
  if (s.mode == ScheduleMode::practical && s.levels < 1)
    rd.fail(node, "schedule.levels (>= 1) is required in practical mode");
  if (!(s.epsilon > 0.0 && s.epsilon < 1.0)) rd.fail(node["epsilon"], "epsilon must lie in (0, 1)");
}

void read_sampler(const Reader& rd, const YAML::Node& node, SamplerSpec& s) {
  rd.require_map(node, "sampler");
  rd.check_keys(node, "sampler",
                {"lambda", "eta", "lazy", "laziness", "steps", "record_every", "start", "start_level"});
  rd.get(node, "lambda", s.lambda);
  rd.get(node, "eta", s.eta);
  rd.get(node, "lazy", s.lazy);
  rd.get(node, "laziness", s.laziness);
  rd.get(node, "steps", s.steps);
  rd.get(node, "record_every", s.record_every);
  rd.get(node, "start_level", s.start_level);
  if (const auto st = node["start"]) {
    const Vector v = rd.vector(st, "sampler.start");
    s.start = std::vector<double>(v.data(), v.data() + v.size());
  }
  if (!(s.lambda > 0.0 && s.lambda < 1.0)) rd.fail(node["lambda"], "lambda must lie in (0, 1)");
  if (s.eta && !(*s.eta > 0.0)) rd.fail(node["eta"], "eta must be positive");
  if (!(s.laziness >= 0.0 && s.laziness <= 0.5)) rd.fail(node["laziness"], "laziness must lie in [0, 1/2]");
  if (s.steps < 0) rd.fail(node["steps"], "steps must be >= 0");
  if (s.record_every < 1) rd.fail(node["record_every"], "record_every must be positive");
  if (s.start_level < 1) rd.fail(node["start_level"], "start_level must be >= 1");
}

std::vector<Algorithm> read_algorithms(const Reader& rd, const YAML::Node& node) {
  if (!node.IsSequence() || node.size() == 0) rd.fail(node, "algorithms must be a non-empty list");
  std::vector<Algorithm> out;
  for (const auto& a : node)
    out.push_back(parse_enum<Algorithm>(rd, a, "algorithm", {{"stmh", Algorithm::stmh}, {"mh", Algorithm::mh}}));
  return out;
}

void read_experiment(const Reader& rd, const YAML::Node& node, ExperimentConfig& e) {
  rd.require_map(node, "experiment");
  rd.check_keys(node, "experiment",
                {"separations", "levels", "replicates", "threshold", "start", "lambda", "eta", "baseline_eta",
                 "record_every", "initial_horizon", "max_steps", "algorithms", "zhat_source", "estimation",
                 "accuracy"});
  if (const auto s = node["separations"]) {
    const Vector v = rd.vector(s, "separations");
    e.separations.assign(v.data(), v.data() + v.size());
  }
  if (const auto l = node["levels"]) {
    e.levels.clear();
    if (l.IsSequence()) {
      for (const auto& x : l) e.levels.push_back(rd.as<int>(x, "levels"));
    } else {
      e.levels.push_back(rd.as<int>(l, "levels"));
    }
  }
  rd.get(node, "replicates", e.replicates);
  rd.get(node, "threshold", e.threshold);
  if (const auto s = node["start"]) {
    const Vector v = rd.vector(s, "experiment.start");
    e.start.assign(v.data(), v.data() + v.size());
  }
  rd.get(node, "lambda", e.lambda);
  rd.get(node, "eta", e.eta);
  rd.get(node, "baseline_eta", e.baseline_eta);
  rd.get(node, "record_every", e.record_every);
  rd.get(node, "initial_horizon", e.initial_horizon);
  rd.get(node, "max_steps", e.max_steps);
  if (const auto a = node["algorithms"]) e.algorithms = read_algorithms(rd, a);
  if (const auto z = node["zhat_source"])
    e.zhat_source = parse_enum<ZhatSource>(rd, z, "experiment.zhat_source",
                                           {{"quadrature", ZhatSource::quadrature}, {"estimate", ZhatSource::estimate}});
  if (const auto est = node["estimation"]) read_estimation(rd, est, e.estimation);
  if (const auto acc = node["accuracy"]) {
    rd.require_map(acc, "experiment.accuracy");
    rd.check_keys(acc, "experiment.accuracy", {"separation", "levels", "steps"});
    rd.get(acc, "separation", e.accuracy_separation);
    rd.get(acc, "levels", e.accuracy_levels);
    if (const auto st = acc["steps"]) {
      if (!st.IsSequence()) rd.fail(st, "accuracy.steps must be a list");
      e.accuracy_steps.clear();
      for (const auto& x : st) e.accuracy_steps.push_back(rd.as<std::int64_t>(x, "accuracy step"));
    }
  }
  try {
    e.validate();
  } catch (const ArgumentError& err) {
    rd.fail(node, std::string("invalid experiment: ") + err.what());
  }
}

void read_verify(const Reader& rd, const YAML::Node& node, VerifySpec& v) {
  rd.require_map(node, "verify");
  rd.check_keys(node, "verify", {"instances", "seed_offset", "trials", "epsilon", "c3_scale", "mixing"});
  rd.get(node, "instances", v.instances);
  rd.get(node, "seed_offset", v.seed_offset);
  rd.get(node, "trials", v.trials);
  rd.get(node, "epsilon", v.epsilon);
  rd.get(node, "c3_scale", v.c3_scale);
  rd.get(node, "mixing", v.mixing);
  if (v.instances < 1) rd.fail(node["instances"], "instances must be positive");
  if (v.trials < 1) rd.fail(node["trials"], "trials must be positive");
  if (!(v.epsilon > 0.0 && v.epsilon < 1.0)) rd.fail(node["epsilon"], "epsilon must lie in (0, 1)");
  if (!(v.c3_scale > 0.0)) rd.fail(node["c3_scale"], "c3_scale must be positive");
}

}  // namespace

GaussianMixtureTarget TargetSpec::build() const {
  if (symmetric_pair) return GaussianMixtureTarget::symmetric_pair(*symmetric_pair);
  return GaussianMixtureTarget(means, covariance, weights);
}

Config parse_config(const std::string& text, const std::string& source,
                    const std::vector<std::string>& overrides) {
  Reader rd(source);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    std::ostringstream os;
    os << source << ':' << e.mark.line + 1 << ':' << e.mark.column + 1 << ": " << e.msg;
    throw ConfigError(os.str());
  }
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  rd.require_map(root, "config");
  for (const auto& o : overrides) apply_override(root, o);

  Config cfg;
  cfg.source = source;
  rd.check_keys(root, "config", {"seed", "threads", "target", "schedule", "sampler", "experiment", "verify"});
  rd.get(root, "seed", cfg.seed);
  rd.get(root, "threads", cfg.threads);
  if (cfg.threads < 0) rd.fail(root["threads"], "threads must be >= 0");
  if (const auto n = root["target"]) {
    read_target(rd, n, cfg.target);
    cfg.has_target = true;
  }
  if (const auto n = root["schedule"]) {
    read_schedule(rd, n, cfg.schedule);
    cfg.has_schedule = true;
  }
  if (const auto n = root["sampler"]) read_sampler(rd, n, cfg.sampler);
  if (const auto n = root["experiment"]) {
    // levels has no universal default; require it only when the section is used.
    if (!n["levels"]) rd.fail(n, "experiment.levels is required");
    read_experiment(rd, n, cfg.experiment);
  }
  if (const auto n = root["verify"]) read_verify(rd, n, cfg.verify);

  YAML::Emitter out;
  out << root;
  cfg.text = out.c_str();
  return cfg;
}

Config load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path, overrides);
}

ScheduleParams build_schedule(const Config& cfg, const GaussianMixtureTarget& target) {
  ScheduleConstants constants = cfg.schedule.constants;
  constants.lambda = cfg.sampler.lambda;
  ScheduleParams params = cfg.schedule.mode == ScheduleMode::theory
                              ? theory_schedule(target, cfg.schedule.epsilon, constants)
                              : practical_schedule(target, cfg.schedule.levels, cfg.schedule.epsilon, constants);
  params.lambda = cfg.sampler.lambda;
  if (cfg.sampler.eta) params.eta = *cfg.sampler.eta;
  return params;
}

Ladder build_ladder(const Config& cfg, const GaussianMixtureTarget& target, const ScheduleParams& schedule) {
  switch (cfg.schedule.zhat_source) {
    case LadderSource::quadrature:
      return quadrature_ladder(target, schedule.betas);
    case LadderSource::unit:
      return Ladder::unit(schedule.betas);
    case LadderSource::estimate: {
      EstimationOptions opts = cfg.schedule.estimation;
      opts.seed = cfg.seed;
      opts.threads = cfg.threads;
      return estimate_partitions(target, schedule, opts);
    }
  }
  throw InvariantError("unhandled ladder source");
}

}  // namespace stmh
