#include "srcloc/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "srcloc/errors.hpp"
#include "srcloc/simulate.hpp"

namespace srcloc {

std::string config_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

GridSpec ScenarioConfig::grid() const {
  const auto s = u_scales(model, array, theta0);
  GridSpec g;
  g.half_width = {limits.half_width_factor * s[0], limits.half_width_factor * s[1]};
  g.resolution = limits.resolution > 0 ? limits.resolution : (regime() == Regime::Cusp ? 65 : 257);
  const double lmax = std::max(g.half_width[0], g.half_width[1]);
  const double lmin = std::min(g.half_width[0], g.half_width[1]);
  g.v_half_width = limits.v_factor * lmax / array.nu();
  g.v_step = lmin / (limits.cells_per_width * array.nu());
  return g;
}

namespace {

int line_of(const YAML::Node& node) { return node.Mark().line >= 0 ? node.Mark().line + 1 : 0; }

YAML::Node require(const YAML::Node& parent, const std::string& key, const std::string& where) {
  const YAML::Node node = parent[key];
  if (!node) throw ConfigError("missing field '" + where + key + "'", line_of(parent));
  return node;
}

template <class T>
T as(const YAML::Node& node, const std::string& field) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("field '" + field + "' has the wrong type", line_of(node));
  }
}

double number(const YAML::Node& parent, const std::string& key, const std::string& where) {
  return as<double>(require(parent, key, where), where + key);
}

double number_or(const YAML::Node& parent, const std::string& key, double fallback, const std::string& where) {
  return parent[key] ? as<double>(parent[key], where + key) : fallback;
}

int integer_or(const YAML::Node& parent, const std::string& key, int fallback, const std::string& where) {
  return parent[key] ? as<int>(parent[key], where + key) : fallback;
}

std::array<double, 4> four(const YAML::Node& node, const std::string& field) {
  if (!node.IsSequence() || node.size() != 4) throw ConfigError("field '" + field + "' must list 4 numbers", line_of(node));
  std::array<double, 4> out{};
  for (std::size_t c = 0; c < 4; ++c) out[c] = as<double>(node[c], field);
  return out;
}

AmplitudeProfile amplitude(const YAML::Node& node, const std::string& field) {
  if (node.IsMap()) return {number(node, "level", field + "."), number_or(node, "slope", 0.0, field + ".")};
  return {as<double>(node, field), 0.0};
}

std::array<AmplitudeProfile, 2> amplitude_pair(const YAML::Node& node, const std::string& field) {
  if (!node.IsSequence() || node.size() != 2)
    throw ConfigError("field '" + field + "' must give one amplitude per source", line_of(node));
  return {amplitude(node[0], field), amplitude(node[1], field)};
}

Method method_of(const YAML::Node& node) {
  const auto s = as<std::string>(node, "experiment.estimator");
  if (s == "mle") return Method::MLE;
  if (s == "be") return Method::BE;
  throw ConfigError("experiment.estimator must be 'mle' or 'be'", line_of(node));
}

template <class F>
auto guarded(const YAML::Node& node, F&& f) {
  try {
    return f();
  } catch (const DomainError& e) {
    throw ConfigError(e.what(), line_of(node));
  }
}

}  // namespace

ScenarioConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("YAML syntax error: " + e.msg, e.mark.line + 1);
  }
  if (!root.IsMap()) throw ConfigError("config must be a mapping");

  ScenarioConfig cfg;
  cfg.text = text;
  if (root["scenario"]) cfg.scenario = as<std::string>(root["scenario"], "scenario");
  if (root["seed"]) cfg.seed = as<std::uint64_t>(root["seed"], "seed");

  const YAML::Node det = require(root, "detectors", "");
  const YAML::Node pos = require(det, "positions", "detectors.");
  if (!pos.IsSequence() || pos.size() == 0) throw ConfigError("detectors.positions must be a non-empty list", line_of(pos));
  std::vector<Point> points;
  for (const auto& p : pos) {
    if (!p.IsSequence() || p.size() != 2) throw ConfigError("each detector position must be [x, y]", line_of(p));
    points.push_back({as<double>(p[0], "detectors.positions"), as<double>(p[1], "detectors.positions")});
  }
  const double nu = number_or(det, "nu", 1.0, "detectors.");
  cfg.array = guarded(det, [&] { return DetectorArray(points, nu); });

  const YAML::Node box = require(root, "box", "");
  const auto lower = four(require(box, "lower", "box."), "box.lower");
  const auto upper = four(require(box, "upper", "box."), "box.upper");
  cfg.box = guarded(box, [&] { return ParameterBox(lower, upper); });
  cfg.theta0 = ThetaVector(four(require(root, "theta0", ""), "theta0"));

  const YAML::Node sig = require(root, "signal", "");
  std::optional<FrontShape> shape;
  if (sig["shape"]) {
    const auto s = as<std::string>(sig["shape"], "signal.shape");
    if (s == "smoothstep")
      shape = FrontShape::Smoothstep;
    else if (s == "power")
      shape = FrontShape::Power;
    else
      throw ConfigError("signal.shape must be 'smoothstep' or 'power'", line_of(sig["shape"]));
  }
  const double kappa = number(sig, "kappa", "signal.");
  const double delta = number(sig, "delta", "signal.");
  cfg.model.front = guarded(sig, [&] { return FrontSpec(kappa, delta, shape); });
  cfg.model.lambda0 = number(sig, "lambda0", "signal.");
  cfg.model.horizon = number(sig, "horizon", "signal.");
  cfg.model.n = number_or(sig, "n", 1.0, "signal.");
  if (sig["amplitudes"]) {
    const YAML::Node rows = sig["amplitudes"];
    if (!rows.IsSequence() || rows.size() != cfg.array.size())
      throw ConfigError("signal.amplitudes needs one row per detector", line_of(rows));
    for (const auto& row : rows) cfg.model.amplitudes.push_back(amplitude_pair(row, "signal.amplitudes"));
  } else {
    const auto pair = amplitude_pair(require(sig, "amplitude", "signal."), "signal.amplitude");
    cfg.model.amplitudes.assign(cfg.array.size(), pair);
  }
  guarded(sig, [&] {
    cfg.model.validate(cfg.array.size());
    return 0;
  });

  if (const YAML::Node est = root["estimator"]) {
    cfg.mle.lattice_per_axis = integer_or(est, "lattice", cfg.mle.lattice_per_axis, "estimator.");
    cfg.mle.top_m = integer_or(est, "top_m", cfg.mle.top_m, "estimator.");
    cfg.mle.restarts = integer_or(est, "restarts", cfg.mle.restarts, "estimator.");
    cfg.mle.max_iterations = integer_or(est, "max_iterations", cfg.mle.max_iterations, "estimator.");
    cfg.mle.gradient_tol = number_or(est, "gradient_tol", cfg.mle.gradient_tol, "estimator.");
    cfg.mle.size_tolerance = number_or(est, "size_tol", cfg.mle.size_tolerance, "estimator.");
    cfg.bayes.draws = static_cast<std::size_t>(
        integer_or(est, "be_draws", static_cast<int>(cfg.bayes.draws), "estimator."));
    cfg.bayes.residual_fraction = number_or(est, "be_residual_fraction", cfg.bayes.residual_fraction, "estimator.");
    cfg.bayes.mode = cfg.mle;
    cfg.bayes.mode.top_m = integer_or(est, "be_mode_top_m", cfg.mle.top_m, "estimator.");
    cfg.bayes.mode.restarts = integer_or(est, "be_mode_restarts", cfg.mle.restarts, "estimator.");
    cfg.bayes.mode.size_tolerance = number_or(est, "be_mode_size_tol", BayesOptions{}.mode.size_tolerance, "estimator.");
    if (cfg.mle.lattice_per_axis < 1 || cfg.mle.top_m < 1 || cfg.mle.restarts < 0 || cfg.bayes.draws < 100 ||
        !(cfg.mle.size_tolerance > 0.0) || !(cfg.bayes.mode.size_tolerance > 0.0))
      throw ConfigError("estimator settings out of range", line_of(est));
  } else {
    cfg.bayes.mode = cfg.mle;
    cfg.bayes.mode.size_tolerance = BayesOptions{}.mode.size_tolerance;
  }

  if (const YAML::Node lim = root["limits"]) {
    cfg.limits.half_width_factor = number_or(lim, "half_width_factor", cfg.limits.half_width_factor, "limits.");
    cfg.limits.resolution = integer_or(lim, "resolution", cfg.limits.resolution, "limits.");
    cfg.limits.v_factor = number_or(lim, "v_factor", cfg.limits.v_factor, "limits.");
    cfg.limits.cells_per_width = number_or(lim, "cells_per_width", cfg.limits.cells_per_width, "limits.");
  }

  if (const YAML::Node ex = root["experiment"]) {
    ExperimentSettings es;
    const YAML::Node ladder = require(ex, "n_ladder", "experiment.");
    if (!ladder.IsSequence()) throw ConfigError("experiment.n_ladder must be a list", line_of(ladder));
    for (const auto& v : ladder) es.n_ladder.push_back(as<double>(v, "experiment.n_ladder"));
    es.replications = integer_or(ex, "replications", es.replications, "experiment.");
    if (ex["estimator"]) es.estimator = method_of(ex["estimator"]);
    es.normality_n = number_or(ex, "normality_n", es.normality_n, "experiment.");
    es.normality_replications = integer_or(ex, "normality_replications", es.normality_replications, "experiment.");
    es.limit_replications = integer_or(ex, "limit_replications", es.limit_replications, "experiment.");
    es.limit_draws = integer_or(ex, "limit_draws", es.limit_draws, "experiment.");
    es.permutations = integer_or(ex, "permutations", es.permutations, "experiment.");
    if (ex["second_prior"]) es.second_prior = as<bool>(ex["second_prior"], "experiment.second_prior");
    for (std::size_t j = 0; j < es.n_ladder.size(); ++j)
      if (!(es.n_ladder[j] >= 1.0) || (j > 0 && !(es.n_ladder[j] > es.n_ladder[j - 1])))
        throw ConfigError("experiment.n_ladder must be strictly increasing values >= 1", line_of(ladder));
    if (es.n_ladder.size() < 4) throw ConfigError("experiment.n_ladder needs at least 4 rungs", line_of(ladder));
    if (es.replications < 50) throw ConfigError("experiment.replications must be at least 50", line_of(ex));
    if (es.normality_replications < 50 || es.limit_replications < 50 || es.limit_draws < 50 || es.permutations < 99)
      throw ConfigError("experiment stage sizes are too small", line_of(ex));
    cfg.experiment = es;
  }

  validate_config(cfg);
  return cfg;
}

void validate_config(const ScenarioConfig& cfg) {
  int bad = -1;
  for (std::size_t j = 0; j < 4 && bad < 0; ++j)
    if (!(cfg.theta0[j] > cfg.box.lower()[j] && cfg.theta0[j] < cfg.box.upper()[j])) bad = static_cast<int>(j);
  if (bad >= 0) {
    std::ostringstream msg;
    msg << "theta0[" << (bad + 1) << "] = " << cfg.theta0[static_cast<std::size_t>(bad)]
        << " does not lie strictly inside the box [" << cfg.box.lower()[static_cast<std::size_t>(bad)] << ", "
        << cfg.box.upper()[static_cast<std::size_t>(bad)] << "]";
    throw ConfigError(msg.str());
  }
  try {
    cfg.box.check_detectors(cfg.array);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  validate_horizon(cfg.model, cfg.array, cfg.box);
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace srcloc
