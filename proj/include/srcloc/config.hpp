#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "srcloc/estimate.hpp"
#include "srcloc/geometry.hpp"
#include "srcloc/limits.hpp"
#include "srcloc/signal.hpp"

namespace srcloc {

struct ExperimentSettings {
  std::vector<double> n_ladder;
  int replications = 200;
  Method estimator = Method::MLE;
  /// Normality stage (smooth regime): n and replication count; n = 0 uses the top rung.
  double normality_n = 0.0;
  int normality_replications = 1000;
  /// Limit-law stage (cusp / change-point): replications at the top rung and sampler draws.
  int limit_replications = 300;
  int limit_draws = 300;
  int permutations = 999;
  /// Also run the BE under a truncated-Gaussian prior at the top rung.
  bool second_prior = false;
};

struct LimitSettings {
  double half_width_factor = 16.0;  // L_i = factor * s_i
  int resolution = 0;               // 0: regime default
  double v_factor = 4.0;            // V = v_factor * max L / nu
  double cells_per_width = 256.0;   // h = min L / (cells_per_width * nu)
};

struct ScenarioConfig {
  std::string scenario = "scenario";
  std::uint64_t seed = 0;
  DetectorArray array;
  ParameterBox box;
  ThetaVector theta0;
  IntensityModel model;
  std::optional<ExperimentSettings> experiment;
  MleOptions mle;
  BayesOptions bayes;
  LimitSettings limits;
  std::string text;  // raw config text, hashed into the manifest

  Regime regime() const { return model.front.regime(); }
  GridSpec grid() const;
};

/// FNV-1a 64-bit hash of the text, as 16 lowercase hex digits.
std::string config_hash(const std::string& text);

/// Parses and validates a YAML scenario. Throws ConfigError with a line number
/// where one is known.
ScenarioConfig parse_config(const std::string& text);
ScenarioConfig load_config(const std::string& path);

/// Cross-field checks: theta0 in the box, detectors outside the box, arrival
/// before the horizon, ladder and replication limits.
void validate_config(const ScenarioConfig& config);

}  // namespace srcloc
