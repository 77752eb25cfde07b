#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "srcloc/config.hpp"
#include "srcloc/geometry.hpp"

namespace srcloc::test {

inline ScenarioConfig load_scenario(const std::string& name) {
  return load_config(std::string(SRCLOC_TEST_CONFIG_DIR) + "/" + name + ".yaml");
}

inline ScenarioConfig smooth_scenario() { return load_scenario("smooth_default"); }

inline Point random_point(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng)};
}

inline Point unit_vector(double angle) { return {std::cos(angle), std::sin(angle)}; }

inline double random_angle(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
}

/// Uniform draw inside the box.
inline ThetaVector random_theta(std::mt19937_64& rng, const ParameterBox& box) {
  ThetaVector t;
  for (std::size_t i = 0; i < 4; ++i)
    t[i] = std::uniform_real_distribution<double>(box.lower()[i], box.upper()[i])(rng);
  return t;
}

inline double relative_error(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace srcloc::test
