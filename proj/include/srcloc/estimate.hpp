#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "srcloc/geometry.hpp"
#include "srcloc/likelihood.hpp"
#include "srcloc/signal.hpp"
#include "srcloc/simulate.hpp"

namespace srcloc {

enum class Method { MLE, BE };

std::string to_string(Method method);

struct MleOptions {
  int lattice_per_axis = 8;
  int top_m = 5;
  /// Simplex restarts after the first descent, each with the step divided by 4;
  /// stops at the first restart that does not improve the value.
  int restarts = 3;
  /// Quasi-Newton stops when the gradient norm falls below this.
  double gradient_tol = 1e-6;
  int max_iterations = 400;
  /// Simplex descent stops when its size falls below this fraction of the
  /// narrowest box width.
  double size_tolerance = 1e-9;
};

struct EstimateResult {
  ThetaVector theta_hat;
  Method method = Method::MLE;
  bool boundary = false;
  int iterations = 0;
  long evaluations = 0;
  double log_likelihood = 0.0;
  double ess = std::numeric_limits<double>::quiet_NaN();
  /// Share of the normalized importance weight carried by the local proposal.
  double posterior_mass = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> warnings;
};

enum class PriorKind { Uniform, TruncatedGaussian };

/// Prior density on the box, known up to a constant.
struct Prior {
  PriorKind kind = PriorKind::Uniform;
  ThetaVector center;
  std::array<double, 4> sd{1.0, 1.0, 1.0, 1.0};

  static Prior uniform() { return {}; }
  /// Centred on the box with sd equal to half of each half-width.
  static Prior truncated_gaussian(const ParameterBox& box);
  double log_density(const ThetaVector& theta) const;
};

struct BayesOptions {
  std::size_t draws = 20000;
  double residual_fraction = 0.1;
  double student_dof = 4.0;
  int max_attempts = 3;
  double min_ess = 100.0;
  std::uint64_t seed = 0;
  /// Mode search; only centres the proposal, so a looser simplex tolerance suffices.
  MleOptions mode = {.size_tolerance = 1e-6};
};

/// Relative distance (in box widths) below which a coordinate counts as on the boundary.
constexpr double kBoundaryTolerance = 1e-6;

EstimateResult mle(const LogLikelihood& loglik, const ParameterBox& box, Regime regime, const MleOptions& options = {});
EstimateResult mle(const ObservationSet& obs, const ParameterBox& box, Regime regime, const MleOptions& options = {});

EstimateResult bayes_estimate(const LogLikelihood& loglik, const ParameterBox& box, const Prior& prior,
                              const BayesOptions& options = {});
EstimateResult bayes_estimate(const ObservationSet& obs, const ParameterBox& box, const Prior& prior,
                              const BayesOptions& options = {});

struct WeightedMean {
  ThetaVector mean;
  double ess = 0.0;
};

/// Self-normalized mean of `points` with unnormalized log weights.
WeightedMean weighted_posterior_mean(std::span<const ThetaVector> points, std::span<const double> log_weights);

}  // namespace srcloc
