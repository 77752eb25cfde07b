#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "srcloc/geometry.hpp"
#include "srcloc/signal.hpp"
#include "srcloc/simulate.hpp"

namespace srcloc {

/// 4x4 Fisher information per unit n.
using FisherMatrix = Eigen::Matrix4d;
using Vector4 = Eigen::Vector4d;

struct LogLikelihoodValue {
  double value = 0.0;
  ThetaVector theta;
};

/// Log-likelihood ratio against the pure-noise model, bound to one data set:
///   sum_k [ sum_j ln(lambda_k(t_j) / lambda0) - n int_0^T (lambda_k - lambda0) dt ].
/// Holds references; the model, array and records must outlive it.
class LogLikelihood {
 public:
  LogLikelihood(const IntensityModel& model, const DetectorArray& array, const std::vector<DetectorRecord>& records);
  explicit LogLikelihood(const ObservationSet& obs) : LogLikelihood(obs.model, obs.array, obs.records) {}

  /// No box check; throws DomainError only for a source on a detector.
  double operator()(const ThetaVector& theta) const;
  /// Contribution of detector k given its two arrival times.
  double detector_term(std::size_t k, const std::array<double, 2>& tau) const;

  /// Gradient in theta. Throws RegimeError outside the smooth regime.
  Vector4 score(const ThetaVector& theta) const;

  const IntensityModel& model() const { return model_; }
  const DetectorArray& array() const { return array_; }
  const std::vector<DetectorRecord>& records() const { return records_; }

 private:
  double detector_term_constant(std::size_t k, const std::array<double, 2>& tau) const;
  double detector_term_general(std::size_t k, const std::array<double, 2>& tau) const;

  const IntensityModel& model_;
  const DetectorArray& array_;
  const std::vector<DetectorRecord>& records_;
  bool constant_;
};

/// Checked entry points: theta must lie in the closed box.
LogLikelihoodValue log_likelihood(const ObservationSet& obs, const ParameterBox& box, const ThetaVector& theta);
Vector4 score(const ObservationSet& obs, const ParameterBox& box, const ThetaVector& theta);

/// Generic assembly sum_k int lambda_dot lambda_dot^T / lambda dt.
/// Throws RegimeError outside the smooth regime.
FisherMatrix fisher_information(const IntensityModel& model, const DetectorArray& array, const ThetaVector& theta);

/// I_11, I_12, I_13, I_14 computed one at a time from their scalar formulas.
std::array<double, 4> fisher_displayed_elements(const IntensityModel& model, const DetectorArray& array,
                                                const ThetaVector& theta);

/// Integrand of Q_kappa^2 at v.
double q_kappa_integrand(double kappa, double v);
/// Q_kappa^2 = int_R [ |v-1|^kappa 1{v>=1} - v^kappa 1{v>0} ]^2 dv, 0 < kappa < 1/2.
double q_kappa_squared(double kappa);

/// Per-unit-n squared Hellinger-type distance sum_k int (sqrt(lambda_k(a)) - sqrt(lambda_k(b)))^2 dt.
double hellinger_distance_sq(const IntensityModel& model, const DetectorArray& array, const ThetaVector& a,
                             const ThetaVector& b);

}  // namespace srcloc
