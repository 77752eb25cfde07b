#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "srcloc/geometry.hpp"

namespace srcloc {

enum class Regime { Smooth, Cusp, ChangePoint };

std::string to_string(Regime regime);

/// Shape of the rising edge. Smoothstep is the C^2 quintic used by default in
/// the smooth regime; Power is (s/delta)^kappa on [0, delta].
enum class FrontShape { Smoothstep, Power };

/// x^kappa with exact shortcuts for kappa in {1/4, 1/2, 1}.
inline double front_power(double x, double kappa) {
  if (kappa == 0.25) return std::sqrt(std::sqrt(x));
  if (kappa == 0.5) return std::sqrt(x);
  if (kappa == 1.0) return x;
  return std::pow(x, kappa);
}

/// Power front psi: 0 for s <= 0, (s/delta)^kappa on (0, delta], 1 beyond.
/// kappa = 0 gives the open step 1{s > 0}.
inline double front_psi(double kappa, double delta, double s) {
  if (s <= 0.0) return 0.0;
  if (kappa == 0.0 || s >= delta) return 1.0;
  return front_power(s / delta, kappa);
}

/// Quintic smoothstep 6x^5 - 15x^4 + 10x^3 with x = clamp(s/delta, 0, 1).
inline double smooth_front(double delta, double s) {
  const double x = std::clamp(s / delta, 0.0, 1.0);
  return x * x * x * (x * (6.0 * x - 15.0) + 10.0);
}
double smooth_front_derivative(double delta, double s);

class FrontSpec {
 public:
  FrontSpec() = default;
  /// Throws DomainError for kappa < 0 or delta <= 0, or if a smoothstep
  /// override is requested outside the smooth regime.
  FrontSpec(double kappa, double delta, std::optional<FrontShape> shape_override = std::nullopt);

  double kappa() const { return kappa_; }
  double delta() const { return delta_; }
  Regime regime() const;
  FrontShape shape() const;
  const std::optional<FrontShape>& shape_override() const { return override_; }

  /// Width of the region where the front is strictly between 0 and 1.
  double ramp_width() const { return kappa_ == 0.0 ? 0.0 : delta_; }

  double value(double s) const {
    return shape_ == FrontShape::Smoothstep ? smooth_front(delta_, s) : front_psi(kappa_, delta_, s);
  }
  /// d psi / ds. Only finite for the smooth regime.
  double derivative(double s) const;
  /// int_0^s psi(r) dr, 0 for s <= 0.
  double integral(double s) const;

 private:
  double kappa_ = 1.0;
  double delta_ = 1.0;
  std::optional<FrontShape> override_;
  FrontShape shape_ = FrontShape::Smoothstep;
};

/// S(t) = level + slope * t.
struct AmplitudeProfile {
  double level = 0.0;
  double slope = 0.0;

  double operator()(double t) const { return level + slope * t; }
  bool constant() const { return slope == 0.0; }
};

/// Rates of a K-detector scene. `amplitudes[k][i]` is S_{i,k}.
struct IntensityModel {
  FrontSpec front;
  std::vector<std::array<AmplitudeProfile, 2>> amplitudes;
  double lambda0 = 1.0;
  double n = 1.0;
  double horizon = 1.0;

  bool constant_amplitudes() const;
  /// True when S_{1,k}(.) == S_{2,k}(.) for every detector.
  bool identical_sources() const;
  std::size_t detectors() const { return amplitudes.size(); }
  /// Largest value of sum_i S_{i,k}(t) + lambda0 on [0, T], per unit n.
  double peak_rate(std::size_t k) const;
  IntensityModel with_n(double scale) const;

  /// Throws DomainError for invalid values or a detector count mismatch.
  void validate(std::size_t detector_count) const;
};

/// tau[k][i]: arrival time of source i at detector k.
using ArrivalTimes = std::vector<std::array<double, 2>>;

ArrivalTimes arrival_times(const DetectorArray& array, const ThetaVector& theta);

/// Per-unit-n intensity lambda_k(t) for given arrival times; no range checks.
double unit_intensity(const IntensityModel& model, std::size_t k, const std::array<double, 2>& tau, double t);

/// lambda_{k,n}(theta, t). Throws DomainError for t outside [0, T].
double intensity(const IntensityModel& model, const DetectorArray& array, const ThetaVector& theta,
                 std::size_t k, double t);

/// Expected count int_{t0}^{t1} lambda_{k,n}(theta, t) dt.
double integrated_intensity(const IntensityModel& model, const DetectorArray& array, const ThetaVector& theta,
                            std::size_t k, double t0, double t1);
double integrated_intensity(const IntensityModel& model, std::size_t k, const std::array<double, 2>& tau,
                            double t0, double t1);

/// Checks that every source position in the box has tau + delta < T at every
/// detector. Throws ConfigError naming the detector and the bound.
void validate_horizon(const IntensityModel& model, const DetectorArray& array, const ParameterBox& box);

}  // namespace srcloc
