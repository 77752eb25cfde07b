#include "srcloc/signal.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "srcloc/errors.hpp"
#include "srcloc/quadrature.hpp"

namespace srcloc {

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::Smooth:
      return "smooth";
    case Regime::Cusp:
      return "cusp";
    case Regime::ChangePoint:
      return "changepoint";
  }
  return "unknown";
}

double smooth_front_derivative(double delta, double s) {
  if (s <= 0.0 || s >= delta) return 0.0;
  const double x = s / delta;
  const double y = x * (1.0 - x);
  return 30.0 * y * y / delta;
}

FrontSpec::FrontSpec(double kappa, double delta, std::optional<FrontShape> shape_override)
    : kappa_(kappa), delta_(delta), override_(shape_override) {
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw DomainError("kappa must be a finite value >= 0");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw DomainError("delta must be positive");
  if (override_ == FrontShape::Smoothstep && regime() != Regime::Smooth)
    throw DomainError("the smoothstep front is only available for kappa >= 1/2");
  shape_ = override_.value_or(regime() == Regime::Smooth ? FrontShape::Smoothstep : FrontShape::Power);
}

Regime FrontSpec::regime() const {
  if (kappa_ == 0.0) return Regime::ChangePoint;
  if (kappa_ < 0.5) return Regime::Cusp;
  return Regime::Smooth;
}

FrontShape FrontSpec::shape() const { return shape_; }

double FrontSpec::derivative(double s) const {
  if (shape_ == FrontShape::Smoothstep) return smooth_front_derivative(delta_, s);
  if (s <= 0.0 || s >= delta_ || kappa_ == 0.0) return 0.0;
  return kappa_ / delta_ * std::pow(s / delta_, kappa_ - 1.0);
}

double FrontSpec::integral(double s) const {
  if (s <= 0.0) return 0.0;
  if (shape_ == FrontShape::Smoothstep) {
    const double y = std::min(s / delta_, 1.0);
    const double y4 = y * y * y * y;
    const double ramp = delta_ * y4 * (y * (y - 3.0) + 2.5);
    return s > delta_ ? ramp + (s - delta_) : ramp;
  }
  if (kappa_ == 0.0) return s;
  if (s >= delta_) return delta_ / (kappa_ + 1.0) + (s - delta_);
  return delta_ / (kappa_ + 1.0) * front_power(s / delta_, kappa_) * (s / delta_);
}

bool IntensityModel::constant_amplitudes() const {
  for (const auto& row : amplitudes)
    for (const auto& a : row)
      if (!a.constant()) return false;
  return true;
}

bool IntensityModel::identical_sources() const {
  for (const auto& row : amplitudes)
    if (row[0].level != row[1].level || row[0].slope != row[1].slope) return false;
  return true;
}

double IntensityModel::peak_rate(std::size_t k) const {
  double peak = lambda0;
  for (const auto& a : amplitudes[k]) peak += std::max(a(0.0), a(horizon));
  return peak;
}

IntensityModel IntensityModel::with_n(double scale) const {
  IntensityModel m = *this;
  m.n = scale;
  return m;
}

void IntensityModel::validate(std::size_t detector_count) const {
  if (amplitudes.size() != detector_count)
    throw DomainError("amplitude table has " + std::to_string(amplitudes.size()) + " rows for " +
                      std::to_string(detector_count) + " detectors");
  if (!(lambda0 > 0.0) || !std::isfinite(lambda0)) throw DomainError("lambda0 must be positive");
  if (!(n >= 1.0) || !std::isfinite(n)) throw DomainError("n must be >= 1");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw DomainError("horizon T must be positive");
  for (std::size_t k = 0; k < amplitudes.size(); ++k)
    for (std::size_t i = 0; i < 2; ++i) {
      const auto& a = amplitudes[k][i];
      if (!std::isfinite(a.level) || !std::isfinite(a.slope) || a(0.0) < 0.0 || a(horizon) < 0.0)
        throw DomainError("amplitude of source " + std::to_string(i + 1) + " at detector " + std::to_string(k) +
                          " must be finite and nonnegative on [0, T]");
    }
}

ArrivalTimes arrival_times(const DetectorArray& array, const ThetaVector& theta) {
  ArrivalTimes tau(array.size());
  for (std::size_t k = 0; k < array.size(); ++k)
    for (std::size_t i = 0; i < 2; ++i) tau[k][i] = arrival_time(array, k, theta.source(i));
  return tau;
}

double unit_intensity(const IntensityModel& model, std::size_t k, const std::array<double, 2>& tau, double t) {
  const auto& amp = model.amplitudes[k];
  return amp[0](t) * model.front.value(t - tau[0]) + amp[1](t) * model.front.value(t - tau[1]) + model.lambda0;
}

double intensity(const IntensityModel& model, const DetectorArray& array, const ThetaVector& theta, std::size_t k,
                 double t) {
  if (!(t >= 0.0 && t <= model.horizon)) throw DomainError("time outside the observation window [0, T]");
  const std::array<double, 2> tau{arrival_time(array, k, theta.source(0)), arrival_time(array, k, theta.source(1))};
  return model.n * unit_intensity(model, k, tau, t);
}

double integrated_intensity(const IntensityModel& model, std::size_t k, const std::array<double, 2>& tau, double t0,
                            double t1) {
  if (!(t0 <= t1)) throw DomainError("reversed integration interval");
  if (model.constant_amplitudes()) {
    double total = model.lambda0 * (t1 - t0);
    for (std::size_t i = 0; i < 2; ++i) {
      const double s = model.amplitudes[k][i].level;
      if (s != 0.0) total += s * (model.front.integral(t1 - tau[i]) - model.front.integral(t0 - tau[i]));
    }
    return model.n * total;
  }
  const double w = model.front.ramp_width();
  const std::vector<double> breaks{tau[0], tau[1], tau[0] + w, tau[1] + w};
  const auto f = [&](double t) { return unit_intensity(model, k, tau, t); };
  return model.n * integrate_with_breaks(f, t0, t1, breaks, 1e-10);
}

double integrated_intensity(const IntensityModel& model, const DetectorArray& array, const ThetaVector& theta,
                            std::size_t k, double t0, double t1) {
  if (!(t0 >= 0.0 && t1 <= model.horizon)) throw DomainError("integration interval outside [0, T]");
  const std::array<double, 2> tau{arrival_time(array, k, theta.source(0)), arrival_time(array, k, theta.source(1))};
  return integrated_intensity(model, k, tau, t0, t1);
}

void validate_horizon(const IntensityModel& model, const DetectorArray& array, const ParameterBox& box) {
  for (std::size_t k = 0; k < array.size(); ++k)
    for (std::size_t i = 0; i < 2; ++i) {
      double worst = 0.0;
      for (const Point& c : box.source_corners(i)) worst = std::max(worst, distance(array[k], c) / array.nu());
      const double bound = worst + model.front.delta();
      if (!(bound < model.horizon)) {
        std::ostringstream msg;
        msg << "detector " << k << ": source " << (i + 1) << " front may end at t = " << bound
            << ", which is not below the horizon T = " << model.horizon;
        throw ConfigError(msg.str());
      }
    }
}

}  // namespace srcloc
