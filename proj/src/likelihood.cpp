#include "srcloc/likelihood.hpp"

#include <algorithm>
#include <cmath>

#include "srcloc/errors.hpp"
#include "srcloc/quadrature.hpp"

namespace srcloc {

LogLikelihood::LogLikelihood(const IntensityModel& model, const DetectorArray& array,
                             const std::vector<DetectorRecord>& records)
    : model_(model), array_(array), records_(records), constant_(model.constant_amplitudes()) {
  if (records_.size() != array_.size()) throw DataError("one record per detector is required");
  model_.validate(array_.size());
}

double LogLikelihood::operator()(const ThetaVector& theta) const {
  const Point s1 = theta.source(0);
  const Point s2 = theta.source(1);
  double total = 0.0;
  for (std::size_t k = 0; k < array_.size(); ++k)
    total += detector_term(k, {arrival_time(array_, k, s1), arrival_time(array_, k, s2)});
  return total;
}

double LogLikelihood::detector_term(std::size_t k, const std::array<double, 2>& tau) const {
  return constant_ ? detector_term_constant(k, tau) : detector_term_general(k, tau);
}

double LogLikelihood::detector_term_constant(std::size_t k, const std::array<double, 2>& tau) const {
  const auto& events = records_[k].events;
  const double T = model_.horizon;
  const double lambda0 = model_.lambda0;
  const double amp[2] = {model_.amplitudes[k][0].level, model_.amplitudes[k][1].level};
  const double w = model_.front.ramp_width();
  const FrontSpec& front = model_.front;

  double cuts[6] = {0.0, tau[0], tau[0] + w, tau[1], tau[1] + w, T};
  for (int c = 1; c < 5; ++c) cuts[c] = std::clamp(cuts[c], 0.0, T);
  std::sort(cuts + 1, cuts + 5);

  CompensatedSum jumps;
  auto lo = events.begin();
  for (int c = 0; c < 5; ++c) {
    const double a = cuts[c];
    const double b = cuts[c + 1];
    if (b <= a) continue;
    const auto hi = std::upper_bound(lo, events.end(), b);
    const double mid = 0.5 * (a + b);
    int ramps = 0;
    int ramp_source = 0;
    double plateau = 0.0;
    for (int i = 0; i < 2; ++i) {
      if (mid < tau[i] || amp[i] == 0.0) continue;
      if (mid >= tau[i] + w) {
        plateau += amp[i];
      } else {
        ++ramps;
        ramp_source = i;
      }
    }
    if (ramps == 0) {
      if (plateau != 0.0) jumps += static_cast<double>(hi - lo) * std::log1p(plateau / lambda0);
    } else if (ramps == 1) {
      const double a = amp[ramp_source] / lambda0;
      const double t0 = tau[ramp_source];
      const double base = plateau / lambda0;
      for (auto it = lo; it != hi; ++it) jumps += std::log1p(base + a * front.value(*it - t0));
    } else {
      for (auto it = lo; it != hi; ++it) {
        const double t = *it;
        const double excess = amp[0] * front.value(t - tau[0]) + amp[1] * front.value(t - tau[1]);
        jumps += std::log1p(excess / lambda0);
      }
    }
    lo = hi;
  }
  double compensator = 0.0;
  for (int i = 0; i < 2; ++i)
    if (amp[i] != 0.0) compensator += amp[i] * front.integral(T - tau[i]);
  return jumps.value() - model_.n * compensator;
}

double LogLikelihood::detector_term_general(std::size_t k, const std::array<double, 2>& tau) const {
  const auto& events = records_[k].events;
  const double lambda0 = model_.lambda0;
  CompensatedSum jumps;
  for (double t : events) jumps += std::log(unit_intensity(model_, k, tau, t) / lambda0);
  const double excess = integrated_intensity(model_, k, tau, 0.0, model_.horizon) -
                        model_.n * lambda0 * model_.horizon;
  return jumps.value() - excess;
}

Vector4 LogLikelihood::score(const ThetaVector& theta) const {
  if (model_.front.regime() != Regime::Smooth)
    throw RegimeError("the score exists only in the smooth regime (kappa >= 1/2)");
  const FrontSpec& front = model_.front;
  const double w = front.ramp_width();
  const double T = model_.horizon;
  Vector4 grad = Vector4::Zero();
  for (std::size_t k = 0; k < array_.size(); ++k) {
    const std::array<double, 2> tau{arrival_time(array_, k, theta.source(0)), arrival_time(array_, k, theta.source(1))};
    const auto& events = records_[k].events;
    for (std::size_t i = 0; i < 2; ++i) {
      const AmplitudeProfile& amp = model_.amplitudes[k][i];
      const auto first = std::upper_bound(events.begin(), events.end(), tau[i]);
      const auto last = std::lower_bound(first, events.end(), tau[i] + w);
      CompensatedSum sum;
      for (auto it = first; it != last; ++it) {
        const double t = *it;
        const double d = front.derivative(t - tau[i]);
        if (d != 0.0) sum += amp(t) * d / unit_intensity(model_, k, tau, t);
      }
      // int_0^T S(t) psi'(t - tau) dt by parts, S affine.
      const double drift = amp(T) * front.value(T - tau[i]) - amp.slope * front.integral(T - tau[i]);
      const double coef = (sum.value() - model_.n * drift) / array_.nu();
      const Point m = direction_vector(array_, k, theta.source(i));
      grad[2 * i] += coef * m.x;
      grad[2 * i + 1] += coef * m.y;
    }
  }
  return grad;
}

namespace {

void check_box(const ParameterBox& box, const ThetaVector& theta) {
  const int bad = box.first_violation(theta);
  if (bad >= 0)
    throw DomainError("theta coordinate " + std::to_string(bad + 1) + " = " + format_double(theta[bad]) +
                      " lies outside the parameter box");
}

}  // namespace

LogLikelihoodValue log_likelihood(const ObservationSet& obs, const ParameterBox& box, const ThetaVector& theta) {
  check_box(box, theta);
  return {LogLikelihood(obs)(theta), theta};
}

Vector4 score(const ObservationSet& obs, const ParameterBox& box, const ThetaVector& theta) {
  check_box(box, theta);
  return LogLikelihood(obs).score(theta);
}

FisherMatrix fisher_information(const IntensityModel& model, const DetectorArray& array, const ThetaVector& theta) {
  if (model.front.regime() != Regime::Smooth)
    throw RegimeError("Fisher information is infinite outside the smooth regime");
  model.validate(array.size());
  const double w = model.front.ramp_width();
  const double nu = array.nu();
  FisherMatrix total = FisherMatrix::Zero();
  for (std::size_t k = 0; k < array.size(); ++k) {
    const std::array<double, 2> tau{arrival_time(array, k, theta.source(0)), arrival_time(array, k, theta.source(1))};
    const Point m[2] = {direction_vector(array, k, theta.source(0)), direction_vector(array, k, theta.source(1))};
    const auto integrand = [&](double t) -> FisherMatrix {
      Vector4 dot_lambda;
      for (std::size_t i = 0; i < 2; ++i) {
        const double g = model.amplitudes[k][i](t) * model.front.derivative(t - tau[i]) / nu;
        dot_lambda[2 * i] = g * m[i].x;
        dot_lambda[2 * i + 1] = g * m[i].y;
      }
      return dot_lambda * dot_lambda.transpose() / unit_intensity(model, k, tau, t);
    };
    const double a = std::clamp(std::min(tau[0], tau[1]), 0.0, model.horizon);
    const double b = std::clamp(std::max(tau[0], tau[1]) + w, 0.0, model.horizon);
    total += integrate_with_breaks(integrand, a, b, {tau[0], tau[1], tau[0] + w, tau[1] + w}, 1e-12);
  }
  return 0.5 * (total + total.transpose());
}

std::array<double, 4> fisher_displayed_elements(const IntensityModel& model, const DetectorArray& array,
                                                const ThetaVector& theta) {
  if (model.front.regime() != Regime::Smooth)
    throw RegimeError("Fisher information is infinite outside the smooth regime");
  const double nu = array.nu();
  const double x1 = theta[0], y1 = theta[1], x2 = theta[2], y2 = theta[3];
  const double delta = model.front.delta();
  const double T = model.horizon;
  std::array<double, 4> out{0.0, 0.0, 0.0, 0.0};
  for (std::size_t k = 0; k < array.size(); ++k) {
    const double xk = array[k].x, yk = array[k].y;
    const double rho1 = std::sqrt((xk - x1) * (xk - x1) + (yk - y1) * (yk - y1));
    const double rho2 = std::sqrt((xk - x2) * (xk - x2) + (yk - y2) * (yk - y2));
    const double tau1 = rho1 / nu, tau2 = rho2 / nu;
    const double cos1 = (xk - x1) / rho1, sin1 = (yk - y1) / rho1;
    const double cos2 = (xk - x2) / rho2;
    const double sin2 = (yk - y2) / rho2;
    const auto& s1 = model.amplitudes[k][0];
    const auto& s2 = model.amplitudes[k][1];
    const auto lambda = [&](double t) {
      return s1(t) * model.front.value(t - tau1) + s2(t) * model.front.value(t - tau2) + model.lambda0;
    };
    const auto ds1 = [&](double t) { return s1(t) * model.front.derivative(t - tau1); };
    const auto ds2 = [&](double t) { return s2(t) * model.front.derivative(t - tau2); };
    const std::vector<double> breaks{tau1 + delta, tau2, tau2 + delta};
    const double hi = std::min(T, tau1 + delta);
    const auto piece = [&](auto f) { return integrate_with_breaks(f, tau1, hi, breaks, 1e-13); };
    out[0] += piece([&](double t) { return ds1(t) * ds1(t) * cos1 * cos1 / (nu * nu * lambda(t)); });
    out[1] += piece([&](double t) { return ds1(t) * ds1(t) * cos1 * sin1 / (nu * nu * lambda(t)); });
    out[2] += piece([&](double t) { return ds1(t) * ds2(t) * cos1 * cos2 / (nu * nu * lambda(t)); });
    out[3] += piece([&](double t) { return ds1(t) * ds2(t) * cos1 * sin2 / (nu * nu * lambda(t)); });
  }
  return out;
}

double q_kappa_integrand(double kappa, double v) {
  const double first = v >= 1.0 ? std::pow(v - 1.0, kappa) : 0.0;
  const double second = v > 0.0 ? std::pow(v, kappa) : 0.0;
  return (first - second) * (first - second);
}

double q_kappa_squared(double kappa) {
  if (!(kappa > 0.0 && kappa < 0.5)) throw DomainError("Q_kappa^2 is defined only for 0 < kappa < 1/2");
  // [0, 1]: only v^kappa survives.
  const double head = 1.0 / (2.0 * kappa + 1.0);
  // [1, 2] with w = (v - 1)^kappa, which removes the endpoint singularity.
  const double p = 1.0 / kappa;
  const auto near = [&](double w) {
    if (w <= 0.0) return 0.0;
    const double v = 1.0 + std::pow(w, p);
    const double diff = w - std::pow(v, kappa);
    return diff * diff * p * std::pow(w, p - 1.0);
  };
  const double middle = adaptive_simpson(near, 0.0, 1.0, 1e-13, 16);
  // [2, A] in x = ln v.
  const double A = 1e4;
  const auto body = [&](double x) {
    const double v = std::exp(x);
    return q_kappa_integrand(kappa, v) * v;
  };
  const double bulk = adaptive_simpson(body, std::log(2.0), std::log(A), 1e-13, 32);
  // [A, inf): expansion of v^{2 kappa} [(1 - 1/v)^kappa - 1]^2 in 1/v.
  const double k2 = kappa * kappa;
  const double c2 = k2;
  const double c3 = k2 * (1.0 - kappa);
  const double c4 = k2 * (1.0 - kappa) * (1.0 - kappa) / 4.0 + k2 * (1.0 - kappa) * (2.0 - kappa) / 3.0;
  const double e = 2.0 * kappa;
  const double tail = c2 * std::pow(A, e - 1.0) / (1.0 - e) + c3 * std::pow(A, e - 2.0) / (2.0 - e) +
                      c4 * std::pow(A, e - 3.0) / (3.0 - e);
  return head + middle + bulk + tail;
}

double hellinger_distance_sq(const IntensityModel& model, const DetectorArray& array, const ThetaVector& a,
                             const ThetaVector& b) {
  const double w = model.front.ramp_width();
  double total = 0.0;
  for (std::size_t k = 0; k < array.size(); ++k) {
    const std::array<double, 2> ta{arrival_time(array, k, a.source(0)), arrival_time(array, k, a.source(1))};
    const std::array<double, 2> tb{arrival_time(array, k, b.source(0)), arrival_time(array, k, b.source(1))};
    const auto f = [&](double t) {
      const double d = std::sqrt(unit_intensity(model, k, ta, t)) - std::sqrt(unit_intensity(model, k, tb, t));
      return d * d;
    };
    total += integrate_with_breaks(f, 0.0, model.horizon,
                                   {ta[0], ta[1], ta[0] + w, ta[1] + w, tb[0], tb[1], tb[0] + w, tb[1] + w}, 1e-12);
  }
  return total;
}

}  // namespace srcloc
