#include "srcloc/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "srcloc/errors.hpp"
#include "srcloc/quadrature.hpp"

namespace srcloc {

std::vector<double> lattice_axis(const ParameterBox& box, std::size_t coordinate, int per_axis) {
  if (per_axis < 1) throw DomainError("lattice needs at least one point per axis");
  std::vector<double> axis(static_cast<std::size_t>(per_axis));
  const double lo = box.lower()[coordinate];
  const double step = box.width(coordinate) / per_axis;
  for (int j = 0; j < per_axis; ++j) axis[static_cast<std::size_t>(j)] = lo + (j + 0.5) * step;
  return axis;
}

namespace {

/// Event counts on a fine grid of one detector, for window sums of a
/// continuous function when the window holds many events.
class EventBins {
 public:
  EventBins(const std::vector<double>& events, double h, double horizon) : events_(events), h_(h) {
    const std::size_t m = static_cast<std::size_t>(std::ceil(horizon / h)) + 1;
    cum_.resize(m + 1);
    auto it = events.begin();
    for (std::size_t j = 0; j <= m; ++j) {
      it = std::upper_bound(it, events.end(), static_cast<double>(j) * h);
      cum_[j] = static_cast<std::size_t>(it - events.begin());
    }
  }

  /// Sum of f over events in (a, b].
  template <class F>
  double sum(double a, double b, F&& f) const {
    const auto first = std::upper_bound(events_.begin(), events_.end(), a);
    const auto last = std::upper_bound(first, events_.end(), b);
    CompensatedSum acc;
    if (static_cast<std::size_t>(last - first) <= kLatticeExactEvents) {
      for (auto it = first; it != last; ++it) acc += f(*it);
      return acc.value();
    }
    const std::size_t j0 = static_cast<std::size_t>(std::ceil(a / h_));
    const std::size_t j1 = std::min(static_cast<std::size_t>(std::floor(b / h_)), cum_.size() - 1);
    const auto inner_lo = events_.begin() + static_cast<std::ptrdiff_t>(cum_[j0]);
    const auto inner_hi = events_.begin() + static_cast<std::ptrdiff_t>(cum_[j1]);
    for (auto it = first; it != inner_lo; ++it) acc += f(*it);
    for (std::size_t j = j0; j < j1; ++j) {
      const std::size_t c = cum_[j + 1] - cum_[j];
      if (c != 0) acc += static_cast<double>(c) * f((static_cast<double>(j) + 0.5) * h_);
    }
    for (auto it = inner_hi; it != last; ++it) acc += f(*it);
    return acc.value();
  }

 private:
  const std::vector<double>& events_;
  double h_;
  std::vector<std::size_t> cum_;  // events <= j h
};

struct SourceTable {
  std::vector<double> tau;     // [k][p]
  std::vector<std::size_t> u0;  // events <= tau
  std::vector<std::size_t> u1;  // events <= tau + w
  std::vector<double> ramp_off;
  std::vector<double> ramp_on;
  std::vector<double> comp;
};

std::vector<ThetaVector> all_points(const ParameterBox& box, int g) {
  std::array<std::vector<double>, 4> axes;
  for (std::size_t c = 0; c < 4; ++c) axes[c] = lattice_axis(box, c, g);
  std::vector<ThetaVector> pts;
  pts.reserve(static_cast<std::size_t>(g) * g * g * g);
  for (double a : axes[0])
    for (double b : axes[1])
      for (double c : axes[2])
        for (double d : axes[3]) pts.emplace_back(a, b, c, d);
  return pts;
}

}  // namespace

std::vector<LatticePoint> lattice_scan_direct(const LogLikelihood& loglik, const ParameterBox& box, int per_axis) {
  std::vector<LatticePoint> out;
  for (const auto& theta : all_points(box, per_axis)) out.push_back({theta, loglik(theta)});
  return out;
}

std::vector<LatticePoint> lattice_scan(const LogLikelihood& loglik, const ParameterBox& box, int per_axis) {
  const IntensityModel& model = loglik.model();
  if (!model.constant_amplitudes()) return lattice_scan_direct(loglik, box, per_axis);

  const DetectorArray& array = loglik.array();
  const auto& records = loglik.records();
  const std::size_t K = array.size();
  const std::size_t G = static_cast<std::size_t>(per_axis);
  const std::size_t P = G * G;
  const double w = model.front.ramp_width();
  const double T = model.horizon;
  const double lambda0 = model.lambda0;

  std::array<std::vector<Point>, 2> sub;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto ax = lattice_axis(box, 2 * i, per_axis);
    const auto ay = lattice_axis(box, 2 * i + 1, per_axis);
    for (double x : ax)
      for (double y : ay) sub[i].push_back({x, y});
  }

  std::vector<EventBins> bins;
  const double bin_width = w > 0.0 ? w / kLatticeBinsPerRamp : T;
  for (std::size_t k = 0; k < K; ++k) bins.emplace_back(records[k].events, bin_width, T);

  std::array<SourceTable, 2> table;
  for (std::size_t i = 0; i < 2; ++i) {
    auto& tb = table[i];
    tb.tau.resize(K * P);
    tb.u0.resize(K * P);
    tb.u1.resize(K * P);
    tb.ramp_off.assign(K * P, 0.0);
    tb.ramp_on.assign(K * P, 0.0);
    tb.comp.resize(K * P);
    for (std::size_t k = 0; k < K; ++k) {
      const auto& ev = records[k].events;
      const double own = model.amplitudes[k][i].level;
      const double other = model.amplitudes[k][1 - i].level;
      for (std::size_t p = 0; p < P; ++p) {
        const std::size_t idx = k * P + p;
        const double tau = arrival_time(array, k, sub[i][p]);
        tb.tau[idx] = tau;
        const auto first = std::upper_bound(ev.begin(), ev.end(), tau);
        const auto last = std::upper_bound(first, ev.end(), tau + w);
        tb.u0[idx] = static_cast<std::size_t>(first - ev.begin());
        tb.u1[idx] = static_cast<std::size_t>(last - ev.begin());
        if (own != 0.0) {
          tb.ramp_off[idx] = bins[k].sum(tau, tau + w, [&](double t) {
            return std::log1p(own * model.front.value(t - tau) / lambda0);
          });
          tb.ramp_on[idx] = bins[k].sum(tau, tau + w, [&](double t) {
            return std::log1p((other + own * model.front.value(t - tau)) / lambda0);
          });
        }
        tb.comp[idx] = own != 0.0 ? model.n * own * model.front.integral(T - tau) : 0.0;
      }
    }
  }

  std::vector<LatticePoint> out(P * P);
  for (std::size_t p1 = 0; p1 < P; ++p1)
    for (std::size_t p2 = 0; p2 < P; ++p2) {
      const ThetaVector theta(sub[0][p1], sub[1][p2]);
      double total = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        const std::size_t i1 = k * P + p1;
        const std::size_t i2 = k * P + p2;
        const double t1 = table[0].tau[i1];
        const double t2 = table[1].tau[i2];
        if (w > 0.0 && std::abs(t1 - t2) < w) {
          const double s1 = model.amplitudes[k][0].level;
          const double s2 = model.amplitudes[k][1].level;
          const double lo = std::min(t1, t2);
          const double hi = std::max(t1, t2) + w;
          double v = bins[k].sum(lo, hi, [&](double t) {
            return std::log1p((s1 * model.front.value(t - t1) + s2 * model.front.value(t - t2)) / lambda0);
          });
          const auto& ev = records[k].events;
          const double after = static_cast<double>(ev.end() - std::upper_bound(ev.begin(), ev.end(), hi));
          if (s1 + s2 != 0.0) v += after * std::log1p((s1 + s2) / lambda0);
          total += v - table[0].comp[i1] - table[1].comp[i2];
          continue;
        }
        const bool first_is_1 = t1 <= t2;
        const SourceTable& ta = first_is_1 ? table[0] : table[1];
        const SourceTable& tb = first_is_1 ? table[1] : table[0];
        const std::size_t ia = first_is_1 ? i1 : i2;
        const std::size_t ib = first_is_1 ? i2 : i1;
        const double sa = model.amplitudes[k][first_is_1 ? 0 : 1].level;
        const double sb = model.amplitudes[k][first_is_1 ? 1 : 0].level;
        const double n_events = static_cast<double>(records[k].events.size());
        double v = ta.ramp_off[ia] + tb.ramp_on[ib] - ta.comp[ia] - tb.comp[ib];
        if (sa != 0.0) v += static_cast<double>(tb.u0[ib] - ta.u1[ia]) * std::log1p(sa / lambda0);
        if (sa + sb != 0.0) v += (n_events - static_cast<double>(tb.u1[ib])) * std::log1p((sa + sb) / lambda0);
        total += v;
      }
      out[p1 * P + p2] = {theta, total};
    }
  return out;
}

std::vector<LatticePoint> best_points(const std::vector<LatticePoint>& scan, std::size_t m) {
  std::vector<std::size_t> order(scan.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
  const auto better = [&](std::size_t a, std::size_t b) {
    if (scan[a].value != scan[b].value) return scan[a].value > scan[b].value;
    return scan[a].theta.values < scan[b].theta.values;
  };
  m = std::min(m, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m), order.end(), better);
  std::vector<LatticePoint> out;
  for (std::size_t j = 0; j < m; ++j) out.push_back(scan[order[j]]);
  return out;
}

}  // namespace srcloc
