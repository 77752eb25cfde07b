#pragma once

#include <algorithm>
#include <cmath>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

namespace srcloc {

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      carry_ += (sum_ - t) + x;
    else
      carry_ += (x - t) + sum_;
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) {
    add(x);
    return *this;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

namespace detail {

inline double max_abs(double x) { return std::abs(x); }

template <class Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.cwiseAbs().maxCoeff();
}

template <class F, class V>
V simpson_step(const F& f, double a, double b, const V& fa, const V& fm, const V& fb, const V& whole,
               double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const V flm = f(lm);
  const V frm = f(rm);
  const V left = ((m - a) / 6.0) * (fa + 4.0 * flm + fm);
  const V right = ((b - m) / 6.0) * (fm + 4.0 * frm + fb);
  const V delta = left + right - whole;
  if (depth <= 0 || max_abs(delta) <= 15.0 * tol) return V(left + right + delta / 15.0);
  return V(simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1));
}

}  // namespace detail

/// Adaptive Simpson quadrature of `f` over [a, b] with Richardson correction.
/// The interval is pre-split into `initial_pieces` so that narrow features are
/// not missed by the first coarse estimate. Works for scalar or Eigen-valued
/// integrands; the error test uses the largest absolute component.
template <class F>
auto adaptive_simpson(const F& f, double a, double b, double abs_tol, int initial_pieces = 8,
                      int max_depth = 40) {
  using V = std::decay_t<decltype(f(a))>;
  V total = f(a) * 0.0;
  if (!(b > a)) return total;
  const double width = (b - a) / initial_pieces;
  for (int p = 0; p < initial_pieces; ++p) {
    const double lo = a + p * width;
    const double hi = (p + 1 == initial_pieces) ? b : lo + width;
    const V flo = f(lo);
    const V fhi = f(hi);
    const V fm = f(0.5 * (lo + hi));
    const V whole = ((hi - lo) / 6.0) * (flo + 4.0 * fm + fhi);
    total += detail::simpson_step(f, lo, hi, flo, fm, fhi, whole, abs_tol / initial_pieces, max_depth);
  }
  return total;
}

/// Integrates over [a, b] with forced subdivision at every breakpoint inside
/// the interval. Breakpoints outside [a, b] are ignored.
template <class F>
auto integrate_with_breaks(const F& f, double a, double b, std::vector<double> breaks, double abs_tol) {
  using V = std::decay_t<decltype(f(a))>;
  breaks.push_back(a);
  breaks.push_back(b);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  std::vector<double> cuts;
  for (double x : breaks)
    if (x >= a && x <= b) cuts.push_back(x);
  V total = f(a) * 0.0;
  const double piece_tol = abs_tol / std::max<std::size_t>(1, cuts.size() - 1);
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    total += adaptive_simpson(f, cuts[i], cuts[i + 1], piece_tol);
  return total;
}

}  // namespace srcloc
