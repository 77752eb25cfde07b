#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "srcloc/geometry.hpp"
#include "srcloc/likelihood.hpp"
#include "srcloc/rng.hpp"
#include "srcloc/signal.hpp"

namespace srcloc {

enum class LimitLaw { Zeta, Xi, Eta };

std::string to_string(LimitLaw law);

/// Truncation and discretization of the u-integrals. Source i uses the
/// square [-L_i, L_i]^2 with `resolution` nodes per axis (odd, so u = 0 is a
/// node). The Wiener integrals use cells of width `v_step` on [-V, V].
struct GridSpec {
  std::array<double, 2> half_width{1.0, 1.0};
  int resolution = 65;
  double v_half_width = 4.0;
  double v_step = 1.0 / 256.0;
};

struct LimitLawSample {
  std::vector<ThetaVector> draws;
  LimitLaw law = LimitLaw::Zeta;
  std::optional<GridSpec> grid;
  /// Largest share of lattice weight found on the lattice boundary over all draws.
  double edge_mass = 0.0;
};

/// Per detector and source local constants at theta0.
struct LocalConstants {
  Point direction;       // m_{i,k}
  double lambda_before;  // lambda_k(theta0, tau_{i,k}-), per unit n
  double jump;           // S_{i,k}(tau_{i,k})
  double gamma_hat;      // S / (delta^kappa sqrt(lambda_before)), cusp only
  double gamma_sq;       // gamma_hat^2 / nu^{2 kappa + 1}
};

/// table[i][k].
using LocalTable = std::array<std::vector<LocalConstants>, 2>;

LocalTable local_constants(const IntensityModel& model, const DetectorArray& array, const ThetaVector& theta0);

/// Scale s_i of u^{(i)} at which the limit experiment separates from u = 0 in
/// the least informative direction: the drift reaches one (cusp) or the
/// Hellinger exponent reaches one (change-point).
std::array<double, 2> u_scales(const IntensityModel& model, const DetectorArray& array, const ThetaVector& theta0);

/// Default truncation: L_i = 16 s_i, V = 4 max L / nu, cell width min L / (256 nu),
/// 65 (xi) or 257 (eta) nodes per axis.
GridSpec default_grid(const IntensityModel& model, const DetectorArray& array, const ThetaVector& theta0);

/// N(0, I^{-1}) draws.
LimitLawSample sample_zeta(const FisherMatrix& fisher, std::size_t count, std::uint64_t seed);

/// One realization of v -> W(v) on [-V, V] at cell width h, together with the
/// Gaussian tail functionals needed past V, for a given kappa.
class WienerField {
 public:
  WienerField(double kappa, double v_half_width, double v_step, double max_shift, std::uint64_t seed);

  /// int [g(v + a) - g(v)] dW(v), g(x) = x^kappa 1{x > 0}, |a| <= max_shift.
  double integral(double a) const;
  /// Same path observed at half the cell width (Brownian bridge midpoints).
  WienerField refined() const;

  double step() const { return h_; }
  std::size_t cells() const { return increments_.size(); }

 private:
  WienerField() = default;
  void tabulate();
  double tail(double a) const;

  double kappa_ = 0.25;
  double V_ = 1.0;
  double h_ = 1.0;
  double max_shift_ = 0.0;
  std::uint64_t seed_ = 0;
  int level_ = 0;
  std::vector<double> increments_;
  std::array<double, 3> tail_{};
  std::vector<double> shift_values_;  // grid part at integer shifts -S..S
  long max_index_ = 0;
};

/// Unit-rate point process on [0, horizon], read through a rate: count(a) = y(rate * a).
class PoissonPath {
 public:
  PoissonPath(double rate, double max_time, Engine& rng);
  std::size_t count(double a) const;

 private:
  double rate_;
  std::vector<double> points_;  // unit-rate event times
};

/// Cusp limit functional; requires 0 < kappa < 1/2.
LimitLawSample sample_xi(const ThetaVector& theta0, const DetectorArray& array, const IntensityModel& model,
                         const GridSpec& grid, std::size_t count, std::uint64_t seed);
/// Change-point limit functional; requires kappa = 0.
LimitLawSample sample_eta(const ThetaVector& theta0, const DetectorArray& array, const IntensityModel& model,
                          const GridSpec& grid, std::size_t count, std::uint64_t seed);

/// Single-draw building blocks, exposed for verification.
struct XiDraw {
  std::array<std::vector<WienerField>, 2> fields;  // [i][k]
};
XiDraw make_xi_draw(const LocalTable& table, double kappa, const GridSpec& grid, double nu, std::uint64_t seed);
XiDraw refine_xi_draw(const XiDraw& draw);

/// ln Z of source i at u^{(i)} for a cusp draw.
double xi_log_z(const LocalTable& table, const XiDraw& draw, std::size_t i, Point u, double kappa, double q2,
                double nu);

struct EtaDraw {
  std::array<std::vector<PoissonPath>, 2> before;  // x^- : rate lambda_before, used for a >= 0
  std::array<std::vector<PoissonPath>, 2> after;   // x^+ : rate lambda_after, used for a < 0
};
EtaDraw make_eta_draw(const LocalTable& table, const GridSpec& grid, double nu, std::uint64_t seed);
double eta_log_z(const LocalTable& table, const EtaDraw& draw, std::size_t i, Point u, double nu);

/// Lattice ratio sum u Z(u) / sum Z(u) over the square of source i, in log space.
/// `edge` receives the weight share on the square's boundary nodes.
template <class LogZ>
Point lattice_ratio(const LogZ& log_z, double half_width, int resolution, double* edge = nullptr);

/// Full 4-D lattice ratio with Z(u) = Z_1(u1) Z_2(u2) evaluated jointly; a
/// slow reference for the separable evaluation.
template <class LogZ>
ThetaVector lattice_ratio_4d(const LogZ& log_z1, const LogZ& log_z2, const std::array<double, 2>& half_width,
                             int resolution);

}  // namespace srcloc

#include "srcloc/limits_impl.hpp"
