#include "srcloc/limits.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "srcloc/errors.hpp"

namespace srcloc {

std::string to_string(LimitLaw law) {
  switch (law) {
    case LimitLaw::Zeta:
      return "zeta";
    case LimitLaw::Xi:
      return "xi";
    case LimitLaw::Eta:
      return "eta";
  }
  return "unknown";
}

LocalTable local_constants(const IntensityModel& model, const DetectorArray& array, const ThetaVector& theta0) {
  model.validate(array.size());
  const double kappa = model.front.kappa();
  const double nu = array.nu();
  LocalTable table;
  for (std::size_t i = 0; i < 2; ++i) {
    table[i].resize(array.size());
    for (std::size_t k = 0; k < array.size(); ++k) {
      const double tau = arrival_time(array, k, theta0.source(i));
      const double tau_other = arrival_time(array, k, theta0.source(1 - i));
      LocalConstants c;
      c.direction = direction_vector(array, k, theta0.source(i));
      c.lambda_before =
          model.lambda0 + model.amplitudes[k][1 - i](tau) * model.front.value(tau - tau_other);
      c.jump = model.amplitudes[k][i](tau);
      c.gamma_hat = c.jump / (std::pow(model.front.delta(), kappa) * std::sqrt(c.lambda_before));
      c.gamma_sq = c.gamma_hat * c.gamma_hat / std::pow(nu, 2.0 * kappa + 1.0);
      table[i][k] = c;
    }
  }
  return table;
}

std::array<double, 2> u_scales(const IntensityModel& model, const DetectorArray& array, const ThetaVector& theta0) {
  const Regime regime = model.front.regime();
  if (regime == Regime::Smooth) throw RegimeError("u-scales are defined for the cusp and change-point regimes");
  const LocalTable table = local_constants(model, array, theta0);
  const double kappa = model.front.kappa();
  const double q2 = regime == Regime::Cusp ? q_kappa_squared(kappa) : 0.0;
  const double nu = array.nu();
  std::array<double, 2> scales{};
  for (std::size_t i = 0; i < 2; ++i) {
    double weakest = std::numeric_limits<double>::infinity();
    const int angles = 720;
    for (int a = 0; a < angles; ++a) {
      const double phi = std::numbers::pi * a / angles;
      const Point e{std::cos(phi), std::sin(phi)};
      double d = 0.0;
      for (const auto& c : table[i]) {
        const double proj = std::abs(dot(e, c.direction));
        if (regime == Regime::Cusp) {
          d += c.gamma_sq * q2 * std::pow(proj, 2.0 * kappa + 1.0);
        } else {
          const double h = std::sqrt(c.lambda_before + c.jump) - std::sqrt(c.lambda_before);
          d += h * h * proj / nu;
        }
      }
      weakest = std::min(weakest, d);
    }
    if (!(weakest > 0.0))
      throw DomainError("source " + std::to_string(i + 1) + " position is not identifiable in some direction");
    scales[i] = regime == Regime::Cusp ? std::pow(weakest, -1.0 / (2.0 * kappa + 1.0)) : 1.0 / weakest;
  }
  return scales;
}

GridSpec default_grid(const IntensityModel& model, const DetectorArray& array, const ThetaVector& theta0) {
  const auto s = u_scales(model, array, theta0);
  GridSpec g;
  g.half_width = {16.0 * s[0], 16.0 * s[1]};
  g.resolution = model.front.regime() == Regime::Cusp ? 65 : 257;
  const double lmax = std::max(g.half_width[0], g.half_width[1]);
  const double lmin = std::min(g.half_width[0], g.half_width[1]);
  g.v_half_width = 4.0 * lmax / array.nu();
  g.v_step = lmin / (256.0 * array.nu());
  return g;
}

LimitLawSample sample_zeta(const FisherMatrix& fisher, std::size_t count, std::uint64_t seed) {
  const FisherMatrix sym = 0.5 * (fisher + fisher.transpose());
  Eigen::SelfAdjointEigenSolver<FisherMatrix> eig(sym);
  const double smallest = eig.eigenvalues()[0];
  if (!(smallest > 1e-14 * std::max(1.0, eig.eigenvalues()[3]))) {
    std::ostringstream msg;
    msg << "Fisher information is singular: smallest eigenvalue " << smallest;
    throw DomainError(msg.str());
  }
  const FisherMatrix cov = sym.inverse();
  const Eigen::LLT<FisherMatrix> llt(0.5 * (cov + cov.transpose()));
  const FisherMatrix L = llt.matrixL();
  Engine rng(derive_seed(seed, {0}));
  std::normal_distribution<double> normal;
  LimitLawSample out;
  out.law = LimitLaw::Zeta;
  out.draws.reserve(count);
  for (std::size_t d = 0; d < count; ++d) {
    Vector4 z;
    for (int c = 0; c < 4; ++c) z[c] = normal(rng);
    const Vector4 x = L * z;
    out.draws.emplace_back(x[0], x[1], x[2], x[3]);
  }
  return out;
}

// ---------------------------------------------------------------------------

WienerField::WienerField(double kappa, double v_half_width, double v_step, double max_shift, std::uint64_t seed)
    : kappa_(kappa), h_(v_step), max_shift_(max_shift), seed_(seed) {
  if (!(kappa > 0.0 && kappa < 0.5)) throw DomainError("Wiener field needs 0 < kappa < 1/2");
  if (!(v_step > 0.0) || !(v_half_width > 0.0)) throw DomainError("invalid v-grid");
  if (!(max_shift < v_half_width)) throw DomainError("v-grid half width must exceed the largest shift");
  const auto cells = static_cast<std::size_t>(std::ceil(2.0 * v_half_width / v_step));
  V_ = 0.5 * static_cast<double>(cells) * v_step;
  Engine rng(derive_seed(seed, {0}));
  std::normal_distribution<double> normal;
  increments_.resize(cells);
  const double sd = std::sqrt(h_);
  for (auto& x : increments_) x = sd * normal(rng);

  // T_m = int_V^inf v^{kappa - m} dW, m = 1, 2, 3, jointly Gaussian.
  Eigen::Matrix3d cov;
  for (int m = 1; m <= 3; ++m)
    for (int l = 1; l <= 3; ++l) {
      const double e = m + l - 1.0 - 2.0 * kappa;
      cov(m - 1, l - 1) = std::pow(V_, -e) / e;
    }
  const Eigen::Matrix3d L = Eigen::LLT<Eigen::Matrix3d>(cov).matrixL();
  Engine tail_rng(derive_seed(seed, {1u << 20}));
  Eigen::Vector3d z;
  for (int c = 0; c < 3; ++c) z[c] = normal(tail_rng);
  const Eigen::Vector3d t = L * z;
  tail_ = {t[0], t[1], t[2]};
  tabulate();
}

void WienerField::tabulate() {
  const long N = static_cast<long>(increments_.size());
  max_index_ = static_cast<long>(std::ceil(max_shift_ / h_)) + 1;
  const long S = max_index_;
  std::vector<double> g(static_cast<std::size_t>(N + 2 * S));
  for (long idx = -S; idx < N + S; ++idx) {
    const double v = -V_ + (static_cast<double>(idx) + 0.5) * h_;
    g[static_cast<std::size_t>(idx + S)] = v > 0.0 ? std::pow(v, kappa_) : 0.0;
  }
  const double* base = g.data() + S;
  double at_zero = 0.0;
  for (long j = 0; j < N; ++j) at_zero += base[j] * increments_[static_cast<std::size_t>(j)];
  shift_values_.assign(static_cast<std::size_t>(2 * S + 1), 0.0);
  for (long s = -S; s <= S; ++s) {
    const double* row = base + s;
    double acc = 0.0;
    for (long j = 0; j < N; ++j) acc += row[j] * increments_[static_cast<std::size_t>(j)];
    shift_values_[static_cast<std::size_t>(s + S)] = acc - at_zero;
  }
}

double WienerField::tail(double a) const {
  const double k = kappa_;
  const double c1 = k * a;
  const double c2 = k * (k - 1.0) * a * a / 2.0;
  const double c3 = k * (k - 1.0) * (k - 2.0) * a * a * a / 6.0;
  return c1 * tail_[0] + c2 * tail_[1] + c3 * tail_[2];
}

double WienerField::integral(double a) const {
  const double x = a / h_;
  double fl = std::floor(x);
  long s0 = static_cast<long>(fl);
  if (s0 + 1 > max_index_ || s0 < -max_index_) throw DomainError("shift outside the tabulated range");
  const double f = x - fl;
  const std::size_t i0 = static_cast<std::size_t>(s0 + max_index_);
  const double grid = f == 0.0 ? shift_values_[i0] : (1.0 - f) * shift_values_[i0] + f * shift_values_[i0 + 1];
  return grid + tail(a);
}

WienerField WienerField::refined() const {
  WienerField out;
  out.kappa_ = kappa_;
  out.V_ = V_;
  out.h_ = 0.5 * h_;
  out.max_shift_ = max_shift_;
  out.seed_ = seed_;
  out.level_ = level_ + 1;
  out.tail_ = tail_;
  Engine rng(derive_seed(seed_, {static_cast<std::uint64_t>(out.level_)}));
  std::normal_distribution<double> normal;
  out.increments_.resize(2 * increments_.size());
  const double sd = 0.5 * std::sqrt(h_);
  for (std::size_t j = 0; j < increments_.size(); ++j) {
    const double left = 0.5 * increments_[j] + sd * normal(rng);
    out.increments_[2 * j] = left;
    out.increments_[2 * j + 1] = increments_[j] - left;
  }
  out.tabulate();
  return out;
}

PoissonPath::PoissonPath(double rate, double max_time, Engine& rng) : rate_(rate) {
  const double horizon = rate * max_time;
  double t = 0.0;
  for (;;) {
    t += -std::log1p(-uniform01(rng));
    if (t > horizon) break;
    points_.push_back(t);
  }
}

std::size_t PoissonPath::count(double a) const {
  return static_cast<std::size_t>(std::upper_bound(points_.begin(), points_.end(), rate_ * a) - points_.begin());
}

namespace {

double largest_shift(const LocalConstants& c, double half_width, double nu) {
  return half_width * (std::abs(c.direction.x) + std::abs(c.direction.y)) / nu;
}

void check_grid(const GridSpec& grid) {
  if (grid.resolution < 3 || grid.resolution % 2 == 0) throw DomainError("grid resolution must be odd and >= 3");
  if (!(grid.half_width[0] > 0.0) || !(grid.half_width[1] > 0.0)) throw DomainError("grid half widths must be positive");
}

}  // namespace

XiDraw make_xi_draw(const LocalTable& table, double kappa, const GridSpec& grid, double nu, std::uint64_t seed) {
  XiDraw draw;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < table[i].size(); ++k)
      draw.fields[i].emplace_back(kappa, grid.v_half_width, grid.v_step,
                                  largest_shift(table[i][k], grid.half_width[i], nu) + grid.v_step,
                                  derive_seed(seed, {i, k}));
  return draw;
}

XiDraw refine_xi_draw(const XiDraw& draw) {
  XiDraw out;
  for (std::size_t i = 0; i < 2; ++i)
    for (const auto& f : draw.fields[i]) out.fields[i].push_back(f.refined());
  return out;
}

double xi_log_z(const LocalTable& table, const XiDraw& draw, std::size_t i, Point u, double kappa, double q2,
                double nu) {
  double total = 0.0;
  for (std::size_t k = 0; k < table[i].size(); ++k) {
    const auto& c = table[i][k];
    const double a = dot(u, c.direction) / nu;
    total += c.gamma_hat * draw.fields[i][k].integral(a) -
             0.5 * c.gamma_hat * c.gamma_hat * q2 * std::pow(std::abs(a), 2.0 * kappa + 1.0);
  }
  return total;
}

EtaDraw make_eta_draw(const LocalTable& table, const GridSpec& grid, double nu, std::uint64_t seed) {
  EtaDraw draw;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < table[i].size(); ++k) {
      const auto& c = table[i][k];
      const double amax = largest_shift(c, grid.half_width[i], nu) * (1.0 + 1e-12);
      Engine rng_before(derive_seed(seed, {i, k, 0}));
      Engine rng_after(derive_seed(seed, {i, k, 1}));
      draw.before[i].emplace_back(c.lambda_before, amax, rng_before);
      draw.after[i].emplace_back(c.lambda_before + c.jump, amax, rng_after);
    }
  return draw;
}

double eta_log_z(const LocalTable& table, const EtaDraw& draw, std::size_t i, Point u, double nu) {
  double total = 0.0;
  for (std::size_t k = 0; k < table[i].size(); ++k) {
    const auto& c = table[i][k];
    if (c.jump == 0.0) continue;
    const double a = dot(u, c.direction) / nu;
    const double ell = std::log(c.lambda_before / (c.lambda_before + c.jump));
    if (a >= 0.0)
      total += -ell * static_cast<double>(draw.before[i][k].count(a)) - c.jump * a;
    else
      total += ell * static_cast<double>(draw.after[i][k].count(-a)) + c.jump * (-a);
  }
  return total;
}

LimitLawSample sample_xi(const ThetaVector& theta0, const DetectorArray& array, const IntensityModel& model,
                         const GridSpec& grid, std::size_t count, std::uint64_t seed) {
  if (model.front.regime() != Regime::Cusp) throw RegimeError("xi is the limit law of the cusp regime");
  check_grid(grid);
  const LocalTable table = local_constants(model, array, theta0);
  const double kappa = model.front.kappa();
  const double q2 = q_kappa_squared(kappa);
  const double nu = array.nu();
  LimitLawSample out;
  out.law = LimitLaw::Xi;
  out.grid = grid;
  for (std::size_t d = 0; d < count; ++d) {
    const XiDraw draw = make_xi_draw(table, kappa, grid, nu, derive_seed(seed, {d}));
    std::array<Point, 2> xi;
    for (std::size_t i = 0; i < 2; ++i) {
      double edge = 0.0;
      xi[i] = lattice_ratio([&](Point u) { return xi_log_z(table, draw, i, u, kappa, q2, nu); }, grid.half_width[i],
                            grid.resolution, &edge);
      out.edge_mass = std::max(out.edge_mass, edge);
    }
    out.draws.emplace_back(xi[0], xi[1]);
  }
  return out;
}

LimitLawSample sample_eta(const ThetaVector& theta0, const DetectorArray& array, const IntensityModel& model,
                          const GridSpec& grid, std::size_t count, std::uint64_t seed) {
  if (model.front.regime() != Regime::ChangePoint) throw RegimeError("eta is the limit law of the change-point regime");
  check_grid(grid);
  const LocalTable table = local_constants(model, array, theta0);
  const double nu = array.nu();
  LimitLawSample out;
  out.law = LimitLaw::Eta;
  out.grid = grid;
  for (std::size_t d = 0; d < count; ++d) {
    const EtaDraw draw = make_eta_draw(table, grid, nu, derive_seed(seed, {d}));
    std::array<Point, 2> eta;
    for (std::size_t i = 0; i < 2; ++i) {
      double edge = 0.0;
      eta[i] = lattice_ratio([&](Point u) { return eta_log_z(table, draw, i, u, nu); }, grid.half_width[i],
                             grid.resolution, &edge);
      out.edge_mass = std::max(out.edge_mass, edge);
    }
    out.draws.emplace_back(eta[0], eta[1]);
  }
  return out;
}

}  // namespace srcloc
