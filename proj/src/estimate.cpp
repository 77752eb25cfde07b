#include "srcloc/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "srcloc/errors.hpp"
#include "srcloc/lattice.hpp"
#include "srcloc/limits.hpp"
#include "srcloc/rng.hpp"

namespace srcloc {

std::string to_string(Method method) { return method == Method::MLE ? "mle" : "be"; }

Prior Prior::truncated_gaussian(const ParameterBox& box) {
  Prior p;
  p.kind = PriorKind::TruncatedGaussian;
  p.center = box.center();
  for (std::size_t c = 0; c < 4; ++c) p.sd[c] = 0.25 * box.width(c);
  return p;
}

double Prior::log_density(const ThetaVector& theta) const {
  if (kind == PriorKind::Uniform) return 0.0;
  double q = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    const double z = (theta[c] - center[c]) / sd[c];
    q += z * z;
  }
  return -0.5 * q;
}

namespace {

constexpr int kPolishSteps = 4;

struct Objective {
  const LogLikelihood* loglik;
  const ParameterBox* box;
  double penalty;
  long evaluations = 0;

  ThetaVector point(const gsl_vector* x) const {
    return ThetaVector(gsl_vector_get(x, 0), gsl_vector_get(x, 1), gsl_vector_get(x, 2), gsl_vector_get(x, 3));
  }
  double excess(const ThetaVector& raw, const ThetaVector& inside) const {
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) s += (raw[c] - inside[c]) * (raw[c] - inside[c]);
    return s;
  }
  double value(const gsl_vector* x) {
    const ThetaVector raw = point(x);
    const ThetaVector inside = box->clamp(raw);
    ++evaluations;
    return -(*loglik)(inside) + penalty * excess(raw, inside);
  }
  void gradient(const gsl_vector* x, gsl_vector* g) {
    const ThetaVector raw = point(x);
    const ThetaVector inside = box->clamp(raw);
    const Vector4 s = loglik->score(inside);
    for (std::size_t c = 0; c < 4; ++c) {
      const bool clamped = raw[c] != inside[c];
      gsl_vector_set(g, c, (clamped ? 0.0 : -s[c]) + 2.0 * penalty * (raw[c] - inside[c]));
    }
  }
};

double f_value(const gsl_vector* x, void* params) { return static_cast<Objective*>(params)->value(x); }
void f_gradient(const gsl_vector* x, void* params, gsl_vector* g) { static_cast<Objective*>(params)->gradient(x, g); }
void f_both(const gsl_vector* x, void* params, double* f, gsl_vector* g) {
  auto* obj = static_cast<Objective*>(params);
  *f = obj->value(x);
  obj->gradient(x, g);
}

struct Refined {
  ThetaVector theta;
  double value;
  int iterations;
};

gsl_vector* to_gsl(const ThetaVector& t) {
  gsl_vector* v = gsl_vector_alloc(4);
  for (std::size_t c = 0; c < 4; ++c) gsl_vector_set(v, c, t[c]);
  return v;
}

/// Fisher scoring steps from an interior point, kept while the score norm drops.
ThetaVector fisher_scoring_polish(const LogLikelihood& loglik, const ParameterBox& box, ThetaVector theta) {
  if (box.near_boundary(theta, kBoundaryTolerance)) return theta;
  Vector4 score = loglik.score(theta);
  for (int step = 0; step < kPolishSteps; ++step) {
    const FisherMatrix info = loglik.model().n * fisher_information(loglik.model(), loglik.array(), theta);
    const Eigen::LLT<FisherMatrix> llt(info);
    if (llt.info() != Eigen::Success) break;
    const Vector4 delta = llt.solve(score);
    ThetaVector next = theta;
    for (std::size_t c = 0; c < 4; ++c) next[c] += delta[static_cast<Eigen::Index>(c)];
    if (!box.contains(next) || box.near_boundary(next, kBoundaryTolerance)) break;
    const Vector4 next_score = loglik.score(next);
    if (!(next_score.norm() < score.norm()) || loglik(next) < loglik(theta) - 1e-9) break;
    theta = next;
    score = next_score;
  }
  return theta;
}

Refined refine_quasi_newton(Objective& obj, const ThetaVector& start, const MleOptions& opt) {
  gsl_multimin_function_fdf fdf{&f_value, &f_gradient, &f_both, 4, &obj};
  gsl_multimin_fdfminimizer* s = gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, 4);
  gsl_vector* x = to_gsl(start);
  double step = obj.box->width(0);
  for (std::size_t c = 1; c < 4; ++c) step = std::min(step, obj.box->width(c));
  gsl_multimin_fdfminimizer_set(s, &fdf, x, 0.01 * step, 0.1);
  int iter = 0;
  for (; iter < opt.max_iterations; ++iter) {
    if (gsl_multimin_fdfminimizer_iterate(s) != GSL_SUCCESS) break;
    if (gsl_multimin_test_gradient(s->gradient, opt.gradient_tol) == GSL_SUCCESS) {
      ++iter;
      break;
    }
  }
  ThetaVector best = obj.box->clamp(obj.point(s->x));
  gsl_multimin_fdfminimizer_free(s);
  gsl_vector_free(x);
  best = fisher_scoring_polish(*obj.loglik, *obj.box, best);
  return {best, (*obj.loglik)(best), iter};
}

Refined refine_simplex(Objective& obj, const ThetaVector& start, const MleOptions& opt) {
  gsl_multimin_function fn{&f_value, 4, &obj};
  ThetaVector current = start;
  double best_value = -std::numeric_limits<double>::infinity();
  int total_iter = 0;
  double scale = 0.5 / opt.lattice_per_axis;
  double width_min = obj.box->width(0);
  for (std::size_t c = 1; c < 4; ++c) width_min = std::min(width_min, obj.box->width(c));
  for (int round = 0; round <= opt.restarts; ++round) {
    gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 4);
    gsl_vector* x = to_gsl(current);
    gsl_vector* steps = gsl_vector_alloc(4);
    for (std::size_t c = 0; c < 4; ++c) gsl_vector_set(steps, c, scale * obj.box->width(c));
    gsl_multimin_fminimizer_set(s, &fn, x, steps);
    for (int iter = 0; iter < opt.max_iterations; ++iter, ++total_iter) {
      if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
      if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), opt.size_tolerance * width_min) == GSL_SUCCESS) break;
    }
    const ThetaVector next = obj.box->clamp(obj.point(s->x));
    gsl_multimin_fminimizer_free(s);
    gsl_vector_free(x);
    gsl_vector_free(steps);
    const double next_value = (*obj.loglik)(next);
    const bool improved = next_value > best_value;
    if (improved || round == 0) {
      current = next;
      best_value = std::max(best_value, next_value);
    }
    if (round > 0 && !improved) break;
    scale /= 4.0;
  }
  return {current, best_value, total_iter};
}

}  // namespace

EstimateResult mle(const LogLikelihood& loglik, const ParameterBox& box, Regime regime, const MleOptions& options) {
  if (options.lattice_per_axis < 1 || options.top_m < 1) throw DomainError("invalid MLE lattice options");
  gsl_set_error_handler_off();
  const auto scan = lattice_scan(loglik, box, options.lattice_per_axis);
  const auto starts = best_points(scan, static_cast<std::size_t>(options.top_m));

  Objective obj{&loglik, &box, 1e4 * (1.0 + loglik.model().n)};
  EstimateResult result;
  result.method = Method::MLE;
  result.theta_hat = starts.front().theta;
  result.log_likelihood = starts.front().value;
  const double lattice_best = starts.front().value;
  bool improved = false;
  for (const auto& start : starts) {
    const Refined r = regime == Regime::Smooth ? refine_quasi_newton(obj, start.theta, options)
                                               : refine_simplex(obj, start.theta, options);
    result.iterations += r.iterations;
    if (r.value > result.log_likelihood) {
      result.theta_hat = r.theta;
      result.log_likelihood = r.value;
    }
    if (r.value > lattice_best) improved = true;
  }
  if (!improved) result.warnings.push_back("refinement did not improve on the best lattice point");
  result.evaluations = static_cast<long>(scan.size()) + obj.evaluations;
  result.boundary = box.near_boundary(result.theta_hat, kBoundaryTolerance);
  return result;
}

EstimateResult mle(const ObservationSet& obs, const ParameterBox& box, Regime regime, const MleOptions& options) {
  obs.validate();
  if (obs.event_count() == 0 && obs.records.empty()) throw DataError("no observations");
  return mle(LogLikelihood(obs), box, regime, options);
}

WeightedMean weighted_posterior_mean(std::span<const ThetaVector> points, std::span<const double> log_weights) {
  if (points.size() != log_weights.size() || points.empty()) throw DomainError("points and weights must match");
  double peak = -std::numeric_limits<double>::infinity();
  for (double lw : log_weights) peak = std::max(peak, lw);
  if (!std::isfinite(peak)) throw DomainError("all importance weights vanish");
  double sum = 0.0, sum_sq = 0.0;
  std::array<double, 4> acc{0.0, 0.0, 0.0, 0.0};
  for (std::size_t j = 0; j < points.size(); ++j) {
    const double w = std::exp(log_weights[j] - peak);
    sum += w;
    sum_sq += w * w;
    for (std::size_t c = 0; c < 4; ++c) acc[c] += w * points[j][c];
  }
  WeightedMean out;
  for (std::size_t c = 0; c < 4; ++c) out.mean[c] = acc[c] / sum;
  out.ess = sum * sum / sum_sq;
  return out;
}

namespace {

using Matrix4 = Eigen::Matrix4d;

constexpr int kPilotRounds = 3;
constexpr double kPilotSettledFraction = 0.3;

struct Proposal {
  Vector4 center;
  Matrix4 scale;  // Student-t scale matrix
  Matrix4 chol;
  Matrix4 inverse;
  double log_norm = 0.0;
  double dof = 4.0;

  void finalize() {
    scale = 0.5 * (scale + scale.transpose());
    const Eigen::LLT<Matrix4> llt(scale);
    chol = llt.matrixL();
    inverse = scale.inverse();
    const double logdet = 2.0 * chol.diagonal().array().log().sum();
    log_norm = std::lgamma(0.5 * (dof + 4.0)) - std::lgamma(0.5 * dof) - 2.0 * std::log(dof * std::numbers::pi) -
               0.5 * logdet;
  }
  double log_pdf(const Vector4& x) const {
    const Vector4 d = x - center;
    const double q = d.dot(inverse * d);
    return log_norm - 0.5 * (dof + 4.0) * std::log1p(q / dof);
  }
};

bool positive_definite(const Matrix4& m) {
  Eigen::SelfAdjointEigenSolver<Matrix4> eig(0.5 * (m + m.transpose()));
  return eig.info() == Eigen::Success && eig.eigenvalues()[0] > 1e-300 &&
         eig.eigenvalues()[0] > 1e-12 * eig.eigenvalues()[3];
}

Matrix4 fallback_scale(const ParameterBox& box) {
  Matrix4 m = Matrix4::Zero();
  for (int c = 0; c < 4; ++c) m(c, c) = std::pow(0.25 * box.width(static_cast<std::size_t>(c)), 2);
  return m;
}

Matrix4 initial_scale(const LogLikelihood& loglik, const ParameterBox& box, const ThetaVector& mode,
                      std::vector<std::string>& warnings) {
  const IntensityModel& model = loglik.model();
  const double n = model.n;
  try {
    switch (model.front.regime()) {
      case Regime::Smooth: {
        const Matrix4 info = n * fisher_information(model, loglik.array(), mode);
        if (positive_definite(info)) return info.inverse();
        break;
      }
      case Regime::Cusp:
      case Regime::ChangePoint: {
        const auto s = u_scales(model, loglik.array(), mode);
        const double rate = model.front.regime() == Regime::Cusp ? std::pow(n, -1.0 / (2.0 * model.front.kappa() + 1.0))
                                                                : 1.0 / n;
        Matrix4 m = Matrix4::Zero();
        for (int c = 0; c < 4; ++c) m(c, c) = std::pow(s[static_cast<std::size_t>(c / 2)] * rate, 2);
        if (positive_definite(m)) return m;
        break;
      }
    }
  } catch (const Error&) {
  }
  warnings.push_back("local proposal scale unavailable at the mode; using a box-wide scale");
  return fallback_scale(box);
}

struct DrawSet {
  std::vector<ThetaVector> points;
  std::vector<double> log_w;
  std::size_t local = 0;
};

DrawSet draw_and_weight(const LogLikelihood& loglik, const ParameterBox& box, const Prior& prior,
                        const Proposal& prop, std::size_t count, double residual_fraction, Engine& rng,
                        long& evaluations) {
  DrawSet set;
  const auto n_resid = static_cast<std::size_t>(std::llround(residual_fraction * static_cast<double>(count)));
  const std::size_t n_local = count - n_resid;
  set.local = n_local;
  std::normal_distribution<double> normal;
  std::gamma_distribution<double> gamma(0.5 * prop.dof, 2.0 / prop.dof);
  for (std::size_t j = 0; j < n_local; ++j) {
    Vector4 z;
    for (int c = 0; c < 4; ++c) z[c] = normal(rng);
    const Vector4 x = prop.center + prop.chol * z / std::sqrt(gamma(rng));
    set.points.emplace_back(x[0], x[1], x[2], x[3]);
  }
  if (n_resid > 0) {
    std::array<std::vector<std::size_t>, 4> perm;
    for (auto& p : perm) {
      p.resize(n_resid);
      std::iota(p.begin(), p.end(), std::size_t{0});
      for (std::size_t j = n_resid - 1; j > 0; --j) {
        const auto r = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(j + 1));
        std::swap(p[j], p[std::min(r, j)]);
      }
    }
    for (std::size_t j = 0; j < n_resid; ++j) {
      ThetaVector t;
      for (std::size_t c = 0; c < 4; ++c)
        t[c] = box.lower()[c] +
               (static_cast<double>(perm[c][j]) + uniform01(rng)) / static_cast<double>(n_resid) * box.width(c);
      set.points.push_back(t);
    }
  }
  const double log_local = std::log1p(-residual_fraction);
  const double log_resid = residual_fraction > 0.0 ? std::log(residual_fraction) - std::log(box.volume())
                                                   : -std::numeric_limits<double>::infinity();
  set.log_w.resize(set.points.size());
  for (std::size_t j = 0; j < set.points.size(); ++j) {
    const ThetaVector& t = set.points[j];
    if (!box.contains(t)) {
      set.log_w[j] = -std::numeric_limits<double>::infinity();
      continue;
    }
    const Vector4 x(t[0], t[1], t[2], t[3]);
    const double a = log_local + prop.log_pdf(x);
    const double m = std::max(a, log_resid);
    const double log_q = m + std::log(std::exp(a - m) + std::exp(log_resid - m));
    ++evaluations;
    set.log_w[j] = loglik(t) + prior.log_density(t) - log_q;
  }
  return set;
}

bool any_finite(const std::vector<double>& v) {
  return std::any_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

EstimateResult bayes_estimate(const LogLikelihood& loglik, const ParameterBox& box, const Prior& prior,
                              const BayesOptions& options) {
  if (options.draws < 10) throw DomainError("too few importance draws");
  if (!(options.residual_fraction >= 0.0 && options.residual_fraction < 1.0))
    throw DomainError("residual fraction must lie in [0, 1)");
  const EstimateResult mode = mle(loglik, box, loglik.model().front.regime(), options.mode);
  EstimateResult result;
  result.method = Method::BE;
  result.iterations = mode.iterations;
  result.warnings = mode.warnings;
  long evaluations = mode.evaluations;

  Proposal prop;
  prop.dof = options.student_dof;
  prop.center = Vector4(mode.theta_hat[0], mode.theta_hat[1], mode.theta_hat[2], mode.theta_hat[3]);
  prop.scale = initial_scale(loglik, box, mode.theta_hat, result.warnings);
  prop.finalize();

  Engine rng(derive_seed(options.seed, {0}));
  // Pilot rounds: re-centre and re-shape the local proposal from weighted draws.
  for (int round = 0; round < kPilotRounds; ++round) {
    const std::size_t pilot = std::max<std::size_t>(200, options.draws / 5);
    const DrawSet set = draw_and_weight(loglik, box, prior, prop, pilot, options.residual_fraction, rng, evaluations);
    if (any_finite(set.log_w)) {
      const WeightedMean wm = weighted_posterior_mean(set.points, set.log_w);
      if (wm.ess >= 30.0) {
        double peak = -std::numeric_limits<double>::infinity();
        for (double lw : set.log_w) peak = std::max(peak, lw);
        const Vector4 mu(wm.mean[0], wm.mean[1], wm.mean[2], wm.mean[3]);
        Matrix4 cov = Matrix4::Zero();
        double sum = 0.0;
        for (std::size_t j = 0; j < set.points.size(); ++j) {
          const double w = std::exp(set.log_w[j] - peak);
          if (w == 0.0) continue;
          const Vector4 d = Vector4(set.points[j][0], set.points[j][1], set.points[j][2], set.points[j][3]) - mu;
          cov += w * d * d.transpose();
          sum += w;
        }
        cov /= sum;
        if (positive_definite(cov)) {
          prop.center = mu;
          prop.scale = cov;
          prop.finalize();
        }
      }
      if (wm.ess >= kPilotSettledFraction * static_cast<double>(pilot)) break;
    }
  }

  std::size_t count = options.draws;
  WeightedMean wm;
  DrawSet set;
  bool converged = false;
  for (int attempt = 0; attempt < std::max(1, options.max_attempts); ++attempt) {
    set = draw_and_weight(loglik, box, prior, prop, count, options.residual_fraction, rng, evaluations);
    if (any_finite(set.log_w)) {
      wm = weighted_posterior_mean(set.points, set.log_w);
      if (wm.ess >= options.min_ess) {
        converged = true;
        break;
      }
    }
    count *= 2;
  }
  if (!any_finite(set.log_w)) throw Error("importance sampling produced no draw inside the box");
  if (!converged) result.warnings.push_back("effective sample size below " + format_double(options.min_ess));

  double peak = -std::numeric_limits<double>::infinity();
  for (double lw : set.log_w) peak = std::max(peak, lw);
  double total = 0.0, local = 0.0;
  for (std::size_t j = 0; j < set.points.size(); ++j) {
    const double w = std::exp(set.log_w[j] - peak);
    total += w;
    if (j < set.local) local += w;
  }
  result.theta_hat = box.clamp(wm.mean);
  result.ess = wm.ess;
  result.posterior_mass = local / total;
  result.log_likelihood = loglik(result.theta_hat);
  result.evaluations = evaluations + 1;
  result.boundary = box.near_boundary(result.theta_hat, kBoundaryTolerance);
  return result;
}

EstimateResult bayes_estimate(const ObservationSet& obs, const ParameterBox& box, const Prior& prior,
                              const BayesOptions& options) {
  obs.validate();
  return bayes_estimate(LogLikelihood(obs), box, prior, options);
}

}  // namespace srcloc
