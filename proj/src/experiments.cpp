#include "srcloc/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "srcloc/errors.hpp"
#include "srcloc/likelihood.hpp"
#include "srcloc/rng.hpp"
#include "srcloc/simulate.hpp"

namespace srcloc {

std::string to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::Identifiable:
      return "identifiable";
    case Verdict::Cross:
      return "cross";
    case Verdict::TooFew:
      return "too-few";
  }
  return "unknown";
}

namespace {

std::optional<std::array<ThetaVector, 2>> confusable_in_box(const CrossWitness& w, const ParameterBox& box,
                                                            double tol) {
  const int grid = 41;
  const auto& lo = box.lower();
  for (int a = 0; a < grid; ++a)
    for (int b = 0; b < grid; ++b) {
      const Point s1{lo[0] + (a + 0.5) / grid * box.width(0), lo[1] + (b + 0.5) / grid * box.width(1)};
      if (w.line1.distance(s1) <= 1e3 * tol || w.line2.distance(s1) <= 1e3 * tol) continue;
      const ConfusablePairs pairs = confusable_pair(w.line1, w.line2, s1, tol);
      const ThetaVector first(pairs.first[0], pairs.first[1]);
      const ThetaVector second(pairs.second[0], pairs.second[1]);
      if (!box.contains(first)) continue;
      if (box.contains(second)) return std::array<ThetaVector, 2>{first, second};
      if (box.contains(second.swapped())) return std::array<ThetaVector, 2>{first, second.swapped()};
    }
  return std::nullopt;
}

}  // namespace

IdentifiabilityReport identifiability_screen(const DetectorArray& array, const ParameterBox& box, double tol) {
  IdentifiabilityReport r;
  r.detectors = array.size();
  r.witness = lies_on_cross(array.positions(), tol);
  if (array.size() <= 3) {
    r.verdict = Verdict::TooFew;
  } else if (r.witness) {
    r.verdict = Verdict::Cross;
  } else {
    r.verdict = Verdict::Identifiable;
    if (array.size() == 4) r.warnings.push_back("only 4 detectors: identifiability rests on the non-cross geometry alone");
  }
  if (r.witness) r.confusable = confusable_in_box(*r.witness, box, tol);
  return r;
}

std::string describe(const IdentifiabilityReport& r) {
  std::ostringstream out;
  out.precision(12);
  out << "detectors: " << r.detectors << "\n";
  out << "verdict: " << to_string(r.verdict) << "\n";
  if (r.witness) {
    const auto line = [&](const char* name, const Line& l) {
      out << name << ": point (" << l.point.x << ", " << l.point.y << ") direction (" << l.direction.x << ", "
          << l.direction.y << ")\n";
    };
    line("line1", r.witness->line1);
    line("line2", r.witness->line2);
    out << "assignment:";
    for (int a : r.witness->assignment) out << ' ' << (a + 1);
    out << "\n";
  }
  if (r.confusable) {
    for (std::size_t j = 0; j < 2; ++j) {
      const ThetaVector& t = (*r.confusable)[j];
      out << "confusable" << (j + 1) << ": (" << t[0] << ", " << t[1] << ") (" << t[2] << ", " << t[3] << ")\n";
    }
  }
  for (const auto& w : r.warnings) out << "warning: " << w << "\n";
  return out.str();
}

SlopeFit ols_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t m = x.size();
  if (m < 2 || y.size() != m) throw DomainError("regression needs at least two matching points");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(m);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(m);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    sxx += (x[j] - mx) * (x[j] - mx);
    sxy += (x[j] - mx) * (y[j] - my);
  }
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (m > 2) {
    double rss = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double r = y[j] - fit.intercept - fit.slope * x[j];
      rss += r * r;
    }
    fit.slope_se = std::sqrt(rss / static_cast<double>(m - 2) / sxx);
  }
  return fit;
}

namespace {

std::vector<double> distance_matrix(const std::vector<ThetaVector>& pooled) {
  const std::size_t N = pooled.size();
  std::vector<double> d(N * N, 0.0);
  for (std::size_t a = 0; a < N; ++a)
    for (std::size_t b = a + 1; b < N; ++b) d[a * N + b] = d[b * N + a] = distance(pooled[a], pooled[b]);
  return d;
}

double energy_from_labels(const std::vector<double>& d, std::size_t N, const std::vector<char>& in_x, std::size_t nx) {
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t a = 0; a < N; ++a) {
    const double* row = d.data() + a * N;
    for (std::size_t b = a + 1; b < N; ++b) {
      if (in_x[a] != in_x[b])
        sxy += row[b];
      else if (in_x[a])
        sxx += row[b];
      else
        syy += row[b];
    }
  }
  const double ny = static_cast<double>(N - nx);
  const double mx = static_cast<double>(nx);
  return 2.0 * sxy / (mx * ny) - 2.0 * sxx / (mx * mx) - 2.0 * syy / (ny * ny);
}

}  // namespace

double energy_distance(const std::vector<ThetaVector>& x, const std::vector<ThetaVector>& y) {
  if (x.empty() || y.empty()) throw DomainError("energy distance needs two non-empty samples");
  std::vector<ThetaVector> pooled(x);
  pooled.insert(pooled.end(), y.begin(), y.end());
  std::vector<char> in_x(pooled.size(), 0);
  std::fill(in_x.begin(), in_x.begin() + static_cast<std::ptrdiff_t>(x.size()), 1);
  return energy_from_labels(distance_matrix(pooled), pooled.size(), in_x, x.size());
}

PermutationTest energy_test(const std::vector<ThetaVector>& x, const std::vector<ThetaVector>& y, int permutations,
                            std::uint64_t seed) {
  if (x.empty() || y.empty()) throw DomainError("energy test needs two non-empty samples");
  std::vector<ThetaVector> pooled(x);
  pooled.insert(pooled.end(), y.begin(), y.end());
  const std::size_t N = pooled.size();
  const auto d = distance_matrix(pooled);
  std::vector<char> labels(N, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(x.size()), 1);
  PermutationTest out;
  out.statistic = energy_from_labels(d, N, labels, x.size());
  Engine rng(derive_seed(seed, {0}));
  int exceed = 0;
  for (int p = 0; p < permutations; ++p) {
    for (std::size_t j = N - 1; j > 0; --j) {
      const auto r = std::min(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(j + 1)), j);
      std::swap(labels[j], labels[r]);
    }
    if (energy_from_labels(d, N, labels, x.size()) >= out.statistic) ++exceed;
  }
  out.p_value = (exceed + 1.0) / (permutations + 1.0);
  return out;
}

MomentScores moment_scores(const std::vector<ThetaVector>& sample) {
  const double M = static_cast<double>(sample.size());
  if (sample.size() < 4) throw DomainError("moment scores need at least 4 points");
  MomentScores s;
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0.0;
    for (const auto& t : sample) mean += t[c];
    mean /= M;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (const auto& t : sample) {
      const double d = t[c] - mean;
      m2 += d * d;
      m3 += d * d * d;
      m4 += d * d * d * d;
    }
    m2 /= M;
    m3 /= M;
    m4 /= M;
    s.skewness[c] = m3 / std::pow(m2, 1.5);
    s.excess_kurtosis[c] = m4 / (m2 * m2) - 3.0;
    s.skew_z[c] = s.skewness[c] / std::sqrt(6.0 / M);
    s.kurtosis_z[c] = s.excess_kurtosis[c] / std::sqrt(24.0 / M);
  }
  return s;
}

std::uint64_t replication_seed(std::uint64_t master, std::uint64_t stage, std::uint64_t n_index, std::uint64_t rep) {
  return derive_seed(master, {stage, n_index, rep});
}

double estimation_error(const ScenarioConfig& config, const ThetaVector& estimate) {
  return config.model.identical_sources() ? permutation_min_distance(estimate, config.theta0)
                                          : distance(estimate, config.theta0);
}

std::vector<ReplicationRow> run_replications(const ScenarioConfig& config, double n, std::size_t n_index,
                                             std::uint64_t stage, int first, int count, Method method,
                                             const Prior& prior, unsigned workers) {
  std::vector<ReplicationRow> rows(static_cast<std::size_t>(std::max(0, count)));
  const IntensityModel model = config.model.with_n(n);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto work = [&] {
    for (;;) {
      const int j = next.fetch_add(1);
      if (j >= count) return;
      try {
        const int rep = first + j;
        const std::uint64_t seed = replication_seed(config.seed, stage, n_index, static_cast<std::uint64_t>(rep));
        const ObservationSet obs = simulate(model, config.array, config.theta0, derive_seed(seed, {0}));
        const LogLikelihood loglik(obs);
        EstimateResult est;
        if (method == Method::MLE) {
          est = mle(loglik, config.box, model.front.regime(), config.mle);
        } else {
          BayesOptions opt = config.bayes;
          opt.seed = derive_seed(seed, {1});
          est = bayes_estimate(loglik, config.box, prior, opt);
        }
        ReplicationRow& row = rows[static_cast<std::size_t>(j)];
        row.scenario = config.scenario;
        row.regime = model.front.regime();
        row.n = n;
        row.rep = rep;
        row.theta_hat = est.theta_hat;
        row.error = estimation_error(config, est.theta_hat);
        row.warnings = est.warnings;
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max(1, count))));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return rows;
}

std::pair<double, double> target_slope(const FrontSpec& front) {
  switch (front.regime()) {
    case Regime::Smooth:
      return {-0.5, 0.1};
    case Regime::Cusp:
      return {-1.0 / (2.0 * front.kappa() + 1.0), 0.1};
    case Regime::ChangePoint:
      return {-1.0, 0.15};
  }
  return {0.0, 0.0};
}

double rate(const FrontSpec& front, double n) {
  switch (front.regime()) {
    case Regime::Smooth:
      return 1.0 / std::sqrt(n);
    case Regime::Cusp:
      return std::pow(n, -1.0 / (2.0 * front.kappa() + 1.0));
    case Regime::ChangePoint:
      return 1.0 / n;
  }
  return 1.0;
}

IdentifiabilityReport require_identifiable(const ScenarioConfig& config, const RunOptions& options) {
  IdentifiabilityReport screen = identifiability_screen(config.array, config.box);
  if (screen.verdict != Verdict::Identifiable && !options.force)
    throw IdentifiabilityError("detector configuration cannot identify two sources\n" + describe(screen));
  return screen;
}

namespace {

const ExperimentSettings& settings(const ScenarioConfig& config) {
  if (!config.experiment) throw ConfigError("config has no 'experiment' section");
  return *config.experiment;
}

bool pure_noise(const IntensityModel& model) {
  for (const auto& row : model.amplitudes)
    for (const auto& a : row)
      if (a.level != 0.0 || a.slope != 0.0) return false;
  return true;
}

std::vector<ThetaVector> rescaled(const ScenarioConfig& config, const std::vector<ReplicationRow>& rows,
                                  double factor) {
  std::vector<ThetaVector> out;
  for (const auto& r : rows) {
    const ThetaVector est =
        config.model.identical_sources() ? align_labels(r.theta_hat, config.theta0) : r.theta_hat;
    ThetaVector e;
    for (std::size_t c = 0; c < 4; ++c) e[c] = factor * (est[c] - config.theta0[c]);
    out.push_back(e);
  }
  return out;
}

std::vector<ReplicationRow> rows_at(const std::vector<ReplicationRow>& rows, double n, int count) {
  std::vector<ReplicationRow> out;
  for (const auto& r : rows)
    if (r.n == n && r.rep < count) out.push_back(r);
  return out;
}

LimitLawSample limit_sample(const ScenarioConfig& config, std::size_t count) {
  const std::uint64_t seed = derive_seed(config.seed, {kStageLimit});
  if (config.regime() == Regime::Cusp)
    return sample_xi(config.theta0, config.array, config.model, config.grid(), count, seed);
  if (config.regime() == Regime::ChangePoint)
    return sample_eta(config.theta0, config.array, config.model, config.grid(), count, seed);
  return sample_zeta(fisher_information(config.model, config.array, config.theta0), count, seed);
}

}  // namespace

RateReport rate_report(const ScenarioConfig& config, Method method, const std::vector<ReplicationRow>& rows) {
  const ExperimentSettings& es = settings(config);
  RateReport r;
  r.scenario = config.scenario;
  r.regime = config.regime();
  r.method = method;
  std::tie(r.target, r.tolerance) = target_slope(config.model.front);
  std::vector<double> lx, ly;
  for (double n : es.n_ladder) {
    const auto at = rows_at(rows, n, es.replications);
    if (at.empty()) throw Error("no replications at n = " + format_double(n));
    double sq = 0.0;
    for (const auto& row : at) {
      sq += row.error * row.error;
      for (const auto& w : row.warnings) {
        const std::string msg = "n=" + format_double(n) + ": " + w;
        if (std::find(r.warnings.begin(), r.warnings.end(), msg) == r.warnings.end()) r.warnings.push_back(msg);
      }
    }
    r.n.push_back(n);
    r.rmse.push_back(std::sqrt(sq / static_cast<double>(at.size())));
    lx.push_back(std::log(n));
    ly.push_back(std::log(r.rmse.back()));
  }
  const bool degenerate = std::any_of(r.rmse.begin(), r.rmse.end(), [](double v) { return !(v > 0.0); });
  if (pure_noise(config.model) || degenerate) {
    r.defined = false;
    r.pass = false;
    r.slope = r.slope_se = r.intercept = std::numeric_limits<double>::quiet_NaN();
    r.warnings.push_back(pure_noise(config.model) ? "pure-noise scenario: the error does not shrink with n"
                                                  : "zero RMSE at some rung");
    return r;
  }
  const SlopeFit fit = ols_fit(lx, ly);
  r.slope = fit.slope;
  r.slope_se = fit.slope_se;
  r.intercept = fit.intercept;
  r.pass = std::abs(r.slope - r.target) <= r.tolerance;
  return r;
}

NormalityReport normality_report(const ScenarioConfig& config, double n, const std::vector<ReplicationRow>& rows) {
  NormalityReport r;
  r.n = n;
  r.replications = static_cast<int>(rows.size());
  const auto err = rescaled(config, rows, std::sqrt(n));
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  for (const auto& e : err) mean += Eigen::Vector4d(e[0], e[1], e[2], e[3]);
  mean /= static_cast<double>(err.size());
  Eigen::Matrix4d cov = Eigen::Matrix4d::Zero();
  double risk = 0.0;
  for (const auto& e : err) {
    const Eigen::Vector4d v(e[0], e[1], e[2], e[3]);
    cov += (v - mean) * (v - mean).transpose();
    risk += v.squaredNorm();
  }
  cov /= static_cast<double>(err.size() - 1);
  risk /= static_cast<double>(err.size());
  r.empirical_covariance = cov;
  r.inverse_fisher = fisher_information(config.model, config.array, config.theta0).inverse();
  r.covariance_error = (cov - r.inverse_fisher).norm() / r.inverse_fisher.norm();
  r.risk_ratio = risk / r.inverse_fisher.trace();
  r.moments = moment_scores(err);
  bool skew_ok = true;
  for (double z : r.moments.skew_z) skew_ok = skew_ok && std::abs(z) < 4.0;
  r.pass = r.covariance_error < 0.2 && r.risk_ratio >= 0.85 && r.risk_ratio <= 1.25 && skew_ok;
  return r;
}

LimitLawReport limit_law_report(const ScenarioConfig& config, double n, const std::vector<ReplicationRow>& rows,
                                const LimitLawSample& sample, int permutations, std::uint64_t seed) {
  LimitLawReport r;
  r.law = sample.law;
  r.n = n;
  r.replications = static_cast<int>(rows.size());
  r.draws = static_cast<int>(sample.draws.size());
  r.edge_mass = sample.edge_mass;
  r.rescaled_errors = rescaled(config, rows, 1.0 / rate(config.model.front, n));
  r.limit_draws = sample.draws;
  r.test = energy_test(r.rescaled_errors, sample.draws, permutations, derive_seed(seed, {0}));
  r.control = energy_test(rescaled(config, rows, std::sqrt(n)), sample.draws, permutations, derive_seed(seed, {1}));
  r.pass = r.test.p_value > 0.01 && r.control.p_value < 0.01;
  return r;
}

RateReport run_rate_experiment(const ScenarioConfig& config, const RunOptions& options,
                               std::vector<ReplicationRow>* rows) {
  require_identifiable(config, options);
  const ExperimentSettings& es = settings(config);
  std::vector<ReplicationRow> all;
  for (std::size_t j = 0; j < es.n_ladder.size(); ++j) {
    auto part = run_replications(config, es.n_ladder[j], j, kStageRate, 0, es.replications, es.estimator,
                                 Prior::uniform(), options.workers);
    all.insert(all.end(), part.begin(), part.end());
  }
  RateReport report = rate_report(config, es.estimator, all);
  if (rows) *rows = std::move(all);
  return report;
}

namespace {

/// Replication rows at scale n: the top rung reuses the rate-stage seeds.
std::vector<ReplicationRow> stage_rows(const ScenarioConfig& config, double n, int count, Method method,
                                       std::uint64_t fallback_stage, unsigned workers) {
  const ExperimentSettings& es = settings(config);
  const std::size_t top = es.n_ladder.size() - 1;
  if (n == es.n_ladder[top])
    return run_replications(config, n, top, kStageRate, 0, count, method, Prior::uniform(), workers);
  return run_replications(config, n, 0, fallback_stage, 0, count, method, Prior::uniform(), workers);
}

}  // namespace

NormalityReport normality_check(const ScenarioConfig& config, const RunOptions& options,
                                std::vector<ReplicationRow>* rows) {
  if (config.regime() != Regime::Smooth) throw RegimeError("the normality check applies to the smooth regime");
  require_identifiable(config, options);
  const ExperimentSettings& es = settings(config);
  const double n = es.normality_n > 0.0 ? es.normality_n : es.n_ladder.back();
  auto at = stage_rows(config, n, es.normality_replications, Method::MLE, kStageNormality, options.workers);
  NormalityReport report = normality_report(config, n, at);
  if (rows) *rows = std::move(at);
  return report;
}

LimitLawReport limit_law_check(const ScenarioConfig& config, const RunOptions& options,
                               std::vector<ReplicationRow>* rows) {
  if (config.regime() == Regime::Smooth) throw RegimeError("the limit-law check applies to cusp and change-point regimes");
  require_identifiable(config, options);
  const ExperimentSettings& es = settings(config);
  const double n = es.n_ladder.back();
  auto at = stage_rows(config, n, es.limit_replications, Method::BE, kStageLimit, options.workers);
  const LimitLawSample sample = limit_sample(config, static_cast<std::size_t>(es.limit_draws));
  LimitLawReport report =
      limit_law_report(config, n, at, sample, es.permutations, derive_seed(config.seed, {kStageLimit, 1}));
  if (rows) *rows = std::move(at);
  return report;
}

// ---------------------------------------------------------------- output

std::string results_csv(const std::vector<ReplicationRow>& rows) {
  std::string out = "scenario,regime,n,rep,theta1,theta2,theta3,theta4,error\n";
  for (const auto& r : rows) {
    out += r.scenario + "," + to_string(r.regime) + "," + format_double(r.n) + "," + std::to_string(r.rep);
    for (std::size_t c = 0; c < 4; ++c) out += "," + format_double(r.theta_hat[c]);
    out += "," + format_double(r.error) + "\n";
  }
  return out;
}

std::string limits_csv(const std::vector<ThetaVector>& draws) {
  std::string out = "draw,u1,u2,u3,u4\n";
  for (std::size_t d = 0; d < draws.size(); ++d) {
    out += std::to_string(d);
    for (std::size_t c = 0; c < 4; ++c) out += "," + format_double(draws[d][c]);
    out += "\n";
  }
  return out;
}

namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json matrix_json(const Eigen::Matrix4d& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int a = 0; a < 4; ++a) {
    nlohmann::json row = nlohmann::json::array();
    for (int b = 0; b < 4; ++b) row.push_back(m(a, b));
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json rate_object(const RateReport& r) {
  nlohmann::json j;
  j["scenario"] = r.scenario;
  j["regime"] = to_string(r.regime);
  j["estimator"] = to_string(r.method);
  j["n"] = r.n;
  j["rmse"] = r.rmse;
  j["defined"] = r.defined;
  j["slope"] = number_or_null(r.slope);
  j["slope_se"] = number_or_null(r.slope_se);
  j["intercept"] = number_or_null(r.intercept);
  j["target_slope"] = r.target;
  j["tolerance"] = r.tolerance;
  j["pass"] = r.pass;
  j["warnings"] = r.warnings;
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace

std::string rate_json(const RateReport& report) { return rate_object(report).dump(2) + "\n"; }

std::string normality_json(const NormalityReport& r) {
  nlohmann::json j;
  j["n"] = r.n;
  j["replications"] = r.replications;
  j["empirical_covariance"] = matrix_json(r.empirical_covariance);
  j["inverse_fisher"] = matrix_json(r.inverse_fisher);
  j["covariance_relative_frobenius_error"] = r.covariance_error;
  j["risk_ratio"] = r.risk_ratio;
  j["skewness"] = r.moments.skewness;
  j["skewness_z"] = r.moments.skew_z;
  j["excess_kurtosis"] = r.moments.excess_kurtosis;
  j["kurtosis_z"] = r.moments.kurtosis_z;
  j["pass"] = r.pass;
  return j.dump(2) + "\n";
}

std::string limit_law_json(const LimitLawReport& r) {
  nlohmann::json j;
  j["law"] = to_string(r.law);
  j["n"] = r.n;
  j["replications"] = r.replications;
  j["draws"] = r.draws;
  j["energy_statistic"] = r.test.statistic;
  j["p_value"] = r.test.p_value;
  j["control_energy_statistic"] = r.control.statistic;
  j["control_p_value"] = r.control.p_value;
  j["edge_mass"] = r.edge_mass;
  j["pass"] = r.pass;
  return j.dump(2) + "\n";
}

ExperimentOutputs run_experiment(const ScenarioConfig& config, const std::string& out_dir, const RunOptions& options) {
  using clock = std::chrono::steady_clock;
  require_identifiable(config, options);
  const ExperimentSettings& es = settings(config);
  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  ExperimentOutputs out;

  const Regime regime = config.regime();
  const std::size_t top = es.n_ladder.size() - 1;
  const bool normality = regime == Regime::Smooth;
  const double normality_n = es.normality_n > 0.0 ? es.normality_n : es.n_ladder[top];
  int top_count = es.replications;
  if (normality && normality_n == es.n_ladder[top]) top_count = std::max(top_count, es.normality_replications);
  if (!normality) top_count = std::max(top_count, es.limit_replications);

  auto t0 = clock::now();
  std::vector<ReplicationRow> rows;
  for (std::size_t j = 0; j < es.n_ladder.size(); ++j) {
    const int count = j == top ? top_count : es.replications;
    auto part = run_replications(config, es.n_ladder[j], j, kStageRate, 0, count, es.estimator, Prior::uniform(),
                                 options.workers);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  out.rates = rate_report(config, es.estimator, rows);
  out.timings.emplace_back("rate", std::chrono::duration<double>(clock::now() - t0).count());

  std::vector<ThetaVector> limit_draws;
  if (normality) {
    t0 = clock::now();
    std::vector<ReplicationRow> at;
    if (normality_n == es.n_ladder[top]) {
      at = rows_at(rows, normality_n, es.normality_replications);
      if (es.estimator != Method::MLE)
        at = run_replications(config, normality_n, top, kStageRate, 0, es.normality_replications, Method::MLE,
                              Prior::uniform(), options.workers);
    } else {
      at = run_replications(config, normality_n, 0, kStageNormality, 0, es.normality_replications, Method::MLE,
                            Prior::uniform(), options.workers);
      rows.insert(rows.end(), at.begin(), at.end());
    }
    out.normality = normality_report(config, normality_n, at);
    limit_draws = sample_zeta(fisher_information(config.model, config.array, config.theta0),
                              static_cast<std::size_t>(es.limit_draws), derive_seed(config.seed, {kStageLimit}))
                      .draws;
    out.timings.emplace_back("normality", std::chrono::duration<double>(clock::now() - t0).count());
  } else {
    t0 = clock::now();
    std::vector<ReplicationRow> at = rows_at(rows, es.n_ladder[top], es.limit_replications);
    if (es.estimator != Method::BE)
      at = run_replications(config, es.n_ladder[top], top, kStageLimit, 0, es.limit_replications, Method::BE,
                            Prior::uniform(), options.workers);
    const LimitLawSample sample = limit_sample(config, static_cast<std::size_t>(es.limit_draws));
    out.limit_law = limit_law_report(config, es.n_ladder[top], at, sample, es.permutations,
                                     derive_seed(config.seed, {kStageLimit, 1}));
    limit_draws = sample.draws;
    out.timings.emplace_back("limit_law", std::chrono::duration<double>(clock::now() - t0).count());
  }

  if (es.second_prior && es.estimator == Method::BE) {
    t0 = clock::now();
    std::vector<ReplicationRow> second;
    for (std::size_t j = 0; j < es.n_ladder.size(); ++j) {
      auto part = run_replications(config, es.n_ladder[j], j, kStageSecondPrior, 0, es.replications, Method::BE,
                                   Prior::truncated_gaussian(config.box), options.workers);
      second.insert(second.end(), part.begin(), part.end());
    }
    out.second_prior = rate_report(config, Method::BE, second);
    out.timings.emplace_back("second_prior", std::chrono::duration<double>(clock::now() - t0).count());
  }

  write_text(dir / "results.csv", results_csv(rows));
  out.files.push_back((dir / "results.csv").string());
  nlohmann::json rates = rate_object(out.rates);
  if (out.second_prior) rates["truncated_gaussian_prior"] = rate_object(*out.second_prior);
  if (out.limit_law) rates["limit_law"] = nlohmann::json::parse(limit_law_json(*out.limit_law));
  write_text(dir / "rates.json", rates.dump(2) + "\n");
  out.files.push_back((dir / "rates.json").string());
  if (out.normality) {
    write_text(dir / "normality.json", normality_json(*out.normality));
    out.files.push_back((dir / "normality.json").string());
  }
  write_text(dir / "limits.csv", limits_csv(limit_draws));
  out.files.push_back((dir / "limits.csv").string());
  return out;
}

}  // namespace srcloc
