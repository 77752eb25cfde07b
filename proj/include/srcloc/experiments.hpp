#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "srcloc/config.hpp"
#include "srcloc/estimate.hpp"
#include "srcloc/geometry.hpp"
#include "srcloc/limits.hpp"

namespace srcloc {

// ---------------------------------------------------------------- identifiability

enum class Verdict { Identifiable, Cross, TooFew };

std::string to_string(Verdict verdict);

struct IdentifiabilityReport {
  Verdict verdict = Verdict::Identifiable;
  std::size_t detectors = 0;
  std::optional<CrossWitness> witness;
  /// Two source configurations inside the box with equal arrival signatures.
  std::optional<std::array<ThetaVector, 2>> confusable;
  std::vector<std::string> warnings;
};

IdentifiabilityReport identifiability_screen(const DetectorArray& array, const ParameterBox& box,
                                             double tol = kGeometryTolerance);

/// Multi-line human-readable rendering (verdict, lines, demonstration).
std::string describe(const IdentifiabilityReport& report);

// ---------------------------------------------------------------- statistics

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
};

/// Ordinary least squares y = a + b x with the standard error of b.
SlopeFit ols_fit(const std::vector<double>& x, const std::vector<double>& y);

/// V-statistic energy distance between two samples of 4-vectors.
double energy_distance(const std::vector<ThetaVector>& x, const std::vector<ThetaVector>& y);

struct PermutationTest {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Energy distance with a permutation p-value (b + 1) / (B + 1).
PermutationTest energy_test(const std::vector<ThetaVector>& x, const std::vector<ThetaVector>& y, int permutations,
                            std::uint64_t seed);

struct MomentScores {
  std::array<double, 4> skewness{};
  std::array<double, 4> skew_z{};
  std::array<double, 4> excess_kurtosis{};
  std::array<double, 4> kurtosis_z{};
};

MomentScores moment_scores(const std::vector<ThetaVector>& sample);

// ---------------------------------------------------------------- replications

struct ReplicationRow {
  std::string scenario;
  Regime regime = Regime::Smooth;
  double n = 0.0;
  int rep = 0;
  ThetaVector theta_hat;
  double error = 0.0;
  std::vector<std::string> warnings;
};

struct RunOptions {
  unsigned workers = 1;
  bool force = false;
};

/// Seed of replication `rep` at ladder position `n_index` of stage `stage`.
std::uint64_t replication_seed(std::uint64_t master, std::uint64_t stage, std::uint64_t n_index, std::uint64_t rep);

/// Stage identifiers used in replication seeds.
enum Stage : std::uint64_t { kStageRate = 1, kStageNormality = 2, kStageLimit = 3, kStageSecondPrior = 4 };

/// Runs reps [first, first + count) of simulate -> estimate at scale n.
std::vector<ReplicationRow> run_replications(const ScenarioConfig& config, double n, std::size_t n_index,
                                             std::uint64_t stage, int first, int count, Method method,
                                             const Prior& prior, unsigned workers);

/// Estimation error, permutation-minimized when the sources are interchangeable.
double estimation_error(const ScenarioConfig& config, const ThetaVector& estimate);

// ---------------------------------------------------------------- reports

struct RateReport {
  std::string scenario;
  Regime regime = Regime::Smooth;
  Method method = Method::MLE;
  std::vector<double> n;
  std::vector<double> rmse;
  bool defined = true;
  double slope = 0.0;
  double slope_se = 0.0;
  double intercept = 0.0;
  double target = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::vector<std::string> warnings;
};

struct NormalityReport {
  double n = 0.0;
  int replications = 0;
  Eigen::Matrix4d empirical_covariance = Eigen::Matrix4d::Zero();
  Eigen::Matrix4d inverse_fisher = Eigen::Matrix4d::Zero();
  double covariance_error = 0.0;
  double risk_ratio = 0.0;
  MomentScores moments;
  bool pass = false;
};

struct LimitLawReport {
  LimitLaw law = LimitLaw::Xi;
  double n = 0.0;
  int replications = 0;
  int draws = 0;
  PermutationTest test;
  PermutationTest control;  // errors rescaled by sqrt(n) instead of the regime rate
  double edge_mass = 0.0;
  bool pass = false;
  std::vector<ThetaVector> rescaled_errors;
  std::vector<ThetaVector> limit_draws;
};

/// Target slope and tolerance for a regime: -1/2, -1/(2 kappa + 1), -1 with
/// tolerances 0.1, 0.1, 0.15.
std::pair<double, double> target_slope(const FrontSpec& front);

/// Rate of the regime: n^{-1/2}, n^{-1/(2 kappa + 1)} or n^{-1}.
double rate(const FrontSpec& front, double n);

/// Throws IdentifiabilityError (with the rendered screen) unless the array
/// identifies the sources or options.force is set.
IdentifiabilityReport require_identifiable(const ScenarioConfig& config, const RunOptions& options);

RateReport run_rate_experiment(const ScenarioConfig& config, const RunOptions& options,
                               std::vector<ReplicationRow>* rows = nullptr);
NormalityReport normality_check(const ScenarioConfig& config, const RunOptions& options,
                                std::vector<ReplicationRow>* rows = nullptr);
LimitLawReport limit_law_check(const ScenarioConfig& config, const RunOptions& options,
                               std::vector<ReplicationRow>* rows = nullptr);

/// Builds a report from precomputed replication rows.
RateReport rate_report(const ScenarioConfig& config, Method method, const std::vector<ReplicationRow>& rows);
NormalityReport normality_report(const ScenarioConfig& config, double n, const std::vector<ReplicationRow>& rows);
LimitLawReport limit_law_report(const ScenarioConfig& config, double n, const std::vector<ReplicationRow>& rows,
                                const LimitLawSample& sample, int permutations, std::uint64_t seed);

// ---------------------------------------------------------------- output

struct ExperimentOutputs {
  RateReport rates;
  std::optional<NormalityReport> normality;
  std::optional<LimitLawReport> limit_law;
  std::optional<RateReport> second_prior;
  std::vector<std::string> files;
  std::vector<std::pair<std::string, double>> timings;
};

/// Full pipeline for a scenario: rate ladder, then normality (smooth) or the
/// limit-law comparison (cusp, change-point). Writes results.csv, rates.json,
/// normality.json and limits.csv into out_dir.
ExperimentOutputs run_experiment(const ScenarioConfig& config, const std::string& out_dir, const RunOptions& options);

std::string results_csv(const std::vector<ReplicationRow>& rows);
std::string limits_csv(const std::vector<ThetaVector>& draws);
std::string rate_json(const RateReport& report);
std::string normality_json(const NormalityReport& report);
std::string limit_law_json(const LimitLawReport& report);

}  // namespace srcloc
