#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/LU>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>
#include <nlohmann/json.hpp>
#include <sys/wait.h>

#include "srcloc/config.hpp"
#include "srcloc/experiments.hpp"
#include "srcloc/likelihood.hpp"
#include "srcloc/rng.hpp"
#include "srcloc/simulate.hpp"

using namespace srcloc;
namespace fs = std::filesystem;

namespace {

struct Paths {
  fs::path configs;
  fs::path runs;
  std::string cli;
};

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json read_json(const fs::path& path) { return nlohmann::json::parse(read_file(path)); }

struct CsvRow {
  double n = 0.0;
  int rep = 0;
  ThetaVector theta;
  double error = 0.0;
};

std::vector<CsvRow> read_results(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  if (line != "scenario,regime,n,rep,theta1,theta2,theta3,theta4,error")
    throw std::runtime_error("unexpected results.csv header: " + line);
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw std::runtime_error("malformed results.csv line: " + line);
    CsvRow r;
    r.n = std::stod(f[2]);
    r.rep = std::stoi(f[3]);
    r.theta = ThetaVector(std::stod(f[4]), std::stod(f[5]), std::stod(f[6]), std::stod(f[7]));
    r.error = std::stod(f[8]);
    rows.push_back(r);
  }
  return rows;
}

std::vector<ThetaVector> read_limits(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  if (line != "draw,u1,u2,u3,u4") throw std::runtime_error("unexpected limits.csv header: " + line);
  std::vector<ThetaVector> draws;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(std::stod(cell));
    draws.emplace_back(f.at(1), f.at(2), f.at(3), f.at(4));
  }
  return draws;
}

std::vector<CsvRow> rows_at(const std::vector<CsvRow>& rows, double n, int count) {
  std::vector<CsvRow> out;
  for (const auto& r : rows)
    if (r.n == n && r.rep < count) out.push_back(r);
  return out;
}

/// Least-squares slope of log RMSE on log n.
double loglog_slope(const std::vector<double>& n, const std::vector<double>& rmse) {
  const double m = static_cast<double>(n.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t j = 0; j < n.size(); ++j) {
    const double x = std::log(n[j]);
    const double y = std::log(rmse[j]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

ScenarioConfig scenario(const Paths& p, const std::string& name) {
  return load_config((p.configs / (name + ".yaml")).string());
}

// ---------------------------------------------------------------- rate criteria

void check_rate(const Paths& p, const std::string& name, double target, double tolerance, Outcome& o) {
  const auto config = scenario(p, name);
  const fs::path dir = p.runs / name;
  const auto report = read_json(dir / "rates.json");
  const auto rows = read_results(dir / "results.csv");
  const int M = config.experiment->replications;
  std::vector<double> ns, rmse;
  for (double n : config.experiment->n_ladder) {
    const auto at = rows_at(rows, n, M);
    o.require(static_cast<int>(at.size()) == M, "replications at n = " + std::to_string(n));
    double sq = 0.0;
    for (const auto& r : at) {
      const double e = config.model.identical_sources() ? permutation_min_distance(r.theta, config.theta0)
                                                        : distance(r.theta, config.theta0);
      sq += e * e;
    }
    ns.push_back(n);
    rmse.push_back(std::sqrt(sq / static_cast<double>(at.size())));
  }
  const double slope = loglog_slope(ns, rmse);
  o.require(!report["slope"].is_null(), "reported slope is defined");
  const double reported = report["slope"].is_null() ? NAN : report["slope"].get<double>();
  o.detail << " ladder=[" << ns.front() << ".." << ns.back() << "] M=" << M << " slope=" << slope
           << " reported=" << reported << " target=" << target << "+-" << tolerance;
  o.require(std::abs(slope - reported) < 1e-9, "recomputed slope matches the report");
  o.require(std::abs(slope - target) <= tolerance, "slope within tolerance");
}

void criterion_1(const Paths& p, Outcome& o) {
  const auto config = scenario(p, "smooth_default");
  o.require(config.experiment->n_ladder.front() == 200.0 && config.experiment->n_ladder.back() == 10000.0,
            "ladder spans 200..10000");
  o.require(config.experiment->replications == 200, "M = 200");
  check_rate(p, "smooth_default", -0.5, 0.1, o);
}

void criterion_2(const Paths& p, Outcome& o) {
  const auto config = scenario(p, "smooth_default");
  const auto rows = read_results(p.runs / "smooth_default" / "results.csv");
  const double n = 10000.0;
  const int M = 1000;
  const auto at = rows_at(rows, n, M);
  o.require(static_cast<int>(at.size()) == M, "1000 replications at n = 10000");
  std::vector<Eigen::Vector4d> err;
  for (const auto& r : at) {
    Eigen::Vector4d v;
    for (int c = 0; c < 4; ++c) v[c] = std::sqrt(n) * (r.theta[static_cast<std::size_t>(c)] - config.theta0[static_cast<std::size_t>(c)]);
    err.push_back(v);
  }
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  for (const auto& v : err) mean += v;
  mean /= static_cast<double>(err.size());
  Eigen::Matrix4d cov = Eigen::Matrix4d::Zero();
  double risk = 0.0;
  for (const auto& v : err) {
    cov += (v - mean) * (v - mean).transpose();
    risk += v.squaredNorm();
  }
  cov /= static_cast<double>(err.size() - 1);
  risk /= static_cast<double>(err.size());
  const Eigen::Matrix4d inv = fisher_information(config.model, config.array, config.theta0).inverse();
  const double frob = (cov - inv).norm() / inv.norm();
  const double ratio = risk / inv.trace();
  const auto report = read_json(p.runs / "smooth_default" / "normality.json");
  o.detail << " n=" << n << " M=" << at.size() << " cov_rel_frobenius=" << frob << " risk_ratio=" << ratio;
  o.require(std::abs(report["covariance_relative_frobenius_error"].get<double>() - frob) < 1e-9,
            "recomputed covariance error matches the report");
  o.require(std::abs(report["risk_ratio"].get<double>() - ratio) < 1e-9, "recomputed risk ratio matches the report");
  o.require(frob < 0.2, "covariance within 20% relative Frobenius");
  o.require(ratio >= 0.85 && ratio <= 1.25, "risk ratio in [0.85, 1.25]");
}

void criterion_3(const Paths& p, Outcome& o) {
  const auto config = scenario(p, "cusp");
  o.require(config.model.front.kappa() == 0.25, "kappa = 0.25");
  o.require(config.experiment->estimator == Method::BE, "Bayes estimator");
  check_rate(p, "cusp", -2.0 / 3.0, 0.1, o);
}

void criterion_4(const Paths& p, Outcome& o) {
  const auto config = scenario(p, "changepoint");
  o.require(config.model.front.kappa() == 0.0, "kappa = 0");
  o.require(config.experiment->estimator == Method::BE, "Bayes estimator");
  check_rate(p, "changepoint", -1.0, 0.15, o);
}

// ---------------------------------------------------------------- limit laws

/// Energy distance with explicit pairwise means.
double energy_oracle(const std::vector<ThetaVector>& x, const std::vector<ThetaVector>& y) {
  auto mean_dist = [](const std::vector<ThetaVector>& a, const std::vector<ThetaVector>& b) {
    double s = 0.0;
    for (const auto& u : a)
      for (const auto& v : b) s += distance(u, v);
    return s / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
  };
  return 2.0 * mean_dist(x, y) - mean_dist(x, x) - mean_dist(y, y);
}

double permutation_p(const std::vector<ThetaVector>& x, const std::vector<ThetaVector>& y, int permutations,
                     unsigned seed) {
  const double observed = energy_oracle(x, y);
  std::vector<ThetaVector> pooled(x);
  pooled.insert(pooled.end(), y.begin(), y.end());
  std::mt19937 rng(seed);
  int exceed = 0;
  for (int b = 0; b < permutations; ++b) {
    std::shuffle(pooled.begin(), pooled.end(), rng);
    const std::vector<ThetaVector> a(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(x.size()));
    const std::vector<ThetaVector> c(pooled.begin() + static_cast<std::ptrdiff_t>(x.size()), pooled.end());
    if (energy_oracle(a, c) >= observed) ++exceed;
  }
  return (exceed + 1.0) / (permutations + 1.0);
}

void check_limit_law(const Paths& p, const std::string& name, Outcome& o) {
  const auto config = scenario(p, name);
  const fs::path dir = p.runs / name;
  const auto law = read_json(dir / "rates.json").at("limit_law");
  const double n = config.experiment->n_ladder.back();
  const int M = config.experiment->limit_replications;
  o.require(M >= 300, name + ": M >= 300");
  const auto rows = rows_at(read_results(dir / "results.csv"), n, M);
  const auto draws = read_limits(dir / "limits.csv");
  const double speed = config.regime() == Regime::ChangePoint ? n : std::pow(n, 1.0 / (2.0 * config.model.front.kappa() + 1.0));
  std::vector<ThetaVector> scaled, control;
  for (const auto& r : rows) {
    const ThetaVector est = config.model.identical_sources() ? align_labels(r.theta, config.theta0) : r.theta;
    ThetaVector a, b;
    for (std::size_t c = 0; c < 4; ++c) {
      a[c] = speed * (est[c] - config.theta0[c]);
      b[c] = std::sqrt(n) * (est[c] - config.theta0[c]);
    }
    scaled.push_back(a);
    control.push_back(b);
  }
  const double stat = energy_oracle(scaled, draws);
  const double p_test = permutation_p(scaled, draws, 999, 11);
  const double p_control = permutation_p(control, draws, 999, 12);
  const double rep_p = law["p_value"].get<double>();
  const double rep_c = law["control_p_value"].get<double>();
  o.detail << " " << name << ": reps=" << rows.size() << " draws=" << draws.size() << " p=" << rep_p
           << " control_p=" << rep_c << " oracle_p=" << p_test << " oracle_control_p=" << p_control;
  o.require(std::abs(stat - law["energy_statistic"].get<double>()) < 1e-9 * std::max(1.0, stat),
            name + ": energy statistic matches the oracle");
  o.require(rep_p > 0.01 && p_test > 0.01, name + ": rescaled errors match the limit law");
  o.require(rep_c < 0.01 && p_control < 0.01, name + ": sqrt(n) control is rejected");
}

void criterion_5(const Paths& p, Outcome& o) {
  check_limit_law(p, "cusp", o);
  check_limit_law(p, "changepoint", o);
}

// ---------------------------------------------------------------- direct criteria

void criterion_6(const Paths& p, Outcome& o) {
  auto config = scenario(p, "smooth_default");
  config.model.n = 50.0;
  std::mt19937_64 rng(6);
  double worst = 0.0;
  for (int pair = 0; pair < 100; ++pair) {
    ThetaVector th;
    for (std::size_t c = 0; c < 4; ++c) {
      std::uniform_real_distribution<double> u(config.box.lower()[c], config.box.upper()[c]);
      th[c] = u(rng);
    }
    const auto obs = simulate(config.model, config.array, th, derive_seed(600, {std::uint64_t(pair)}));
    const LogLikelihood ll(obs);
    ThetaVector at;
    for (std::size_t c = 0; c < 4; ++c) {
      std::uniform_real_distribution<double> u(config.box.lower()[c], config.box.upper()[c]);
      at[c] = u(rng);
    }
    const Eigen::Vector4d g = ll.score(at);
    Eigen::Vector4d fd;
    const double h = 1e-5;
    for (std::size_t c = 0; c < 4; ++c) {
      ThetaVector a = at, b = at;
      a[c] += h;
      b[c] -= h;
      fd[static_cast<Eigen::Index>(c)] = (ll(a) - ll(b)) / (2.0 * h);
    }
    worst = std::max(worst, (g - fd).norm() / g.norm());
  }
  o.detail << " pairs=100 worst_relative_error=" << worst;
  o.require(worst < 1e-5, "relative error < 1e-5");
}

void criterion_7(const Paths& p, Outcome& o) {
  auto config = scenario(p, "smooth_default");
  config.model.n = 50.0;
  const int reps = 20000;
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  Eigen::Matrix4d second = Eigen::Matrix4d::Zero();
  for (int r = 0; r < reps; ++r) {
    const auto obs = simulate(config.model, config.array, config.theta0, derive_seed(700, {std::uint64_t(r)}));
    const Eigen::Vector4d s = LogLikelihood(obs).score(config.theta0);
    mean += s;
    second += s * s.transpose();
  }
  mean /= reps;
  const Eigen::Matrix4d cov = (second - reps * mean * mean.transpose()) / (reps - 1);
  const Eigen::Matrix4d info = config.model.n * fisher_information(config.model, config.array, config.theta0);
  const double frob = (cov - info).norm() / info.norm();
  const FisherMatrix unit = fisher_information(config.model, config.array, config.theta0);
  const auto shown = fisher_displayed_elements(config.model, config.array, config.theta0);
  double worst = 0.0;
  for (int c = 0; c < 4; ++c) worst = std::max(worst, std::abs(shown[static_cast<std::size_t>(c)] - unit(0, c)));
  o.detail << " reps=" << reps << " mc_rel_frobenius=" << frob << " displayed_max_abs_diff=" << worst;
  o.require(frob < 0.1, "Monte Carlo covariance within 10%");
  o.require(worst < 1e-9, "displayed elements equal to 1e-9");
}

double q_oracle(double kappa) {
  gsl_integration_workspace* w = gsl_integration_workspace_alloc(10000);
  gsl_function head{[](double v, void* k) { return std::pow(v, 2.0 * *static_cast<double*>(k)); }, &kappa};
  gsl_function tail{[](double v, void* k) {
                      const double a = *static_cast<double*>(k);
                      const double d = std::pow(v - 1.0, a) - std::pow(v, a);
                      return d * d;
                    },
                    &kappa};
  double h = 0.0, m = 0.0, t = 0.0, e1 = 0.0, e2 = 0.0, e3 = 0.0;
  gsl_integration_qags(&head, 0.0, 1.0, 0.0, 1e-13, 10000, w, &h, &e1);
  gsl_integration_qags(&tail, 1.0, 2.0, 0.0, 1e-13, 10000, w, &m, &e2);
  gsl_integration_qagiu(&tail, 2.0, 0.0, 1e-13, 10000, w, &t, &e3);
  gsl_integration_workspace_free(w);
  if (e1 + e2 + e3 > 1e-9) throw std::runtime_error("Q oracle did not converge");
  return h + m + t;
}

void criterion_8(const Paths&, Outcome& o) {
  for (double kappa : {0.1, 0.25, 0.4}) {
    const double a = q_kappa_squared(kappa);
    const double b = q_oracle(kappa);
    o.detail << " kappa=" << kappa << " diff=" << std::abs(a - b);
    o.require(std::abs(a - b) < 1e-8, "Q at kappa " + std::to_string(kappa));
  }
}

void criterion_9(const Paths& p, Outcome& o) {
  const std::vector<Point> square{{-6, -6}, {6, -6}, {6, 6}, {-6, 6}};
  const auto witness = lies_on_cross(square);
  o.require(witness.has_value() && verify_witness(*witness, square, kGeometryTolerance), "square corners give a witness");
  const auto cross_cfg = scenario(p, "square_cross");
  const auto screen = identifiability_screen(cross_cfg.array, cross_cfg.box);
  o.require(screen.verdict == Verdict::Cross, "square_cross screens as a cross");

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::uniform_real_distribution<double> angle(0.0, 3.141592653589793);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const double phi = angle(rng);
    const Point centre{u(rng), u(rng)};
    const Line l1{centre, {std::cos(phi), std::sin(phi)}};
    const Line l2 = l1.perpendicular_through(centre);
    std::vector<Point> dets;
    for (int j = 0; j < 3; ++j) dets.push_back(l1.point + u(rng) * l1.direction);
    for (int j = 0; j < 2; ++j) dets.push_back(l2.point + u(rng) * l2.direction);
    const Point s1{u(rng), u(rng)};
    if (l1.distance(s1) < 1e-3 || l2.distance(s1) < 1e-3) continue;
    const auto pair = confusable_pair(l1, l2, s1);
    for (const auto& d : dets) {
      std::array<double, 2> a{distance(d, pair.first[0]), distance(d, pair.first[1])};
      std::array<double, 2> b{distance(d, pair.second[0]), distance(d, pair.second[1])};
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      worst = std::max({worst, std::abs(a[0] - b[0]) / std::max(1.0, a[0]), std::abs(a[1] - b[1]) / std::max(1.0, a[1])});
    }
  }
  o.require(worst < 1e-12, "confusable signatures equal to 1e-12");

  const auto generic = scenario(p, "smooth_default");
  o.require(identifiability_screen(generic.array, generic.box).verdict == Verdict::Identifiable,
            "default five detectors are identifiable");
  int k3_cross = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::vector<Point> three{{u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}};
    if (lies_on_cross(three)) ++k3_cross;
  }
  const auto k3 = scenario(p, "three_detectors");
  const auto k3_screen = identifiability_screen(k3.array, k3.box);
  o.require(k3_screen.verdict == Verdict::TooFew && k3_screen.witness.has_value() &&
                verify_witness(*k3_screen.witness, k3.array.positions(), kGeometryTolerance),
            "three_detectors screens as too-few with a cross witness");
  o.detail << " signature_max_rel_diff=" << worst << " k3_cross=" << k3_cross << "/500";
  o.require(k3_cross == 500, "every 3-detector array lies on a cross");
}

int run_cli(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void criterion_10(const Paths& p, Outcome& o) {
  double worst_z = 0.0;
  for (const char* name : {"smooth_default", "cusp", "changepoint"}) {
    auto config = scenario(p, name);
    config.model.n = 20.0;
    const int reps = 1000;
    std::vector<std::vector<double>> counts(config.array.size());
    for (int r = 0; r < reps; ++r) {
      const auto obs = simulate(config.model, config.array, config.theta0, derive_seed(1000, {std::uint64_t(r)}));
      for (std::size_t k = 0; k < counts.size(); ++k) counts[k].push_back(static_cast<double>(obs.records[k].events.size()));
    }
    for (std::size_t k = 0; k < counts.size(); ++k) {
      const double lambda = integrated_intensity(config.model, config.array, config.theta0, k, 0.0, config.model.horizon);
      double mean = 0.0;
      for (double c : counts[k]) mean += c;
      mean /= reps;
      double m2 = 0.0, m4 = 0.0;
      for (double c : counts[k]) {
        m2 += (c - mean) * (c - mean);
        m4 += std::pow(c - mean, 4);
      }
      const double var = m2 / (reps - 1);
      const double mean_se = std::sqrt(var / reps);
      const double var_se = std::sqrt(std::max(m4 / reps - (m2 / reps) * (m2 / reps), 0.0) / reps);
      const double z_mean = std::abs(mean - lambda) / mean_se;
      const double z_disp = std::abs(var - mean) / var_se;
      worst_z = std::max({worst_z, z_mean, z_disp});
      o.require(z_mean < 3.0, std::string(name) + " detector " + std::to_string(k + 1) + " mean");
      o.require(z_disp < 3.0, std::string(name) + " detector " + std::to_string(k + 1) + " dispersion");
    }
  }
  o.detail << " worst_z=" << worst_z;

  const fs::path work = p.runs / "determinism";
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string config = (p.configs / "determinism_small.yaml").string();
  const std::vector<std::string> files{"results.csv", "rates.json", "limits.csv"};
  std::map<unsigned, std::map<std::string, std::string>> out;
  for (unsigned workers : {1u, 3u}) {
    const fs::path dir = work / ("w" + std::to_string(workers));
    const int code = run_cli("\"" + p.cli + "\" experiment --workers " + std::to_string(workers) + " --out-dir \"" +
                             dir.string() + "\" \"" + config + "\" > \"" + (work / "log.txt").string() + "\" 2>&1");
    o.require(code == 0, "experiment with " + std::to_string(workers) + " workers exits 0");
    for (const auto& f : files)
      if (fs::exists(dir / f)) out[workers][f] = read_file(dir / f);
  }
  bool identical = true;
  for (const auto& f : files) identical = identical && out[1].count(f) && out[1][f] == out[3][f];
  o.detail << " workers_1_vs_3_identical=" << (identical ? "yes" : "no");
  o.require(identical, "byte-identical outputs for 1 and 3 workers");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: acceptance <criterion> <config-dir> [run-dir] [cli]\n";
    return 2;
  }
  gsl_set_error_handler_off();
  const int criterion = std::atoi(argv[1]);
  const Paths paths{argv[2], argc > 3 ? argv[3] : ".", argc > 4 ? argv[4] : ""};
  const std::map<int, std::function<void(const Paths&, Outcome&)>> checks{
      {1, criterion_1}, {2, criterion_2}, {3, criterion_3}, {4, criterion_4},  {5, criterion_5},
      {6, criterion_6}, {7, criterion_7}, {8, criterion_8}, {9, criterion_9}, {10, criterion_10}};
  const auto it = checks.find(criterion);
  if (it == checks.end()) {
    std::cerr << "unknown criterion " << argv[1] << "\n";
    return 2;
  }
  Outcome o;
  try {
    it->second(paths, o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << " [error: " << e.what() << "]";
  }
  std::cout << "criterion " << criterion << ": " << (o.pass ? "PASS" : "FAIL") << o.detail.str() << std::endl;
  return o.pass ? 0 : 1;
}
