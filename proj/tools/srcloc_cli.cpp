// Command-line front end over the C interface.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "srcloc/srcloc.h"

namespace {

using json = nlohmann::json;
using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point start) {
  return std::chrono::duration<double>(clock_type::now() - start).count();
}

int fail(srcloc_status status) {
  std::cerr << "error: " << srcloc_last_error() << "\n";
  return static_cast<int>(status);
}

void print_warnings() {
  const std::string w = srcloc_last_warnings();
  if (!w.empty()) std::cerr << "warning: " << w;
}

/// Owning wrappers for the opaque handles.
struct Config {
  srcloc_config* ptr = nullptr;
  ~Config() { srcloc_config_free(ptr); }
};

struct Observations {
  srcloc_observations* ptr = nullptr;
  ~Observations() { srcloc_observations_free(ptr); }
};

struct CString {
  char* ptr = nullptr;
  ~CString() { srcloc_string_free(ptr); }
};

json manifest_base(const srcloc_config* config, std::uint64_t seed) {
  char hash[17];
  srcloc_config_hash(config, hash);
  const char* regime = "";
  srcloc_config_regime(config, &regime);
  return {{"config_hash", hash}, {"seed", seed}, {"version", srcloc_version()}, {"regime", regime}};
}

void write_manifest(const std::string& path, const json& manifest) {
  std::ofstream out(path, std::ios::binary);
  out << manifest.dump(2) << "\n";
}

std::uint64_t resolve_seed(const srcloc_config* config, const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  std::uint64_t seed = 0;
  srcloc_config_seed(config, &seed);
  return seed;
}

int cmd_simulate(const std::string& config_path, const std::optional<std::uint64_t>& seed_flag,
                 const std::optional<double>& n, const std::string& out_path) {
  const auto start = clock_type::now();
  Config cfg;
  if (auto s = srcloc_config_load(config_path.c_str(), &cfg.ptr)) return fail(s);
  if (n)
    if (auto s = srcloc_config_set_n(cfg.ptr, *n)) return fail(s);
  const std::uint64_t seed = resolve_seed(cfg.ptr, seed_flag);
  Observations obs;
  if (auto s = srcloc_simulate(cfg.ptr, seed, &obs.ptr)) return fail(s);
  const double sim_time = seconds_since(start);
  if (auto s = srcloc_observations_save(obs.ptr, out_path.c_str())) return fail(s);
  json m = manifest_base(cfg.ptr, seed);
  m["timings"] = {{"simulate", sim_time}, {"total", seconds_since(start)}};
  m["outputs"] = {out_path};
  m["events"] = srcloc_observations_event_count(obs.ptr);
  write_manifest(out_path + ".manifest.json", m);
  std::cout << "wrote " << srcloc_observations_event_count(obs.ptr) << " events to " << out_path << "\n";
  return 0;
}

int cmd_estimate(const std::string& data_path, const std::string& config_path, const std::string& method,
                 const std::optional<std::uint64_t>& seed_flag, const std::string& out_path) {
  const auto start = clock_type::now();
  Config cfg;
  if (auto s = srcloc_config_load(config_path.c_str(), &cfg.ptr)) return fail(s);
  Observations obs;
  if (auto s = srcloc_observations_load(cfg.ptr, data_path.c_str(), &obs.ptr)) return fail(s);
  const std::uint64_t seed = resolve_seed(cfg.ptr, seed_flag);
  srcloc_estimate est{};
  const srcloc_method m = method == "be" ? SRCLOC_BE : SRCLOC_MLE;
  if (auto s = srcloc_estimate_run(obs.ptr, m, seed, &est)) return fail(s);
  print_warnings();
  json j = manifest_base(cfg.ptr, seed);
  j["method"] = method;
  j["theta_hat"] = {est.theta[0], est.theta[1], est.theta[2], est.theta[3]};
  j["boundary"] = est.boundary != 0;
  j["iterations"] = est.iterations;
  j["evaluations"] = est.evaluations;
  j["log_likelihood"] = est.log_likelihood;
  if (m == SRCLOC_BE) {
    j["ess"] = est.ess;
    j["posterior_mass"] = est.posterior_mass;
  }
  std::vector<std::string> warnings;
  std::string w = srcloc_last_warnings();
  for (std::size_t p = 0; (p = w.find('\n')) != std::string::npos; w.erase(0, p + 1)) warnings.push_back(w.substr(0, p));
  j["warnings"] = warnings;
  j["timings"] = {{"total", seconds_since(start)}};
  const std::string text = j.dump(2);
  if (out_path.empty() || out_path == "-") {
    std::cout << text << "\n";
  } else {
    std::ofstream(out_path, std::ios::binary) << text << "\n";
  }
  return 0;
}

int cmd_identify(const std::string& config_path) {
  Config cfg;
  if (auto s = srcloc_config_load(config_path.c_str(), &cfg.ptr)) return fail(s);
  CString out;
  const srcloc_status s = srcloc_identify(cfg.ptr, &out.ptr);
  if (!out.ptr) return fail(s);
  const json j = json::parse(out.ptr);
  std::cout << j["text"].get<std::string>();
  return static_cast<int>(s);
}

int cmd_experiment(const std::string& config_path, unsigned workers, const std::string& out_dir, bool force,
                   const std::optional<std::uint64_t>& seed_flag) {
  const auto start = clock_type::now();
  Config cfg;
  if (auto s = srcloc_config_load(config_path.c_str(), &cfg.ptr)) return fail(s);
  const std::uint64_t seed = resolve_seed(cfg.ptr, seed_flag);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    std::cerr << "error: cannot create " << out_dir << ": " << ec.message() << "\n";
    return 1;
  }
  CString summary;
  const srcloc_status s = srcloc_experiment_run(cfg.ptr, out_dir.c_str(), workers, force ? 1 : 0, seed, &summary.ptr);
  if (s == SRCLOC_IDENTIFIABILITY_ERROR) {
    std::cerr << srcloc_last_error() << "\n";
    return s;
  }
  if (s) return fail(s);
  print_warnings();
  const json report = json::parse(summary.ptr);
  json m = manifest_base(cfg.ptr, seed);
  m["workers"] = workers;
  m["timings"] = report["timings"];
  m["timings"]["total"] = seconds_since(start);
  m["outputs"] = report["outputs"];
  write_manifest((std::filesystem::path(out_dir) / "manifest.json").string(), m);

  const json& r = report["rates"];
  std::cout << "rate slope: ";
  if (r["slope"].is_null())
    std::cout << "undefined";
  else
    std::cout << r["slope"].get<double>() << " +/- " << r["slope_se"];
  std::cout << " (target " << r["target_slope"].get<double>() << ", " << (r["pass"].get<bool>() ? "pass" : "fail") << ")\n";
  if (report.contains("normality")) {
    const json& nr = report["normality"];
    std::cout << "normality: covariance error " << nr["covariance_relative_frobenius_error"].get<double>() << ", risk ratio "
              << nr["risk_ratio"].get<double>() << " (" << (nr["pass"].get<bool>() ? "pass" : "fail") << ")\n";
  }
  if (report.contains("limit_law")) {
    const json& lr = report["limit_law"];
    std::cout << "limit law: p = " << lr["p_value"].get<double>() << ", control p = "
              << lr["control_p_value"].get<double>() << " (" << (lr["pass"].get<bool>() ? "pass" : "fail") << ")\n";
  }
  return 0;
}

int cmd_limits(const std::string& config_path, std::size_t count, const std::optional<std::uint64_t>& seed_flag,
               const std::string& out_path) {
  const auto start = clock_type::now();
  Config cfg;
  if (auto s = srcloc_config_load(config_path.c_str(), &cfg.ptr)) return fail(s);
  const std::uint64_t seed = resolve_seed(cfg.ptr, seed_flag);
  if (auto s = srcloc_limits_sample(cfg.ptr, count, seed, out_path.c_str())) return fail(s);
  json m = manifest_base(cfg.ptr, seed);
  m["timings"] = {{"total", seconds_since(start)}};
  m["outputs"] = {out_path};
  write_manifest(out_path + ".manifest.json", m);
  std::cout << "wrote " << count << " draws to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-source localization from Poisson detector streams"};
  app.set_version_flag("--version", std::string(srcloc_version()));
  app.require_subcommand(1);

  std::string config_path, out_path, data_path, method = "mle", out_dir = "results";
  std::optional<std::uint64_t> seed;
  std::optional<double> n;
  unsigned workers = 1;
  bool force = false;
  std::size_t count = 300;

  auto* sim = app.add_subcommand("simulate", "Simulate detector events at theta0");
  sim->add_option("config", config_path, "Scenario config (YAML)")->required();
  sim->add_option("--seed", seed, "Master seed (defaults to the config seed)");
  sim->add_option("--n", n, "Signal scale n (defaults to the config value)");
  sim->add_option("--out", out_path, "Output JSON-lines file")->required();

  auto* est = app.add_subcommand("estimate", "Estimate the source positions from observations");
  est->add_option("data", data_path, "Observation JSON-lines file")->required();
  est->add_option("config", config_path, "Scenario config (YAML)")->required();
  est->add_option("--method", method, "Estimator")->check(CLI::IsMember({"mle", "be"}));
  est->add_option("--seed", seed, "Seed for the Bayesian sampler");
  est->add_option("--out", out_path, "Output JSON file (stdout if omitted)");

  auto* exp = app.add_subcommand("experiment", "Run the Monte Carlo experiment pipeline");
  exp->add_option("config", config_path, "Scenario config (YAML)")->required();
  exp->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  exp->add_option("--out-dir", out_dir, "Output directory");
  exp->add_option("--seed", seed, "Master seed (defaults to the config seed)");
  exp->add_flag("--force", force, "Run even when the detectors lie on a cross");

  auto* idf = app.add_subcommand("identify", "Screen the detector array for identifiability");
  idf->add_option("config", config_path, "Scenario config (YAML)")->required();

  auto* lim = app.add_subcommand("limits", "Sample the regime's limit law at theta0");
  lim->add_option("config", config_path, "Scenario config (YAML)")->required();
  lim->add_option("--count", count, "Number of draws")->check(CLI::PositiveNumber);
  lim->add_option("--seed", seed, "Master seed (defaults to the config seed)");
  lim->add_option("--out", out_path, "Output CSV file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(SRCLOC_CONFIG_ERROR);
  }

  if (*sim) return cmd_simulate(config_path, seed, n, out_path);
  if (*est) return cmd_estimate(data_path, config_path, method, seed, out_path);
  if (*exp) return cmd_experiment(config_path, workers, out_dir, force, seed);
  if (*idf) return cmd_identify(config_path);
  if (*lim) return cmd_limits(config_path, count, seed, out_path);
  return 1;
}
