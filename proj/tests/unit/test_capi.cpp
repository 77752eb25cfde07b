#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "srcloc/srcloc.h"

namespace fs = std::filesystem;

namespace {

std::string config_path(const std::string& name) {
  return std::string(SRCLOC_TEST_CONFIG_DIR) + "/" + name + ".yaml";
}

fs::path work_dir(const std::string& name) {
  const fs::path p = fs::path(SRCLOC_TEST_WORK_DIR) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

/// Runs the CLI with `args`, capturing stdout and stderr.
Run cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + SRCLOC_CLI_PATH + "\" " + args + " > \"" + out.string() + "\" 2> \"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

std::string with_text(const std::string& name, const std::string& from, const std::string& to, const fs::path& dir) {
  std::string text = read_file(config_path(name));
  const auto pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  text.replace(pos, from.size(), to);
  const fs::path p = dir / (name + "_edited.yaml");
  std::ofstream(p, std::ios::binary) << text;
  return p.string();
}

}  // namespace

TEST_SUITE("capi") {
  TEST_CASE("config handles") {
    srcloc_config* cfg = nullptr;
    REQUIRE(srcloc_config_load(config_path("smooth_default").c_str(), &cfg) == SRCLOC_OK);
    char hash[17];
    CHECK(srcloc_config_hash(cfg, hash) == SRCLOC_OK);
    CHECK(std::string(hash).size() == 16);
    std::uint64_t seed = 0;
    CHECK(srcloc_config_seed(cfg, &seed) == SRCLOC_OK);
    CHECK(seed == 20240501u);
    const char* regime = nullptr;
    CHECK(srcloc_config_regime(cfg, &regime) == SRCLOC_OK);
    CHECK(std::string(regime) == "smooth");
    double theta[4];
    CHECK(srcloc_config_theta0(cfg, theta) == SRCLOC_OK);
    CHECK(theta[2] == 1.5);
    CHECK(srcloc_config_set_n(cfg, 0.5) == SRCLOC_DOMAIN_ERROR);
    CHECK(std::string(srcloc_last_error()).size() > 0);
    srcloc_config_free(cfg);
  }

  TEST_CASE("error codes") {
    srcloc_config* cfg = nullptr;
    CHECK(srcloc_config_load("/nonexistent.yaml", &cfg) == SRCLOC_CONFIG_ERROR);
    CHECK(cfg == nullptr);
    CHECK(srcloc_config_parse("scenario: [", &cfg) == SRCLOC_CONFIG_ERROR);
    CHECK(srcloc_config_load(nullptr, &cfg) == SRCLOC_ERROR);
    CHECK(srcloc_q_kappa_squared(0.7, nullptr) == SRCLOC_ERROR);
    double q = 0.0;
    CHECK(srcloc_q_kappa_squared(0.7, &q) == SRCLOC_DOMAIN_ERROR);
    CHECK(srcloc_q_kappa_squared(0.25, &q) == SRCLOC_OK);
    CHECK(q > 0.0);
  }

  TEST_CASE("simulate, save, load and estimate") {
    const fs::path dir = work_dir("capi_roundtrip");
    srcloc_config* cfg = nullptr;
    REQUIRE(srcloc_config_load(config_path("smooth_default").c_str(), &cfg) == SRCLOC_OK);
    REQUIRE(srcloc_config_set_n(cfg, 2000.0) == SRCLOC_OK);
    srcloc_observations* obs = nullptr;
    REQUIRE(srcloc_simulate(cfg, 42, &obs) == SRCLOC_OK);
    CHECK(srcloc_observations_event_count(obs) > 1000);
    const std::string path = (dir / "obs.jsonl").string();
    REQUIRE(srcloc_observations_save(obs, path.c_str()) == SRCLOC_OK);
    srcloc_observations* back = nullptr;
    REQUIRE(srcloc_observations_load(cfg, path.c_str(), &back) == SRCLOC_OK);
    CHECK(srcloc_observations_event_count(back) == srcloc_observations_event_count(obs));

    double theta[4];
    srcloc_config_theta0(cfg, theta);
    double a = 0.0, b = 0.0;
    CHECK(srcloc_log_likelihood(obs, theta, &a) == SRCLOC_OK);
    CHECK(srcloc_log_likelihood(back, theta, &b) == SRCLOC_OK);
    CHECK(a == b);
    double g[4];
    CHECK(srcloc_score(obs, theta, g) == SRCLOC_OK);
    double fisher[16];
    CHECK(srcloc_fisher_information(cfg, theta, fisher) == SRCLOC_OK);
    CHECK(fisher[1] == fisher[4]);

    srcloc_estimate est{};
    REQUIRE(srcloc_estimate_run(back, SRCLOC_MLE, 1, &est) == SRCLOC_OK);
    double err = 0.0;
    for (int c = 0; c < 4; ++c) err += (est.theta[c] - theta[c]) * (est.theta[c] - theta[c]);
    CHECK(std::sqrt(err) < 0.3);
    CHECK(std::isnan(est.ess));
    CHECK(est.method == SRCLOC_MLE);

    double outside[4] = {theta[0], theta[1], 10.0, theta[3]};
    CHECK(srcloc_log_likelihood(obs, outside, &a) == SRCLOC_DOMAIN_ERROR);
    srcloc_observations_free(obs);
    srcloc_observations_free(back);
    srcloc_config_free(cfg);
  }

  TEST_CASE("regime errors and data errors") {
    const fs::path dir = work_dir("capi_errors");
    srcloc_config* cfg = nullptr;
    REQUIRE(srcloc_config_load(config_path("cusp").c_str(), &cfg) == SRCLOC_OK);
    srcloc_observations* obs = nullptr;
    REQUIRE(srcloc_simulate(cfg, 3, &obs) == SRCLOC_OK);
    double theta[4], g[4];
    srcloc_config_theta0(cfg, theta);
    CHECK(srcloc_score(obs, theta, g) == SRCLOC_REGIME_ERROR);
    double f[16];
    CHECK(srcloc_fisher_information(cfg, theta, f) == SRCLOC_REGIME_ERROR);
    const fs::path bad = dir / "bad.jsonl";
    std::ofstream(bad) << "{\"detector\":0,\"n\":1,\"events\":[1]}\nnot json\n";
    srcloc_observations* loaded = nullptr;
    CHECK(srcloc_observations_load(cfg, bad.string().c_str(), &loaded) == SRCLOC_DATA_ERROR);
    CHECK(std::string(srcloc_last_error()).find("line 2") != std::string::npos);
    srcloc_observations_free(obs);
    srcloc_config_free(cfg);
  }

  TEST_CASE("identify reports verdicts as JSON") {
    for (auto [name, status, verdict] : {std::tuple{"smooth_default", SRCLOC_OK, "identifiable"},
                                         std::tuple{"square_cross", SRCLOC_IDENTIFIABILITY_ERROR, "cross"},
                                         std::tuple{"three_detectors", SRCLOC_IDENTIFIABILITY_ERROR, "too-few"}}) {
      srcloc_config* cfg = nullptr;
      REQUIRE(srcloc_config_load(config_path(name).c_str(), &cfg) == SRCLOC_OK);
      char* json = nullptr;
      CHECK(srcloc_identify(cfg, &json) == status);
      REQUIRE(json != nullptr);
      const auto j = nlohmann::json::parse(json);
      CHECK(j["verdict"] == verdict);
      if (std::string(name) != "smooth_default") CHECK(j.contains("witness"));
      srcloc_string_free(json);
      srcloc_config_free(cfg);
    }
  }
}

TEST_SUITE("cli") {
  TEST_CASE("simulate then estimate") {
    const fs::path dir = work_dir("cli_roundtrip");
    const std::string data = (dir / "obs.jsonl").string();
    const Run sim = cli("simulate " + config_path("smooth_default") + " --n 1000 --seed 9 --out " + data, dir);
    CHECK(sim.code == 0);
    CHECK(fs::exists(data));
    const auto manifest = nlohmann::json::parse(read_file(data + ".manifest.json"));
    CHECK(manifest["seed"] == 9);
    CHECK(manifest["config_hash"].get<std::string>().size() == 16);
    CHECK(manifest.contains("timings"));
    CHECK(manifest.contains("version"));
    const Run est = cli("estimate " + data + " " + config_path("smooth_default"), dir);
    CHECK(est.code == 0);
    const auto j = nlohmann::json::parse(est.out);
    CHECK(j["method"] == "mle");
    CHECK(j["theta_hat"].size() == 4);
  }

  TEST_CASE("Bayes estimate on change-point data") {
    const fs::path dir = work_dir("cli_be");
    const std::string data = (dir / "obs.jsonl").string();
    CHECK(cli("simulate " + config_path("changepoint") + " --n 400 --out " + data, dir).code == 0);
    const Run est = cli("estimate " + data + " " + config_path("changepoint") + " --method be --seed 3 --out " +
                            (dir / "est.json").string(),
                        dir);
    CHECK(est.code == 0);
    const auto j = nlohmann::json::parse(read_file(dir / "est.json"));
    CHECK(j["method"] == "be");
    CHECK(j["ess"].get<double>() > 0.0);
  }

  TEST_CASE("configuration errors exit with 2") {
    const fs::path dir = work_dir("cli_config");
    const std::string outside =
        with_text("smooth_default", "theta0: [-1.5, 1.0, 1.5, -0.5]", "theta0: [-1.5, 1.0, 1.5, 4.0]", dir);
    Run r = cli("simulate " + outside + " --out " + (dir / "x.jsonl").string(), dir);
    CHECK(r.code == 2);
    CHECK(r.err.find("theta0[4]") != std::string::npos);
    const std::string late = with_text("smooth_default", "horizon: 14.0", "horizon: 10.0", dir);
    r = cli("simulate " + late + " --out " + (dir / "x.jsonl").string(), dir);
    CHECK(r.code == 2);
    CHECK(r.err.find("detector") != std::string::npos);
    CHECK(r.err.find("T = 10") != std::string::npos);
    CHECK(cli("simulate", dir).code == 2);
    CHECK(cli("estimate a b --method lsq", dir).code == 2);
  }

  TEST_CASE("data errors exit with 3") {
    const fs::path dir = work_dir("cli_data");
    std::ofstream(dir / "empty.jsonl") << "";
    CHECK(cli("estimate " + (dir / "empty.jsonl").string() + " " + config_path("smooth_default"), dir).code == 3);
    std::ofstream(dir / "bad.jsonl") << "{\"detector\":0,\"n\":1,\"events\":[]}\n{oops\n";
    const Run r = cli("estimate " + (dir / "bad.jsonl").string() + " " + config_path("smooth_default"), dir);
    CHECK(r.code == 3);
    CHECK(r.err.find("line 2") != std::string::npos);
  }

  TEST_CASE("identify and refusal of cross arrays") {
    const fs::path dir = work_dir("cli_identify");
    Run r = cli("identify " + config_path("smooth_default"), dir);
    CHECK(r.code == 0);
    CHECK(r.out.find("verdict: identifiable") != std::string::npos);
    r = cli("identify " + config_path("square_cross"), dir);
    CHECK(r.code == 4);
    CHECK(r.out.find("line1") != std::string::npos);
    CHECK(r.out.find("line2") != std::string::npos);
    CHECK(cli("identify " + config_path("three_detectors"), dir).code == 4);
    r = cli("experiment " + config_path("square_cross") + " --out-dir " + (dir / "out").string(), dir);
    CHECK(r.code == 4);
    CHECK(r.err.find("line1") != std::string::npos);
  }

  TEST_CASE("limits sampler") {
    const fs::path dir = work_dir("cli_limits");
    const std::string out = (dir / "zeta.csv").string();
    CHECK(cli("limits " + config_path("smooth_default") + " --count 20 --out " + out, dir).code == 0);
    const std::string text = read_file(out);
    CHECK(text.rfind("draw,u1,u2,u3,u4\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 21);
  }

  TEST_CASE("experiment output is byte-identical for 1 and 4 workers") {
    const fs::path dir = work_dir("cli_experiment");
    const Run a = cli("experiment " + config_path("determinism_small") + " --workers 1 --out-dir " +
                          (dir / "w1").string(),
                      dir);
    const Run b = cli("experiment " + config_path("determinism_small") + " --workers 4 --out-dir " +
                          (dir / "w4").string(),
                      dir);
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    CHECK(a.out.find("rate slope") != std::string::npos);
    for (const char* f : {"results.csv", "rates.json", "limits.csv"}) CHECK(read_file(dir / "w1" / f) == read_file(dir / "w4" / f));
    const auto rates = nlohmann::json::parse(read_file(dir / "w1" / "rates.json"));
    CHECK(rates.contains("slope"));
    const auto manifest = nlohmann::json::parse(read_file(dir / "w1" / "manifest.json"));
    CHECK(manifest["workers"] == 1);
    CHECK(manifest["outputs"].size() >= 3);
  }
}
