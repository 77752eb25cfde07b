#include "srcloc/srcloc.h"

#include <cmath>
#include <cstring>
#include <string>

#include <nlohmann/json.hpp>

#include "srcloc/config.hpp"
#include "srcloc/errors.hpp"
#include "srcloc/estimate.hpp"
#include "srcloc/experiments.hpp"
#include "srcloc/likelihood.hpp"
#include "srcloc/limits.hpp"
#include "srcloc/simulate.hpp"

struct srcloc_config {
  srcloc::ScenarioConfig cfg;
};

struct srcloc_observations {
  srcloc::ScenarioConfig cfg;
  srcloc::ObservationSet obs;
};

namespace {

thread_local std::string last_error;
thread_local std::string last_warnings;

template <class F>
srcloc_status guard(F&& f) {
  last_error.clear();
  try {
    return f();
  } catch (const srcloc::ConfigError& e) {
    last_error = e.what();
    return SRCLOC_CONFIG_ERROR;
  } catch (const srcloc::DataError& e) {
    last_error = e.what();
    return SRCLOC_DATA_ERROR;
  } catch (const srcloc::IdentifiabilityError& e) {
    last_error = e.what();
    return SRCLOC_IDENTIFIABILITY_ERROR;
  } catch (const srcloc::RegimeError& e) {
    last_error = e.what();
    return SRCLOC_REGIME_ERROR;
  } catch (const srcloc::DomainError& e) {
    last_error = e.what();
    return SRCLOC_DOMAIN_ERROR;
  } catch (const std::exception& e) {
    last_error = e.what();
    return SRCLOC_ERROR;
  } catch (...) {
    last_error = "unknown error";
    return SRCLOC_ERROR;
  }
}

srcloc_status null_argument() {
  last_error = "null argument";
  return SRCLOC_ERROR;
}

char* duplicate(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

srcloc::ThetaVector theta_of(const double t[4]) { return srcloc::ThetaVector(t[0], t[1], t[2], t[3]); }

void set_warnings(const std::vector<std::string>& warnings) {
  last_warnings.clear();
  for (const auto& w : warnings) last_warnings += w + "\n";
}

nlohmann::json theta_json(const srcloc::ThetaVector& t) { return {t[0], t[1], t[2], t[3]}; }

}  // namespace

extern "C" {

const char* srcloc_version(void) { return SRCLOC_VERSION; }
const char* srcloc_last_error(void) { return last_error.c_str(); }
const char* srcloc_last_warnings(void) { return last_warnings.c_str(); }
void srcloc_string_free(char* s) { delete[] s; }

srcloc_status srcloc_config_load(const char* path, srcloc_config** out) {
  if (!path || !out) return null_argument();
  return guard([&] {
    *out = new srcloc_config{srcloc::load_config(path)};
    return SRCLOC_OK;
  });
}

srcloc_status srcloc_config_parse(const char* text, srcloc_config** out) {
  if (!text || !out) return null_argument();
  return guard([&] {
    *out = new srcloc_config{srcloc::parse_config(text)};
    return SRCLOC_OK;
  });
}

void srcloc_config_free(srcloc_config* config) { delete config; }

srcloc_status srcloc_config_hash(const srcloc_config* config, char out[17]) {
  if (!config || !out) return null_argument();
  const std::string h = srcloc::config_hash(config->cfg.text);
  std::memcpy(out, h.c_str(), 17);
  return SRCLOC_OK;
}

srcloc_status srcloc_config_seed(const srcloc_config* config, uint64_t* seed) {
  if (!config || !seed) return null_argument();
  *seed = config->cfg.seed;
  return SRCLOC_OK;
}

srcloc_status srcloc_config_set_n(srcloc_config* config, double n) {
  if (!config) return null_argument();
  return guard([&] {
    if (!(n >= 1.0) || !std::isfinite(n)) throw srcloc::DomainError("n must be >= 1");
    config->cfg.model.n = n;
    return SRCLOC_OK;
  });
}

srcloc_status srcloc_config_regime(const srcloc_config* config, const char** name) {
  if (!config || !name) return null_argument();
  switch (config->cfg.regime()) {
    case srcloc::Regime::Smooth:
      *name = "smooth";
      break;
    case srcloc::Regime::Cusp:
      *name = "cusp";
      break;
    case srcloc::Regime::ChangePoint:
      *name = "changepoint";
      break;
  }
  return SRCLOC_OK;
}

srcloc_status srcloc_config_theta0(const srcloc_config* config, double theta[4]) {
  if (!config || !theta) return null_argument();
  for (std::size_t c = 0; c < 4; ++c) theta[c] = config->cfg.theta0[c];
  return SRCLOC_OK;
}

srcloc_status srcloc_simulate(const srcloc_config* config, uint64_t seed, srcloc_observations** out) {
  if (!config || !out) return null_argument();
  return guard([&] {
    const auto& c = config->cfg;
    *out = new srcloc_observations{c, srcloc::simulate(c.model, c.array, c.theta0, seed)};
    return SRCLOC_OK;
  });
}

srcloc_status srcloc_observations_load(const srcloc_config* config, const char* path, srcloc_observations** out) {
  if (!config || !path || !out) return null_argument();
  return guard([&] {
    const auto& c = config->cfg;
    srcloc::ObservationSet obs;
    obs.records = srcloc::read_jsonl(std::string(path));
    obs.model = c.model;
    if (!obs.records.empty()) obs.model.n = obs.records.front().n;
    obs.array = c.array;
    obs.seed = 0;
    obs.validate();
    *out = new srcloc_observations{c, std::move(obs)};
    (*out)->cfg.model.n = (*out)->obs.model.n;
    return SRCLOC_OK;
  });
}

srcloc_status srcloc_observations_save(const srcloc_observations* obs, const char* path) {
  if (!obs || !path) return null_argument();
  return guard([&] {
    srcloc::write_jsonl(std::string(path), obs->obs.records);
    return SRCLOC_OK;
  });
}

size_t srcloc_observations_event_count(const srcloc_observations* obs) { return obs ? obs->obs.event_count() : 0; }

void srcloc_observations_free(srcloc_observations* obs) { delete obs; }

srcloc_status srcloc_log_likelihood(const srcloc_observations* obs, const double theta[4], double* out) {
  if (!obs || !theta || !out) return null_argument();
  return guard([&] {
    *out = srcloc::log_likelihood(obs->obs, obs->cfg.box, theta_of(theta)).value;
    return SRCLOC_OK;
  });
}

srcloc_status srcloc_score(const srcloc_observations* obs, const double theta[4], double out[4]) {
  if (!obs || !theta || !out) return null_argument();
  return guard([&] {
    const srcloc::Vector4 g = srcloc::score(obs->obs, obs->cfg.box, theta_of(theta));
    for (int c = 0; c < 4; ++c) out[c] = g[c];
    return SRCLOC_OK;
  });
}

srcloc_status srcloc_fisher_information(const srcloc_config* config, const double theta[4], double out[16]) {
  if (!config || !theta || !out) return null_argument();
  return guard([&] {
    const auto& c = config->cfg;
    const srcloc::FisherMatrix m = srcloc::fisher_information(c.model, c.array, theta_of(theta));
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) out[4 * a + b] = m(a, b);
    return SRCLOC_OK;
  });
}

srcloc_status srcloc_q_kappa_squared(double kappa, double* out) {
  if (!out) return null_argument();
  return guard([&] {
    *out = srcloc::q_kappa_squared(kappa);
    return SRCLOC_OK;
  });
}

srcloc_status srcloc_estimate_run(const srcloc_observations* obs, srcloc_method method, uint64_t seed,
                                  srcloc_estimate* out) {
  if (!obs || !out) return null_argument();
  return guard([&] {
    const auto& c = obs->cfg;
    if (obs->obs.event_count() == 0 && obs->obs.records.empty()) throw srcloc::DataError("no observations");
    srcloc::EstimateResult r;
    if (method == SRCLOC_MLE) {
      r = srcloc::mle(obs->obs, c.box, c.regime(), c.mle);
    } else {
      srcloc::BayesOptions opt = c.bayes;
      opt.seed = seed;
      r = srcloc::bayes_estimate(obs->obs, c.box, srcloc::Prior::uniform(), opt);
    }
    for (std::size_t k = 0; k < 4; ++k) out->theta[k] = r.theta_hat[k];
    out->method = method;
    out->boundary = r.boundary ? 1 : 0;
    out->iterations = r.iterations;
    out->evaluations = r.evaluations;
    out->log_likelihood = r.log_likelihood;
    out->ess = r.ess;
    out->posterior_mass = r.posterior_mass;
    out->warnings = static_cast<int>(r.warnings.size());
    set_warnings(r.warnings);
    return SRCLOC_OK;
  });
}

srcloc_status srcloc_identify(const srcloc_config* config, char** json) {
  if (!config || !json) return null_argument();
  return guard([&] {
    const auto& c = config->cfg;
    const auto report = srcloc::identifiability_screen(c.array, c.box);
    nlohmann::json j;
    j["detectors"] = report.detectors;
    j["verdict"] = srcloc::to_string(report.verdict);
    if (report.witness) {
      const auto line = [](const srcloc::Line& l) {
        return nlohmann::json{{"point", {l.point.x, l.point.y}}, {"direction", {l.direction.x, l.direction.y}}};
      };
      j["witness"] = {{"line1", line(report.witness->line1)},
                      {"line2", line(report.witness->line2)},
                      {"assignment", report.witness->assignment}};
    }
    if (report.confusable)
      j["confusable"] = {theta_json((*report.confusable)[0]), theta_json((*report.confusable)[1])};
    j["warnings"] = report.warnings;
    j["text"] = srcloc::describe(report);
    *json = duplicate(j.dump(2));
    set_warnings(report.warnings);
    return report.verdict == srcloc::Verdict::Identifiable ? SRCLOC_OK : SRCLOC_IDENTIFIABILITY_ERROR;
  });
}

srcloc_status srcloc_experiment_run(const srcloc_config* config, const char* out_dir, unsigned workers, int force,
                                    uint64_t seed, char** summary_json) {
  if (!config || !out_dir) return null_argument();
  return guard([&] {
    srcloc::ScenarioConfig c = config->cfg;
    if (seed != 0) c.seed = seed;
    srcloc::RunOptions opt;
    opt.workers = workers == 0 ? 1 : workers;
    opt.force = force != 0;
    const srcloc::ExperimentOutputs out = srcloc::run_experiment(c, out_dir, opt);
    nlohmann::json j;
    j["rates"] = nlohmann::json::parse(srcloc::rate_json(out.rates));
    if (out.normality) j["normality"] = nlohmann::json::parse(srcloc::normality_json(*out.normality));
    if (out.limit_law) j["limit_law"] = nlohmann::json::parse(srcloc::limit_law_json(*out.limit_law));
    j["outputs"] = out.files;
    nlohmann::json timings = nlohmann::json::object();
    for (const auto& [stage, seconds] : out.timings) timings[stage] = seconds;
    j["timings"] = timings;
    set_warnings(out.rates.warnings);
    if (summary_json) *summary_json = duplicate(j.dump(2));
    return SRCLOC_OK;
  });
}

srcloc_status srcloc_limits_sample(const srcloc_config* config, size_t count, uint64_t seed, const char* csv_path) {
  if (!config || !csv_path) return null_argument();
  return guard([&] {
    const auto& c = config->cfg;
    srcloc::LimitLawSample s;
    switch (c.regime()) {
      case srcloc::Regime::Smooth:
        s = srcloc::sample_zeta(srcloc::fisher_information(c.model, c.array, c.theta0), count, seed);
        break;
      case srcloc::Regime::Cusp:
        s = srcloc::sample_xi(c.theta0, c.array, c.model, c.grid(), count, seed);
        break;
      case srcloc::Regime::ChangePoint:
        s = srcloc::sample_eta(c.theta0, c.array, c.model, c.grid(), count, seed);
        break;
    }
    std::FILE* f = std::fopen(csv_path, "wb");
    if (!f) throw srcloc::Error(std::string("cannot write ") + csv_path);
    const std::string text = srcloc::limits_csv(s.draws);
    const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
    std::fclose(f);
    if (!ok) throw srcloc::Error(std::string("failed writing ") + csv_path);
    return SRCLOC_OK;
  });
}

}  // extern "C"
