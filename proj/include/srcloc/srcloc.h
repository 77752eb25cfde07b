/* C interface to the two-source localization library. */
#ifndef SRCLOC_SRCLOC_H
#define SRCLOC_SRCLOC_H

#include <stddef.h>
#include <stdint.h>

#if defined(SRCLOC_BUILDING_LIBRARY)
#define SRCLOC_API __attribute__((visibility("default")))
#else
#define SRCLOC_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. The values double as CLI exit codes. */
typedef enum srcloc_status {
  SRCLOC_OK = 0,
  SRCLOC_ERROR = 1,
  SRCLOC_CONFIG_ERROR = 2,
  SRCLOC_DATA_ERROR = 3,
  SRCLOC_IDENTIFIABILITY_ERROR = 4,
  SRCLOC_DOMAIN_ERROR = 5,
  SRCLOC_REGIME_ERROR = 6
} srcloc_status;

typedef struct srcloc_config srcloc_config;
typedef struct srcloc_observations srcloc_observations;

typedef enum srcloc_method { SRCLOC_MLE = 0, SRCLOC_BE = 1 } srcloc_method;

typedef struct srcloc_estimate {
  double theta[4];
  int method; /* srcloc_method */
  int boundary;
  int iterations;
  long evaluations;
  double log_likelihood;
  double ess;            /* NaN for the MLE */
  double posterior_mass; /* NaN for the MLE */
  int warnings;          /* number of warnings; text via srcloc_last_warnings */
} srcloc_estimate;

SRCLOC_API const char* srcloc_version(void);

/* Message for the last failing call on this thread; empty if none. */
SRCLOC_API const char* srcloc_last_error(void);
/* Newline-separated warnings of the last estimate or experiment on this thread. */
SRCLOC_API const char* srcloc_last_warnings(void);

/* Strings returned through char** out-parameters are freed with this. */
SRCLOC_API void srcloc_string_free(char* s);

/* ---- configuration ---- */
SRCLOC_API srcloc_status srcloc_config_load(const char* path, srcloc_config** out);
SRCLOC_API srcloc_status srcloc_config_parse(const char* text, srcloc_config** out);
SRCLOC_API void srcloc_config_free(srcloc_config* config);
/* 16 hex digits plus terminator. */
SRCLOC_API srcloc_status srcloc_config_hash(const srcloc_config* config, char out[17]);
SRCLOC_API srcloc_status srcloc_config_seed(const srcloc_config* config, uint64_t* seed);
/* Overrides the signal multiplier n; SRCLOC_DOMAIN_ERROR unless n >= 1. */
SRCLOC_API srcloc_status srcloc_config_set_n(srcloc_config* config, double n);
SRCLOC_API srcloc_status srcloc_config_regime(const srcloc_config* config, const char** name);
SRCLOC_API srcloc_status srcloc_config_theta0(const srcloc_config* config, double theta[4]);

/* ---- observations ---- */
/* Simulates at the configured theta0 and n. */
SRCLOC_API srcloc_status srcloc_simulate(const srcloc_config* config, uint64_t seed, srcloc_observations** out);
SRCLOC_API srcloc_status srcloc_observations_load(const srcloc_config* config, const char* path,
                                                  srcloc_observations** out);
SRCLOC_API srcloc_status srcloc_observations_save(const srcloc_observations* obs, const char* path);
SRCLOC_API size_t srcloc_observations_event_count(const srcloc_observations* obs);
SRCLOC_API void srcloc_observations_free(srcloc_observations* obs);

/* ---- likelihood ---- */
SRCLOC_API srcloc_status srcloc_log_likelihood(const srcloc_observations* obs, const double theta[4], double* out);
SRCLOC_API srcloc_status srcloc_score(const srcloc_observations* obs, const double theta[4], double out[4]);
/* Row-major 4x4 information per unit n at theta. */
SRCLOC_API srcloc_status srcloc_fisher_information(const srcloc_config* config, const double theta[4],
                                                   double out[16]);
SRCLOC_API srcloc_status srcloc_q_kappa_squared(double kappa, double* out);

/* ---- estimation ---- */
SRCLOC_API srcloc_status srcloc_estimate_run(const srcloc_observations* obs, srcloc_method method, uint64_t seed,
                                             srcloc_estimate* out);

/* ---- identifiability, experiments, limit laws ---- */
/* Writes a JSON verdict; status is SRCLOC_IDENTIFIABILITY_ERROR for a cross or too few detectors. */
SRCLOC_API srcloc_status srcloc_identify(const srcloc_config* config, char** json);
/* Runs the full pipeline into out_dir. A nonzero seed overrides the config seed.
   summary_json (optional) receives the manifest fragment with reports. */
SRCLOC_API srcloc_status srcloc_experiment_run(const srcloc_config* config, const char* out_dir, unsigned workers,
                                               int force, uint64_t seed, char** summary_json);
/* Draws from the regime's limit law at theta0 and writes them as CSV. */
SRCLOC_API srcloc_status srcloc_limits_sample(const srcloc_config* config, size_t count, uint64_t seed,
                                              const char* csv_path);

#ifdef __cplusplus
}
#endif

#endif /* SRCLOC_SRCLOC_H */
