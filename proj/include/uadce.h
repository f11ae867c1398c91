#ifndef UADCE_H
#define UADCE_H

/*
 * C interface to the incremental-training harness. All functions return a
 * status code; 0 is success. On failure, uadce_last_error() describes what
 * went wrong (per thread). Strings returned through char** outputs are owned
 * by the caller and released with uadce_string_free(). Handles are opaque and
 * released with their matching _free function.
 */

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define UADCE_API __declspec(dllexport)
#else
#define UADCE_API __attribute__((visibility("default")))
#endif

typedef enum uadce_status {
  UADCE_OK = 0,
  UADCE_ERR_CONFIG = 1,     /* bad configuration value or file */
  UADCE_ERR_CONTRACT = 2,   /* precondition violated by the caller */
  UADCE_ERR_EVALUATION = 3, /* evaluation could not be carried out */
  UADCE_ERR_POLICY = 4,     /* selection policy violated its constraints */
  UADCE_ERR_IO = 5,         /* file missing, unreadable, or corrupt */
  UADCE_ERR_TRAINING = 6,   /* training diverged */
  UADCE_ERR_UNKNOWN = 7,
  UADCE_ERR_ARGUMENT = 8 /* null pointer or out-of-range argument */
} uadce_status;

typedef struct uadce_config uadce_config;
typedef struct uadce_report uadce_report;

UADCE_API const char* uadce_version(void);

/* Message from this thread's most recent failed call; never null. */
UADCE_API const char* uadce_last_error(void);

/*
 * Configs are INI-backed key-value stores addressed as "section.key". Loading
 * validates the file; values changed later through uadce_config_set are
 * validated when the config is run. UADCE_SEED and UADCE_OUT environment
 * overrides are folded in at load time, so an explicit set() afterwards wins.
 */
UADCE_API uadce_status uadce_config_load(const char* path, uadce_config** out);
UADCE_API uadce_status uadce_config_default(uadce_config** out);
UADCE_API uadce_status uadce_config_set(uadce_config* config, const char* key,
                                        const char* value);
UADCE_API uadce_status uadce_config_get(const uadce_config* config, const char* key,
                                        char** out_value);
UADCE_API void uadce_config_free(uadce_config* config);

/* Runs the full protocol; artifacts land in the configured output directory. */
UADCE_API uadce_status uadce_run(const uadce_config* config, uadce_report** out);

/* Loads the report.json written by an earlier run. */
UADCE_API uadce_status uadce_report_load(const char* run_dir, uadce_report** out);

UADCE_API int uadce_report_session_count(const uadce_report* report);

/*
 * session_index is 1-based. metric is one of "overall", "base", "novel",
 * "head_overall", "head_base", "head_novel". Metrics a session does not carry
 * (novel accuracy in the base session, head metrics outside that ablation)
 * fail with UADCE_ERR_ARGUMENT.
 */
UADCE_API uadce_status uadce_report_metric(const uadce_report* report, int session_index,
                                           const char* metric, double* out_value);
UADCE_API uadce_status uadce_report_summary(const uadce_report* report, double* out_pd,
                                            double* out_average);
UADCE_API uadce_status uadce_report_output_dir(const uadce_report* report, char** out_dir);
UADCE_API void uadce_report_free(uadce_report* report);

/*
 * Re-renders a stored run: returns the fixed-width metrics table and rewrites
 * the accuracy plot next to the stored report.
 */
UADCE_API uadce_status uadce_render_report(const char* run_dir, char** out_text);

/*
 * Recomputes the published comparison tables' summary columns from their
 * session values. out_mismatches receives the number of binding cells that
 * disagree; the rendered per-cell listing goes to out_text (either output may
 * be null if not wanted). Returns UADCE_OK even when mismatches exist.
 */
UADCE_API uadce_status uadce_verify_goldens(int* out_mismatches, char** out_text);

UADCE_API void uadce_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* UADCE_H */
