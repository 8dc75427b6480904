/* C interface for the dpdp planning engine. */

#pragma once

/* Generated with cbindgen:0.27.0 */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status code of every fallible call.
typedef enum DpdpStatus {
  DPDP_STATUS_SUCCESS = 0,
  DPDP_STATUS_NULL_POINTER = 1,
  DPDP_STATUS_INVALID_UTF8 = 2,
  DPDP_STATUS_IO_ERROR = 3,
  DPDP_STATUS_PARSE_ERROR = 4,
  DPDP_STATUS_VALIDATION_ERROR = 5,
  DPDP_STATUS_UNKNOWN_AGENT = 6,
  DPDP_STATUS_RUNTIME_ERROR = 7,
  DPDP_STATUS_PANIC = 8,
} DpdpStatus;

// Opaque validated scenario handle.
typedef struct DpdpScenario DpdpScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string; do not free.
const char *dpdp_version(void);

// Last error message for this thread, or null when the previous call
// succeeded. The caller owns the string; free with [`dpdp_string_free`].
char *dpdp_last_error_message(void);

// Frees a string returned by this library. Null is a no-op.
//
// # Safety
// `s` must have been returned by this library and not freed before.
void dpdp_string_free(char *s);

// Loads and validates a scenario file.
//
// # Safety
// `path` must be a valid NUL-terminated string; `out` must be a valid
// pointer to receive the handle.
enum DpdpStatus dpdp_scenario_load_file(const char *path, struct DpdpScenario **out);

// Parses and validates a scenario from a JSON string.
//
// # Safety
// `json` must be a valid NUL-terminated string; `out` must be a valid
// pointer to receive the handle.
enum DpdpStatus dpdp_scenario_parse(const char *json, struct DpdpScenario **out);

// Releases a scenario handle. Null is a no-op.
//
// # Safety
// `scenario` must have come from a load/parse call and not be freed twice.
void dpdp_scenario_free(struct DpdpScenario *scenario);

// Basic counts as JSON: `{"agents":..,"requests":..,"events":..}`.
//
// # Safety
// `scenario` must be a live handle; `out_json` must be valid.
enum DpdpStatus dpdp_scenario_info_json(const struct DpdpScenario *scenario, char **out_json);

// Evolves the initial plan of one agent. `seed` below zero uses the
// scenario default. The result JSON carries the plan listing, the fitness
// line, and the full evolution report.
//
// # Safety
// `scenario` must be a live handle; `agent_id` a valid string; `out_json`
// valid.
enum DpdpStatus dpdp_plan_agent(const struct DpdpScenario *scenario,
                                const char *agent_id,
                                int64_t seed,
                                char **out_json);

// Evaluates one agent's pending stop order as given, without evolving.
// Exposed so bindings can score hand-built plans.
//
// # Safety
// Pointer arguments as in [`dpdp_plan_agent`].
enum DpdpStatus dpdp_evaluate_pending(const struct DpdpScenario *scenario,
                                      const char *agent_id,
                                      char **out_json);

// Runs the scenario to termination. `seed`/`max_ticks` below zero use the
// scenario defaults. `out_results_json` receives metrics, termination, and
// reports; `out_trace_csv` (optional, may be null) receives the tick trace.
// A stalled or tick-limited run still returns `Success`; inspect the
// termination field.
//
// # Safety
// `scenario` must be a live handle; output pointers must be valid or null.
enum DpdpStatus dpdp_run(const struct DpdpScenario *scenario,
                         int64_t seed,
                         int64_t max_ticks,
                         char **out_results_json,
                         char **out_trace_csv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
