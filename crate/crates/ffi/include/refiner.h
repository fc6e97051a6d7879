#ifndef REFINER_H
#define REFINER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum RefinerStatus {
  REFINER_STATUS_OK = 0,
  REFINER_STATUS_NULL_ARGUMENT = 1,
  REFINER_STATUS_INVALID_UTF8 = 2,
  REFINER_STATUS_INVALID_CONFIG = 3,
  REFINER_STATUS_ANALYSIS_FAILED = 4,
  REFINER_STATUS_EQUIVALENCE_FAILED = 5,
  REFINER_STATUS_UNKNOWN_FUNCTION = 6,
  REFINER_STATUS_PANIC = 7,
} RefinerStatus;

// Outcome class of an equivalence check.
typedef enum RefinerVerdict {
  REFINER_VERDICT_EQUIVALENT = 0,
  REFINER_VERDICT_NON_EQUIVALENT = 1,
  REFINER_VERDICT_INCONCLUSIVE = 2,
} RefinerVerdict;

// A parsed pseudocode unit.
typedef struct RefinerUnit RefinerUnit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Owned by the
// library and valid until the next call on the same thread.
const char *refiner_last_error(void);

// Library version as a static string.
const char *refiner_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed already.
void refiner_string_free(char *s);

// Parses pseudocode text. Functions that fail to parse are skipped and
// listed by [`refiner_unit_skipped_count`].
//
// # Safety
// `name` and `text` must be NUL-terminated strings; `out` must be writable.
enum RefinerStatus refiner_unit_parse(const char *name, const char *text, struct RefinerUnit **out);

// Releases a unit. Null is ignored.
//
// # Safety
// `unit` must come from [`refiner_unit_parse`] or [`refiner_optimize_mock`].
void refiner_unit_free(struct RefinerUnit *unit);

// Number of functions that parsed, or 0 for a null unit.
//
// # Safety
// `unit` must be null or a live unit.
size_t refiner_unit_function_count(const struct RefinerUnit *unit);

// Number of functions skipped by the parser, or 0 for a null unit.
//
// # Safety
// `unit` must be null or a live unit.
size_t refiner_unit_skipped_count(const struct RefinerUnit *unit);

// Canonical rendering of the unit.
//
// # Safety
// `unit` must be a live unit and `out` writable.
enum RefinerStatus refiner_unit_render(const struct RefinerUnit *unit, char **out);

// Dependency graph of the unit as JSON.
//
// # Safety
// `unit` must be a live unit and `out` writable.
enum RefinerStatus refiner_analyze_json(const struct RefinerUnit *unit, char **out);

// Type violations of the unit as a JSON report; `count` receives their number.
//
// # Safety
// `unit` must be a live unit; `count` and `out` writable.
enum RefinerStatus refiner_typecheck(const struct RefinerUnit *unit, size_t *count, char **out);

// Checks one function of two units for equivalence. `config_json` may be
// null for defaults. `witness_json` receives the full verdict as JSON and
// may be null when not wanted.
//
// # Safety
// Units must be live; strings NUL-terminated or null where allowed;
// `verdict` writable.
enum RefinerStatus refiner_check_equivalence(const struct RefinerUnit *original,
                                             const struct RefinerUnit *optimized,
                                             const char *function,
                                             const char *config_json,
                                             enum RefinerVerdict *verdict,
                                             char **witness_json);

// Runs the refinement loop with a scripted provider. `scenario_json` maps
// target ids to reply lists; `config_json` may be null for defaults. The
// run report is written to `report_json` and the final unit to `refined`.
//
// # Safety
// `unit` must be live; strings NUL-terminated or null where allowed;
// outputs writable.
enum RefinerStatus refiner_optimize_mock(const struct RefinerUnit *unit,
                                         const char *scenario_json,
                                         const char *config_json,
                                         char **report_json,
                                         struct RefinerUnit **refined);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REFINER_H */
