#ifndef OPHGLM_H
#define OPHGLM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Reply buffer size handed to [`OphCompleteFn`].
 */
#define OPH_REPLY_CAPACITY 65536

/**
 * Result code of every `oph_*` call.
 */
typedef enum OphStatus {
  OPH_OK = 0,
  OPH_NULL_ARGUMENT = 1,
  OPH_INVALID_UTF8 = 2,
  OPH_INVALID_INPUT = 3,
  OPH_NOT_FOUND = 4,
  OPH_BACKEND_UNAVAILABLE = 5,
  OPH_UNDEFINED = 6,
  OPH_PANIC = 7,
} OphStatus;

/**
 * Precomputed-prediction backend loaded from a manifest.
 */
typedef struct OphOracle OphOracle;

/**
 * Chat session holding at most one report and its turn history.
 */
typedef struct OphSession OphSession;

/**
 * Completion callback. Writes a NUL-terminated reply of at most `cap` bytes
 * into `out` and returns 0, or returns non-zero on failure.
 */
typedef int32_t (*OphCompleteFn)(void *ctx, const char *prompt, char *out, size_t cap);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty when none. Valid
 * until the next `oph_*` call on the same thread.
 */
const char *oph_last_error(void);

/**
 * Library version as a static string.
 */
const char *oph_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void oph_string_free(char *s);

/**
 * Loads an oracle manifest (TSV of case_id, task, sidecar_path).
 *
 * # Safety
 * `manifest_path` must be a NUL-terminated string; `out` must be writable.
 */
enum OphStatus oph_oracle_load(const char *manifest_path, struct OphOracle **out);

/**
 * # Safety
 * `oracle` must be null or a handle from [`oph_oracle_load`], freed once.
 */
void oph_oracle_free(struct OphOracle *oracle);

/**
 * Runs all nine tasks for one case and renders the default report.
 *
 * # Safety
 * `oracle` must be a live handle, `case_id` a NUL-terminated string and
 * `out_report` writable.
 */
enum OphStatus oph_diagnose(const struct OphOracle *oracle,
                            const char *case_id,
                            uint32_t width,
                            uint32_t height,
                            char **out_report);

/**
 * New session using the default prompt template.
 *
 * # Safety
 * `session_id` must be a NUL-terminated string; `out` must be writable.
 */
enum OphStatus oph_session_new(const char *session_id, struct OphSession **out);

/**
 * # Safety
 * `session` must be null or a handle from [`oph_session_new`], freed once.
 */
void oph_session_free(struct OphSession *session);

/**
 * Attaches a report text; a session accepts one report.
 *
 * # Safety
 * `session` must be a live handle; the strings must be NUL-terminated.
 */
enum OphStatus oph_session_attach_report(struct OphSession *session,
                                         const char *case_id,
                                         const char *report_text);

/**
 * The prompt that the next user turn would send, without sending it.
 *
 * # Safety
 * `session` must be a live handle, `user_turn` NUL-terminated and
 * `out_prompt` writable.
 */
enum OphStatus oph_session_build_prompt(const struct OphSession *session,
                                        const char *user_turn,
                                        char **out_prompt);

/**
 * Runs one exchange through `complete`. The session gains both turns only
 * when the callback succeeds.
 *
 * # Safety
 * `session` must be a live handle, `user_turn` NUL-terminated,
 * `out_reply` writable, and `complete` safe to call with `ctx`.
 */
enum OphStatus oph_session_chat(struct OphSession *session,
                                const char *user_turn,
                                OphCompleteFn complete,
                                void *ctx,
                                char **out_reply);

/**
 * Number of turns in the session history.
 *
 * # Safety
 * `session` must be null or a live handle.
 */
size_t oph_session_turn_count(const struct OphSession *session);

/**
 * `(tp + tn) / (tp + tn + fp + fn)`; `OPH_UNDEFINED` when all are zero.
 *
 * # Safety
 * `out` must be writable.
 */
enum OphStatus oph_accuracy(uint64_t tp, uint64_t tn, uint64_t fp, uint64_t fn_, double *out);

/**
 * Dice overlap of two row-major 0/1 masks of `width * height` bytes. Both
 * masks empty gives 1.0.
 *
 * # Safety
 * `x` and `y` must each point to `width * height` readable bytes; `out`
 * must be writable.
 */
enum OphStatus oph_dice(const uint8_t *x,
                        const uint8_t *y,
                        uint32_t width,
                        uint32_t height,
                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPHGLM_H */
