#ifndef ELAPSED_H
#define ELAPSED_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ElapsedStatus {
  ELAPSED_STATUS_OK = 0,
  ELAPSED_STATUS_NULL_POINTER = 1,
  /**
   * Invalid parameters or configuration.
   */
  ELAPSED_STATUS_CONFIG = 2,
  /**
   * A solver could not continue (e.g. an unsolvable level).
   */
  ELAPSED_STATUS_SOLVER = 3,
  /**
   * A result failed its verification.
   */
  ELAPSED_STATUS_VERIFICATION = 4,
  /**
   * The output buffer is too small; the required length was written.
   */
  ELAPSED_STATUS_BUFFER_TOO_SMALL = 5,
  ELAPSED_STATUS_PANIC = 6,
} ElapsedStatus;

/**
 * Opaque firing-rate model.
 */
typedef struct ElapsedModel ElapsedModel;

/**
 * Opaque activity trace.
 */
typedef struct ElapsedTrace ElapsedTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *elapsed_last_error_message(void);

/**
 * Builds a catalog model.
 *
 * # Safety
 * `name` must be a NUL-terminated string, `params` must point to
 * `n_params` doubles (or be NULL when `n_params` is 0), and `out` must be
 * a valid pointer to write the handle to.
 */
enum ElapsedStatus elapsed_model_new(const char *name,
                                     const double *params,
                                     size_t n_params,
                                     double sigma,
                                     struct ElapsedModel **out);

/**
 * # Safety
 * `model` must be NULL or a handle from [`elapsed_model_new`] that has not
 * been freed.
 */
void elapsed_model_free(struct ElapsedModel *model);

/**
 * Writes `phi(u)`.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum ElapsedStatus elapsed_model_phi(const struct ElapsedModel *model, double u, double *out);

/**
 * Writes `psi(u) = u / phi(u)`.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum ElapsedStatus elapsed_model_psi(const struct ElapsedModel *model, double u, double *out);

/**
 * Writes the steady states in increasing order. `*len` receives the
 * number of roots even when the buffer is too small.
 *
 * # Safety
 * `model` must be a live handle, `out` must hold `capacity` doubles and
 * `len` must be a valid pointer.
 */
enum ElapsedStatus elapsed_steady_states(const struct ElapsedModel *model,
                                         double *out,
                                         size_t capacity,
                                         size_t *len);

/**
 * Solves the delay equation from a catalog initial density on the given
 * 1-based branch.
 *
 * # Safety
 * `model` must be a live handle, `density` a NUL-terminated string,
 * `params` must point to `n_params` doubles (or be NULL when `n_params`
 * is 0), and `out` a valid pointer to write the handle to.
 */
enum ElapsedStatus elapsed_evolve_activity(const struct ElapsedModel *model,
                                           const char *density,
                                           const double *params,
                                           size_t n_params,
                                           double horizon,
                                           double dt,
                                           size_t branch,
                                           struct ElapsedTrace **out);

/**
 * Runs a named preset and returns its activity trace. A failed
 * verification still returns the trace, with status `Verification`.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ElapsedStatus elapsed_run_preset(const char *name, struct ElapsedTrace **out);

/**
 * # Safety
 * `trace` must be NULL or a handle returned by this library that has not
 * been freed.
 */
void elapsed_trace_free(struct ElapsedTrace *trace);

/**
 * Number of samples, or 0 for NULL.
 *
 * # Safety
 * `trace` must be NULL or a live handle.
 */
size_t elapsed_trace_len(const struct ElapsedTrace *trace);

/**
 * Copies the activity samples `N(k dt)`.
 *
 * # Safety
 * `trace` must be a live handle, `out` must hold `capacity` doubles and
 * `len` must be a valid pointer.
 */
enum ElapsedStatus elapsed_trace_values(const struct ElapsedTrace *trace,
                                        double *out,
                                        size_t capacity,
                                        size_t *len);

/**
 * Copies the times of the recorded branch jumps.
 *
 * # Safety
 * `trace` must be a live handle, `out` must hold `capacity` doubles and
 * `len` must be a valid pointer.
 */
enum ElapsedStatus elapsed_trace_jump_times(const struct ElapsedTrace *trace,
                                            double *out,
                                            size_t capacity,
                                            size_t *len);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* ELAPSED_H */
