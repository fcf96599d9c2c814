#ifndef TUBEMPC_H
#define TUBEMPC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TmpcStatus {
  TMPC_STATUS_OK = 0,
  TMPC_STATUS_NULL_POINTER = 1,
  TMPC_STATUS_INVALID_ARGUMENT = 2,
  TMPC_STATUS_IO = 3,
  TMPC_STATUS_PARSE = 4,
  TMPC_STATUS_NUMERICAL = 5,
  TMPC_STATUS_PANIC = 6,
} TmpcStatus;

typedef struct TmpcController TmpcController;

typedef struct TmpcPolytope TmpcPolytope;

/*
 Outcome of the last control step.
 */
typedef struct TmpcStepResult {
  double u_bar;
  double du;
  size_t active_model;
  bool switched;
  bool backup;
  /*
   0 optimal, 1 relaxed (solved without the feasible-set rows),
   2 infeasible (command held), 3 iteration limit (command held).
   */
  int32_t qp_status;
} TmpcStepResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *tmpc_version(void);

/*
 Message of the last failed call on this thread, empty after a success.
 Valid until the next call on the same thread.
 */
const char *tmpc_last_error(void);

/*
 Frees a string returned by this library.

 # Safety
 `s` must be null or come from a `tmpc_*` function returning an owned
 string, and must not be freed twice.
 */
void tmpc_string_free(char *s);

/*
 Polytope `{x : G x <= h}` from a row-major `rows x dim` matrix `g`.

 # Safety
 `g` must hold `rows * dim` values, `h` `rows` values, and `out` must be
 writable.
 */
enum TmpcStatus tmpc_polytope_new(const double *g,
                                  const double *h,
                                  size_t rows,
                                  size_t dim,
                                  struct TmpcPolytope **out);

/*
 Polytope from its JSON form `{"G": [[...]], "g": [...]}`.

 # Safety
 `json` must be a NUL-terminated string and `out` writable.
 */
enum TmpcStatus tmpc_polytope_from_json(const char *json, struct TmpcPolytope **out);

/*
 # Safety
 `p` must be null or a live polytope handle.
 */
void tmpc_polytope_free(struct TmpcPolytope *p);

/*
 # Safety
 `p` must be a live polytope handle and `dim`, `rows` writable.
 */
enum TmpcStatus tmpc_polytope_shape(const struct TmpcPolytope *p, size_t *dim, size_t *rows);

/*
 Membership of `x` with tolerance `tol`.

 # Safety
 `p` must be a live handle, `x` hold `n` values and `out` be writable.
 */
enum TmpcStatus tmpc_polytope_contains(const struct TmpcPolytope *p,
                                       const double *x,
                                       size_t n,
                                       double tol,
                                       bool *out);

/*
 Support function `max_{x in P} d'x`.

 # Safety
 `p` must be a live handle, `d` hold `n` values and `out` be writable.
 */
enum TmpcStatus tmpc_polytope_support(const struct TmpcPolytope *p,
                                      const double *d,
                                      size_t n,
                                      double *out);

/*
 # Safety
 `a`, `b` must be live handles and `out` writable.
 */
enum TmpcStatus tmpc_polytope_pontryagin_diff(const struct TmpcPolytope *a,
                                              const struct TmpcPolytope *b,
                                              struct TmpcPolytope **out);

/*
 # Safety
 `a`, `b` must be live handles and `out` writable.
 */
enum TmpcStatus tmpc_polytope_minkowski_sum(const struct TmpcPolytope *a,
                                            const struct TmpcPolytope *b,
                                            struct TmpcPolytope **out);

/*
 Controller for a scenario JSON file: loads (or synthesizes) the bank
 and bundles it names and tracks the scenario's reference profile. The
 state is reset to standstill at the origin.

 # Safety
 `path` must be a NUL-terminated string and `out` writable.
 */
enum TmpcStatus tmpc_controller_load(const char *path, struct TmpcController **out);

/*
 # Safety
 `c` must be null or a live controller handle.
 */
void tmpc_controller_free(struct TmpcController *c);

/*
 Replaces the reference with samples `s`, `v`, `a` of length `len` at the
 bank's sample time.

 # Safety
 `c` must be a live handle and each array hold `len` values.
 */
enum TmpcStatus tmpc_controller_set_reference(struct TmpcController *c,
                                              const double *s,
                                              const double *v,
                                              const double *a,
                                              size_t len);

/*
 Restarts at measurement `y = (s, v, a)` with previous command `u0`.

 # Safety
 `c` must be a live handle and `y` hold 3 values.
 */
enum TmpcStatus tmpc_controller_reset(struct TmpcController *c, const double *y, double u0);

/*
 One control step on measurement `y = (s, v, a)`.

 # Safety
 `c` must be a live handle, `y` hold 3 values and `out` be writable.
 */
enum TmpcStatus tmpc_controller_step(struct TmpcController *c,
                                     const double *y,
                                     struct TmpcStepResult *out);

/*
 Run-time state as JSON; free with [`tmpc_string_free`].

 # Safety
 `c` must be a live handle and `out` writable.
 */
enum TmpcStatus tmpc_controller_checkpoint(const struct TmpcController *c, char **out);

/*
 Restores a state produced by [`tmpc_controller_checkpoint`].

 # Safety
 `c` must be a live handle and `json` a NUL-terminated string.
 */
enum TmpcStatus tmpc_controller_restore(struct TmpcController *c, const char *json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TUBEMPC_H */
