#ifndef TRANSPORT_INVERSE_H
#define TRANSPORT_INVERSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TiProblem {
  TI_PROBLEM_HOMOGENEOUS = 1,
  TI_PROBLEM_HETEROGENEOUS = 2,
} TiProblem;

typedef enum TiStatus {
  TI_STATUS_OK = 0,
  TI_STATUS_NULL_POINTER = 1,
  TI_STATUS_INVALID_ARGUMENT = 2,
  TI_STATUS_BUFFER_TOO_SMALL = 3,
  TI_STATUS_NUMERIC = 4,
  TI_STATUS_CONVERGENCE = 5,
  TI_STATUS_PARSE = 6,
  TI_STATUS_IO = 7,
  TI_STATUS_PANIC = 8,
} TiStatus;

/*
 Trained network.
 */
typedef struct TiModel TiModel;

/*
 Gauss-Legendre node set.
 */
typedef struct TiQuadrature TiQuadrature;

/*
 Discretization used to compute detector readings.
 */
typedef struct TiGenConfig {
  size_t n_q;
  size_t n_x;
  double t_f;
  size_t n_t;
  double sigma_t;
  double speed_c;
  double si_tol;
  size_t si_max_iter;
  double breakpoint;
} TiGenConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. The pointer stays
 valid until the next failing call on the same thread.
 */
const char *ti_last_error(void);

/*
 Default dataset-generation settings.
 */
struct TiGenConfig ti_gen_config_default(void);

/*
 # Safety
 `out` must be a valid pointer to writable handle storage.
 */
enum TiStatus ti_quadrature_new(size_t n_q, struct TiQuadrature **out);

/*
 # Safety
 `q` must be NULL or a handle from `ti_quadrature_new` not yet freed.
 */
void ti_quadrature_free(struct TiQuadrature *q);

/*
 Number of directions, or 0 for a NULL handle.

 # Safety
 `q` must be NULL or a live quadrature handle.
 */
size_t ti_quadrature_len(const struct TiQuadrature *q);

/*
 Copies nodes and weights (ascending nodes) into caller buffers of length `len`.

 # Safety
 `q` must be a live handle; `nodes` and `weights` must each hold `len` doubles.
 */
enum TiStatus ti_quadrature_copy(const struct TiQuadrature *q,
                                 double *nodes,
                                 double *weights,
                                 size_t len);

/*
 Boundary detector readings for absorption coefficients `kappa` (1 value for
 the homogeneous problem, 2 for the heterogeneous one). Writes
 2 or 4 values to `out`, in dataset column order.

 # Safety
 `config` must point to a valid config, `kappa` to `n_kappa` doubles and
 `out` to `out_len` writable doubles.
 */
enum TiStatus ti_detector_readings(const struct TiGenConfig *config,
                                   enum TiProblem problem,
                                   const double *kappa,
                                   size_t n_kappa,
                                   double *out,
                                   size_t out_len);

/*
 Manufactured-solution run at `t_f = 1`: scalar flux at x = 0, 0.5, 1 into
 `psi[3]` and the relative L2 error over all nodes into `eps_rel`.

 # Safety
 `psi` must hold 3 doubles and `eps_rel` must be writable.
 */
enum TiStatus ti_manufactured_run(double kappa,
                                  size_t n_x,
                                  size_t n_t,
                                  size_t n_q,
                                  double *psi,
                                  double *eps_rel);

/*
 # Safety
 `path` must be a NUL-terminated string and `out` valid handle storage.
 */
enum TiStatus ti_model_load(const char *path, struct TiModel **out);

/*
 Parses a model from its JSON text.

 # Safety
 `json` must be a NUL-terminated string and `out` valid handle storage.
 */
enum TiStatus ti_model_from_json(const char *json, struct TiModel **out);

/*
 # Safety
 `m` must be NULL or a model handle not yet freed.
 */
void ti_model_free(struct TiModel *m);

/*
 # Safety
 `m` must be NULL or a live model handle.
 */
size_t ti_model_input_dim(const struct TiModel *m);

/*
 # Safety
 `m` must be NULL or a live model handle.
 */
size_t ti_model_output_dim(const struct TiModel *m);

/*
 Forward pass on one input vector.

 # Safety
 `m` must be a live handle, `input` must hold `n_input` doubles and
 `out` must hold `out_len` doubles.
 */
enum TiStatus ti_model_predict(const struct TiModel *m,
                               const double *input,
                               size_t n_input,
                               double *out,
                               size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRANSPORT_INVERSE_H */
