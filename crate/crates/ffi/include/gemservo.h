#ifndef GEMSERVO_H
#define GEMSERVO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>

typedef enum GsStatus {
  GS_STATUS_OK = 0,
  GS_STATUS_NULL_POINTER = 1,
  GS_STATUS_INVALID_ARGUMENT = 2,
  GS_STATUS_INVALID_MODEL = 3,
  GS_STATUS_DIMENSION = 4,
  GS_STATUS_NON_FINITE = 5,
  GS_STATUS_CONSTANT_OUTPUT = 6,
  GS_STATUS_UNCONTROLLABLE = 7,
  GS_STATUS_UNREACHABLE = 8,
  GS_STATUS_NO_SOLUTION = 9,
  GS_STATUS_PARSE = 10,
  GS_STATUS_IO = 11,
  GS_STATUS_BUFFER_TOO_SMALL = 12,
  GS_STATUS_PANIC = 13,
} GsStatus;

typedef enum GsTraceColumn {
  GS_TRACE_COLUMN_T = 0,
  GS_TRACE_COLUMN_R = 1,
  GS_TRACE_COLUMN_E = 2,
  GS_TRACE_COLUMN_U = 3,
  GS_TRACE_COLUMN_U_SAT = 4,
  GS_TRACE_COLUMN_Y = 5,
} GsTraceColumn;

// Opaque PID controller with its state.
typedef struct GsPid GsPid;

// Opaque closed-loop trace.
typedef struct GsTrace GsTrace;

// Opaque transfer function handle.
typedef struct GsTransferFunction GsTransferFunction;

typedef struct GsFitResult {
  // `b0 / (s^2 + a1 s + a0)`.
  double b0;
  double a1;
  double a0;
  double fit_pct;
  double fpe;
  double mse;
  bool converged;
  bool stable;
} GsFitResult;

typedef struct GsStepMetrics {
  // NaN when the output never settles.
  double tss;
  double os_pct;
  double ess;
  bool settled;
} GsStepMetrics;

// Link lengths in metres, axis tilt in radians.
typedef struct GsGeometry {
  double l1;
  double l2;
  double alpha;
} GsGeometry;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (NUL
// terminated, truncated to `cap`) and returns its full length in bytes,
// excluding the terminator. `buf` may be NULL to query the length.
size_t gs_last_error(char *buf, size_t cap);

// Library version as a static NUL-terminated string.
const char *gs_version(void);

// Coefficients in descending powers of `s`.
enum GsStatus gs_tf_new(const double *num,
                        size_t num_len,
                        const double *den,
                        size_t den_len,
                        struct GsTransferFunction **out_tf);

void gs_tf_free(struct GsTransferFunction *tf);

// Denominator degree.
enum GsStatus gs_tf_order(const struct GsTransferFunction *tf, size_t *out_order);

// Steady-state gain; `INFINITY` (signed like the low-frequency gain) for
// a pole at the origin.
enum GsStatus gs_tf_dc_gain(const struct GsTransferFunction *tf, double *out_gain);

// Number of poles at the origin.
enum GsStatus gs_tf_system_type(const struct GsTransferFunction *tf, size_t *out_type);

enum GsStatus gs_tf_is_bibo_stable(const struct GsTransferFunction *tf, bool *out_stable);

// Writes up to `cap` poles, sorted by real then imaginary part, and the
// pole count to `out_len`. Fails with `GS_STATUS_BUFFER_TOO_SMALL` (after
// setting `out_len`) when `cap` is short.
enum GsStatus gs_tf_poles(const struct GsTransferFunction *tf,
                          double *re,
                          double *im,
                          size_t cap,
                          size_t *out_len);

// New handle with the denominator multiplied by `s`.
enum GsStatus gs_tf_with_integrator(const struct GsTransferFunction *tf,
                                    struct GsTransferFunction **out_tf);

enum GsStatus gs_pid_new(double kp,
                         double ki,
                         double kd,
                         double deriv_filter_n,
                         double u_min,
                         double u_max,
                         struct GsPid **out_pid);

void gs_pid_free(struct GsPid *pid);

// One sample: writes the raw and saturated commands.
enum GsStatus gs_pid_step(struct GsPid *pid,
                          double error,
                          double ts,
                          double *out_u,
                          double *out_u_sat);

enum GsStatus gs_pid_reset(struct GsPid *pid);

// Current value of the error integral.
enum GsStatus gs_pid_integral(const struct GsPid *pid, double *out_integral);

// One state-feedback sample. `k1` and `x` have `n` entries in
// phase-variable order; `xi` is read and updated in place.
enum GsStatus gs_sf_step(const double *k1,
                         size_t n,
                         double k2,
                         const double *x,
                         double *xi,
                         double r,
                         double y,
                         double ts,
                         double u_min,
                         double u_max,
                         double *out_u,
                         double *out_u_sat);

// Fits a second-order velocity model to `n` uniformly sampled points.
enum GsStatus gs_fit_second_order(const double *t,
                                  const double *u,
                                  const double *y,
                                  size_t n,
                                  struct GsFitResult *out_fit);

enum GsStatus gs_analyze_step(const double *t,
                              const double *r,
                              const double *y,
                              size_t n,
                              double band_pct,
                              struct GsStepMetrics *out_metrics);

// Runs a scenario given as JSON text. File references inside it resolve
// against `base_dir`, or the working directory when that is NULL.
enum GsStatus gs_simulate_json(const char *scenario_json,
                               const char *base_dir,
                               struct GsTrace **out_trace);

void gs_trace_free(struct GsTrace *trace);

enum GsStatus gs_trace_len(const struct GsTrace *trace, size_t *out_len);

// Whether the run was cut short by a numerical blow-up.
enum GsStatus gs_trace_diverged(const struct GsTrace *trace, bool *out_diverged);

// Largest saturated command.
enum GsStatus gs_trace_max_control(const struct GsTrace *trace, double *out_max);

// Copies one column into `buf`, which must hold the trace length.
enum GsStatus gs_trace_column(const struct GsTrace *trace,
                              enum GsTraceColumn column,
                              double *buf,
                              size_t cap);

// Fills `out_geometry` with the default mount geometry.
enum GsStatus gs_geometry_default(struct GsGeometry *out_geometry);

// Joint angles (radians) to effector position `xyz[3]`.
enum GsStatus gs_kin_direct(const struct GsGeometry *geom,
                            double theta1,
                            double theta2,
                            double *out_xyz);

// Effector position to principal-branch joint angles `theta[2]`.
enum GsStatus gs_kin_inverse(const struct GsGeometry *geom,
                             double x,
                             double y,
                             double z,
                             double *out_theta);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEMSERVO_H */
