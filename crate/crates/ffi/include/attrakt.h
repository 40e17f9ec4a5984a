#ifndef ATTRAKT_H
#define ATTRAKT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Pipeline failures reuse the CLI exit codes.
 */
typedef enum AtStatus {
  AT_STATUS_OK = 0,
  AT_STATUS_OTHER = 1,
  AT_STATUS_CONFIG = 2,
  AT_STATUS_NULL_POINTER = 3,
  AT_STATUS_INVALID_ARGUMENT = 4,
  AT_STATUS_PANIC = 5,
  AT_STATUS_GATE = 10,
  AT_STATUS_INJECTIVITY = 11,
  AT_STATUS_BETA_LADDER = 12,
  AT_STATUS_SETTLING = 13,
  AT_STATUS_INTEGRATOR = 14,
} AtStatus;

/**
 * Opaque point cloud.
 */
typedef struct AtCloud AtCloud;

/**
 * Parameters of the modulus `ω(r) = C0 r ln(C_L_eff / r)^γ`, flat past its knee.
 */
typedef struct AtModulus {
  double c0;
  double c_l_eff;
  double gamma;
} AtModulus;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *at_last_error(void);

/**
 * Build a cloud from `count * dim` row-major doubles.
 *
 * # Safety
 * `data` must point to `count * dim` readable doubles; `out` must be writable.
 */
enum AtStatus at_cloud_new(const double *data, size_t dim, size_t count, struct AtCloud **out);

/**
 * Release a cloud. Null is ignored.
 *
 * # Safety
 * `cloud` must come from this library and not be freed twice.
 */
void at_cloud_free(struct AtCloud *cloud);

/**
 * # Safety
 * `cloud` must be a live handle; `out` must be writable.
 */
enum AtStatus at_cloud_len(const struct AtCloud *cloud, size_t *out);

/**
 * # Safety
 * `cloud` must be a live handle; `out` must be writable.
 */
enum AtStatus at_cloud_dim(const struct AtCloud *cloud, size_t *out);

/**
 * Copy point `index` into `out`, which holds `dim` doubles.
 *
 * # Safety
 * `cloud` must be a live handle; `out` must hold `dim` writable doubles.
 */
enum AtStatus at_cloud_point(const struct AtCloud *cloud, size_t index, double *out);

/**
 * Nearest point to `query` (`dim` doubles): its index and distance.
 *
 * # Safety
 * `query` must hold `dim` doubles; `index` and `distance` must be writable.
 */
enum AtStatus at_cloud_nearest(const struct AtCloud *cloud,
                               const double *query,
                               size_t *index,
                               double *distance);

/**
 * `sup_{x in a} dist(x, b)`.
 *
 * # Safety
 * Both handles must be live; `out` must be writable.
 */
enum AtStatus at_semidistance(const struct AtCloud *a, const struct AtCloud *b, double *out);

/**
 * Symmetric Hausdorff distance.
 *
 * # Safety
 * Both handles must be live; `out` must be writable.
 */
enum AtStatus at_hausdorff(const struct AtCloud *a, const struct AtCloud *b, double *out);

/**
 * Load a cloud from CSV or the binary format, chosen by content.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum AtStatus at_cloud_load(const char *path, struct AtCloud **out);

/**
 * Save as CSV, or as binary when `binary` is nonzero.
 *
 * # Safety
 * `cloud` must be live; `path` must be a NUL-terminated string.
 */
enum AtStatus at_cloud_save(const struct AtCloud *cloud, const char *path, int32_t binary);

/**
 * `ω(r)`.
 *
 * # Safety
 * `m` must be readable; `out` must be writable.
 */
enum AtStatus at_modulus_eval(const struct AtModulus *m, double r, double *out);

/**
 * `∫_eps^{min(1, r_c)} dr / ω(r)`.
 *
 * # Safety
 * `m` must be readable; `out` must be writable.
 */
enum AtStatus at_osgood_integral(const struct AtModulus *m, double eps, double *out);

/**
 * Run every stage for the TOML config `config` into `out_dir` and hand back
 * the summary JSON in `summary` (free with [`at_string_free`]). A stage
 * failure still yields the summary and returns that stage's status.
 *
 * # Safety
 * `config` and `out_dir` must be NUL-terminated strings; `summary` must be
 * writable.
 */
enum AtStatus at_run(const char *config, const char *out_dir, char **summary);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void at_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ATTRAKT_H */
