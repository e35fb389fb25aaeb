#ifndef GHOSTIM_H
#define GHOSTIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GhostimStatus {
  GHOSTIM_STATUS_OK = 0,
  GHOSTIM_STATUS_NULL_POINTER = 1,
  GHOSTIM_STATUS_INVALID_ARGUMENT = 2,
  GHOSTIM_STATUS_DOMAIN = 3,
  GHOSTIM_STATUS_CONFIG = 4,
  GHOSTIM_STATUS_IO = 5,
  GHOSTIM_STATUS_FORMAT = 6,
  // The requested metric is undefined for this run.
  GHOSTIM_STATUS_METRIC = 7,
  GHOSTIM_STATUS_PANIC = 8,
} GhostimStatus;

// Selects one field of the metrics report.
typedef enum GhostimMetric {
  GHOSTIM_METRIC_CONTRAST = 0,
  GHOSTIM_METRIC_PSF_SIGMA_X = 1,
  GHOSTIM_METRIC_PSF_SIGMA_Y = 2,
  GHOSTIM_METRIC_FIELD_WIDTH_GAMMA = 3,
  GHOSTIM_METRIC_MODE_COUNT = 4,
  GHOSTIM_METRIC_BITS_PER_PHOTON = 5,
  GHOSTIM_METRIC_HERALDING_EFFICIENCY = 6,
  GHOSTIM_METRIC_VARIANCE_PRODUCT_HBAR2 = 7,
} GhostimMetric;

// Opaque run configuration.
typedef struct GhostimConfig GhostimConfig;

// Opaque result of one simulated run.
typedef struct GhostimSimulation GhostimSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null if none. Free with
// [`ghostim_string_free`].
char *ghostim_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed already.
void ghostim_string_free(char *s);

// Library version as a static NUL-terminated string.
const char *ghostim_version(void);

// Image-plane correlation length (m) for crystal length, pump wavelength
// and magnification.
//
// # Safety
// `out` must be null or valid for one write.
enum GhostimStatus ghostim_correlation_length_image_plane(double crystal_length,
                                                          double lambda_pump,
                                                          double magnification,
                                                          double *out);

// Far-field correlation length (m) for effective focal length, pump
// amplitude stdev and down-converted wavelength.
//
// # Safety
// `out` must be null or valid for one write.
enum GhostimStatus ghostim_correlation_length_far_field(double effective_focal_length,
                                                        double pump_amplitude_sigma,
                                                        double lambda_down,
                                                        double *out);

// Product of the inferred position and momentum variances, units of hbar^2.
//
// # Safety
// `out` must be null or valid for one write.
enum GhostimStatus ghostim_epr_variance_product(double sigma_pos_cam,
                                                double sigma_mom_cam,
                                                double magnification,
                                                double effective_focal_length,
                                                double lambda_down,
                                                double *out);

// Number of spatial modes `(gamma / sigma)^2` and its base-2 logarithm.
//
// # Safety
// `modes` and `bits` must be null or valid for one write each.
enum GhostimStatus ghostim_mode_count(double gamma, double sigma, double *modes, double *bits);

// Loads a configuration from a file path or a preset name.
//
// # Safety
// `source` must be a NUL-terminated string; `out` must be valid for one write.
enum GhostimStatus ghostim_config_load(const char *source, struct GhostimConfig **out);

// Overrides the number of frames of the masked run.
//
// # Safety
// `cfg` must be null or a live handle from [`ghostim_config_load`].
enum GhostimStatus ghostim_config_set_frames(struct GhostimConfig *cfg, size_t frames);

// Overrides the number of frames of the open-beam companion run.
//
// # Safety
// `cfg` must be null or a live handle from [`ghostim_config_load`].
enum GhostimStatus ghostim_config_set_field_frames(struct GhostimConfig *cfg, size_t frames);

// # Safety
// `cfg` must be null or a live handle from [`ghostim_config_load`].
enum GhostimStatus ghostim_config_set_seed(struct GhostimConfig *cfg, uint64_t seed);

// Canonical text of the configuration, or null on a null handle. Free
// with [`ghostim_string_free`].
//
// # Safety
// `cfg` must be null or a live handle from [`ghostim_config_load`].
char *ghostim_config_echo(const struct GhostimConfig *cfg);

// # Safety
// `cfg` must be null or a handle from [`ghostim_config_load`] not yet freed.
void ghostim_config_free(struct GhostimConfig *cfg);

// Runs the masked acquisition and its open-beam companion. `workers = 0`
// uses all cores; the result does not depend on it.
//
// # Safety
// `cfg` must be a live config handle; `out` must be valid for one write.
enum GhostimStatus ghostim_simulate(const struct GhostimConfig *cfg,
                                    size_t workers,
                                    struct GhostimSimulation **out);

// Borrows the ghost-image counts, row-major. The pointer stays valid until
// the handle is freed.
//
// # Safety
// `sim` must be a live handle; the out-pointers must be valid for one write.
enum GhostimStatus ghostim_simulation_image(const struct GhostimSimulation *sim,
                                            size_t *width,
                                            size_t *height,
                                            const uint32_t **counts);

// Total triggers and detected photons of the masked run.
//
// # Safety
// `sim` must be a live handle; the out-pointers must be valid for one write.
enum GhostimStatus ghostim_simulation_counts(const struct GhostimSimulation *sim,
                                             uint64_t *triggers,
                                             uint64_t *detected);

// One metric of the run. Returns [`GhostimStatus::Metric`] when it is
// undefined.
//
// # Safety
// `sim` must be a live handle; `out` must be valid for one write.
enum GhostimStatus ghostim_simulation_metric(const struct GhostimSimulation *sim,
                                             enum GhostimMetric which,
                                             double *out);

// Metrics report as JSON, or null on a null handle. Free with
// [`ghostim_string_free`].
//
// # Safety
// `sim` must be null or a live handle.
char *ghostim_simulation_metrics_json(const struct GhostimSimulation *sim);

// # Safety
// `sim` must be null or a handle from [`ghostim_simulate`] not yet freed.
void ghostim_simulation_free(struct GhostimSimulation *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GHOSTIM_H */
