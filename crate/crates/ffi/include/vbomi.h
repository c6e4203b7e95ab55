#ifndef VBOMI_H
#define VBOMI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VbomiStatus {
  VBOMI_STATUS_OK = 0,
  VBOMI_STATUS_NULL_POINTER = 1,
  VBOMI_STATUS_INVALID_ARGUMENT = 2,
  VBOMI_STATUS_CONFIG = 3,
  VBOMI_STATUS_NUMERICAL = 4,
  VBOMI_STATUS_OBJECTIVE = 5,
  VBOMI_STATUS_BUFFER_TOO_SMALL = 6,
  VBOMI_STATUS_PANIC = 7,
} VbomiStatus;

// Parsed experiment configuration.
typedef struct VbomiConfig VbomiConfig;

// Result of one optimisation run.
typedef struct VbomiRun VbomiRun;

// One iteration of a run.
typedef struct VbomiTraceRow {
  uint64_t iteration;
  double mean_reward;
  double batch_max;
  double best_so_far;
  double s_t;
  double mi_estimate;
  double loss_action;
  double loss_critic;
  uint64_t model_flops;
} VbomiTraceRow;

// Model FLOPs of one BO iteration. Values above `u64::MAX` saturate.
typedef struct VbomiFlopReport {
  uint64_t t;
  uint64_t surrogate_flops;
  uint64_t acquisition_flops;
  uint64_t total;
  double ratio_vs_vbo;
} VbomiFlopReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the calling thread's last error message into `buf` as a
// NUL-terminated string. `*needed` receives the size including the NUL.
//
// # Safety
// `buf` must be null or valid for `len` bytes; `needed` must be null or valid.
enum VbomiStatus vbomi_last_error(char *buf, size_t len, size_t *needed);

// Parse an experiment configuration from TOML text.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` must be valid for writes.
enum VbomiStatus vbomi_config_from_toml(const char *toml, struct VbomiConfig **out);

// # Safety
// `cfg` must be null or a pointer from [`vbomi_config_from_toml`], freed once.
void vbomi_config_free(struct VbomiConfig *cfg);

// Run `method` (`vbo`, `gp_ucb`, `random`, `vbo_gp_exploration`,
// `vbo_gp_exploitation`) for one seed.
//
// # Safety
// `cfg` must be a live config, `method` a NUL-terminated string and `out`
// valid for writes.
enum VbomiStatus vbomi_run(const struct VbomiConfig *cfg,
                           const char *method,
                           uint64_t seed,
                           struct VbomiRun **out);

// # Safety
// `run` must be null or a pointer from [`vbomi_run`], freed once.
void vbomi_run_free(struct VbomiRun *run);

// Counts of a run: iterations recorded, objective calls, input dimension,
// and whether it completed (1) or hit its budget cap (0).
//
// # Safety
// `run` must be live; each output pointer must be null or valid.
enum VbomiStatus vbomi_run_info(const struct VbomiRun *run,
                                size_t *iterations,
                                size_t *evaluations,
                                size_t *dim,
                                int32_t *completed);

// Best observation and its input; `x` receives `dim` values.
//
// # Safety
// `run` must be live, `best_y` valid, and `x` valid for `x_len` doubles.
enum VbomiStatus vbomi_run_best(const struct VbomiRun *run,
                                double *best_y,
                                double *x,
                                size_t x_len);

// Row `index` (0-based) of the run's trace.
//
// # Safety
// `run` must be live and `out` valid for writes.
enum VbomiStatus vbomi_run_trace(const struct VbomiRun *run,
                                 size_t index,
                                 struct VbomiTraceRow *out);

// Cost model for `method` (`gp`, `hmc`, `dkl`, `lla`, `vbo`) at `t`
// observations with the default constants.
//
// # Safety
// `method` must be a NUL-terminated string and `out` valid for writes.
enum VbomiStatus vbomi_flops(const char *method, uint64_t t, struct VbomiFlopReport *out);

// Estimate `I(X; Y)` in nats from `n` row-major samples with default
// estimator settings.
//
// # Safety
// `x` must hold `n·dx` doubles, `y` `n·dy` doubles, and `out` be valid.
enum VbomiStatus vbomi_estimate_mi(const double *x,
                                   const double *y,
                                   size_t n,
                                   size_t dx,
                                   size_t dy,
                                   uint64_t seed,
                                   double *out);

// Library version as a static NUL-terminated string.
const char *vbomi_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VBOMI_H */
