#ifndef MSRISK_H
#define MSRISK_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum MsrStatus {
  MSR_STATUS_OK = 0,
  MSR_STATUS_NULL_POINTER = 1,
  MSR_STATUS_INVALID_ARGUMENT = 2,
  MSR_STATUS_DIMENSION_MISMATCH = 3,
  MSR_STATUS_NOT_POSITIVE_DEFINITE = 4,
  MSR_STATUS_NUMERICAL = 5,
  MSR_STATUS_FIT_FAILED = 6,
  MSR_STATUS_PARSE = 7,
  MSR_STATUS_BUFFER_TOO_SMALL = 8,
  MSR_STATUS_PANIC = 9,
} MsrStatus;

typedef enum MsrFamily {
  MSR_FAMILY_GAUSSIAN = 0,
  MSR_FAMILY_STUDENT_T = 1,
} MsrFamily;

typedef enum MsrMeasure {
  MSR_MEASURE_VAR = 0,
  MSR_MEASURE_ES = 1,
  MSR_MEASURE_MCOVAR = 2,
  MSR_MEASURE_MCOES = 3,
  MSR_MEASURE_DELTA_MCOVAR = 4,
  MSR_MEASURE_DELTA_MCOES = 5,
} MsrMeasure;

typedef enum MsrDofConvention {
  MSR_DOF_CONVENTION_PAPER = 0,
  MSR_DOF_CONVENTION_STANDARD = 1,
} MsrDofConvention;

/**
 * Opaque predictive mixture.
 */
typedef struct MsrMixture MsrMixture;

/**
 * Opaque fitted model.
 */
typedef struct MsrModel MsrModel;

/**
 * Opaque return panel.
 */
typedef struct MsrPanel MsrPanel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *msr_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len` bytes) and returns the full message length without the NUL.
 */
size_t msr_last_error(char *buf, size_t len);

/**
 * Frees a string returned by this library.
 */
void msr_string_free(char *s);

/**
 * Builds a `t x p` panel from row-major values with synthetic weekly dates.
 */
enum MsrStatus msr_panel_new(const double *values, size_t t, size_t p, struct MsrPanel **out);

void msr_panel_free(struct MsrPanel *panel);

/**
 * Fits an `n_states`-state model with `restarts` EM restarts; `family` is an [`MsrFamily`] code.
 */
enum MsrStatus msr_fit(const struct MsrPanel *panel,
                       size_t n_states,
                       uint32_t family,
                       size_t restarts,
                       uint64_t seed,
                       struct MsrModel **out);

/**
 * Parses a model from the JSON written by `msr_model_to_json` or the CLI.
 */
enum MsrStatus msr_model_from_json(const char *json, struct MsrModel **out);

/**
 * Serialises a model; free the result with `msr_string_free`.
 */
enum MsrStatus msr_model_to_json(const struct MsrModel *model, char **out);

void msr_model_free(struct MsrModel *model);

/**
 * Number of observations, assets and states of a fitted model.
 */
enum MsrStatus msr_model_shape(const struct MsrModel *model,
                               size_t *n_obs,
                               size_t *dim,
                               size_t *n_states);

/**
 * Log-likelihood, AIC and BIC of a fitted model.
 */
enum MsrStatus msr_model_criteria(const struct MsrModel *model,
                                  double *loglik,
                                  double *aic,
                                  double *bic);

/**
 * Copies the `n_obs x n_states` filtered probabilities (row-major) into `out`.
 */
enum MsrStatus msr_model_filtered(const struct MsrModel *model, double *out, size_t len);

/**
 * Writes the most probable state path (0-based) of `panel` into `out`.
 */
enum MsrStatus msr_viterbi(const struct MsrModel *model,
                           const struct MsrPanel *panel,
                           size_t *out,
                           size_t len);

/**
 * Law of the observation `horizon` steps after row `origin`.
 */
enum MsrStatus msr_predictive(const struct MsrModel *model,
                              size_t origin,
                              size_t horizon,
                              struct MsrMixture **out);

void msr_mixture_free(struct MsrMixture *mix);

enum MsrStatus msr_mixture_dim(const struct MsrMixture *mix, size_t *dim);

/**
 * `tau`-quantile of coordinate `asset` of the mixture.
 */
enum MsrStatus msr_var(const struct MsrMixture *mix, size_t asset, double tau, double *out);

/**
 * Evaluates the [`MsrMeasure`] `measure` for `target`; `distressed` is
 * ignored by VaR and ES. `convention` is an [`MsrDofConvention`] code.
 */
enum MsrStatus msr_risk(const struct MsrMixture *mix,
                        uint32_t measure,
                        size_t target,
                        const size_t *distressed,
                        size_t n_distressed,
                        double tau1,
                        double tau2,
                        uint32_t convention,
                        double *out);

/**
 * Shapley shares of the other `dim - 1` assets (ascending index order) in the
 * spillover `measure` of `target`. `signed` selects signed rather than absolute values.
 */
enum MsrStatus msr_shapley(const struct MsrMixture *mix,
                           uint32_t measure,
                           size_t target,
                           double tau1,
                           double tau2,
                           uint32_t convention,
                           bool signed_,
                           double *shares,
                           size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSRISK_H */
