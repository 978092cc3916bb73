#ifndef OMICS_BNP_H
#define OMICS_BNP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a fallible call.
typedef enum OmbStatus {
  OMB_STATUS_OK = 0,
  OMB_STATUS_NULL_POINTER = 1,
  OMB_STATUS_INVALID_ARGUMENT = 2,
  OMB_STATUS_DOMAIN = 3,
  OMB_STATUS_STRUCTURAL = 4,
  OMB_STATUS_PARSE = 5,
  OMB_STATUS_CONSTRAINT = 6,
  OMB_STATUS_CONFIG = 7,
  OMB_STATUS_IO = 8,
  // An output buffer has the wrong length.
  OMB_STATUS_BUFFER_SIZE = 9,
  // The library panicked; the message names the cause.
  OMB_STATUS_PANIC = 10,
} OmbStatus;

// Input transform for a platform.
typedef enum OmbTransform {
  OMB_TRANSFORM_IDENTITY = 0,
  OMB_TRANSFORM_LOGIT = 1,
} OmbTransform;

// Platforms under construction. Every platform must have the same patients
// in the same order.
typedef struct OmbDataset OmbDataset;

// A completed Stage 1 fit.
typedef struct OmbFit OmbFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next call into the library from the same thread.
const char *omb_last_error(void);

// Library version as a static string.
const char *omb_version(void);

// New empty dataset. Release with [`omb_dataset_free`].
struct OmbDataset *omb_dataset_new(void);

// # Safety
// `dataset` must be null or a pointer from [`omb_dataset_new`] not yet freed.
void omb_dataset_free(struct OmbDataset *dataset);

// Append a platform of `n` patients by `p` probes, copied from `values`.
//
// # Safety
// `dataset` must be a live dataset and `values` must point to `n * p`
// readable doubles.
enum OmbStatus omb_dataset_add_platform(struct OmbDataset *dataset,
                                        const double *values,
                                        size_t n,
                                        size_t p,
                                        enum OmbTransform transform);

// Number of platforms added so far.
//
// # Safety
// `dataset` must be null or a live dataset.
size_t omb_dataset_n_platforms(const struct OmbDataset *dataset);

// Run Stage 1 on `dataset`. `config_toml` holds MCMC settings in the same
// form as the `[mcmc]` table of a run configuration; null uses defaults. On
// success `*out` receives a fit to release with [`omb_fit_free`].
//
// # Safety
// `dataset` must be a live dataset, `config_toml` null or a NUL-terminated
// string, and `out` valid for one write.
enum OmbStatus omb_fit_stage1(const struct OmbDataset *dataset,
                              const char *config_toml,
                              uint64_t seed,
                              struct OmbFit **out);

// # Safety
// `fit` must be null or a pointer from [`omb_fit_stage1`] not yet freed.
void omb_fit_free(struct OmbFit *fit);

// # Safety
// `fit` must be null or a live fit.
size_t omb_fit_n_patients(const struct OmbFit *fit);

// # Safety
// `fit` must be null or a live fit.
size_t omb_fit_n_platforms(const struct OmbFit *fit);

// # Safety
// `fit` must be null or a live fit.
size_t omb_fit_n_row_clusters(const struct OmbFit *fit);

// Probe count of platform `t`.
//
// # Safety
// `fit` must be a live fit and `out` valid for one write.
enum OmbStatus omb_fit_n_probes(const struct OmbFit *fit, size_t t, size_t *out);

// Column cluster count of platform `t`.
//
// # Safety
// `fit` must be a live fit and `out` valid for one write.
enum OmbStatus omb_fit_n_column_clusters(const struct OmbFit *fit, size_t t, size_t *out);

// One-based row cluster labels into `out`, which must hold one entry per
// patient.
//
// # Safety
// `fit` must be a live fit and `out` must point to `len` writable values.
enum OmbStatus omb_fit_row_labels(const struct OmbFit *fit, size_t *out, size_t len);

// One-based column cluster labels of platform `t` into `out`, which must
// hold one entry per probe.
//
// # Safety
// `fit` must be a live fit and `out` must point to `len` writable values.
enum OmbStatus omb_fit_column_labels(const struct OmbFit *fit, size_t t, size_t *out, size_t len);

// Posterior mean latent matrix of platform `t`, row clusters by column
// clusters, into `out`.
//
// # Safety
// `fit` must be a live fit and `out` must point to `len` writable doubles.
enum OmbStatus omb_fit_phi(const struct OmbFit *fit, size_t t, double *out, size_t len);

// Posterior median noise standard deviation of platform `t`.
//
// # Safety
// `fit` must be a live fit and `out` valid for one write.
enum OmbStatus omb_fit_sigma(const struct OmbFit *fit, size_t t, double *out);

// Predictive probabilities for the next item under a Pitman-Yor prior with
// discount `d` and mass `alpha`, given `k` cluster sizes. `out` receives
// `k + 1` entries, the last for a new cluster.
//
// # Safety
// `sizes` must point to `k` readable values and `out` to `len` writable
// doubles.
enum OmbStatus omb_pdp_predictive(const size_t *sizes,
                                  size_t k,
                                  double d,
                                  double alpha,
                                  double *out,
                                  size_t len);

// Fraction of item pairs on which two labelings of `n` items agree about
// co-membership.
//
// # Safety
// `a` and `b` must each point to `n` readable values and `out` be valid for
// one write.
enum OmbStatus omb_pair_agreement(const size_t *a, const size_t *b, size_t n, double *out);

// Bayesian FDR selection at level `alpha` over `k` inclusion probabilities.
// `selected[i]` is set to 1 for chosen clusters and 0 otherwise;
// `*cutoff` receives the probability threshold, or NaN when nothing is
// selected.
//
// # Safety
// `b_hat` must point to `k` readable doubles, `selected` to `k` writable
// bytes, and `cutoff` be valid for one write.
enum OmbStatus omb_fdr_select(const double *b_hat,
                              size_t k,
                              double alpha,
                              uint8_t *selected,
                              double *cutoff);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OMICS_BNP_H */
