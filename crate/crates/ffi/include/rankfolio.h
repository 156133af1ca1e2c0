#ifndef RANKFOLIO_H
#define RANKFOLIO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RfAggregation {
  RF_AGGREGATION_BORDA = 0,
  RF_AGGREGATION_FOOTRULE = 1,
  RF_AGGREGATION_COPELAND = 2,
  RF_AGGREGATION_BEST_OF_K = 3,
  RF_AGGREGATION_MC4 = 4,
  RF_AGGREGATION_KEMENY = 5,
} RfAggregation;

typedef enum RfSolver {
  RF_SOLVER_MVO = 0,
  RF_SOLVER_MAXMIN = 1,
  RF_SOLVER_MIN_REGRET = 2,
  /**
   * Uses the `gamma` argument of [`rf_solve`].
   */
  RF_SOLVER_SOFT = 3,
} RfSolver;

typedef enum RfStatus {
  RF_STATUS_OK = 0,
  RF_STATUS_NULL_POINTER = 1,
  RF_STATUS_INVALID_ARGUMENT = 2,
  RF_STATUS_DIMENSION = 3,
  RF_STATUS_NOT_POSITIVE_DEFINITE = 4,
  RF_STATUS_NOT_CONVERGED = 5,
  RF_STATUS_CAPABILITY = 6,
  RF_STATUS_NUMERICAL = 7,
  RF_STATUS_PANIC = 8,
} RfStatus;

/**
 * Opaque profile of total orders.
 */
typedef struct RfProfile RfProfile;

/**
 * Opaque scenario set with its covariance and risk aversion.
 */
typedef struct RfScenarioSet RfScenarioSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *rf_last_error_message(void);

/**
 * Normalized Kendall-Tau distance between two orders of `n` assets.
 */
enum RfStatus rf_kendall_tau(const size_t *a, const size_t *b, size_t n, double *out);

/**
 * Builds a profile from `n_orders` sequences of length `n_assets`, stored
 * back to back.
 */
enum RfStatus rf_profile_new(const size_t *sequences,
                             size_t n_assets,
                             size_t n_orders,
                             struct RfProfile **out);

void rf_profile_free(struct RfProfile *profile);

/**
 * Consensus order written to `out_sequence` (length = number of assets).
 */
enum RfStatus rf_aggregate(const struct RfProfile *profile,
                           enum RfAggregation method,
                           bool local_improve,
                           size_t *out_sequence);

/**
 * Scenario set from `k` expected-return vectors (`k × n`, row-major) and an
 * `n × n` covariance.
 */
enum RfStatus rf_scenarios_new(const double *mus,
                               size_t k,
                               const double *sigma,
                               size_t n,
                               double delta,
                               struct RfScenarioSet **out);

void rf_scenarios_free(struct RfScenarioSet *scenarios);

/**
 * Solves over the scenario set. `gamma` is read only by `RF_SOLVER_SOFT`;
 * `RF_SOLVER_MVO` uses the first scenario. Weights go to `out_weights`
 * (length n), the objective to `out_objective` (may be null).
 */
enum RfStatus rf_solve(const struct RfScenarioSet *scenarios,
                       enum RfSolver method,
                       double gamma,
                       double *out_weights,
                       double *out_objective);

/**
 * Posterior expected returns for one ordinal view `sequence` given prior
 * `pi` and covariance `sigma`. Writes `n` means and standard errors.
 */
enum RfStatus rf_posterior(const double *pi,
                           const double *sigma,
                           size_t n,
                           const size_t *sequence,
                           double c,
                           double tau,
                           double delta,
                           size_t n_samples,
                           uint64_t seed,
                           double *out_mu,
                           double *out_se);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RANKFOLIO_H */
