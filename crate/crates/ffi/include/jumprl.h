#ifndef JUMPRL_H
#define JUMPRL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum JrlPayoff {
  JRL_PAYOFF_CALL = 0,
  JRL_PAYOFF_PUT = 1,
} JrlPayoff;

typedef enum JrlStatus {
  JRL_STATUS_OK = 0,
  JRL_STATUS_NULL_POINTER = 1,
  JRL_STATUS_INVALID_ARGUMENT = 2,
  JRL_STATUS_NUMERICAL = 3,
  JRL_STATUS_PANIC = 4,
} JrlStatus;

/**
 * Opaque Fourier-cosine pricer. The expansion of the most recent time to
 * expiry is kept, so repeated calls at one maturity are cheap.
 */
typedef struct JrlCosPricer JrlCosPricer;

/**
 * Opaque market simulator with its own random stream.
 */
typedef struct JrlEnvironment JrlEnvironment;

/**
 * Merton jump-diffusion parameters; `lam = 0` gives Black-Scholes.
 */
typedef struct JrlMarketParams {
  double mu;
  double sigma;
  double lam;
  double m;
  double delta;
  double rf;
} JrlMarketParams;

/**
 * Closed-form solution of the exploratory mean-variance problem.
 */
typedef struct JrlMvSolution {
  double phi1;
  double phi2;
  double phi3;
  double psi1;
  double psi2;
  double psi3;
  double omega;
} JrlMvSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t jrl_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *jrl_version(void);

/**
 * Sharpe ratio `(μ − r)/σ`.
 *
 * # Safety
 * Pointers must be null or valid.
 */
enum JrlStatus jrl_sharpe_ratio(const struct JrlMarketParams *params, double *out);

/**
 * Jump variance rate `λ(e^{2m+2δ²} − 2e^{m+δ²/2} + 1)`.
 *
 * # Safety
 * `out` must be null or valid.
 */
enum JrlStatus jrl_jump_variance_rate(double lam, double m, double delta, double *out);

/**
 * Closed-form mean-variance solution at temperature `theta`, horizon
 * `horizon`, target `z` and initial wealth `x0`.
 *
 * # Safety
 * Pointers must be null or valid.
 */
enum JrlStatus jrl_mv_true_solution(const struct JrlMarketParams *params,
                                    double theta,
                                    double horizon,
                                    double z,
                                    double x0,
                                    struct JrlMvSolution *out);

/**
 * Create a pricer for a European option on the discounted price under the
 * variance-optimal measure of `params`. `band_lo`, `band_hi` bound the
 * log-moneyness `ln(S/K)` of the prices that will be requested.
 *
 * # Safety
 * Pointers must be null or valid; `*out` receives a handle to be released
 * with [`jrl_cos_pricer_free`].
 */
enum JrlStatus jrl_cos_pricer_new(const struct JrlMarketParams *params,
                                  enum JrlPayoff payoff,
                                  double strike,
                                  size_t n_terms,
                                  double width,
                                  double band_lo,
                                  double band_hi,
                                  struct JrlCosPricer **out);

/**
 * Price and delta at time to expiry `tau` and discounted price `s`.
 * Either output pointer may be null.
 *
 * # Safety
 * `handle` must come from [`jrl_cos_pricer_new`] and not be used
 * concurrently from several threads.
 */
enum JrlStatus jrl_cos_pricer_price(struct JrlCosPricer *handle,
                                    double tau,
                                    double s,
                                    double *price,
                                    double *delta);

/**
 * Release a pricer; null is ignored.
 *
 * # Safety
 * `handle` must be null or come from [`jrl_cos_pricer_new`] and not be
 * used afterwards.
 */
void jrl_cos_pricer_free(struct JrlCosPricer *handle);

/**
 * Create a simulator stepping by `dt`, with its noise determined by `seed`.
 *
 * # Safety
 * Pointers must be null or valid; `*out` receives a handle to be released
 * with [`jrl_environment_free`].
 */
enum JrlStatus jrl_environment_new(const struct JrlMarketParams *params,
                                   uint64_t seed,
                                   double dt,
                                   struct JrlEnvironment **out);

/**
 * Advance one step holding dollar exposure `a` from wealth `x`. Writes the
 * new wealth and the gross return of the discounted price; either output
 * may be null.
 *
 * # Safety
 * `handle` must come from [`jrl_environment_new`] and not be used
 * concurrently from several threads.
 */
enum JrlStatus jrl_environment_step(struct JrlEnvironment *handle,
                                    double x,
                                    double a,
                                    double *new_wealth,
                                    double *gross_return);

/**
 * Release a simulator; null is ignored.
 *
 * # Safety
 * `handle` must be null or come from [`jrl_environment_new`] and not be
 * used afterwards.
 */
void jrl_environment_free(struct JrlEnvironment *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JUMPRL_H */
