#ifndef SLZEROS_H
#define SLZEROS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SlzStatus {
  SLZ_STATUS_OK = 0,
  SLZ_STATUS_NULL_POINTER = 1,
  SLZ_STATUS_INVALID_ARGUMENT = 2,
  SLZ_STATUS_CONFIG = 3,
  SLZ_STATUS_DOMAIN = 4,
  SLZ_STATUS_NUMERIC = 5,
  SLZ_STATUS_PRECONDITION = 6,
  SLZ_STATUS_INVARIANT = 7,
  SLZ_STATUS_IO = 8,
  SLZ_STATUS_PANIC = 9,
} SlzStatus;

/**
 * Eigenfunction family: `C` (cosine-like) or `D` (sine-like).
 */
typedef enum SlzFamily {
  SLZ_FAMILY_C = 0,
  SLZ_FAMILY_D = 1,
} SlzFamily;

/**
 * Both eigenfunction families of one weight.
 */
typedef struct SlzBasis SlzBasis;

/**
 * A weight preset with its tabulated Liouville map.
 */
typedef struct SlzWeight SlzWeight;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next call into this library on the same thread.
 */
const char *slz_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *slz_version(void);

/**
 * Creates a weight from a preset name (`unit`, `sine2`, `expcos`).
 * `expcos_a` is used only by `expcos`; pass NaN for the default.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` writable.
 */
enum SlzStatus slz_weight_new(const char *name, double expcos_a, struct SlzWeight **out);

/**
 * # Safety
 * `w` must come from [`slz_weight_new`] and not be used afterwards.
 */
void slz_weight_free(struct SlzWeight *w);

/**
 * `ω(x)`.
 *
 * # Safety
 * `w` must be a live handle and `out` writable.
 */
enum SlzStatus slz_weight_eval(const struct SlzWeight *w, double x, double *out);

/**
 * `Ω(x) = ∫₀^x ω` for `x` in `[0, 2π]`.
 *
 * # Safety
 * `w` must be a live handle and `out` writable.
 */
enum SlzStatus slz_omega(const struct SlzWeight *w, double x, double *out);

/**
 * `Ω⁻¹(y)` for `y` in `[0, 2π]`.
 *
 * # Safety
 * `w` must be a live handle and `out` writable.
 */
enum SlzStatus slz_omega_inverse(const struct SlzWeight *w, double y, double *out);

/**
 * Solves both families up to `k_max` on `grid_points` nodes (0 for the
 * default).
 *
 * # Safety
 * `w` must be a live handle and `out` writable.
 */
enum SlzStatus slz_basis_solve(const struct SlzWeight *w,
                               uintptr_t k_max,
                               uintptr_t grid_points,
                               struct SlzBasis **out);

/**
 * # Safety
 * `b` must come from [`slz_basis_solve`] and not be used afterwards.
 */
void slz_basis_free(struct SlzBasis *b);

/**
 * Eigenpairs per family.
 *
 * # Safety
 * `b` must be a live handle and `out` writable.
 */
enum SlzStatus slz_basis_len(const struct SlzBasis *b, uintptr_t *out);

/**
 * Eigenvalue `λ_k`, `k ≥ 1`.
 *
 * # Safety
 * `b` must be a live handle and `out` writable.
 */
enum SlzStatus slz_basis_eigenvalue(const struct SlzBasis *b,
                                    enum SlzFamily fam,
                                    uintptr_t k,
                                    double *out);

/**
 * `ψ_k(x)` and `ψ′_k(x)` in the original variable.
 *
 * # Safety
 * `b` must be a live handle; `value` and `deriv` writable.
 */
enum SlzStatus slz_basis_eval(const struct SlzBasis *b,
                              enum SlzFamily fam,
                              uintptr_t k,
                              double x,
                              double *value,
                              double *deriv);

/**
 * `r_n(t) = (1/n) Σ cos(kt)` and its first two derivatives, written to
 * `out[0..3]`.
 *
 * # Safety
 * `out` must point to three writable doubles.
 */
enum SlzStatus slz_r_n(uintptr_t n, double t, double *out);

/**
 * Closed-form expected zero count on `[0, 2π]` of `X_n` (`stationary` = 0)
 * or of `T_n` (`stationary` ≠ 0).
 *
 * # Safety
 * `out` must be writable.
 */
enum SlzStatus slz_kac_rice(uintptr_t n, int32_t stationary, double *out);

/**
 * Zeros on `[0, 2π]` of one replicate of `X_n` for weight `w` (or of `T_n`
 * when `w` is NULL), drawn from `(master_seed, n, replicate_id)`.
 *
 * # Safety
 * `w` must be NULL or a live handle; `out` writable.
 */
enum SlzStatus slz_count_zeros(const struct SlzWeight *w,
                               uint64_t master_seed,
                               uintptr_t n,
                               uint64_t replicate_id,
                               uintptr_t *out);

/**
 * Runs a simulation described by a TOML experiment config and writes the
 * records CSV to `records_path`. `replicates_out` receives the number of
 * records written.
 *
 * # Safety
 * Both strings must be NUL-terminated; `replicates_out` writable.
 */
enum SlzStatus slz_simulate(const char *config_toml,
                            const char *records_path,
                            uintptr_t *replicates_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLZEROS_H */
