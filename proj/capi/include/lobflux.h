/* lobflux C API: limit order book scaling-limit toolkit.
 *
 * All functions return lf_status; results come back through out parameters.
 * On failure, lf_last_error() returns a thread-local message describing the
 * most recent error on the calling thread. Handles are opaque and must be
 * released with the matching *_free function.
 */
#ifndef LOBFLUX_H
#define LOBFLUX_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define LOBFLUX_API __declspec(dllexport)
#else
#define LOBFLUX_API __attribute__((visibility("default")))
#endif

typedef enum lf_status {
  LF_OK = 0,
  LF_ERR_VALIDATION = 1,
  LF_ERR_RUNTIME = 2,
  LF_ERR_INVALID_ARGUMENT = 3,
  LF_ERR_INFEASIBLE = 4,
  LF_ERR_IO = 5
} lf_status;

typedef struct lf_config lf_config;
typedef struct lf_density lf_density;

LOBFLUX_API const char* lf_version(void);
LOBFLUX_API const char* lf_last_error(void);

/* ---- configuration ----------------------------------------------------- */

LOBFLUX_API lf_status lf_config_load(const char* path, lf_config** out);
LOBFLUX_API lf_status lf_config_parse(const char* text, lf_config** out);
/* dotted_key is "section.key" (sections may contain dots). */
LOBFLUX_API lf_status lf_config_set(lf_config* cfg, const char* dotted_key, const char* value);
LOBFLUX_API void lf_config_free(lf_config* cfg);

/* Runs one pipeline subcommand (simulate, first-order, fluctuations,
 * second-order, calibrate, correlate, convergence-study, validate) and
 * writes its artifacts into out_dir. Returns LF_OK (0) on success,
 * LF_ERR_VALIDATION (1) when a validation gate failed, LF_ERR_RUNTIME (2)
 * otherwise; error_json_out (optional) receives a malloc'd machine-readable
 * description that the caller releases with lf_string_free. */
LOBFLUX_API lf_status lf_run(const lf_config* cfg, const char* subcommand, const char* out_dir,
                             char** error_json_out);

LOBFLUX_API void lf_string_free(char* s);

/* ---- step densities on the tick grid ----------------------------------- */

/* Cell j covers (x_j, x_j + delta] with x_0 = -half_width; values are
 * densities per price unit. half_width must be an integer multiple of
 * delta. */
LOBFLUX_API lf_status lf_density_create(double delta, double half_width, const double* values,
                                        size_t n_values, lf_density** out);
LOBFLUX_API size_t lf_density_size(const lf_density* d);
LOBFLUX_API lf_status lf_density_values(const lf_density* d, double* buffer, size_t n);
/* direction: +1 applies T_+ (f(.+delta)), -1 applies T_- (f(.-delta)).
 * dropped_mass (optional) receives the mass shifted past the boundary. */
LOBFLUX_API lf_status lf_density_translate(const lf_density* d, int direction, lf_density** out,
                                           double* dropped_mass);
/* side: +1 forward difference, -1 backward difference. */
LOBFLUX_API lf_status lf_density_finite_diff(const lf_density* d, int side, lf_density** out);
/* <d, phi> with the per-cell quadrature; phi is a caller callback. */
typedef double (*lf_test_function)(double x, void* ctx);
LOBFLUX_API lf_status lf_density_inner_product(const lf_density* d, lf_test_function phi,
                                               void* ctx, double* out);
LOBFLUX_API lf_status lf_density_mass(const lf_density* d, double* out);
LOBFLUX_API void lf_density_free(lf_density* d);

/* ---- simplified-model covariance --------------------------------------- */

/* Var(Z^B_t), Var(Z^Y_t), Cov and the correlation at time t for the
 * configured simplified model (model/init sections of cfg). Any output
 * pointer may be NULL. */
LOBFLUX_API lf_status lf_simplified_covariance(const lf_config* cfg, double t, double* var_zb,
                                               double* var_zy, double* cov, double* rho);

#ifdef __cplusplus
}
#endif

#endif /* LOBFLUX_H */
