/* Public C interface to the bdm core: opaque handles, integer status codes,
 * thread-local error messages. Everything the CLI does goes through here. */

#ifndef BDM_H
#define BDM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define BDM_API __declspec(dllexport)
#else
#define BDM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bdm_status {
    BDM_OK = 0,
    BDM_ERR_INVALID_ARGUMENT = 1,
    BDM_ERR_OUT_OF_RANGE = 2,
    BDM_ERR_SHAPE_MISMATCH = 3,
    BDM_ERR_CONFIG = 4,
    BDM_ERR_MISSING_ARTIFACT = 5,
    BDM_ERR_IO = 6,
    BDM_ERR_NUMERIC = 7,
    BDM_ERR_INTERNAL = 8
} bdm_status;

BDM_API const char* bdm_version(void);
BDM_API const char* bdm_status_name(bdm_status status);

/* Message for the most recent failure on this thread; valid until the next
 * failing call. Empty string when no failure has occurred. */
BDM_API const char* bdm_last_error(void);

/* ---- noise schedules ---------------------------------------------------- */

typedef struct bdm_schedule_s bdm_schedule;

BDM_API bdm_status bdm_schedule_create(double beta0, double betaT, int32_t steps,
                                       bdm_schedule** out);
BDM_API void bdm_schedule_free(bdm_schedule* sched);
BDM_API int32_t bdm_schedule_steps(const bdm_schedule* sched);
/* t in [1, T] for beta/sigma; alpha_bar also accepts t = 0. Returns NaN on a
 * bad timestep. */
BDM_API double bdm_schedule_beta(const bdm_schedule* sched, int32_t t);
BDM_API double bdm_schedule_alpha_bar(const bdm_schedule* sched, int32_t t);
BDM_API double bdm_schedule_sigma(const bdm_schedule* sched, int32_t t);

/* ---- point clouds ------------------------------------------------------- */

typedef struct bdm_cloud_s bdm_cloud;

BDM_API bdm_status bdm_cloud_create(const double* coords, int32_t n_points, int32_t dim,
                                    bdm_cloud** out);
BDM_API void bdm_cloud_free(bdm_cloud* cloud);
BDM_API int32_t bdm_cloud_points(const bdm_cloud* cloud);
BDM_API int32_t bdm_cloud_dim(const bdm_cloud* cloud);
/* Copies n_points * dim doubles; capacity is the destination length. */
BDM_API bdm_status bdm_cloud_copy(const bdm_cloud* cloud, double* dst, size_t capacity);
BDM_API bdm_status bdm_cloud_load_xyz(const char* path, bdm_cloud** out);
BDM_API bdm_status bdm_cloud_save_xyz(const bdm_cloud* cloud, const char* path);

/* ---- metrics ------------------------------------------------------------ */

BDM_API bdm_status bdm_chamfer(const bdm_cloud* pred, const bdm_cloud* gt, double* out);
BDM_API bdm_status bdm_fscore(const bdm_cloud* pred, const bdm_cloud* gt, double tau,
                              double* out);

/* ---- trained models ------------------------------------------------------ */

typedef struct bdm_params_s bdm_params;   /* prior or reconstruction network */
typedef struct bdm_merged_s bdm_merged;   /* merged fusion network */

BDM_API bdm_status bdm_params_load(const char* path, bdm_params** out);
BDM_API void bdm_params_free(bdm_params* params);
BDM_API int32_t bdm_params_conditional(const bdm_params* params);
BDM_API bdm_status bdm_merged_load(const char* path, bdm_merged** out);
BDM_API void bdm_merged_free(bdm_merged* merged);

/* ---- sampling ------------------------------------------------------------ */

/* cond is the flat condition vector (radial histogram, family onehot, noise
 * level); cond_len must match the library's condition dimension. */
BDM_API bdm_status bdm_sample_unconditional(const bdm_params* prior, const bdm_schedule* sched,
                                            int32_t n_points, uint64_t seed, bdm_cloud** out);
BDM_API bdm_status bdm_sample_conditional(const bdm_params* recon, const bdm_schedule* sched,
                                          const double* cond, size_t cond_len, int32_t n_points,
                                          uint64_t seed, bdm_cloud** out);
BDM_API bdm_status bdm_sample_guided(const bdm_params* recon, const bdm_schedule* sched,
                                     const double* cond, size_t cond_len, double guidance_w,
                                     int32_t n_points, uint64_t seed, bdm_cloud** out);

/* Fusion samplers. stage_mask bits: 1 = early, 2 = middle, 4 = late.
 * interval/duration of 0 pick the schedule-scaled defaults. */
BDM_API bdm_status bdm_sample_blend(const bdm_params* prior, const bdm_params* recon,
                                    const bdm_schedule* sched, uint32_t stage_mask,
                                    int32_t interval, int32_t duration, double ratio,
                                    const double* cond, size_t cond_len, int32_t n_points,
                                    uint64_t seed, bdm_cloud** out);
BDM_API bdm_status bdm_sample_merge(const bdm_merged* merged, const bdm_schedule* sched,
                                    uint32_t stage_mask, int32_t interval, int32_t duration,
                                    const double* cond, size_t cond_len, int32_t n_points,
                                    uint64_t seed, bdm_cloud** out);

/* ---- Langevin baseline --------------------------------------------------- */

/* Diagonal-Gaussian product posterior demo: returns per-coordinate posterior
 * moment estimates from additive-score Langevin sampling. */
BDM_API bdm_status bdm_langevin_gaussian_product(double prior_mean, double prior_var,
                                                 double data_mean, double data_var,
                                                 int32_t steps, int32_t chains, uint64_t seed,
                                                 double* mean_out, double* var_out);

/* ---- experiment stages ---------------------------------------------------
 * stage: gen-data | train-prior | train-recon | train-merge | sample |
 *        evaluate | ablate-timing | ablate-duration | ablate-ratio |
 *        compare-cfg | seed-variance | langevin-demo | report
 * seed_override < 0 keeps the config's dataset seed.
 * paper_scale_schedule != 0 switches to the 1000-step timing constants. */
BDM_API bdm_status bdm_run_stage(const char* stage, const char* config_path, const char* out_dir,
                                 int32_t threads, int64_t seed_override,
                                 int32_t paper_scale_schedule);

/* Writes the built-in desk-scale config as JSON; returns the number of bytes
 * the full document needs (excluding the NUL). */
BDM_API size_t bdm_default_config(char* dst, size_t capacity);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* BDM_H */
