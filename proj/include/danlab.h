/* C interface to the danlab library. All functions return a status code;
 * on failure danlab_last_error() describes the error for the calling thread. */
#ifndef DANLAB_H
#define DANLAB_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DANLAB_API __declspec(dllexport)
#else
#define DANLAB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum danlab_status {
  DANLAB_OK = 0,
  DANLAB_ERR_CONFIG = 1,
  DANLAB_ERR_NUMERICAL = 2,
  DANLAB_ERR_ORACLE = 3,
  DANLAB_ERR_FORMAT = 4,
  DANLAB_ERR_IO = 5,
  DANLAB_ERR_SHAPE = 6,
  DANLAB_ERR_INTERNAL = 7
} danlab_status;

typedef struct danlab_config danlab_config;
typedef struct danlab_batch danlab_batch;
typedef struct danlab_params danlab_params;

typedef void (*danlab_log_fn)(const char* line, void* user);

DANLAB_API const char* danlab_last_error(void);
DANLAB_API const char* danlab_status_name(danlab_status status);
/* Process exit code for a status: 0 ok, 1 config/input, 2 numerical, 3 oracle. */
DANLAB_API int danlab_exit_code(danlab_status status);

/* Configuration */
DANLAB_API danlab_status danlab_config_load(const char* path, danlab_config** out);
DANLAB_API danlab_status danlab_config_parse(const char* text, danlab_config** out);
DANLAB_API danlab_status danlab_config_set_seed(danlab_config* cfg, uint64_t seed);
DANLAB_API danlab_status danlab_config_set_out(danlab_config* cfg, const char* dir);
DANLAB_API danlab_status danlab_config_set_threads(danlab_config* cfg, int threads);
DANLAB_API const char* danlab_config_out(const danlab_config* cfg);
DANLAB_API uint64_t danlab_config_seed(const danlab_config* cfg);
/* Normalized text form; valid until the next call on this thread. */
DANLAB_API const char* danlab_config_text(const danlab_config* cfg);
DANLAB_API void danlab_config_free(danlab_config* cfg);

/* Trajectory batches */
DANLAB_API danlab_status danlab_batch_generate(const danlab_config* cfg, int64_t count, int64_t horizon,
                                               danlab_batch** out);
DANLAB_API danlab_status danlab_batch_read(const char* path, danlab_batch** out);
DANLAB_API danlab_status danlab_batch_write(const danlab_batch* batch, const char* path);
DANLAB_API danlab_status danlab_batch_shape(const danlab_batch* batch, int64_t* count, int64_t* steps, int64_t* n,
                                            int64_t* d);
/* Copies x_{i,t} (n values) or y_{i,t} (d values) into out. */
DANLAB_API danlab_status danlab_batch_state(const danlab_batch* batch, int64_t i, int64_t t, double* out);
DANLAB_API danlab_status danlab_batch_observation(const danlab_batch* batch, int64_t i, int64_t t, double* out);
DANLAB_API void danlab_batch_free(danlab_batch* batch);

/* Network parameters */
DANLAB_API danlab_status danlab_params_init(const danlab_config* cfg, danlab_params** out);
DANLAB_API danlab_status danlab_params_read(const char* path, danlab_params** out);
DANLAB_API danlab_status danlab_params_write(const danlab_params* params, const char* path);
DANLAB_API int64_t danlab_params_size(const danlab_params* params);
DANLAB_API const double* danlab_params_data(const danlab_params* params);
DANLAB_API void danlab_params_free(danlab_params* params);

/* Commands. Output directories are created as needed. */
DANLAB_API danlab_status danlab_run_gen(const danlab_config* cfg, int64_t count, int64_t horizon, const char* path);
DANLAB_API danlab_status danlab_run_train(const danlab_config* cfg, const char* out_dir, danlab_log_fn log,
                                          void* user);
DANLAB_API danlab_status danlab_run_test(const danlab_config* cfg, const char* checkpoint, const char* out_dir,
                                         danlab_log_fn log, void* user);
DANLAB_API danlab_status danlab_run_baseline(const danlab_config* cfg, const char* out_dir, danlab_log_fn log,
                                             void* user);
/* Returns DANLAB_ERR_ORACLE when any check fails; the failed check names
 * are in danlab_last_error(). */
DANLAB_API danlab_status danlab_run_oracle(uint64_t seed, danlab_log_fn log, void* user);

#ifdef __cplusplus
}
#endif

#endif
