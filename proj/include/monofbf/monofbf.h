#ifndef MONOFBF_MONOFBF_H
#define MONOFBF_MONOFBF_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(MONOFBF_BUILDING)
#define MFB_API __declspec(dllexport)
#else
#define MFB_API __declspec(dllimport)
#endif
#else
#define MFB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mfb_status {
  MFB_OK = 0,
  MFB_ERR_INVALID_ARGUMENT = 1,
  MFB_ERR_CONFIG = 2,
  MFB_ERR_DIMENSION = 3,
  MFB_ERR_IO = 4,
  MFB_ERR_NUMERICAL = 5,
  MFB_ERR_STEP_SEARCH = 6,
  MFB_ERR_INTERNAL = 7
} mfb_status;

/* Message of the last failed call on this thread; "" if none. */
MFB_API const char* mfb_last_error(void);
MFB_API const char* mfb_status_name(mfb_status status);
MFB_API const char* mfb_version(void);

/* Dense float64 tensor, row-major. */
typedef struct mfb_tensor mfb_tensor;

/* data may be NULL for a zero tensor; otherwise it holds prod(shape) values. */
MFB_API mfb_status mfb_tensor_create(const size_t* shape, size_t ndim, const double* data, mfb_tensor** out);
MFB_API void mfb_tensor_destroy(mfb_tensor* tensor);
/* Writes up to capacity dimensions into shape; *ndim receives the rank. */
MFB_API mfb_status mfb_tensor_shape(const mfb_tensor* tensor, size_t* shape, size_t capacity, size_t* ndim);
/* Borrowed pointer, valid until the tensor is destroyed. */
MFB_API mfb_status mfb_tensor_data(const mfb_tensor* tensor, const double** data, size_t* size);
/* PGM (P5) or F32T, detected from the file contents. */
MFB_API mfb_status mfb_tensor_load(const char* path, mfb_tensor** out);
/* Format from the extension: .pgm (2-D, clamped to [0,1]) or .f32t. */
MFB_API mfb_status mfb_tensor_save(const mfb_tensor* tensor, const char* path);

/* A trained checkpoint. */
typedef struct mfb_model mfb_model;

MFB_API mfb_status mfb_model_load(const char* path, mfb_model** out);
MFB_API void mfb_model_destroy(mfb_model* model);
/* Variant name: "mon", "nom", "lsq_mon" or "linear". Borrowed. */
MFB_API const char* mfb_model_variant(const mfb_model* model);
/* F_theta(x) for a 2-D x. */
MFB_API mfb_status mfb_model_apply(const mfb_model* model, const mfb_tensor* x, mfb_tensor** out);
/* lambda_min of the symmetric Jacobian of the audited operator at x
   (two-stage power iteration with n_iter steps per stage). */
MFB_API mfb_status mfb_model_lambda_min(const mfb_model* model, const mfb_tensor* x, size_t n_iter, uint64_t seed,
                                        double* lambda_min);

typedef struct mfb_metrics {
  double psnr; /* +inf for identical images */
  double ssim;
  double mae;
} mfb_metrics;

MFB_API mfb_status mfb_compute_metrics(const mfb_tensor* x, const mfb_tensor* ref, mfb_metrics* out);

/* JSON command interface. request_json is a JSON object; on success
   *summary_json receives a JSON object to be released with mfb_string_free.
   Commands: synth, simulate, train, audit, restore, invert, metrics. */
MFB_API mfb_status mfb_run(const char* command, const char* request_json, char** summary_json);
MFB_API mfb_status mfb_simulate(const char* request_json, char** summary_json);
MFB_API mfb_status mfb_train(const char* request_json, char** summary_json);
MFB_API mfb_status mfb_audit(const char* request_json, char** summary_json);
MFB_API mfb_status mfb_restore(const char* request_json, char** summary_json);
MFB_API mfb_status mfb_invert(const char* request_json, char** summary_json);
MFB_API void mfb_string_free(char* str);

#ifdef __cplusplus
}
#endif

#endif
