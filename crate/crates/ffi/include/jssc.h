#ifndef JSSC_H
#define JSSC_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Payload bytes per RS(255,152) codeword.
 */
#define JSSC_RS_K 152

/**
 * Bytes per RS(255,152) codeword.
 */
#define JSSC_RS_N 255

/**
 * Result of every fallible call.
 */
typedef enum JsscStatus {
  JSSC_STATUS_OK = 0,
  JSSC_STATUS_NULL_POINTER = 1,
  JSSC_STATUS_INVALID_ARGUMENT = 2,
  JSSC_STATUS_CONFIG = 3,
  JSSC_STATUS_IO = 4,
  JSSC_STATUS_DATA = 5,
  JSSC_STATUS_CONTRACT = 6,
  JSSC_STATUS_COMPRESSION = 7,
  JSSC_STATUS_DIVERGENCE = 8,
  /**
   * The Reed-Solomon decoder found more errors than it can correct.
   */
  JSSC_STATUS_DECODE_FAILURE = 9,
  JSSC_STATUS_BUFFER_TOO_SMALL = 10,
  JSSC_STATUS_PANIC = 11,
} JsscStatus;

/**
 * Experiment configuration.
 */
typedef struct JsscConfig JsscConfig;

/**
 * Loaded training and test images.
 */
typedef struct JsscDataset JsscDataset;

/**
 * Trained model with the configuration it was trained under.
 */
typedef struct JsscModel JsscModel;

/**
 * Test metrics. `semantic_accuracy` is NaN when the model has no semantic task.
 */
typedef struct JsscMetrics {
  double psnr_db;
  double ssim;
  double sensing_accuracy;
  double semantic_accuracy;
  size_t samples;
} JsscMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *jssc_version(void);

/**
 * Copies the calling thread's last error message into `buf`.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes (or be null with `cap == 0`);
 * `needed` may be null.
 */
enum JsscStatus jssc_last_error(char *buf, size_t cap, size_t *needed);

/**
 * Default configuration.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum JsscStatus jssc_config_new(struct JsscConfig **out);

/**
 * Configuration read from a JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid handle slot.
 */
enum JsscStatus jssc_config_from_file(const char *path, struct JsscConfig **out);

/**
 * Sets a key by dotted path (`channel.comm_snr_db`, `"5"`); the value is
 * parsed as JSON when possible, otherwise taken as a string.
 *
 * # Safety
 * `config` must be a live handle; `key` and `value` NUL-terminated strings.
 */
enum JsscStatus jssc_config_set(struct JsscConfig *config, const char *key, const char *value);

/**
 * Writes the configuration as pretty JSON.
 *
 * # Safety
 * `config` must be a live handle; `buf` must hold `cap` bytes; `needed` may be null.
 */
enum JsscStatus jssc_config_to_json(const struct JsscConfig *config,
                                    char *buf,
                                    size_t cap,
                                    size_t *needed);

/**
 * Writes the configuration digest (24 hex characters).
 *
 * # Safety
 * As for [`jssc_config_to_json`].
 */
enum JsscStatus jssc_config_hash(const struct JsscConfig *config,
                                 char *buf,
                                 size_t cap,
                                 size_t *needed);

/**
 * # Safety
 * `config` must be null or a handle not yet freed.
 */
void jssc_config_free(struct JsscConfig *config);

/**
 * Loads the training subset and test subsample named by `config`.
 *
 * # Safety
 * `config` must be a live handle; `out` a valid handle slot.
 */
enum JsscStatus jssc_dataset_load(const struct JsscConfig *config, struct JsscDataset **out);

/**
 * Number of training and test images.
 *
 * # Safety
 * `dataset` must be a live handle; the counters may be null.
 */
enum JsscStatus jssc_dataset_sizes(const struct JsscDataset *dataset, size_t *train, size_t *test);

/**
 * # Safety
 * `dataset` must be null or a handle not yet freed.
 */
void jssc_dataset_free(struct JsscDataset *dataset);

/**
 * Trains a model under `config` on `dataset`.
 *
 * # Safety
 * `config` and `dataset` must be live handles; `out` a valid handle slot.
 */
enum JsscStatus jssc_model_train(const struct JsscConfig *config,
                                 const struct JsscDataset *dataset,
                                 struct JsscModel **out);

/**
 * Loads a checkpoint directory written by `jssc train` or [`jssc_model_save`].
 *
 * # Safety
 * `dir` must be a NUL-terminated string; `out` a valid handle slot.
 */
enum JsscStatus jssc_model_load(const char *dir, struct JsscModel **out);

/**
 * Writes the model and its configuration to `dir`.
 *
 * # Safety
 * `model` must be a live handle; `dir` a NUL-terminated string.
 */
enum JsscStatus jssc_model_save(const struct JsscModel *model, const char *dir);

/**
 * Scores the model on the dataset's test images under the channel settings
 * of `config` (pass null to use the training configuration).
 *
 * # Safety
 * `model` and `dataset` must be live handles, `config` a live handle or
 * null, `out` a valid pointer.
 */
enum JsscStatus jssc_model_evaluate(struct JsscModel *model,
                                    const struct JsscConfig *config,
                                    const struct JsscDataset *dataset,
                                    struct JsscMetrics *out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void jssc_model_free(struct JsscModel *model);

/**
 * Systematic RS(255,152) encoding: payload first, parity last.
 *
 * # Safety
 * `payload` must hold 152 bytes and `codeword` 255 writable bytes.
 */
enum JsscStatus jssc_rs_encode(const uint8_t *payload, uint8_t *codeword);

/**
 * Decodes one codeword; returns `JSSC_STATUS_DECODE_FAILURE` beyond the
 * correction radius.
 *
 * # Safety
 * `codeword` must hold 255 bytes, `payload` 152 writable bytes;
 * `corrected` may be null.
 */
enum JsscStatus jssc_rs_decode(const uint8_t *codeword, uint8_t *payload, size_t *corrected);

/**
 * Gray 16-QAM: two symbols per byte, high nibble first, written as
 * interleaved (I, Q) pairs into `iq` (`4 * len` doubles).
 *
 * # Safety
 * `bytes` must hold `len` bytes and `iq` `cap` writable doubles.
 */
enum JsscStatus jssc_qam16_modulate(const uint8_t *bytes, size_t len, double *iq, size_t cap);

/**
 * Hard-decision demodulation of interleaved (I, Q) pairs back to bytes.
 *
 * # Safety
 * `iq` must hold `4 * len` doubles and `bytes` `len` writable bytes.
 */
enum JsscStatus jssc_qam16_demodulate(const double *iq, uint8_t *bytes, size_t len);

/**
 * PSNR in dB of a 32x32x3 prediction against its reference (values in [0, 1]).
 *
 * # Safety
 * Both pointers must hold `len` floats; `len` must be 3072.
 */
enum JsscStatus jssc_psnr(const float *reference, const float *prediction, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JSSC_H */
