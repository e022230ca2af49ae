#ifndef LANDCLS_H
#define LANDCLS_H

#include <stddef.h>
#include <stdint.h>

#if defined(LANDCLS_BUILDING_LIBRARY)
#define LC_API __attribute__((visibility("default")))
#else
#define LC_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lc_status {
  LC_OK = 0,
  LC_ERR_VALIDATION = 1, /* bad arguments, shapes, configuration or state */
  LC_ERR_IO = 2,         /* unreadable or unwritable files, malformed containers */
  LC_ERR_NUMERICAL = 3,  /* NaN or Inf during training or inference */
  LC_ERR_INTERNAL = 4
} lc_status;

typedef struct lc_config lc_config;
typedef struct lc_model lc_model;
typedef struct lc_text lc_text;

/* Called once per line of progress output. */
typedef void (*lc_progress_fn)(void* user, const char* line);

LC_API const char* lc_version(void);

/* Message and category of the last failure on the calling thread. The
   category is one of validation, shape, state, io, numerical, internal, or
   format:<kind> for weight containers (bad_magic, unsupported_version,
   checksum_mismatch, truncated, malformed). */
LC_API const char* lc_last_error(void);
LC_API const char* lc_last_error_kind(void);

LC_API const char* lc_text_data(const lc_text* text);
LC_API size_t lc_text_size(const lc_text* text);
LC_API void lc_text_free(lc_text* text);

/* Training configuration; defaults are batch 90, 10 epochs, Adam at lr 0.001,
   split 0.70/0.15/0.15. */
LC_API lc_status lc_config_new(lc_config** out);
LC_API lc_status lc_config_from_json(const char* json, lc_config** out);
LC_API void lc_config_free(lc_config* config);
/* Keys: model, input_size, width, batch_size, epochs, lr, seed_split,
   seed_shuffle, seed_init, seed_dropout, augment, augment_seed,
   augment_rotation, augment_flip, augment_materialize, base_weights, freeze_base, deterministic,
   f64_verify, train_fraction, val_fraction, test_fraction. Booleans accept
   true/false/1/0. */
LC_API lc_status lc_config_set(lc_config* config, const char* key, const char* value);
LC_API lc_status lc_config_to_json(const lc_config* config, lc_text** out);

/* `data` is a dataset directory (<root>/<class>/<image>), a `path,class`
   manifest CSV, or a `path,class,split` file written by lc_split. */

/* Writes split.csv and skipped.csv into out_dir; summary lists counts. */
LC_API lc_status lc_split(const char* data, const lc_config* config, const char* out_dir, lc_text** summary);

/* Trains and writes weights.lwts, classes.txt, split.csv, run.json,
   epochs.csv, confusion.csv and plotdata.csv into out_dir. */
LC_API lc_status lc_train(const char* data, const lc_config* config, const char* out_dir, lc_progress_fn progress,
                          void* user, lc_text** summary);

/* One table per axis; NULL or empty lists fall back to
   batch {90,50,15}, epochs {10,4,2}, lr {0.01,0.001,0.0001}.
   Writes sweep.tsv and sweep.csv into out_dir. */
LC_API lc_status lc_sweep(const char* data, const lc_config* base, const size_t* batch_sizes, size_t n_batch,
                          const size_t* epochs, size_t n_epochs, const double* learning_rates, size_t n_lr,
                          const char* out_dir, lc_progress_fn progress, void* user, lc_text** table);

/* Loads a container. Class names come from `classes_path`, or classes.txt
   beside the weights, or default to class_<i>. */
LC_API lc_status lc_model_load(const char* weights_path, const char* classes_path, lc_model** out);
LC_API void lc_model_free(lc_model* model);
LC_API const char* lc_model_architecture(const lc_model* model);
/* 1 for classifiers (outputs are probabilities), 0 for feature bases. */
LC_API int lc_model_is_classifier(const lc_model* model);
/* Number of values lc_model_predict_image writes. */
LC_API size_t lc_model_output_size(const lc_model* model);
LC_API const char* lc_model_class_name(const lc_model* model, size_t index);
/* Decodes, crops, resizes and normalizes per the container metadata, then
   runs inference. `out` receives lc_model_output_size values. */
LC_API lc_status lc_model_predict_image(const lc_model* model, const char* image_path, float* out, size_t out_len);
/* Metrics on one split ("train", "val" or "test") as JSON. When `data` is not
   a split file, it is split with the config's fractions and split seed. */
LC_API lc_status lc_model_evaluate(const lc_model* model, const char* data, const char* split, const lc_config* config,
                                   lc_text** report);

/* Entry listing with shapes; *total_parameters receives the element count. */
LC_API lc_status lc_inspect_weights(const char* weights_path, lc_text** listing, uint64_t* total_parameters);

#ifdef __cplusplus
}
#endif

#endif
