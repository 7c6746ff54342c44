/*
 * C interface to the meta clustering learning engine.
 *
 * Objects are opaque handles created and released by the library. Every
 * fallible call returns an mcl_status; on failure mcl_last_error() holds a
 * message for the calling thread until its next failing call. Strings
 * returned as `const char*` are owned by the handle they came from.
 */
#ifndef MCL_MCL_H
#define MCL_MCL_H

#include <stddef.h>
#include <stdint.h>

#if defined(MCL_BUILDING_LIBRARY)
#define MCL_API __attribute__((visibility("default")))
#else
#define MCL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mcl_status {
  MCL_OK = 0,
  MCL_ERR_INVALID_ARGUMENT = 1,
  MCL_ERR_IO = 2,
  MCL_ERR_BAD_MAGIC = 3,
  MCL_ERR_UNSUPPORTED_VERSION = 4,
  MCL_ERR_TRUNCATED = 5,
  MCL_ERR_DIMENSION_MISMATCH = 6,
  MCL_ERR_NO_CLUSTERS = 7,
  MCL_ERR_DEGENERATE_EMBEDDING = 8,
  MCL_ERR_NUMERIC = 9,
  MCL_ERR_STATE = 10,
  MCL_ERR_INTERNAL = 11
} mcl_status;

typedef enum mcl_csv_kind {
  MCL_CSV_METRICS = 0, /* epoch,mAP,rank1,entries,seconds */
  MCL_CSV_COST = 1,    /* per-epoch clustering cost */
  MCL_CSV_COMPARE = 2, /* one row per scheme */
  MCL_CSV_BUDGET = 3   /* memory budget vs mAP */
} mcl_csv_kind;

typedef struct mcl_pool mcl_pool;
typedef struct mcl_model mcl_model;
typedef struct mcl_report mcl_report;

typedef struct mcl_gen_spec {
  uint32_t num_identities;
  uint32_t samples_per_identity;
  uint32_t d_raw;
  double intra_class_sigma;
  uint32_t nuisance_rank;
  double nuisance_sigma;
  uint64_t seed;
} mcl_gen_spec;

MCL_API const char* mcl_version(void);
MCL_API const char* mcl_last_error(void);
MCL_API const char* mcl_status_name(mcl_status status);

/* Pools: synthetic generation and MCLF / CSV files. */
MCL_API void mcl_gen_spec_default(mcl_gen_spec* spec);
MCL_API mcl_status mcl_pool_generate(const mcl_gen_spec* spec, mcl_pool** out);
MCL_API mcl_status mcl_pool_read(const char* path, mcl_pool** out);
MCL_API mcl_status mcl_pool_write(const mcl_pool* pool, const char* path);
MCL_API size_t mcl_pool_size(const mcl_pool* pool);
MCL_API size_t mcl_pool_dim(const mcl_pool* pool);
MCL_API size_t mcl_pool_num_identities(const mcl_pool* pool);
/* Copies row i into out[0..len); len must equal mcl_pool_dim. */
MCL_API mcl_status mcl_pool_row(const mcl_pool* pool, size_t i, float* out, size_t len);
MCL_API void mcl_pool_free(mcl_pool* pool);

/* Configuration: a JSON object whose keys override the defaults. NULL or ""
 * means all defaults. The resolved object is returned in *out_json, to be
 * released with mcl_string_free. */
MCL_API mcl_status mcl_config_resolve(const char* config_json, char** out_json);
MCL_API void mcl_string_free(char* s);

/* Git-style blob SHA-1 ("blob <size>\0" + bytes) of a file's contents as 40
 * lowercase hex digits plus a terminating NUL. */
MCL_API mcl_status mcl_content_hash(const char* path, char out[41]);

/* Training and evaluation. */
MCL_API mcl_status mcl_train(const mcl_pool* pool, const char* config_json, mcl_model** out_model,
                             mcl_report** out_report);
/* Untrained near-identity encoder for pools of dimension d_raw. */
MCL_API mcl_status mcl_model_init(size_t d_raw, const char* config_json, mcl_model** out);
MCL_API mcl_status mcl_model_save(const mcl_model* model, const char* path);
MCL_API mcl_status mcl_model_load(const char* path, mcl_model** out);
MCL_API size_t mcl_model_input_dim(const mcl_model* model);
MCL_API size_t mcl_model_embedding_dim(const mcl_model* model);
MCL_API void mcl_model_free(mcl_model* model);
/* Embeds every row; ground-truth labels are carried over. */
MCL_API mcl_status mcl_model_embed(const mcl_model* model, const mcl_pool* pool, mcl_pool** out);
/* Retrieval metrics on the held-out identities (all identities when
 * holdout_fraction >= 1). */
MCL_API mcl_status mcl_evaluate(const mcl_model* model, const mcl_pool* pool, double holdout_fraction,
                                mcl_report** out);

/* Runs "all" plus mcl and naive at each ratio < 1. */
MCL_API mcl_status mcl_compare(const mcl_pool* pool, const char* config_json, const double* ratios,
                               size_t ratio_count, mcl_report** out);
/* Times one full clustering pass over a random 1/N subset for each ratio. */
MCL_API mcl_status mcl_profile(const mcl_pool* pool, const char* config_json, const double* ratios,
                               size_t ratio_count, size_t repeats, mcl_report** out);

MCL_API const char* mcl_report_json(const mcl_report* report);
/* Empty string when the report has no table of that kind. */
MCL_API const char* mcl_report_csv(const mcl_report* report, mcl_csv_kind kind);
MCL_API void mcl_report_free(mcl_report* report);

#ifdef __cplusplus
}
#endif

#endif /* MCL_MCL_H */
