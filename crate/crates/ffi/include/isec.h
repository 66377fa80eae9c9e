#ifndef ISEC_H
#define ISEC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes.
 */
typedef enum IsecStatus {
  ISEC_STATUS_OK = 0,
  ISEC_STATUS_NULL_POINTER = 1,
  ISEC_STATUS_INVALID_UTF8 = 2,
  ISEC_STATUS_INVALID_ARGUMENT = 3,
  ISEC_STATUS_IO = 4,
  ISEC_STATUS_PARSE = 5,
  ISEC_STATUS_DOMAIN = 6,
  ISEC_STATUS_OUT_OF_RANGE = 7,
  ISEC_STATUS_PANIC = 8,
} IsecStatus;

typedef enum IsecIndexMode {
  ISEC_INDEX_MODE_HNSW = 0,
  ISEC_INDEX_MODE_EXACT = 1,
} IsecIndexMode;

/*
 Cost model handle.
 */
typedef struct IsecConfig IsecConfig;

/*
 Ranked pair list handle.
 */
typedef struct IsecRanking IsecRanking;

/*
 Summary of a minimal weighted edit path.
 */
typedef struct IsecAlignment {
  double total_cost;
  size_t n_ops;
  double cm;
  double cp;
  /*
   `cm + k * cp`; 0 when the labels are identical.
   */
  double cmp;
  size_t insertions;
  size_t deletions;
  size_t substitutions;
  size_t transpositions;
} IsecAlignment;

typedef struct IsecRankParams {
  /*
   Neighbours per label; clamped to n - 1.
   */
  size_t top_k;
  enum IsecIndexMode mode;
  uint64_t seed;
  size_t ef_search;
} IsecRankParams;

/*
 One ranked pair. Label pointers stay valid while the ranking lives.
 */
typedef struct IsecPairView {
  size_t rank;
  size_t i;
  size_t j;
  const char *label_i;
  const char *label_j;
  double isec;
  double fmn;
  double dsn;
  double cm;
  double cp;
  double cmp;
} IsecPairView;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or NULL. Valid until the
 next call into this library on the same thread.
 */
const char *isec_last_error_message(void);

/*
 Static version string.
 */
const char *isec_version(void);

void isec_string_free(char *s);

/*
 Default configuration: unit costs, k = 0, alpha = 0.5.
 */
enum IsecStatus isec_config_new(struct IsecConfig **out);

/*
 Parses a cost-override JSON document.
 */
enum IsecStatus isec_config_from_json(const char *json, struct IsecConfig **out);

enum IsecStatus isec_config_load(const char *path, struct IsecConfig **out);

/*
 Canonical JSON form of the configuration; free with `isec_string_free`.
 */
enum IsecStatus isec_config_to_json(const struct IsecConfig *cfg, char **out);

enum IsecStatus isec_config_set_alpha(struct IsecConfig *cfg, double alpha);

enum IsecStatus isec_config_set_k(struct IsecConfig *cfg, double k);

/*
 Substitution override; characters are Unicode scalar values.
 */
enum IsecStatus isec_config_set_substitution(struct IsecConfig *cfg,
                                             uint32_t from,
                                             uint32_t to,
                                             double cost);

enum IsecStatus isec_config_set_insertion(struct IsecConfig *cfg, uint32_t c, double cost);

enum IsecStatus isec_config_set_deletion(struct IsecConfig *cfg, uint32_t c, double cost);

enum IsecStatus isec_config_set_transposition(struct IsecConfig *cfg,
                                              uint32_t a,
                                              uint32_t b,
                                              double cost);

void isec_config_free(struct IsecConfig *cfg);

/*
 Minimal weighted edit path from `a` to `b`.
 */
enum IsecStatus isec_align(const struct IsecConfig *cfg,
                           const char *a,
                           const char *b,
                           struct IsecAlignment *out);

/*
 Edit path with its operation list as JSON; free with `isec_string_free`.
 */
enum IsecStatus isec_align_json(const struct IsecConfig *cfg,
                                const char *a,
                                const char *b,
                                char **out);

/*
 `log10((f_i + f_j) / 2)`; both counts must be >= 1.
 */
enum IsecStatus isec_fmn(uint64_t f_i, uint64_t f_j, double *out);

/*
 `(1 + fmn) / (dsn^alpha * cmp^(1 - alpha))`.
 */
enum IsecStatus isec_pair_score(double fmn, double dsn, double cmp, double alpha, double *out);

struct IsecRankParams isec_rank_params_default(void);

/*
 Ranks `n` labels. `freqs` may be NULL (every label counts once) and
 `params` may be NULL (defaults). Labels are deduplicated by exact match
 with frequencies summed.
 */
enum IsecStatus isec_rank_labels(const struct IsecConfig *cfg,
                                 const char *const *labels,
                                 const uint64_t *freqs,
                                 size_t n,
                                 const struct IsecRankParams *params,
                                 struct IsecRanking **out);

/*
 Number of ranked pairs; 0 for NULL.
 */
size_t isec_ranking_len(const struct IsecRanking *r);

/*
 Pair at 0-based position `idx` (rank `idx + 1`).
 */
enum IsecStatus isec_ranking_get(const struct IsecRanking *r, size_t idx, struct IsecPairView *out);

/*
 Ranking document as JSON, limited to `top_m` pairs (0 keeps all); free
 with `isec_string_free`.
 */
enum IsecStatus isec_ranking_to_json(const struct IsecRanking *r, size_t top_m, char **out);

void isec_ranking_free(struct IsecRanking *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ISEC_H */
