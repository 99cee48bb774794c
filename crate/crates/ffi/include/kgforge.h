#ifndef KGFORGE_H
#define KGFORGE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum KgfStatus {
  KGF_STATUS_OK = 0,
  KGF_STATUS_NULL_ARGUMENT = 1,
  KGF_STATUS_INVALID_UTF8 = 2,
  KGF_STATUS_IO = 3,
  KGF_STATUS_PARSE = 4,
  KGF_STATUS_INVALID_ARGUMENT = 5,
  KGF_STATUS_CONFIG = 6,
  KGF_STATUS_NO_CONTEXT = 7,
  KGF_STATUS_LLM = 8,
  KGF_STATUS_EVALUATION = 9,
  KGF_STATUS_INTERNAL = 10,
} KgfStatus;

/**
 * Tail classification returned by [`kgf_heuristic_classify`].
 */
typedef enum KgfLabel {
  KGF_LABEL_GROWING = 0,
  KGF_LABEL_PRUNED = 1,
} KgfLabel;

/**
 * Opaque corpus handle.
 */
typedef struct KgfCorpus KgfCorpus;

/**
 * Opaque graph handle (a build result or a loaded snapshot).
 */
typedef struct KgfGraph KgfGraph;

/**
 * Opaque open-KG handle.
 */
typedef struct KgfOpenKg KgfOpenKg;

/**
 * Agreement of judge A against reference judge B.
 */
typedef struct KgfAgreement {
  double precision;
  double recall;
  double f1;
  double kappa;
} KgfAgreement;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *kgf_version(void);

/**
 * Copy of the last error message on this thread, or NULL if the last call
 * succeeded. Release with [`kgf_string_free`].
 */
char *kgf_last_error_message(void);

/**
 * Release a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and must not be used afterwards.
 */
void kgf_string_free(char *s);

/**
 * Load a tab-separated open KG file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum KgfStatus kgf_openkg_load(const char *path, struct KgfOpenKg **out);

/**
 * # Safety
 * `kg` must come from [`kgf_openkg_load`] and not be used afterwards.
 */
void kgf_openkg_free(struct KgfOpenKg *kg);

/**
 * Number of records; 0 for NULL.
 *
 * # Safety
 * `kg` must be NULL or a live handle.
 */
uintptr_t kgf_openkg_len(const struct KgfOpenKg *kg);

/**
 * Up to ten example triples for `entity`, one `(h | r | t)` per line.
 *
 * # Safety
 * Pointers must be valid; `out` must be writable.
 */
enum KgfStatus kgf_openkg_examples(const struct KgfOpenKg *kg,
                                   const char *entity_name,
                                   uint64_t seed,
                                   char **out);

/**
 * Load and segment a corpus file (plain text or `.jsonl`).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum KgfStatus kgf_corpus_load(const char *path, struct KgfCorpus **out);

/**
 * # Safety
 * `corpus` must come from [`kgf_corpus_load`] and not be used afterwards.
 */
void kgf_corpus_free(struct KgfCorpus *corpus);

/**
 * Number of sentences; 0 for NULL.
 *
 * # Safety
 * `corpus` must be NULL or a live handle.
 */
uintptr_t kgf_corpus_len(const struct KgfCorpus *corpus);

/**
 * Frequency-ranked context for `entity`, at most `max_tokens` tokens.
 * Returns `NoContext` when the corpus never mentions it.
 *
 * # Safety
 * Pointers must be valid; `out` must be writable.
 */
enum KgfStatus kgf_corpus_retrieve(const struct KgfCorpus *corpus,
                                   const char *entity_name,
                                   uintptr_t max_tokens,
                                   char **out);

/**
 * Run a build from a TOML config file. `roots` is a comma-separated list,
 * or NULL to use the config's roots (or a seeded sample of the open KG).
 *
 * # Safety
 * `config_path` must be a NUL-terminated string, `roots` NULL or one;
 * `out` must be writable.
 */
enum KgfStatus kgf_build_from_config(const char *config_path,
                                     const char *roots,
                                     struct KgfGraph **out);

/**
 * Load a line-delimited snapshot.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum KgfStatus kgf_snapshot_load(const char *path, struct KgfGraph **out);

/**
 * # Safety
 * `graph` must come from this library and not be used afterwards.
 */
void kgf_graph_free(struct KgfGraph *graph);

/**
 * Number of triples; 0 for NULL.
 *
 * # Safety
 * `graph` must be NULL or a live handle.
 */
uintptr_t kgf_graph_triple_count(const struct KgfGraph *graph);

/**
 * Number of entities; 0 for NULL.
 *
 * # Safety
 * `graph` must be NULL or a live handle.
 */
uintptr_t kgf_graph_node_count(const struct KgfGraph *graph);

/**
 * Render the graph as `snapshot`, `dot`, `graphml` or `tsv`.
 *
 * # Safety
 * Pointers must be valid; `out` must be writable.
 */
enum KgfStatus kgf_graph_export(const struct KgfGraph *graph, const char *format, char **out);

/**
 * Classify a tail entity with the default heuristic pruner.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum KgfStatus kgf_heuristic_classify(const char *text, enum KgfLabel *out);

/**
 * Mean of `len` per-text triple counts.
 *
 * # Safety
 * `counts` must point to `len` readable values; `out` must be writable.
 */
enum KgfStatus kgf_number_of_recalls(const uintptr_t *counts, uintptr_t len, double *out);

/**
 * Precision, recall, F1 and Cohen's kappa from a 2x2 table (B is the
 * reference).
 *
 * # Safety
 * `out` must be writable.
 */
enum KgfStatus kgf_agreement_from_table(uint64_t both,
                                        uint64_t a_only,
                                        uint64_t b_only,
                                        uint64_t neither,
                                        struct KgfAgreement *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KGFORGE_H */
