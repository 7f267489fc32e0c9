#ifndef CROWDTAG_H
#define CROWDTAG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum CrowdtagStatus {
  CROWDTAG_STATUS_OK = 0,
  CROWDTAG_STATUS_NULL_ARGUMENT = 1,
  CROWDTAG_STATUS_INVALID_UTF8 = 2,
  CROWDTAG_STATUS_IO = 3,
  CROWDTAG_STATUS_DATA = 4,
  CROWDTAG_STATUS_MODEL = 5,
  CROWDTAG_STATUS_UNKNOWN_ANNOTATOR = 6,
  CROWDTAG_STATUS_CONFIG = 7,
  CROWDTAG_STATUS_PANIC = 8,
} CrowdtagStatus;

/**
 * One loaded corpus split.
 */
typedef struct CrowdtagCorpus CrowdtagCorpus;

/**
 * A loaded checkpoint.
 */
typedef struct CrowdtagModel CrowdtagModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on this thread.
 */
const char *crowdtag_last_error(void);

/**
 * Library version as a static string.
 */
const char *crowdtag_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void crowdtag_string_free(char *s);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a writable pointer.
 */
enum CrowdtagStatus crowdtag_model_load(const char *path, struct CrowdtagModel **out);

/**
 * # Safety
 * `model` must come from [`crowdtag_model_load`] and not have been freed.
 */
void crowdtag_model_free(struct CrowdtagModel *model);

/**
 * Number of annotators the model knows, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t crowdtag_model_annotator_count(const struct CrowdtagModel *model);

/**
 * Tags a whitespace-tokenized sentence. `annotator` selects an annotator
 * embedding; null means the expert centroid. `out_json` receives a JSON
 * array of `{"start", "end", "polarity"}` spans, end exclusive.
 *
 * # Safety
 * Pointers must be valid; `annotator` may be null.
 */
enum CrowdtagStatus crowdtag_model_predict(const struct CrowdtagModel *model,
                                           const char *sentence,
                                           const char *annotator,
                                           char **out_json);

/**
 * Loads `<dir>/<split>.jsonl`, with the directory's annotator registry
 * when present.
 *
 * # Safety
 * `dir` and `split` must be nul-terminated strings, `out` writable.
 */
enum CrowdtagStatus crowdtag_corpus_load(const char *dir,
                                         const char *split,
                                         struct CrowdtagCorpus **out);

/**
 * # Safety
 * `corpus` must come from [`crowdtag_corpus_load`] and not have been freed.
 */
void crowdtag_corpus_free(struct CrowdtagCorpus *corpus);

/**
 * Number of sentences, or 0 for a null handle.
 *
 * # Safety
 * `corpus` must be null or a live handle.
 */
size_t crowdtag_corpus_len(const struct CrowdtagCorpus *corpus);

/**
 * Scores the model on a corpus and writes the report as JSON.
 *
 * A null `annotator` evaluates the expert centroid against gold. With an
 * annotator id the predictions are scored against gold when
 * `against_gold` is set and against that annotator's own labels
 * otherwise.
 *
 * # Safety
 * Pointers must be valid; `annotator` may be null.
 */
enum CrowdtagStatus crowdtag_evaluate(const struct CrowdtagModel *model,
                                      const struct CrowdtagCorpus *corpus,
                                      const char *annotator,
                                      bool against_gold,
                                      char **out_json);

/**
 * Writes a simulated corpus to `out_dir`, as the `simulate` command does.
 * A null `config_path` uses the default noisy benchmark.
 *
 * # Safety
 * `out_dir` must be a nul-terminated string; `config_path` may be null.
 */
enum CrowdtagStatus crowdtag_simulate(const char *config_path, uint64_t seed, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CROWDTAG_H */
