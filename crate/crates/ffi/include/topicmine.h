#ifndef TOPICMINE_H
#define TOPICMINE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum TmStatus {
  TM_STATUS_OK = 0,
  TM_STATUS_NULL_ARGUMENT = 1,
  TM_STATUS_INVALID_UTF8 = 2,
  TM_STATUS_IO = 3,
  TM_STATUS_MALFORMED = 4,
  TM_STATUS_INVALID_PARAMETER = 5,
  TM_STATUS_EMPTY_CORPUS = 6,
  TM_STATUS_FINGERPRINT_MISMATCH = 7,
  TM_STATUS_OUT_OF_RANGE = 8,
  TM_STATUS_BUFFER_TOO_SMALL = 9,
  TM_STATUS_OTHER = 10,
  TM_STATUS_PANIC = 11,
} TmStatus;

// A loaded document set.
typedef struct TmCorpus TmCorpus;

// A trained topic model.
typedef struct TmModel TmModel;

// A vocabulary together with the corpus encoded against it.
typedef struct TmPrepared TmPrepared;

// A ranked topic report.
typedef struct TmReport TmReport;

// Sampler settings passed by value.
typedef struct TmHyperparams {
  size_t k;
  double alpha_sum;
  double beta;
  size_t iterations;
  uint64_t seed;
} TmHyperparams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Last error message on this thread, or null if none. The pointer stays
// valid until the next failing call on the same thread.
const char *tm_last_error_message(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must be null or a string returned by this library and not yet freed.
void tm_string_free(char *s);

// Default sampler settings with `k` topics.
struct TmHyperparams tm_hyperparams_default(size_t k);

// Loads a corpus. `format` is `"csv"`, `"jsonl"`, `"txt-dir"`, or null to
// infer it from the path.
//
// # Safety
// `path` and `format` must be null or NUL-terminated strings; `out` must be
// null or point to writable storage for one pointer.
enum TmStatus tm_corpus_load(const char *path, const char *format, struct TmCorpus **out);

// Number of documents in a corpus, or 0 for null.
//
// # Safety
// `corpus` must be null or a live handle.
size_t tm_corpus_len(const struct TmCorpus *corpus);

// New corpus holding the documents that carry `tag`, in original order.
//
// # Safety
// `corpus` must be a live handle, `tag` a NUL-terminated string and `out`
// writable storage for one pointer.
enum TmStatus tm_corpus_filter(const struct TmCorpus *corpus,
                               const char *tag,
                               struct TmCorpus **out);

// # Safety
// `corpus` must be null or a live handle; it is invalid afterwards.
void tm_corpus_free(struct TmCorpus *corpus);

// Tokenizes the corpus with the default stoplist and `min_token_len`,
// builds the vocabulary and encodes every document.
//
// # Safety
// `corpus` must be a live handle and `out` writable storage for one pointer.
enum TmStatus tm_prepare(const struct TmCorpus *corpus,
                         size_t min_token_len,
                         struct TmPrepared **out);

// Encodes another corpus against an existing vocabulary, for held-out
// scoring. Tokens missing from the vocabulary are an error.
//
// # Safety
// `prepared` and `corpus` must be live handles and `out` writable storage
// for one pointer.
enum TmStatus tm_prepare_with_vocabulary(const struct TmPrepared *prepared,
                                         const struct TmCorpus *corpus,
                                         size_t min_token_len,
                                         struct TmPrepared **out);

// Vocabulary size, or 0 for null.
//
// # Safety
// `prepared` must be null or a live handle.
size_t tm_prepared_vocab_size(const struct TmPrepared *prepared);

// Total token count, or 0 for null.
//
// # Safety
// `prepared` must be null or a live handle.
size_t tm_prepared_num_tokens(const struct TmPrepared *prepared);

// Copies word `index` of the vocabulary into a new caller-owned string.
//
// # Safety
// `prepared` must be a live handle and `out` writable storage for one
// pointer.
enum TmStatus tm_prepared_word(const struct TmPrepared *prepared, size_t index, char **out);

// # Safety
// `prepared` must be null or a live handle; it is invalid afterwards.
void tm_prepared_free(struct TmPrepared *prepared);

// Trains a model on a prepared corpus.
//
// # Safety
// `prepared` must be a live handle and `out` writable storage for one
// pointer.
enum TmStatus tm_train(const struct TmPrepared *prepared,
                       struct TmHyperparams hyper,
                       struct TmModel **out);

// # Safety
// `model` must be null or a live handle.
size_t tm_model_num_topics(const struct TmModel *model);

// # Safety
// `model` must be null or a live handle.
size_t tm_model_vocab_size(const struct TmModel *model);

// # Safety
// `model` must be null or a live handle.
size_t tm_model_num_docs(const struct TmModel *model);

// Copies phi (topics × vocabulary, row-major) into `buf`.
//
// # Safety
// `model` must be a live handle and `buf` must point to `len` writable
// doubles.
enum TmStatus tm_model_copy_phi(const struct TmModel *model, double *buf, size_t len);

// Copies theta (documents × topics, row-major) into `buf`.
//
// # Safety
// `model` must be a live handle and `buf` must point to `len` writable
// doubles.
enum TmStatus tm_model_copy_theta(const struct TmModel *model, double *buf, size_t len);

// Serializes the model to a new caller-owned JSON string.
//
// # Safety
// `model` must be a live handle and `out` writable storage for one pointer.
enum TmStatus tm_model_to_json(const struct TmModel *model, char **out);

// Parses a model serialized by [`tm_model_to_json`].
//
// # Safety
// `json` must be a NUL-terminated string and `out` writable storage for one
// pointer.
enum TmStatus tm_model_from_json(const char *json, struct TmModel **out);

// Held-out log-likelihood of `test` under `model` by document completion.
//
// # Safety
// `model` and `test` must be live handles; `out_total` and `out_per_word`
// must point to writable doubles.
enum TmStatus tm_model_heldout(const struct TmModel *model,
                               const struct TmPrepared *test,
                               size_t sweeps,
                               size_t burn,
                               uint64_t seed,
                               double *out_total,
                               double *out_per_word);

// # Safety
// `model` must be null or a live handle; it is invalid afterwards.
void tm_model_free(struct TmModel *model);

// Ranks topics by weight and collects top words and documents.
//
// # Safety
// `model` and `prepared` must be live handles and `out` writable storage for
// one pointer.
enum TmStatus tm_report_build(const struct TmModel *model,
                              const struct TmPrepared *prepared,
                              size_t top_words,
                              size_t top_docs,
                              struct TmReport **out);

// # Safety
// `report` must be null or a live handle.
size_t tm_report_num_topics(const struct TmReport *report);

// Topic index and weight at 1-based `rank`.
//
// # Safety
// `report` must be a live handle; `out_topic` and `out_weight` must point to
// writable storage.
enum TmStatus tm_report_at_rank(const struct TmReport *report,
                                size_t rank,
                                size_t *out_topic,
                                double *out_weight);

// Serializes the report to a new caller-owned JSON string.
//
// # Safety
// `report` must be a live handle and `out` writable storage for one pointer.
enum TmStatus tm_report_to_json(const struct TmReport *report, char **out);

// # Safety
// `report` must be null or a live handle; it is invalid afterwards.
void tm_report_free(struct TmReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TOPICMINE_H */
