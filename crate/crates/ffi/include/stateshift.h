#ifndef STATESHIFT_H
#define STATESHIFT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum SsStatus {
  SS_STATUS_OK = 0,
  SS_STATUS_NULL_ARGUMENT = 1,
  SS_STATUS_INVALID_UTF8 = 2,
  SS_STATUS_MALFORMED = 3,
  SS_STATUS_UNKNOWN_ATTRIBUTE = 4,
  SS_STATUS_INVALID = 5,
  SS_STATUS_CONFLICTING_VERDICT = 6,
  SS_STATUS_IO = 7,
  SS_STATUS_OUT_OF_RANGE = 8,
  SS_STATUS_INTERNAL = 9,
} SsStatus;

// Loaded instances plus the vocabulary they were checked against.
typedef struct SsDataset SsDataset;

// Attribute vocabulary handle.
typedef struct SsVocabulary SsVocabulary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null after a
// success. Valid until the next call into the library on this thread.
const char *ss_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be freed twice.
void ss_string_free(char *s);

// Built-in vocabulary: `"openpi"` or `"piglet"`.
//
// # Safety
// `name` must be a valid C string; `out` a writable pointer.
enum SsStatus ss_vocabulary_builtin(const char *name, struct SsVocabulary **out);

// Vocabulary from an `attribute<TAB>domain` table and optional merge table
// (`raw<TAB>canonical`, may be null).
//
// # Safety
// String arguments must be valid C strings or null where allowed.
enum SsStatus ss_vocabulary_from_tables(const char *table,
                                        const char *merge,
                                        struct SsVocabulary **out);

// # Safety
// `v` must come from this library and not be freed twice.
void ss_vocabulary_free(struct SsVocabulary *v);

// Number of canonical attributes; 0 for null.
//
// # Safety
// `v` must be null or a live handle.
size_t ss_vocabulary_len(const struct SsVocabulary *v);

// Canonical name for a raw surface form.
//
// # Safety
// `v` must be a live handle, `raw` a valid C string, `out` writable.
enum SsStatus ss_vocabulary_canonicalize(const struct SsVocabulary *v, const char *raw, char **out);

// Loads a dataset file in `format` (`canonical_jsonl`, `openpi_raw`,
// `piglet_raw`). The vocabulary handle is copied, not consumed.
//
// # Safety
// Pointers must be valid; `out` writable.
enum SsStatus ss_dataset_load(const char *path,
                              const char *format,
                              const struct SsVocabulary *v,
                              bool lenient,
                              struct SsDataset **out);

// Like [`ss_dataset_load`] but from in-memory text.
//
// # Safety
// Pointers must be valid; `out` writable.
enum SsStatus ss_dataset_parse(const char *data,
                               const char *format,
                               const struct SsVocabulary *v,
                               bool lenient,
                               struct SsDataset **out);

// # Safety
// `d` must come from this library and not be freed twice.
void ss_dataset_free(struct SsDataset *d);

// Number of instances; 0 for null.
//
// # Safety
// `d` must be null or a live handle.
size_t ss_dataset_len(const struct SsDataset *d);

// Renders a prompt for instance `index`. `strategy` is `zero`, `single`
// or `multi`; `attributes` is a comma-separated list (ignored for `zero`,
// exactly one name for `single`). Writes the request as JSON.
//
// # Safety
// Pointers must be valid; `attributes` may be null for `zero`.
enum SsStatus ss_render(const struct SsDataset *d,
                        size_t index,
                        const char *strategy,
                        const char *attributes,
                        char **out_json);

// Parses model output against a request (JSON as produced by
// [`ss_render`]). Writes the parsed output as JSON.
//
// # Safety
// Pointers must be valid.
enum SsStatus ss_parse_output(const struct SsVocabulary *v,
                              const char *request_json,
                              const char *output,
                              bool lenient,
                              char **out_json);

// Seeded partition of the vocabulary's attributes for one instance.
// Writes the plan as JSON.
//
// # Safety
// Pointers must be valid.
enum SsStatus ss_partition(const struct SsVocabulary *v,
                           const char *instance_id,
                           uint64_t seed,
                           char **out_json);

// Micro precision/recall/F1 of prediction records (JSON lines) against
// the dataset's gold labels. Writes `{tp, fp, fn, precision, recall, f1}`.
//
// # Safety
// Pointers must be valid.
enum SsStatus ss_micro_score(const struct SsDataset *d, const char *records_jsonl, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STATESHIFT_H */
