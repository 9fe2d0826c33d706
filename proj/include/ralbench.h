/*
 * ralbench C API: a shared-library surface over the retrieval-augmented
 * LM robustness harness. Objects are opaque handles; every function returns
 * a status code and leaves a human-readable message in rb_last_error() on
 * failure. Strings returned through out-parameters are heap-allocated by the
 * library and must be released with rb_string_free().
 */
#ifndef RALBENCH_H
#define RALBENCH_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RB_API __declspec(dllexport)
#else
#define RB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rb_status {
    RB_OK = 0,
    RB_ERROR_INVALID_ARGUMENT = 1,
    RB_ERROR_IO = 2,
    RB_ERROR_PARSE = 3,
    RB_ERROR_PRECONDITION = 4,
    RB_ERROR_BACKEND = 5,
    RB_ERROR_INTERNAL = 6
} rb_status;

typedef struct rb_corpus rb_corpus;
typedef struct rb_retriever rb_retriever;

RB_API const char* rb_version(void);

/* Thread-local message describing the most recent failure on this thread. */
RB_API const char* rb_last_error(void);

RB_API void rb_string_free(char* s);

/* ----------------------------------------------------------------- corpus */

/* task: "triple_extraction" | "link_prediction" | "text_classification" |
 *       "question_answering" | "nl_inference" */
RB_API rb_status rb_corpus_open(const char* path, const char* task, rb_corpus** out);
RB_API rb_status rb_corpus_save(const rb_corpus* corpus, const char* path);
RB_API void rb_corpus_close(rb_corpus* corpus);

RB_API int64_t rb_corpus_count(const rb_corpus* corpus);
/* e.g. "labeled", "unlabeled", "counterfactual:0.8", "diverse", "none" */
RB_API rb_status rb_corpus_kind(const rb_corpus* corpus, char** out_kind);

RB_API rb_status rb_corpus_strip_labels(const rb_corpus* corpus, rb_corpus** out);

/* out_manifest_jsonl receives the {"id","original_value","corrupted_value"}
 * sidecar lines. negative_awareness != 0 forces rate 1.0 and flags the
 * corpus for testbed-4 runs. */
RB_API rb_status rb_corpus_corrupt(const rb_corpus* corpus, double rate, uint64_t seed,
                                   int negative_awareness, rb_corpus** out,
                                   char** out_manifest_jsonl);

RB_API rb_status rb_corpus_merge_diverse(const rb_corpus* target,
                                         const rb_corpus* const* others, size_t n_others,
                                         rb_corpus** out);

/* -------------------------------------------------------------- retrieval */

/* config_json: {"kind": "bm25"} |
 *   {"kind": "dense", "provider": "fixture:32", "similarity": "cosine"} |
 *   {"kind": "selector", "provider": "fixture:32", "model": "model.json"} |
 *   {"kind": "none"}
 * Provider shorthands: "fixture:DIM", "file:PATH", "http:ENDPOINT|MODEL|DIM". */
RB_API rb_status rb_retriever_open(const rb_corpus* corpus, const char* config_json,
                                   rb_retriever** out);
RB_API void rb_retriever_close(rb_retriever* retriever);

/* out_hits_json: [{"id": ..., "score": ..., "rank": ...}, ...] */
RB_API rb_status rb_retriever_query(rb_retriever* retriever, const char* query_text, int32_t k,
                                    char** out_hits_json);

/* ------------------------------------------------------- prompts, answers */

RB_API rb_status rb_default_instruction(const char* task, char** out_text);

/* label_space_json: JSON array of label strings, or NULL.
 * out_answer_json: {"kind": "none"|"label"|"option"|"triple", "text": ...} */
RB_API rb_status rb_parse_answer(const char* task, const char* raw,
                                 const char* label_space_json, char** out_answer_json);

/* ------------------------------------------------------------ experiments */

/* config_json follows the documented run-config schema. Runs every planned
 * cell (optionally resuming) and returns the manifest JSON. */
RB_API rb_status rb_run_matrix(const char* config_json, int resume, char** out_manifest_json);

/* Recomputes metrics for a records file.
 * options_json: {"task": ..., "label_space": [...]?} */
RB_API rb_status rb_score_records(const char* records_path, const char* options_json,
                                  char** out_metrics_json);

/* config_json: {"task":..., "in":..., "out":..., "judge": BACKEND}
 * BACKEND: "mock-echo" | "mock-fixed:TEXT" | "http:ENDPOINT|MODEL" or an
 * object with the run-config backend fields. */
RB_API rb_status rb_correct_corpus(const char* config_json, char** out_summary_json);

/* config_json: {"task":..., "corpus":..., "provider":..., "out":...,
 *               "learning_rate"?, "epochs"?, "batch_size"?,
 *               "negatives_per_anchor"?, "margin"?, "seed"?} */
RB_API rb_status rb_train_selector(const char* config_json, char** out_summary_json);

/* Regenerates report.md / report.csv for a finished run directory; the
 * config is read from <run_dir>/config.json. */
RB_API rb_status rb_write_report(const char* run_dir, char** out_paths_json);

#ifdef __cplusplus
}
#endif

#endif /* RALBENCH_H */
