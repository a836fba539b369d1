/* Copyright (c) 2026 the seqrec authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the seqrec experimentation library. All functions return a
 * seqrec_status; on failure seqrec_last_error() holds a thread-local message
 * describing what went wrong. Strings returned through char** out-parameters
 * are heap-allocated and must be released with seqrec_string_free().
 *
 * JSON option/config payloads follow the schemas described in
 * docs/formats.md; comments (// and block) are accepted in config JSON.
 */

#ifndef SEQREC_SEQREC_H
#define SEQREC_SEQREC_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum seqrec_status {
    SEQREC_OK = 0,
    SEQREC_ERR_INVALID_ARG = 1, /* bad handle, null pointer, contract violation */
    SEQREC_ERR_IO = 2,          /* missing or unreadable/unwritable file */
    SEQREC_ERR_PARSE = 3,       /* malformed input text or JSON */
    SEQREC_ERR_SCHEMA = 4,      /* version marker not understood */
    SEQREC_ERR_EMPTY_INPUT = 5, /* no usable records */
    SEQREC_ERR_DIVERGED = 6,    /* training aborted on non-finite loss */
    SEQREC_ERR_INTERNAL = 7
} seqrec_status;

/* Library version as "major.minor.patch". Static storage; do not free. */
const char* seqrec_version(void);

/* Message for the most recent failure on this thread. Static storage. */
const char* seqrec_last_error(void);

void seqrec_string_free(char* s);

/* ------------------------------------------------------------------ dataset */

typedef struct seqrec_dataset seqrec_dataset;

/* Ingest a delimited interaction log, filter, and build the sequence
 * dataset. options_json (may be NULL for defaults):
 *   { "delimiter": "\t", "columns": "uit"|"uirt", "skip_header": false,
 *     "min_interactions": 5, "max_len": 50, "stats_json": ... }
 */
seqrec_status seqrec_dataset_prepare(const char* input_path, const char* options_json,
                                     seqrec_dataset** out);

seqrec_status seqrec_dataset_load(const char* bundle_path, seqrec_dataset** out);
seqrec_status seqrec_dataset_save(const seqrec_dataset* dataset, const char* bundle_path);

/* Summary statistics (users, items, interactions, mean_length, density, ...)
 * as a JSON object. */
seqrec_status seqrec_dataset_stats(const seqrec_dataset* dataset, char** out_json);

void seqrec_dataset_free(seqrec_dataset* dataset);

/* --------------------------------------------------------------- experiments */

/* Train one configuration. Writes the resolved config, JSON-lines logs, the
 * best checkpoint and a final report into run_dir. out_report_json (optional)
 * receives the final report. */
seqrec_status seqrec_train(const seqrec_dataset* dataset, const char* config_json,
                           const char* run_dir, char** out_report_json);

/* Run a hyper-parameter sweep described by manifest_json. Writes the
 * leaderboard, replay log and per-trial logs into out_dir. */
seqrec_status seqrec_tune(const seqrec_dataset* dataset, const char* manifest_json,
                          const char* out_dir, char** out_leaderboard_json);

/* Evaluate a checkpoint under the protocols in config_json. When
 * attention_dump_dir is non-NULL, post-softmax attention matrices for a
 * seeded selection of users are written there. */
seqrec_status seqrec_evaluate(const seqrec_dataset* dataset, const char* checkpoint_path,
                              const char* config_json, const char* attention_dump_dir,
                              char** out_report_json);

/* Spectral analysis of an attention dump directory: singular-value spectra,
 * low-rank reconstruction errors, effective ranks and heatmap grids as CSV.
 * compare_dump_dir (optional) adds a per-index spectrum comparison. */
seqrec_status seqrec_analyze(const char* dump_dir, const char* compare_dump_dir,
                             const char* options_json, const char* out_dir);

/* Paired metric table for two finished runs with a relative-improvement
 * column (B - A) / A per metric. Returns human-readable text. */
seqrec_status seqrec_compare(const char* run_dir_a, const char* run_dir_b, char** out_table);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SEQREC_SEQREC_H */
