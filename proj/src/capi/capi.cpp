// Copyright (c) 2026 the seqrec authors
// SPDX-License-Identifier: Apache-2.0

#include "seqrec/seqrec.h"

#include <cstring>
#include <string>

#include "core/data.hpp"
#include "core/errors.hpp"
#include "core/experiment.hpp"

namespace {

thread_local std::string g_last_error;

seqrec_status classify(const std::exception& e) {
    if (dynamic_cast<const seqrec::SchemaError*>(&e)) return SEQREC_ERR_SCHEMA;
    if (dynamic_cast<const seqrec::ParseError*>(&e)) return SEQREC_ERR_PARSE;
    if (dynamic_cast<const seqrec::IoError*>(&e)) return SEQREC_ERR_IO;
    if (dynamic_cast<const seqrec::EmptyInputError*>(&e)) return SEQREC_ERR_EMPTY_INPUT;
    if (dynamic_cast<const seqrec::DivergedError*>(&e)) return SEQREC_ERR_DIVERGED;
    if (dynamic_cast<const seqrec::ContractError*>(&e)) return SEQREC_ERR_INVALID_ARG;
    return SEQREC_ERR_INTERNAL;
}

template <typename Fn>
seqrec_status guarded(Fn&& fn) {
    try {
        fn();
        return SEQREC_OK;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return classify(e);
    } catch (...) {
        g_last_error = "unknown error";
        return SEQREC_ERR_INTERNAL;
    }
}

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.data(), s.size());
    out[s.size()] = '\0';
    return out;
}

seqrec_status invalid_arg(const char* what) {
    g_last_error = what;
    return SEQREC_ERR_INVALID_ARG;
}

}  // namespace

struct seqrec_dataset {
    seqrec::SequenceDataset dataset;
};

extern "C" {

const char* seqrec_version(void) { return "0.1.0"; }

const char* seqrec_last_error(void) { return g_last_error.c_str(); }

void seqrec_string_free(char* s) { delete[] s; }

seqrec_status seqrec_dataset_prepare(const char* input_path, const char* options_json,
                                     seqrec_dataset** out) {
    if (!input_path || !out) return invalid_arg("null argument");
    return guarded([&] {
        auto ds = seqrec::prepare_dataset(input_path, options_json ? options_json : "");
        *out = new seqrec_dataset{std::move(ds)};
    });
}

seqrec_status seqrec_dataset_load(const char* bundle_path, seqrec_dataset** out) {
    if (!bundle_path || !out) return invalid_arg("null argument");
    return guarded([&] {
        auto ds = seqrec::load_dataset_bundle(bundle_path);
        *out = new seqrec_dataset{std::move(ds)};
    });
}

seqrec_status seqrec_dataset_save(const seqrec_dataset* dataset, const char* bundle_path) {
    if (!dataset || !bundle_path) return invalid_arg("null argument");
    return guarded([&] { seqrec::save_dataset_bundle(dataset->dataset, bundle_path); });
}

seqrec_status seqrec_dataset_stats(const seqrec_dataset* dataset, char** out_json) {
    if (!dataset || !out_json) return invalid_arg("null argument");
    return guarded([&] { *out_json = dup_string(seqrec::dataset_stats_json(dataset->dataset)); });
}

void seqrec_dataset_free(seqrec_dataset* dataset) { delete dataset; }

seqrec_status seqrec_train(const seqrec_dataset* dataset, const char* config_json,
                           const char* run_dir, char** out_report_json) {
    if (!dataset || !config_json || !run_dir) return invalid_arg("null argument");
    return guarded([&] {
        const std::string report = seqrec::run_training(dataset->dataset, config_json, run_dir);
        if (out_report_json) *out_report_json = dup_string(report);
    });
}

seqrec_status seqrec_tune(const seqrec_dataset* dataset, const char* manifest_json,
                          const char* out_dir, char** out_leaderboard_json) {
    if (!dataset || !manifest_json || !out_dir) return invalid_arg("null argument");
    return guarded([&] {
        const std::string leaderboard = seqrec::run_tuning(dataset->dataset, manifest_json, out_dir);
        if (out_leaderboard_json) *out_leaderboard_json = dup_string(leaderboard);
    });
}

seqrec_status seqrec_evaluate(const seqrec_dataset* dataset, const char* checkpoint_path,
                              const char* config_json, const char* attention_dump_dir,
                              char** out_report_json) {
    if (!dataset || !checkpoint_path) return invalid_arg("null argument");
    return guarded([&] {
        const std::string report = seqrec::run_evaluation(
            dataset->dataset, checkpoint_path, config_json ? config_json : "",
            attention_dump_dir ? attention_dump_dir : "");
        if (out_report_json) *out_report_json = dup_string(report);
    });
}

seqrec_status seqrec_analyze(const char* dump_dir, const char* compare_dump_dir,
                             const char* options_json, const char* out_dir) {
    if (!dump_dir || !out_dir) return invalid_arg("null argument");
    return guarded([&] {
        seqrec::run_analysis(dump_dir, compare_dump_dir ? compare_dump_dir : "",
                             options_json ? options_json : "", out_dir);
    });
}

seqrec_status seqrec_compare(const char* run_dir_a, const char* run_dir_b, char** out_table) {
    if (!run_dir_a || !run_dir_b || !out_table) return invalid_arg("null argument");
    return guarded([&] { *out_table = dup_string(seqrec::compare_runs(run_dir_a, run_dir_b)); });
}

}  // extern "C"
