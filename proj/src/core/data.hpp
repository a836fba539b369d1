// Copyright (c) 2026 the seqrec authors
// SPDX-License-Identifier: Apache-2.0
//
// Interaction-log ingestion and the sequence dataset: filtering, per-user
// chronological sequences, leave-one-out splits, truncation, and the two
// training-set augmentations (duplication, sliding windows).

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/errors.hpp"

namespace seqrec {

struct Interaction {
    std::string user;
    std::string item;
    std::int64_t timestamp = 0;
};

struct InteractionLog {
    std::vector<Interaction> records;  // in file order, exact duplicates removed
};

struct LoadOptions {
    std::string delimiter = "\t";  // literal, may be multi-character (e.g. "::")
    bool skip_header = false;
    // Column layout: "uit" = user,item,timestamp; "uirt" = user,item,rating,
    // timestamp with the rating ignored.
    std::string columns = "uit";
};

struct LoadReport {
    std::size_t lines = 0;
    std::size_t parsed = 0;
    std::size_t duplicates_removed = 0;
};

InteractionLog load_interactions(const std::string& path, const LoadOptions& options = {},
                                 LoadReport* report = nullptr);

// Single pass each, never iterated to a fixed point: first drop items whose
// count on the input log is below min_count, then drop users whose count on
// the item-filtered log is below min_count.
InteractionLog filter_min_interactions(const InteractionLog& log, int min_count = 5);

// Integer id 0 is the padding token; ids 1..num_items() are items; id
// num_items()+1 is the mask token. User ids are 1..num_users().
class SequenceDataset {
public:
    std::vector<std::string> user_ids;  // [0] unused
    std::vector<std::string> item_ids;  // [0] unused
    std::unordered_map<std::string, int> user_index;
    std::unordered_map<std::string, int> item_index;
    std::vector<std::vector<int>> sequences;      // [user id] -> chronological items
    std::vector<std::int64_t> item_popularity;    // [item id] -> count, [0] = 0
    int max_len = 50;

    int num_users() const { return static_cast<int>(user_ids.size()) - 1; }
    int num_items() const { return static_cast<int>(item_ids.size()) - 1; }
    int pad_id() const { return 0; }
    int mask_id() const { return num_items() + 1; }
    // Total vocabulary rows for the embedding table: pad + items + mask.
    int vocab_size() const { return num_items() + 2; }
    std::int64_t total_interactions() const;
    double mean_sequence_length() const;
    double density() const;
};

struct BuildOptions {
    int max_len = 50;
    int min_sequence_length = 3;  // leave-one-out needs train/val/test roles
};

struct BuildReport {
    std::size_t dropped_short_users = 0;
};

SequenceDataset build_dataset(const InteractionLog& log, const BuildOptions& options = {},
                              BuildReport* report = nullptr);

// Leave-one-out: last item is the test target, second to last the validation
// target, the remaining prefix is training history. Indexed by user id.
struct SplitView {
    std::vector<std::vector<int>> train;
    std::vector<int> validation;
    std::vector<int> test;
    std::size_t dropped_users = 0;
};

SplitView build_splits(const SequenceDataset& dataset);

// Keeps the most recent max_len items.
std::vector<int> truncate_sequence(const std::vector<int>& seq, std::size_t max_len);

// k identical copies; downstream masking differentiates them.
std::vector<std::vector<int>> augment_duplicate(const std::vector<int>& seq, int k);

// Windows of exactly max_len items at offsets 0, stride, 2*stride, ...; the
// final window is anchored to the sequence end so the last item is covered.
// Sequences no longer than max_len pass through unchanged.
std::vector<std::vector<int>> augment_sliding_window(const std::vector<int>& seq,
                                                     std::size_t max_len, std::size_t stride);

// probability[id] = count(id) / total over item ids 1..V; index 0 is 0.
std::vector<double> popularity_distribution(const SequenceDataset& dataset);

// Versioned line-based bundle holding index maps, sequences and popularity.
void save_dataset_bundle(const SequenceDataset& dataset, const std::string& path);
SequenceDataset load_dataset_bundle(const std::string& path);

}  // namespace seqrec
