// Copyright (c) 2026 the seqrec authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-trial training loop: epoch batching with the configured augmentations,
// objective construction, Adam with the schedule switches, per-epoch
// validation, early stopping, and an external stop hook for the tuner.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/evaluation.hpp"
#include "core/model.hpp"
#include "core/objectives.hpp"
#include "core/optimizer.hpp"

namespace seqrec {

enum class LossKind { CE, BCE, BPR };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& s);

// Training-environment switches. The two named presets match the lineage
// environments: "std" turns every add-on off (constant learning rate, no
// augmentation, no weight decay), "reprod" turns them all on with CE loss.
struct EnvironmentProfile {
    bool seq_duplication = false;
    int duplication_k = 5;
    bool sliding_window = false;
    int sliding_stride = 0;  // 0 = max_len / 2
    bool lr_warmup = false;
    std::int64_t warmup_steps = 100;
    bool lr_decay = false;
    std::int64_t decay_max_steps = 10000;
    bool use_weight_decay = false;
    double weight_decay = 0.01;
    LossKind loss = LossKind::CE;

    static EnvironmentProfile standard(LossKind loss_kind = LossKind::CE);
    static EnvironmentProfile reproduction();
};

struct TrainingOptions {
    int batch_size = 128;
    double base_lr = 1e-3;
    int max_epochs = 1000;
    int early_stop_patience = 20;
    int negative_count = 1;                   // negatives per position for BCE/BPR
    bool exclude_history_negatives = false;   // drop the user's items from negatives
    RankingProtocol selection_protocol;       // drives the per-epoch validation metric
    std::size_t eval_batch_size = 256;
};

enum class TrialStatus { Completed, EarlyStopped, Pruned, Diverged };

std::string to_string(TrialStatus status);

struct EpochRecord {
    int epoch = 0;
    double mean_loss = 0.0;
    double effective_lr = 0.0;
    double val_recall10 = 0.0;
    MetricReport validation;
    double seconds = 0.0;
};

struct RunState {
    int epochs_run = 0;
    double best_val_recall10 = -1.0;
    int best_epoch = 0;
    int epochs_since_improvement = 0;
    std::uint64_t seed = 0;
    TrialStatus status = TrialStatus::Completed;
    std::string diagnostic;  // set when the trial diverges
    std::vector<EpochRecord> history;
};

struct TrialResult {
    ModelConfig config;
    ParameterList best_params;  // deep copy of the best-epoch parameters
    RunState state;
};

// Decides after each epoch whether the trial keeps running (the tuner hook).
using EpochReporter = std::function<bool(const EpochRecord&)>;

// Test seam: replaces the real validation evaluation when provided.
using ValidationEvalFn = std::function<MetricReport(const SelfAttentiveModel& model, int epoch)>;

// Scores candidates with a frozen model; the inference input follows the
// model's causality (plain history for AR, history plus the mask token for
// AE). Scores come from the tied output head.
class ModelScorer : public Scorer {
public:
    explicit ModelScorer(const SelfAttentiveModel& model) : model_(model) {}
    std::vector<std::vector<double>> score_batch(
        const std::vector<int>& users, const std::vector<std::vector<int>>& histories,
        const std::vector<std::vector<int>>& candidate_lists) override;

private:
    const SelfAttentiveModel& model_;
};

// Trains one configuration. Reads only the train and validation parts of the
// split; test data never enters this function's control flow.
TrialResult train_trial(const ModelConfig& config, const EnvironmentProfile& environment,
                        const TrainingOptions& options, const SequenceDataset& dataset,
                        const SplitView& splits, std::uint64_t seed,
                        const EpochReporter& reporter = {},
                        const ValidationEvalFn& eval_override = {});

struct FinalResult {
    TrialResult trial;
    std::vector<MetricReport> test_reports;  // one per requested protocol
    int test_evaluations_run = 0;
};

// Fresh training with the selected configuration, then exactly one test-split
// evaluation per requested protocol on the best checkpoint.
FinalResult final_retrain_and_test(const ModelConfig& config, const EnvironmentProfile& environment,
                                   const TrainingOptions& options, const SequenceDataset& dataset,
                                   const SplitView& splits, std::uint64_t seed,
                                   const std::vector<RankingProtocol>& test_protocols);

}  // namespace seqrec
