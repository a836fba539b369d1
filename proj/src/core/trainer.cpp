// Copyright (c) 2026 the seqrec authors
// SPDX-License-Identifier: Apache-2.0

#include "core/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace seqrec {

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::CE: return "ce";
        case LossKind::BCE: return "bce";
        case LossKind::BPR: return "bpr";
    }
    return "?";
}

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "ce") return LossKind::CE;
    if (s == "bce") return LossKind::BCE;
    if (s == "bpr") return LossKind::BPR;
    throw ParseError("unknown loss '" + s + "' (expected ce, bce or bpr)");
}

std::string to_string(TrialStatus status) {
    switch (status) {
        case TrialStatus::Completed: return "completed";
        case TrialStatus::EarlyStopped: return "early_stopped";
        case TrialStatus::Pruned: return "pruned";
        case TrialStatus::Diverged: return "diverged";
    }
    return "?";
}

EnvironmentProfile EnvironmentProfile::standard(LossKind loss_kind) {
    EnvironmentProfile env;
    env.loss = loss_kind;
    return env;
}

EnvironmentProfile EnvironmentProfile::reproduction() {
    EnvironmentProfile env;
    env.seq_duplication = true;
    env.sliding_window = true;
    env.lr_warmup = true;
    env.lr_decay = true;
    env.use_weight_decay = true;
    env.loss = LossKind::CE;
    return env;
}

std::vector<std::vector<double>> ModelScorer::score_batch(
    const std::vector<int>& users, const std::vector<std::vector<int>>& histories,
    const std::vector<std::vector<int>>& candidate_lists) {
    NoGradGuard guard;
    const std::size_t b = histories.size();
    const std::size_t l = static_cast<std::size_t>(model_.config().max_len);

    std::vector<std::vector<int>> batch;
    batch.reserve(b);
    for (const auto& history : histories) {
        if (model_.config().causality == Causality::AE) {
            batch.push_back(ae_inference_input(history, l, model_.mask_id()));
        } else {
            std::vector<int> row = truncate_sequence(history, l);
            row.insert(row.begin(), l - row.size(), 0);
            batch.push_back(std::move(row));
        }
    }
    std::vector<int> user_arg = model_.config().use_user_embedding ? users : std::vector<int>{};
    auto hidden = model_.forward_hidden(batch, user_arg, {});

    // Scores are read at the final position (the mask for AE, the most recent
    // item for AR).
    std::vector<int> last_rows(b);
    for (std::size_t i = 0; i < b; ++i) last_rows[i] = static_cast<int>(i * l + (l - 1));
    Tensor logits = model_.logits_for_rows(hidden.hidden, last_rows);

    const std::size_t c = static_cast<std::size_t>(model_.vocab_size());
    std::vector<std::vector<double>> out(b);
    for (std::size_t i = 0; i < b; ++i) {
        const double* row = logits.data() + i * c;
        auto& scores = out[i];
        scores.reserve(candidate_lists[i].size());
        for (int candidate : candidate_lists[i]) {
            scores.push_back(row[static_cast<std::size_t>(candidate)]);
        }
    }
    return out;
}

namespace {

struct BatchTensors {
    std::vector<std::vector<int>> input_rows;
    std::vector<int> user_ids;
    std::vector<int> loss_rows;     // flattened b*L + t positions carrying loss
    std::vector<int> loss_targets;  // aligned item ids
};

BatchTensors assemble_batch(const std::vector<const TrainingExample*>& examples, std::size_t l) {
    BatchTensors batch;
    batch.input_rows.reserve(examples.size());
    batch.user_ids.reserve(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const TrainingExample& ex = *examples[i];
        batch.input_rows.push_back(ex.input_ids);
        batch.user_ids.push_back(ex.user_id);
        for (std::size_t t = 0; t < l; ++t) {
            if (ex.loss_positions[t]) {
                batch.loss_rows.push_back(static_cast<int>(i * l + t));
                batch.loss_targets.push_back(ex.target_ids[t]);
            }
        }
    }
    return batch;
}

}  // namespace

TrialResult train_trial(const ModelConfig& config, const EnvironmentProfile& environment,
                        const TrainingOptions& options, const SequenceDataset& dataset,
                        const SplitView& splits, std::uint64_t seed, const EpochReporter& reporter,
                        const ValidationEvalFn& eval_override) {
    config.validate();
    if (options.max_epochs < 1) throw ContractError("train_trial: max_epochs must be >= 1");
    if (options.batch_size < 1) throw ContractError("train_trial: batch_size must be >= 1");
    if (environment.loss != LossKind::CE && options.negative_count < 1) {
        throw ContractError("train_trial: sampled losses need negative_count >= 1");
    }

    const std::size_t l = static_cast<std::size_t>(config.max_len);
    Rng init_rng = Rng(seed, 0).split(1);
    SelfAttentiveModel model(config, dataset.num_items(), dataset.num_users(), init_rng);

    LrSchedule schedule;
    schedule.base_lr = options.base_lr;
    schedule.warmup_enabled = environment.lr_warmup;
    schedule.warmup_steps = environment.warmup_steps;
    schedule.decay_enabled = environment.lr_decay;
    schedule.max_steps = environment.decay_max_steps;
    AdamOptimizer optimizer(schedule, environment.use_weight_decay ? environment.weight_decay : 0.0);

    // Users whose training prefix can produce an example at all.
    std::vector<int> trainable_users;
    for (int u = 1; u <= dataset.num_users(); ++u) {
        const auto& prefix = splits.train[static_cast<std::size_t>(u)];
        if (prefix.empty()) continue;
        if (config.causality == Causality::AR && prefix.size() < 2) continue;
        trainable_users.push_back(u);
    }
    if (trainable_users.empty()) throw EmptyInputError("train_trial: no trainable users");

    const int stride = environment.sliding_stride > 0 ? environment.sliding_stride
                                                      : std::max(1, config.max_len / 2);
    const double mask_probability = config.mask_probability.value_or(0.2);

    TrialResult result;
    result.config = config;
    result.state.seed = seed;
    result.state.status = TrialStatus::Completed;

    const std::uint64_t eval_seed = mix64(seed, 0xE7A1);

    for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        Rng data_rng = Rng(seed, 0).split(0x1000 + static_cast<std::uint64_t>(epoch));
        Rng model_rng = Rng(seed, 0).split(0x2000 + static_cast<std::uint64_t>(epoch));

        // Materialize this epoch's examples.
        std::vector<TrainingExample> examples;
        for (int u : trainable_users) {
            const auto& prefix = splits.train[static_cast<std::size_t>(u)];
            std::vector<std::vector<int>> windows;
            if (environment.sliding_window && prefix.size() > l) {
                windows = augment_sliding_window(prefix, l, static_cast<std::size_t>(stride));
            } else {
                windows.push_back(prefix);
            }
            const int copies = environment.seq_duplication ? environment.duplication_k : 1;
            for (const auto& window : windows) {
                for (int copy = 0; copy < copies; ++copy) {
                    TrainingExample ex;
                    if (config.causality == Causality::AE) {
                        ex = mlm_corrupt(window, l, model.mask_id(), mask_probability, data_rng);
                    } else {
                        if (window.size() < 2) continue;
                        ex = shift_targets(window, l);
                    }
                    ex.user_id = u;
                    examples.push_back(std::move(ex));
                }
            }
        }
        if (examples.empty()) throw EmptyInputError("train_trial: no examples this epoch");

        // Shuffle, then run mini-batches.
        std::vector<std::size_t> order(examples.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[data_rng.uniform_index(i)]);
        }

        double loss_total = 0.0;
        std::size_t loss_batches = 0;
        bool diverged = false;
        for (std::size_t begin = 0; begin < order.size() && !diverged;
             begin += static_cast<std::size_t>(options.batch_size)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(options.batch_size));
            std::vector<const TrainingExample*> chunk;
            chunk.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) chunk.push_back(&examples[order[i]]);
            BatchTensors batch = assemble_batch(chunk, l);
            if (batch.loss_rows.empty()) continue;

            SelfAttentiveModel::ForwardOptions fwd;
            fwd.train = true;
            fwd.rng = &model_rng;
            auto hidden = model.forward_hidden(batch.input_rows, batch.user_ids, fwd);

            Tensor loss;
            if (environment.loss == LossKind::CE) {
                Tensor logits = model.logits_for_rows(hidden.hidden, batch.loss_rows);
                loss = loss_ce(logits, batch.loss_targets, model.pad_id(), model.mask_id());
            } else {
                const std::size_t h = static_cast<std::size_t>(config.hidden_size);
                Tensor flat = reshape(hidden.hidden, {hidden.hidden.size() / h, h});
                Tensor rows = select_rows(flat, batch.loss_rows);
                const Tensor& table = model.item_embedding();
                std::vector<int> pos_ids = batch.loss_targets;
                std::vector<int> neg_ids;
                neg_ids.reserve(pos_ids.size() * static_cast<std::size_t>(options.negative_count));
                for (std::size_t p = 0; p < pos_ids.size(); ++p) {
                    const std::unordered_set<int>* exclude = nullptr;
                    std::unordered_set<int> seen;
                    if (options.exclude_history_negatives) {
                        const int user = batch.user_ids[static_cast<std::size_t>(batch.loss_rows[p]) / l];
                        const auto& seq = dataset.sequences[static_cast<std::size_t>(user)];
                        seen.insert(seq.begin(), seq.end());
                        exclude = &seen;
                    }
                    const auto negs = sample_negatives(pos_ids[p], options.negative_count,
                                                       dataset.num_items(), data_rng, exclude);
                    neg_ids.insert(neg_ids.end(), negs.begin(), negs.end());
                }
                Tensor pos_scores =
                    reshape(rows_dot_gather(rows, table, pos_ids, 1), {pos_ids.size()});
                Tensor neg_scores = rows_dot_gather(rows, table, neg_ids,
                                                    static_cast<std::size_t>(options.negative_count));
                loss = environment.loss == LossKind::BCE ? loss_bce(pos_scores, neg_scores)
                                                         : loss_bpr(pos_scores, neg_scores);
            }

            const double loss_value = loss.item();
            if (!std::isfinite(loss_value)) {
                result.state.status = TrialStatus::Diverged;
                result.state.diagnostic = "non-finite loss at epoch " + std::to_string(epoch);
                diverged = true;
                break;
            }
            loss_total += loss_value;
            ++loss_batches;

            optimizer.zero_grad(model.parameters());
            loss.backward();
            optimizer.step(model.parameters());
        }
        if (diverged) break;

        // A blow-up on the final step of the epoch shows up in the weights
        // before any loss would see it.
        for (const auto& p : model.parameters()) {
            for (double v : p.tensor.values()) {
                if (!std::isfinite(v)) {
                    result.state.status = TrialStatus::Diverged;
                    result.state.diagnostic =
                        "non-finite parameter '" + p.name + "' after epoch " + std::to_string(epoch);
                    diverged = true;
                    break;
                }
            }
            if (diverged) break;
        }
        if (diverged) break;

        // Validation under the selection protocol.
        MetricReport validation;
        if (eval_override) {
            validation = eval_override(model, epoch);
        } else {
            ModelScorer scorer(model);
            EvaluateOptions eval_options;
            eval_options.batch_size = options.eval_batch_size;
            validation = evaluate(scorer, dataset, splits, Split::Validation,
                                  options.selection_protocol, eval_seed, eval_options);
        }
        const double recall10 = validation.recall.count(10) ? validation.recall.at(10) : 0.0;

        EpochRecord record;
        record.epoch = epoch;
        record.mean_loss = loss_batches ? loss_total / static_cast<double>(loss_batches) : 0.0;
        record.effective_lr = optimizer.last_effective_lr();
        record.val_recall10 = recall10;
        record.validation = validation;
        record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start)
                             .count();

        result.state.epochs_run = epoch;
        if (recall10 > result.state.best_val_recall10) {
            result.state.best_val_recall10 = recall10;
            result.state.best_epoch = epoch;
            result.state.epochs_since_improvement = 0;
            result.best_params.clear();
            for (const auto& p : model.parameters()) {
                result.best_params.push_back({p.name, p.tensor.clone_detached(true)});
            }
        } else {
            ++result.state.epochs_since_improvement;
        }
        result.state.history.push_back(record);

        if (reporter && !reporter(record)) {
            result.state.status = TrialStatus::Pruned;
            break;
        }
        if (result.state.epochs_since_improvement >= options.early_stop_patience) {
            result.state.status = TrialStatus::EarlyStopped;
            break;
        }
    }

    if (result.best_params.empty()) {
        // Diverged before the first evaluation: keep the current (last) state
        // so callers still have something to inspect.
        for (const auto& p : model.parameters()) {
            result.best_params.push_back({p.name, p.tensor.clone_detached(true)});
        }
    }
    return result;
}

FinalResult final_retrain_and_test(const ModelConfig& config, const EnvironmentProfile& environment,
                                   const TrainingOptions& options, const SequenceDataset& dataset,
                                   const SplitView& splits, std::uint64_t seed,
                                   const std::vector<RankingProtocol>& test_protocols) {
    FinalResult final_result;
    final_result.trial = train_trial(config, environment, options, dataset, splits, seed);
    if (final_result.trial.state.status == TrialStatus::Diverged) {
        throw DivergedError("final_retrain_and_test: " + final_result.trial.state.diagnostic);
    }

    // Score with the best checkpoint, not the last epoch.
    Rng rebuild_rng = Rng(seed, 0).split(1);
    SelfAttentiveModel model(config, dataset.num_items(), dataset.num_users(), rebuild_rng);
    assign_parameter_values(model.parameters(), final_result.trial.best_params);

    ModelScorer scorer(model);
    const std::uint64_t test_seed = mix64(seed, 0x7E57);
    for (const auto& protocol : test_protocols) {
        EvaluateOptions eval_options;
        eval_options.batch_size = options.eval_batch_size;
        final_result.test_reports.push_back(
            evaluate(scorer, dataset, splits, Split::Test, protocol, test_seed, eval_options));
        ++final_result.test_evaluations_run;
    }
    return final_result;
}

}  // namespace seqrec
