// Copyright (c) 2026 the seqrec authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "core/trainer.hpp"

using namespace seqrec;

namespace {

SequenceDataset markov_toy(int num_users, int num_items, std::uint64_t seed, int mean_len = 8) {
    Rng rng(seed, 50);
    InteractionLog log;
    for (int u = 0; u < num_users; ++u) {
        int len = 3 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(2 * mean_len - 6)));
        int current = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(num_items)));
        for (int t = 0; t < len; ++t) {
            log.records.push_back({"u" + std::to_string(u), "i" + std::to_string(current),
                                   static_cast<std::int64_t>(t)});
            // Deterministic successor structure with a bit of noise.
            current = 1 + (current * 7 + (rng.uniform() < 0.2 ? 3 : 1)) % num_items;
        }
    }
    return build_dataset(log, {.max_len = 50, .min_sequence_length = 3});
}

ModelConfig tiny_config(Causality causality) {
    ModelConfig cfg;
    cfg.hidden_size = 8;
    cfg.num_layers = 1;
    cfg.num_heads = 1;
    cfg.max_len = 8;
    cfg.dropout_hidden = 0.1;
    cfg.dropout_attention = 0.0;
    cfg.causality = causality;
    if (causality == Causality::AE) cfg.mask_probability = 0.4;
    return cfg;
}

TrainingOptions quick_options(int max_epochs) {
    TrainingOptions options;
    options.batch_size = 32;
    options.base_lr = 1e-3;
    options.max_epochs = max_epochs;
    options.early_stop_patience = 20;
    options.selection_protocol = {ProtocolKind::AllRanking, 100, true};
    return options;
}

}  // namespace

TEST_CASE("environment presets match the named training environments") {
    const auto std_env = EnvironmentProfile::standard(LossKind::BCE);
    CHECK_FALSE(std_env.seq_duplication);
    CHECK_FALSE(std_env.sliding_window);
    CHECK_FALSE(std_env.lr_warmup);
    CHECK_FALSE(std_env.lr_decay);
    CHECK_FALSE(std_env.use_weight_decay);
    CHECK(std_env.loss == LossKind::BCE);

    const auto reprod = EnvironmentProfile::reproduction();
    CHECK(reprod.seq_duplication);
    CHECK(reprod.sliding_window);
    CHECK(reprod.lr_warmup);
    CHECK(reprod.lr_decay);
    CHECK(reprod.use_weight_decay);
    CHECK(reprod.loss == LossKind::CE);
}

TEST_CASE("early stopping fires after exactly patience non-improving epochs") {
    auto ds = markov_toy(20, 15, 1);
    auto splits = build_splits(ds);

    // Scripted validation: improves at epochs 1 and 2, then flat.
    auto scripted = [](const SelfAttentiveModel&, int epoch) {
        MetricReport report;
        report.protocol = {ProtocolKind::AllRanking, 100, true};
        const double value = epoch == 1 ? 0.10 : 0.11;
        for (int k : {5, 10, 20}) {
            report.recall[k] = value;
            report.ndcg[k] = value / 2;
        }
        report.n_users = 1;
        return report;
    };

    auto result = train_trial(tiny_config(Causality::AR), EnvironmentProfile::standard(),
                              quick_options(1000), ds, splits, 7, {}, scripted);
    CHECK(result.state.status == TrialStatus::EarlyStopped);
    CHECK(result.state.epochs_run == 22);
    CHECK(result.state.best_epoch == 2);
    CHECK(result.state.best_val_recall10 == doctest::Approx(0.11));
}

TEST_CASE("early stopping never fires before patience+1 evaluations") {
    auto ds = markov_toy(20, 15, 2);
    auto splits = build_splits(ds);
    // Never improves after epoch 1: must still run 21 evaluations.
    auto scripted = [](const SelfAttentiveModel&, int epoch) {
        MetricReport report;
        report.protocol = {ProtocolKind::AllRanking, 100, true};
        for (int k : {5, 10, 20}) {
            report.recall[k] = 0.5;
            report.ndcg[k] = 0.25;
        }
        report.n_users = 1;
        (void)epoch;
        return report;
    };
    auto result = train_trial(tiny_config(Causality::AR), EnvironmentProfile::standard(),
                              quick_options(1000), ds, splits, 7, {}, scripted);
    CHECK(result.state.status == TrialStatus::EarlyStopped);
    CHECK(result.state.epochs_run == 21);
}

TEST_CASE("budget caps epochs regardless of improvement") {
    auto ds = markov_toy(20, 15, 3);
    auto splits = build_splits(ds);
    auto result = train_trial(tiny_config(Causality::AR), EnvironmentProfile::standard(),
                              quick_options(3), ds, splits, 11);
    CHECK(result.state.epochs_run <= 3);
    CHECK(result.state.status == TrialStatus::Completed);
}

TEST_CASE("the reporter can prune a trial") {
    auto ds = markov_toy(20, 15, 4);
    auto splits = build_splits(ds);
    auto reporter = [](const EpochRecord& record) { return record.epoch < 2; };
    auto result = train_trial(tiny_config(Causality::AE), EnvironmentProfile::standard(),
                              quick_options(10), ds, splits, 11, reporter);
    CHECK(result.state.status == TrialStatus::Pruned);
    CHECK(result.state.epochs_run == 2);
}

TEST_CASE("identical seed and config reproduce the run bit for bit") {
    auto ds = markov_toy(30, 12, 5);
    auto splits = build_splits(ds);
    for (auto causality : {Causality::AE, Causality::AR}) {
        auto a = train_trial(tiny_config(causality), EnvironmentProfile::standard(),
                             quick_options(5), ds, splits, 99);
        auto b = train_trial(tiny_config(causality), EnvironmentProfile::standard(),
                             quick_options(5), ds, splits, 99);
        REQUIRE(a.state.history.size() == b.state.history.size());
        for (std::size_t i = 0; i < a.state.history.size(); ++i) {
            CHECK(a.state.history[i].mean_loss == b.state.history[i].mean_loss);
            CHECK(a.state.history[i].val_recall10 == b.state.history[i].val_recall10);
        }
        REQUIRE(a.best_params.size() == b.best_params.size());
        for (std::size_t i = 0; i < a.best_params.size(); ++i) {
            CHECK(a.best_params[i].tensor.values() == b.best_params[i].tensor.values());
        }
    }
}

TEST_CASE("std environment keeps the learning rate constant; reprod ramps and decays") {
    auto ds = markov_toy(40, 12, 6);
    auto splits = build_splits(ds);

    auto flat_eval = [](const SelfAttentiveModel&, int) {
        MetricReport report;
        report.protocol = {ProtocolKind::AllRanking, 100, true};
        for (int k : {5, 10, 20}) {
            report.recall[k] = 0.5;
            report.ndcg[k] = 0.25;
        }
        report.n_users = 1;
        return report;
    };

    auto std_run = train_trial(tiny_config(Causality::AR), EnvironmentProfile::standard(),
                               quick_options(4), ds, splits, 13, {}, flat_eval);
    for (const auto& record : std_run.state.history) {
        CHECK(record.effective_lr == doctest::Approx(1e-3));
    }

    EnvironmentProfile reprod = EnvironmentProfile::reproduction();
    reprod.seq_duplication = false;  // keep the step count small and predictable
    reprod.sliding_window = false;
    reprod.warmup_steps = 4;
    reprod.decay_max_steps = 40;
    auto options = quick_options(8);
    options.batch_size = 1000;  // one optimizer step per epoch
    auto ramped = train_trial(tiny_config(Causality::AR), reprod, options, ds, splits, 13, {},
                              flat_eval);
    const auto& h = ramped.state.history;
    REQUIRE(h.size() == 8);
    // Warmup: steps 1..4 climb linearly to the base rate.
    CHECK(h[0].effective_lr == doctest::Approx(1e-3 * 0.25));
    CHECK(h[1].effective_lr == doctest::Approx(1e-3 * 0.5));
    CHECK(h[3].effective_lr == doctest::Approx(1e-3 * 1.0));  // continuous at the boundary
    // Decay: step 5 is one post-warmup step of 40.
    CHECK(h[4].effective_lr == doctest::Approx(1e-3 * (1.0 - 1.0 / 40.0)));
    CHECK(h[7].effective_lr < h[4].effective_lr);
}

TEST_CASE("test data never influences training") {
    auto ds = markov_toy(30, 12, 7);
    auto splits = build_splits(ds);
    SplitView poisoned = splits;
    std::fill(poisoned.test.begin(), poisoned.test.end(), 0);

    auto a = train_trial(tiny_config(Causality::AR), EnvironmentProfile::standard(),
                         quick_options(3), ds, splits, 21);
    auto b = train_trial(tiny_config(Causality::AR), EnvironmentProfile::standard(),
                         quick_options(3), ds, poisoned, 21);
    REQUIRE(a.state.history.size() == b.state.history.size());
    for (std::size_t i = 0; i < a.state.history.size(); ++i) {
        CHECK(a.state.history[i].mean_loss == b.state.history[i].mean_loss);
        CHECK(a.state.history[i].val_recall10 == b.state.history[i].val_recall10);
    }
    for (std::size_t i = 0; i < a.best_params.size(); ++i) {
        CHECK(a.best_params[i].tensor.values() == b.best_params[i].tensor.values());
    }
}

TEST_CASE("final retrain evaluates the test split exactly once per protocol") {
    auto ds = markov_toy(30, 12, 8);
    auto splits = build_splits(ds);
    const std::vector<RankingProtocol> protocols{{ProtocolKind::AllRanking, 100, true},
                                                 {ProtocolKind::PopularitySample, 5, true}};
    auto final_result = final_retrain_and_test(tiny_config(Causality::AR),
                                               EnvironmentProfile::standard(), quick_options(3), ds,
                                               splits, 31, protocols);
    CHECK(final_result.test_evaluations_run == 2);
    REQUIRE(final_result.test_reports.size() == 2);
    for (const auto& report : final_result.test_reports) {
        CHECK(report.split == Split::Test);
        report.check_invariants();
    }
}

TEST_CASE("a non-finite loss aborts the trial as diverged") {
    auto ds = markov_toy(30, 12, 9);
    auto splits = build_splits(ds);
    auto options = quick_options(10);
    options.base_lr = 1e300;  // guarantees overflow within a couple of steps
    const bool saved = debug_checks_enabled();
    set_debug_checks(false);  // let the overflow reach the loss check
    auto result = train_trial(tiny_config(Causality::AR), EnvironmentProfile::standard(), options,
                              ds, splits, 17);
    set_debug_checks(saved);
    CHECK(result.state.status == TrialStatus::Diverged);
    CHECK_FALSE(result.state.diagnostic.empty());
}

TEST_CASE("training reduces the loss on learnable data") {
    auto ds = markov_toy(60, 10, 10);
    auto splits = build_splits(ds);
    auto options = quick_options(8);
    options.base_lr = 3e-3;
    auto result = train_trial(tiny_config(Causality::AR), EnvironmentProfile::standard(), options,
                              ds, splits, 19);
    REQUIRE(result.state.history.size() >= 2);
    CHECK(result.state.history.back().mean_loss < result.state.history.front().mean_loss);
}

TEST_CASE("retrained test performance stays near validation-selected performance") {
    auto ds = markov_toy(80, 10, 11);
    auto splits = build_splits(ds);
    auto options = quick_options(6);
    options.base_lr = 3e-3;

    std::vector<double> val_scores, test_scores;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto final_result =
            final_retrain_and_test(tiny_config(Causality::AR), EnvironmentProfile::standard(),
                                   options, ds, splits, 100 + seed,
                                   {{ProtocolKind::AllRanking, 100, true}});
        val_scores.push_back(final_result.trial.state.best_val_recall10);
        test_scores.push_back(final_result.test_reports[0].recall.at(10));
    }
    double val_mean = 0.0, test_mean = 0.0;
    for (std::size_t i = 0; i < val_scores.size(); ++i) {
        val_mean += val_scores[i];
        test_mean += test_scores[i];
    }
    val_mean /= 5.0;
    test_mean /= 5.0;
    double var = 0.0;
    for (double v : val_scores) var += (v - val_mean) * (v - val_mean);
    const double sigma = std::sqrt(var / 5.0) + 1e-3;
    CHECK(std::abs(test_mean - val_mean) <= 3.0 * sigma + 0.15);
}
