// Copyright (c) 2026 the seqrec authors
// SPDX-License-Identifier: Apache-2.0

#include "core/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "core/errors.hpp"

namespace seqrec {

std::string to_string(ProtocolKind kind) {
    switch (kind) {
        case ProtocolKind::AllRanking: return "all_ranking";
        case ProtocolKind::UniformSample: return "uniform_sample";
        case ProtocolKind::PopularitySample: return "popularity_sample";
    }
    return "?";
}

ProtocolKind protocol_kind_from_string(const std::string& s) {
    if (s == "all_ranking") return ProtocolKind::AllRanking;
    if (s == "uniform_sample") return ProtocolKind::UniformSample;
    if (s == "popularity_sample") return ProtocolKind::PopularitySample;
    throw ParseError("unknown ranking protocol '" + s + "'");
}

void RankingProtocol::validate() const {
    if (kind != ProtocolKind::AllRanking && sample_size < 1) {
        throw ContractError("ranking protocol: sample_size must be >= 1");
    }
}

std::string RankingProtocol::label() const {
    std::string s = to_string(kind);
    if (kind != ProtocolKind::AllRanking) s += "@" + std::to_string(sample_size);
    return s;
}

std::string to_string(Split split) { return split == Split::Validation ? "validation" : "test"; }

void MetricReport::check_invariants() const {
    double prev_recall = 0.0, prev_ndcg = 0.0;
    for (const auto& [k, r] : recall) {
        const double n = ndcg.at(k);
        if (r < 0.0 || r > 1.0 || n < 0.0 || n > 1.0) {
            throw ContractError("metric report: value outside [0,1]");
        }
        if (r + 1e-12 < prev_recall || n + 1e-12 < prev_ndcg) {
            throw ContractError("metric report: metrics must be non-decreasing in k");
        }
        if (n > r + 1e-12) {
            throw ContractError("metric report: ndcg@k must not exceed recall@k");
        }
        prev_recall = r;
        prev_ndcg = n;
    }
}

int rank_of_target(const std::vector<double>& scores, std::size_t target_index) {
    if (target_index >= scores.size()) {
        throw ContractError("rank_of_target: target index out of range");
    }
    const double target = scores[target_index];
    if (std::isnan(target)) throw ContractError("rank_of_target: NaN score");
    int rank = 1;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (std::isnan(scores[i])) throw ContractError("rank_of_target: NaN score");
        if (i == target_index) continue;
        if (scores[i] >= target) ++rank;  // pessimistic ties

    }
    return rank;
}

double recall_at_k(int rank, int k) {
    if (rank < 1) throw ContractError("recall_at_k: rank must be >= 1");
    return rank <= k ? 1.0 : 0.0;
}

double ndcg_at_k(int rank, int k) {
    if (rank < 1) throw ContractError("ndcg_at_k: rank must be >= 1");
    if (rank > k) return 0.0;
    return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

WeightedSampler::WeightedSampler(const std::vector<double>& weights) {
    cumulative_.reserve(weights.size());
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw ContractError("weighted sampler: negative weight");
        total += w;
        cumulative_.push_back(total);
    }
    if (cumulative_.empty() || total <= 0.0) {
        throw ContractError("weighted sampler: no positive weights");
    }
}

std::size_t WeightedSampler::draw(Rng& rng) const {
    const double u = rng.uniform() * cumulative_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return static_cast<std::size_t>(std::distance(cumulative_.begin(), it));
}

std::vector<int> build_candidates(const RankingProtocol& protocol, const SequenceDataset& dataset,
                                  int user, int target, const std::vector<int>& seen_items,
                                  Rng& rng) {
    protocol.validate();
    const int num_items = dataset.num_items();
    if (target < 1 || target > num_items) {
        throw ContractError("build_candidates: target out of item range");
    }
    std::unordered_set<int> blocked;
    blocked.insert(target);  // the target is re-added up front, never as a negative
    if (protocol.exclude_seen) {
        for (int item : seen_items) blocked.insert(item);
        blocked.insert(target);
    }

    std::vector<int> candidates{target};
    if (protocol.kind == ProtocolKind::AllRanking) {
        for (int i = 1; i <= num_items; ++i) {
            if (i == target) continue;
            if (protocol.exclude_seen && blocked.count(i)) continue;
            candidates.push_back(i);
        }
        return candidates;
    }

    const std::size_t want = static_cast<std::size_t>(protocol.sample_size);
    std::size_t pool = static_cast<std::size_t>(num_items);
    pool -= std::min<std::size_t>(pool, blocked.size());
    if (pool < want) {
        throw ContractError("build_candidates: pool of " + std::to_string(pool) +
                            " negatives smaller than sample_size " + std::to_string(want));
    }

    std::unordered_set<int> chosen;
    if (protocol.kind == ProtocolKind::UniformSample) {
        while (chosen.size() < want) {
            const int c = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(num_items)));
            if (blocked.count(c) || chosen.count(c)) continue;
            chosen.insert(c);
            candidates.push_back(c);
        }
        return candidates;
    }

    // Popularity-weighted draws without replacement, by rejection against the
    // full-dataset frequency distribution.
    std::vector<double> weights(static_cast<std::size_t>(num_items));
    for (int i = 1; i <= num_items; ++i) {
        weights[static_cast<std::size_t>(i - 1)] =
            static_cast<double>(dataset.item_popularity[static_cast<std::size_t>(i)]);
    }
    WeightedSampler sampler(weights);
    const std::size_t max_attempts = 200 * want + 1000;
    std::size_t attempts = 0;
    while (chosen.size() < want) {
        if (++attempts > max_attempts) {
            // Heavy exclusion overlap: renormalize over the remaining pool.
            std::vector<double> rest(weights);
            for (int i = 1; i <= num_items; ++i) {
                if (blocked.count(i) || chosen.count(i)) rest[static_cast<std::size_t>(i - 1)] = 0.0;
            }
            WeightedSampler tail(rest);
            while (chosen.size() < want) {
                const int c = static_cast<int>(tail.draw(rng)) + 1;
                if (blocked.count(c) || chosen.count(c)) continue;
                chosen.insert(c);
                candidates.push_back(c);
            }
            break;
        }
        const int c = static_cast<int>(sampler.draw(rng)) + 1;
        if (blocked.count(c) || chosen.count(c)) continue;
        chosen.insert(c);
        candidates.push_back(c);
    }
    return candidates;
}

MetricReport evaluate(Scorer& scorer, const SequenceDataset& dataset, const SplitView& splits,
                      Split split, const RankingProtocol& protocol, std::uint64_t seed,
                      const EvaluateOptions& options) {
    protocol.validate();

    std::vector<int> users;
    std::vector<std::vector<int>> histories;
    std::vector<int> targets;
    for (int u = 1; u <= dataset.num_users(); ++u) {
        const auto su = static_cast<std::size_t>(u);
        if (splits.validation[su] == 0 || splits.train[su].empty()) continue;
        std::vector<int> history = splits.train[su];
        int target;
        if (split == Split::Validation) {
            target = splits.validation[su];
        } else {
            if (splits.test[su] == 0) continue;
            history.push_back(splits.validation[su]);
            target = splits.test[su];
        }
        users.push_back(u);
        histories.push_back(std::move(history));
        targets.push_back(target);
    }
    if (users.empty()) throw EmptyInputError("evaluate: no eligible users in split");

    MetricReport report;
    report.protocol = protocol;
    report.split = split;
    report.n_users = static_cast<int>(users.size());
    for (int k : options.ks) {
        report.recall[k] = 0.0;
        report.ndcg[k] = 0.0;
    }

    const Rng eval_root(seed, 0);
    for (std::size_t begin = 0; begin < users.size(); begin += options.batch_size) {
        const std::size_t end = std::min(users.size(), begin + options.batch_size);
        std::vector<int> chunk_users(users.begin() + static_cast<std::ptrdiff_t>(begin),
                                     users.begin() + static_cast<std::ptrdiff_t>(end));
        std::vector<std::vector<int>> chunk_histories(
            histories.begin() + static_cast<std::ptrdiff_t>(begin),
            histories.begin() + static_cast<std::ptrdiff_t>(end));
        std::vector<std::vector<int>> chunk_candidates;
        chunk_candidates.reserve(chunk_users.size());
        for (std::size_t i = 0; i < chunk_users.size(); ++i) {
            // Per-user stream keyed by the user id: batching never shifts draws.
            Rng user_rng = eval_root.split(static_cast<std::uint64_t>(chunk_users[i]));
            const auto& seq = dataset.sequences[static_cast<std::size_t>(chunk_users[i])];
            chunk_candidates.push_back(
                build_candidates(protocol, dataset, chunk_users[i], targets[begin + i], seq, user_rng));
        }

        const auto scores = scorer.score_batch(chunk_users, chunk_histories, chunk_candidates);
        if (scores.size() != chunk_users.size()) {
            throw ContractError("evaluate: scorer returned wrong batch size");
        }
        for (std::size_t i = 0; i < chunk_users.size(); ++i) {
            if (scores[i].size() != chunk_candidates[i].size()) {
                throw ContractError("evaluate: scorer returned wrong candidate count");
            }
            const int rank = rank_of_target(scores[i], 0);
            for (int k : options.ks) {
                report.recall[k] += recall_at_k(rank, k);
                report.ndcg[k] += ndcg_at_k(rank, k);
            }
        }
    }

    for (int k : options.ks) {
        report.recall[k] /= static_cast<double>(report.n_users);
        report.ndcg[k] /= static_cast<double>(report.n_users);
    }
    report.check_invariants();
    return report;
}

}  // namespace seqrec
