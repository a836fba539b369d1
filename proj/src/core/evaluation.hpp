// Copyright (c) 2026 the seqrec authors
// SPDX-License-Identifier: Apache-2.0
//
// Ranking protocols and metrics. The protocol choice (full item pool versus a
// sampled candidate set, uniform or popularity-weighted) is the axis that
// most strongly reshapes reported numbers, so it is explicit everywhere a
// metric is produced.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/rng.hpp"

namespace seqrec {

enum class ProtocolKind { AllRanking, UniformSample, PopularitySample };

std::string to_string(ProtocolKind kind);
ProtocolKind protocol_kind_from_string(const std::string& s);

struct RankingProtocol {
    ProtocolKind kind = ProtocolKind::AllRanking;
    int sample_size = 100;     // negatives per user for sampled kinds
    bool exclude_seen = true;  // drop the user's interacted items from candidates

    void validate() const;
    std::string label() const;
};

enum class Split { Validation, Test };

std::string to_string(Split split);

struct MetricReport {
    std::map<int, double> recall;
    std::map<int, double> ndcg;
    RankingProtocol protocol;
    Split split = Split::Validation;
    int n_users = 0;
    std::string config_fingerprint;

    // 0 <= value <= 1, non-decreasing in k, ndcg@k <= recall@k.
    void check_invariants() const;
};

// 1 + (candidates scored strictly higher) + (non-target candidates tied with
// the target): ties rank the target pessimistically, so a constant scorer
// cannot look good.
int rank_of_target(const std::vector<double>& scores, std::size_t target_index);

double recall_at_k(int rank, int k);
double ndcg_at_k(int rank, int k);

// Candidate ids for one user; the target is always candidates[0]. All-ranking
// uses every item (minus seen when excluded); sampled kinds draw sample_size
// distinct negatives from the uniform or popularity distribution.
std::vector<int> build_candidates(const RankingProtocol& protocol, const SequenceDataset& dataset,
                                  int user, int target, const std::vector<int>& seen_items,
                                  Rng& rng);

// One inverse-CDF draw from an unnormalized weight table.
class WeightedSampler {
public:
    explicit WeightedSampler(const std::vector<double>& weights);
    // Index into the weight table (0-based over the table handed in).
    std::size_t draw(Rng& rng) const;

private:
    std::vector<double> cumulative_;
};

// Batch scoring interface; evaluate() hands users over in chunks so model
// implementations can batch their forward passes.
class Scorer {
public:
    virtual ~Scorer() = default;
    // For each row: scores aligned with candidate_lists[row].
    virtual std::vector<std::vector<double>> score_batch(
        const std::vector<int>& users, const std::vector<std::vector<int>>& histories,
        const std::vector<std::vector<int>>& candidate_lists) = 0;
};

struct EvaluateOptions {
    std::vector<int> ks{5, 10, 20};
    std::size_t batch_size = 256;
};

// Metrics averaged over every eligible user of the split. Per-user candidate
// randomness derives from (seed, user id), so results are independent of
// batching and iteration order.
MetricReport evaluate(Scorer& scorer, const SequenceDataset& dataset, const SplitView& splits,
                      Split split, const RankingProtocol& protocol, std::uint64_t seed,
                      const EvaluateOptions& options = {});

}  // namespace seqrec
