// Copyright (c) 2026 the seqrec authors
// SPDX-License-Identifier: Apache-2.0

#include "core/objectives.hpp"

#include <algorithm>

#include "core/data.hpp"
#include "core/errors.hpp"

namespace seqrec {

namespace {

std::vector<int> strip_padding(const std::vector<int>& seq) {
    std::size_t start = 0;
    while (start < seq.size() && seq[start] == 0) ++start;
    return std::vector<int>(seq.begin() + static_cast<std::ptrdiff_t>(start), seq.end());
}

void left_pad(std::vector<int>& seq, std::size_t max_len) {
    if (seq.size() > max_len) throw ContractError("left_pad: sequence longer than max_len");
    seq.insert(seq.begin(), max_len - seq.size(), 0);
}

}  // namespace

TrainingExample mlm_corrupt(const std::vector<int>& seq, std::size_t max_len, int mask_token,
                            double mask_probability, Rng& rng) {
    if (mask_probability <= 0.0 || mask_probability >= 1.0) {
        throw ContractError("mlm_corrupt: mask_probability must be in (0,1)");
    }
    std::vector<int> core = truncate_sequence(strip_padding(seq), max_len);
    if (core.empty()) throw ContractError("mlm_corrupt: empty sequence");

    TrainingExample ex;
    ex.input_ids = core;
    ex.target_ids.assign(core.size(), 0);
    bool any = false;
    for (std::size_t t = 0; t < core.size(); ++t) {
        if (rng.uniform() < mask_probability) {
            ex.target_ids[t] = core[t];
            ex.input_ids[t] = mask_token;
            any = true;
        }
    }
    if (!any) {
        const std::size_t last = core.size() - 1;
        ex.target_ids[last] = core[last];
        ex.input_ids[last] = mask_token;
    }
    left_pad(ex.input_ids, max_len);
    left_pad(ex.target_ids, max_len);
    ex.loss_positions.resize(max_len);
    for (std::size_t t = 0; t < max_len; ++t) ex.loss_positions[t] = ex.target_ids[t] != 0;
    return ex;
}

TrainingExample shift_targets(const std::vector<int>& seq, std::size_t max_len) {
    std::vector<int> core = strip_padding(seq);
    if (core.size() < 2) {
        throw ContractError("shift_targets: need at least 2 items, got " +
                            std::to_string(core.size()));
    }
    core = truncate_sequence(core, max_len + 1);

    TrainingExample ex;
    ex.input_ids.assign(core.begin(), core.end() - 1);
    ex.target_ids.assign(core.begin() + 1, core.end());
    left_pad(ex.input_ids, max_len);
    left_pad(ex.target_ids, max_len);
    ex.loss_positions.resize(max_len);
    for (std::size_t t = 0; t < max_len; ++t) ex.loss_positions[t] = ex.target_ids[t] != 0;
    return ex;
}

std::vector<int> ae_inference_input(const std::vector<int>& seq, std::size_t max_len,
                                    int mask_token) {
    std::vector<int> core = strip_padding(seq);
    if (core.empty()) throw ContractError("ae_inference_input: empty history");
    core = truncate_sequence(core, max_len - 1);
    core.push_back(mask_token);
    left_pad(core, max_len);
    return core;
}

Tensor loss_ce(const Tensor& logits, const std::vector<int>& targets, int pad_token,
               int mask_token) {
    if (targets.empty()) throw ContractError("loss_ce: no loss positions");
    const std::size_t p = logits.dim(0), c = logits.dim(1);
    if (targets.size() != p) {
        throw ContractError("loss_ce: " + std::to_string(targets.size()) + " targets for " +
                            std::to_string(p) + " rows");
    }
    for (int t : targets) {
        if (t == pad_token || t == mask_token) {
            throw ContractError("loss_ce: target may not be the padding or mask token");
        }
    }
    std::vector<bool> excluded(p * c, false);
    for (std::size_t i = 0; i < p; ++i) {
        excluded[i * c + static_cast<std::size_t>(pad_token)] = true;
        excluded[i * c + static_cast<std::size_t>(mask_token)] = true;
    }
    return cross_entropy_mean(masked_fill(logits, excluded, kMaskValue), targets);
}

Tensor loss_bce(const Tensor& pos_scores, const Tensor& neg_scores) {
    if (neg_scores.ndim() != 2 || neg_scores.dim(0) != pos_scores.size() || neg_scores.dim(1) < 1) {
        throw ContractError("loss_bce: need >= 1 negative per positive; shapes " +
                            shape_str(pos_scores.shape()) + " vs " + shape_str(neg_scores.shape()));
    }
    const double p = static_cast<double>(pos_scores.size());
    const double k = static_cast<double>(neg_scores.dim(1));
    Tensor pos_term = sum(softplus(neg(pos_scores)));  // -log sigmoid(pos)
    Tensor neg_term = sum(softplus(neg_scores));       // -log (1 - sigmoid(neg))
    return scale(add(pos_term, neg_term), 1.0 / (p * (1.0 + k)));
}

Tensor loss_bpr(const Tensor& pos_scores, const Tensor& neg_scores) {
    if (neg_scores.ndim() != 2 || neg_scores.dim(0) != pos_scores.size() || neg_scores.dim(1) < 1) {
        throw ContractError("loss_bpr: need >= 1 negative per positive; shapes " +
                            shape_str(pos_scores.shape()) + " vs " + shape_str(neg_scores.shape()));
    }
    // -log sigmoid(pos - neg) == softplus(neg - pos)
    return mean(softplus(sub_col_broadcast(neg_scores, pos_scores)));
}

std::vector<int> sample_negatives(int target, int count, int num_items, Rng& rng,
                                  const std::unordered_set<int>* exclude) {
    if (count < 1) throw ContractError("sample_negatives: count must be >= 1");
    std::size_t blocked = 1;  // the target
    if (exclude) {
        blocked = exclude->size() + (exclude->count(target) ? 0 : 1);
    }
    if (static_cast<std::size_t>(num_items) <= blocked) {
        throw ContractError("sample_negatives: candidate pool exhausted");
    }

    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(count));
    const int max_attempts = 100 * count + 100;
    int attempts = 0;
    while (out.size() < static_cast<std::size_t>(count)) {
        if (++attempts > max_attempts) {
            // Dense exclusion set: fall back to an explicit allowed pool.
            std::vector<int> pool;
            for (int i = 1; i <= num_items; ++i) {
                if (i != target && (!exclude || !exclude->count(i))) pool.push_back(i);
            }
            if (pool.empty()) throw ContractError("sample_negatives: candidate pool exhausted");
            while (out.size() < static_cast<std::size_t>(count)) {
                out.push_back(pool[rng.uniform_index(pool.size())]);
            }
            break;
        }
        const int candidate = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(num_items)));
        if (candidate == target) continue;
        if (exclude && exclude->count(candidate)) continue;
        out.push_back(candidate);
    }
    return out;
}

}  // namespace seqrec
