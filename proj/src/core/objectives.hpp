// Copyright (c) 2026 the seqrec authors
// SPDX-License-Identifier: Apache-2.0
//
// Training-target construction for the two objectives (masked reconstruction
// for AE, shifted next-item prediction for AR) and the three losses (full
// cross-entropy, binary cross-entropy and pairwise ranking with sampled
// negatives).

#pragma once

#include <unordered_set>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace seqrec {

struct TrainingExample {
    std::vector<int> input_ids;        // length max_len, left-padded with 0
    std::vector<int> target_ids;       // length max_len, 0 means no loss here
    std::vector<bool> loss_positions;  // true exactly where target_ids != 0
    int user_id = 0;
};

// Masked-reconstruction corruption: each non-padding position is masked
// independently with mask_probability; if the draw selects nothing, the last
// position is forced so every example carries gradient. Leading zeros in seq
// are treated as padding; the sequence is truncated to the most recent
// max_len items first.
TrainingExample mlm_corrupt(const std::vector<int>& seq, std::size_t max_len, int mask_token,
                            double mask_probability, Rng& rng);

// Next-item targets: input is the sequence minus its last item, target at t
// is the item at t+1. Truncates to the most recent max_len+1 items so the
// input fills max_len positions. Sequences shorter than 2 are rejected.
TrainingExample shift_targets(const std::vector<int>& seq, std::size_t max_len);

// Inference input for AE models: most recent history with the mask token
// appended at the final position; scores are read at that position.
std::vector<int> ae_inference_input(const std::vector<int>& seq, std::size_t max_len,
                                    int mask_token);

// Mean full-softmax cross-entropy over the item vocabulary. The padding and
// mask columns are removed from the candidate set by masking their logits to
// the -inf sentinel.
Tensor loss_ce(const Tensor& logits, const std::vector<int>& targets, int pad_token,
               int mask_token);

// pos: [P], neg: [P, k]. Sigmoid cross-entropy with the positive labelled 1
// and every sampled negative labelled 0, averaged over all P*(1+k) terms.
Tensor loss_bce(const Tensor& pos_scores, const Tensor& neg_scores);

// pos: [P], neg: [P, k]. Pairwise -log sigmoid(pos - neg), averaged over
// pairs.
Tensor loss_bpr(const Tensor& pos_scores, const Tensor& neg_scores);

// count ids drawn uniformly from items 1..num_items, never equal to target;
// ids in exclude (when provided) are skipped as well. Draws are independent
// (with replacement across the count).
std::vector<int> sample_negatives(int target, int count, int num_items, Rng& rng,
                                  const std::unordered_set<int>* exclude = nullptr);

}  // namespace seqrec
