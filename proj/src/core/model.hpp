// Copyright (c) 2026 the seqrec authors
// SPDX-License-Identifier: Apache-2.0
//
// Self-attention recommender backbone with switchable causality. One model
// family covers both directions: bidirectional attention trained on masked
// reconstruction, or causal (lower-triangular) attention trained on next-item
// targets, plus optional windowed attention heads and stochastically shared
// user embeddings.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "core/optimizer.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace seqrec {

enum class Causality { AE, AR };

std::string to_string(Causality c);
Causality causality_from_string(const std::string& s);

struct ModelConfig {
    int hidden_size = 64;
    int num_layers = 2;
    int num_heads = 2;
    int max_len = 50;
    double dropout_hidden = 0.1;
    double dropout_attention = 0.1;
    Causality causality = Causality::AR;
    std::optional<int> local_window;         // window radius w >= 1
    int local_heads = -1;                    // heads using the window; -1 = all
    bool use_user_embedding = false;
    double sse_probability = 0.0;            // user-id resampling rate at train time
    std::optional<double> mask_probability;  // AE corruption rate; unset for AR
    int ffn_multiplier = 4;

    void validate() const;
};

// Boolean attendability matrix for one sequence, combining causality, the
// optional local window and padding. Row t lists the positions t may attend.
struct AttentionMask {
    std::size_t len = 0;
    std::vector<bool> attendable;  // len*len row-major

    bool at(std::size_t t, std::size_t s) const { return attendable[t * len + s]; }
};

// padding_flags[t] is true at padding positions. Non-padding positions always
// keep self-attention so no live row is left with nothing to attend to.
AttentionMask build_attention_mask(Causality causality, std::optional<int> local_window,
                                   const std::vector<bool>& padding_flags);

// Stochastic shared embeddings: at train time each user id is independently
// replaced by a uniformly random user with probability sse_probability;
// evaluation is the identity.
std::vector<int> apply_sse(const std::vector<int>& user_ids, double sse_probability, Rng& rng,
                           bool train, int num_users);

// Post-softmax attention matrix of one head on one example, cropped to the
// non-padding block.
struct AttentionCaptureEntry {
    int layer = 0;
    int head = 0;
    std::size_t batch_row = 0;
    std::size_t len = 0;            // non-padding length
    std::vector<double> matrix;     // len*len row-major
};

class SelfAttentiveModel {
public:
    SelfAttentiveModel(ModelConfig config, int num_items, int num_users, Rng& init_rng);

    const ModelConfig& config() const { return config_; }
    int num_items() const { return num_items_; }
    int num_users() const { return num_users_; }
    int pad_id() const { return 0; }
    int mask_id() const { return num_items_ + 1; }
    int vocab_size() const { return num_items_ + 2; }

    ParameterList& parameters() { return params_; }
    const ParameterList& parameters() const { return params_; }
    const Tensor& item_embedding() const { return param("embedding.item"); }
    std::size_t parameter_count() const;

    // Closed-form parameter count for a configuration; guards drift between
    // the declared architecture and what the constructor actually builds.
    static std::size_t expected_parameter_count(const ModelConfig& config, int num_items,
                                                int num_users);

    struct ForwardOptions {
        bool train = false;
        Rng* rng = nullptr;  // required when train
        bool capture_attention = false;
    };

    struct HiddenResult {
        Tensor hidden;  // [B, L, H]
        std::vector<AttentionCaptureEntry> captures;
    };

    // batch_ids: B rows of exactly max_len ids, left-padded with 0. user_ids:
    // one id per row when user embeddings are enabled (pass {} otherwise).
    HiddenResult forward_hidden(const std::vector<std::vector<int>>& batch_ids,
                                const std::vector<int>& user_ids,
                                const ForwardOptions& options) const;

    // Scores for every vocabulary id at every position: [B, L, V+2]. The
    // output head shares the item embedding matrix (tied weights).
    Tensor forward_logits(const std::vector<std::vector<int>>& batch_ids,
                          const std::vector<int>& user_ids, const ForwardOptions& options,
                          std::vector<AttentionCaptureEntry>* captures = nullptr) const;

    // Tied-weight head applied to selected rows of the flattened [B*L, H]
    // hidden matrix; returns [P, V+2].
    Tensor logits_for_rows(const Tensor& hidden, const std::vector<int>& flat_rows) const;

private:
    const Tensor& param(const std::string& name) const;

    ModelConfig config_;
    int num_items_;
    int num_users_;
    ParameterList params_;
};

}  // namespace seqrec
