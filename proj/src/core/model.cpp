// Copyright (c) 2026 the seqrec authors
// SPDX-License-Identifier: Apache-2.0

#include "core/model.hpp"

#include <cmath>
#include <unordered_map>

namespace seqrec {

std::string to_string(Causality c) { return c == Causality::AE ? "ae" : "ar"; }

Causality causality_from_string(const std::string& s) {
    if (s == "ae" || s == "AE") return Causality::AE;
    if (s == "ar" || s == "AR") return Causality::AR;
    throw ParseError("unknown causality '" + s + "' (expected 'ae' or 'ar')");
}

void ModelConfig::validate() const {
    if (hidden_size < 1 || num_layers < 1 || num_heads < 1 || max_len < 1) {
        throw ContractError("model config: sizes must be positive");
    }
    if (hidden_size % num_heads != 0) {
        throw ContractError("model config: hidden_size " + std::to_string(hidden_size) +
                            " not divisible by num_heads " + std::to_string(num_heads));
    }
    if (dropout_hidden < 0.0 || dropout_hidden >= 1.0 || dropout_attention < 0.0 ||
        dropout_attention >= 1.0) {
        throw ContractError("model config: dropout rates must be in [0,1)");
    }
    if (causality == Causality::AR && mask_probability.has_value()) {
        throw ContractError("model config: mask_probability is only valid for AE causality");
    }
    if (mask_probability && (*mask_probability <= 0.0 || *mask_probability >= 1.0)) {
        throw ContractError("model config: mask_probability must be in (0,1)");
    }
    if (local_window && *local_window < 1) {
        throw ContractError("model config: local_window must be >= 1");
    }
    if (local_heads != -1 && (local_heads < 0 || local_heads > num_heads)) {
        throw ContractError("model config: local_heads out of range");
    }
    if (sse_probability < 0.0 || sse_probability > 1.0) {
        throw ContractError("model config: sse_probability must be in [0,1]");
    }
    if (ffn_multiplier < 1) {
        throw ContractError("model config: ffn_multiplier must be >= 1");
    }
}

AttentionMask build_attention_mask(Causality causality, std::optional<int> local_window,
                                   const std::vector<bool>& padding_flags) {
    const std::size_t len = padding_flags.size();
    AttentionMask mask;
    mask.len = len;
    mask.attendable.assign(len * len, false);
    for (std::size_t t = 0; t < len; ++t) {
        if (padding_flags[t]) continue;  // padding attends to nothing
        for (std::size_t s = 0; s < len; ++s) {
            if (padding_flags[s]) continue;  // nothing attends to padding
            if (causality == Causality::AR && s > t) continue;
            if (local_window) {
                const std::size_t dist = t > s ? t - s : s - t;
                if (dist > static_cast<std::size_t>(*local_window)) continue;
            }
            mask.attendable[t * len + s] = true;
        }
        mask.attendable[t * len + t] = true;  // self is always available
    }
    return mask;
}

std::vector<int> apply_sse(const std::vector<int>& user_ids, double sse_probability, Rng& rng,
                           bool train, int num_users) {
    if (sse_probability < 0.0 || sse_probability > 1.0) {
        throw ContractError("apply_sse: probability must be in [0,1]");
    }
    if (!train || sse_probability == 0.0) return user_ids;
    std::vector<int> out = user_ids;
    for (auto& id : out) {
        if (rng.uniform() < sse_probability) {
            id = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(num_users)));
        }
    }
    return out;
}

namespace {

constexpr double kInitStd = 0.02;

}  // namespace

SelfAttentiveModel::SelfAttentiveModel(ModelConfig config, int num_items, int num_users,
                                       Rng& init_rng)
    : config_(std::move(config)), num_items_(num_items), num_users_(num_users) {
    config_.validate();
    if (num_items_ < 1) throw ContractError("model: need at least one item");
    if (config_.use_user_embedding && num_users_ < 1) {
        throw ContractError("model: user embeddings require at least one user");
    }

    const std::size_t h = static_cast<std::size_t>(config_.hidden_size);
    const std::size_t f = h * static_cast<std::size_t>(config_.ffn_multiplier);
    const std::size_t v = static_cast<std::size_t>(vocab_size());
    const std::size_t l = static_cast<std::size_t>(config_.max_len);

    auto add_param = [&](const std::string& name, Shape shape, bool zero_init = false,
                         double fill = 0.0) {
        Tensor t = zero_init ? Tensor::full(std::move(shape), fill, true)
                             : Tensor::randn(std::move(shape), kInitStd, init_rng, true);
        params_.push_back({name, std::move(t)});
    };

    add_param("embedding.item", {v, h});
    add_param("embedding.position", {l, h});
    if (config_.use_user_embedding) {
        add_param("embedding.user", {static_cast<std::size_t>(num_users_) + 1, h});
    }
    add_param("embedding.norm.gamma", {h}, true, 1.0);
    add_param("embedding.norm.beta", {h}, true, 0.0);
    for (int layer = 0; layer < config_.num_layers; ++layer) {
        const std::string p = "layer" + std::to_string(layer) + ".";
        add_param(p + "attn.wq", {h, h});
        add_param(p + "attn.bq", {h}, true);
        add_param(p + "attn.wk", {h, h});
        add_param(p + "attn.bk", {h}, true);
        add_param(p + "attn.wv", {h, h});
        add_param(p + "attn.bv", {h}, true);
        add_param(p + "attn.wo", {h, h});
        add_param(p + "attn.bo", {h}, true);
        add_param(p + "norm1.gamma", {h}, true, 1.0);
        add_param(p + "norm1.beta", {h}, true, 0.0);
        add_param(p + "ffn.w1", {h, f});
        add_param(p + "ffn.b1", {f}, true);
        add_param(p + "ffn.w2", {f, h});
        add_param(p + "ffn.b2", {h}, true);
        add_param(p + "norm2.gamma", {h}, true, 1.0);
        add_param(p + "norm2.beta", {h}, true, 0.0);
    }
    add_param("head.bias", {v}, true);
}

std::size_t SelfAttentiveModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
}

std::size_t SelfAttentiveModel::expected_parameter_count(const ModelConfig& config, int num_items,
                                                         int num_users) {
    const std::size_t h = static_cast<std::size_t>(config.hidden_size);
    const std::size_t f = h * static_cast<std::size_t>(config.ffn_multiplier);
    const std::size_t v = static_cast<std::size_t>(num_items) + 2;
    const std::size_t l = static_cast<std::size_t>(config.max_len);

    std::size_t n = v * h;  // item embedding (tied with the output head)
    n += l * h;             // positions
    if (config.use_user_embedding) n += (static_cast<std::size_t>(num_users) + 1) * h;
    n += 2 * h;  // embedding norm
    const std::size_t per_layer = 4 * (h * h + h)      // q, k, v, o projections
                                  + 2 * h              // norm1
                                  + (h * f + f)        // ffn in
                                  + (f * h + h)        // ffn out
                                  + 2 * h;             // norm2
    n += static_cast<std::size_t>(config.num_layers) * per_layer;
    n += v;  // output bias
    return n;
}

const Tensor& SelfAttentiveModel::param(const std::string& name) const {
    for (const auto& p : params_) {
        if (p.name == name) return p.tensor;
    }
    throw ContractError("model: unknown parameter '" + name + "'");
}

SelfAttentiveModel::HiddenResult SelfAttentiveModel::forward_hidden(
    const std::vector<std::vector<int>>& batch_ids, const std::vector<int>& user_ids,
    const ForwardOptions& options) const {
    const std::size_t b = batch_ids.size();
    const std::size_t l = static_cast<std::size_t>(config_.max_len);
    const std::size_t h = static_cast<std::size_t>(config_.hidden_size);
    const std::size_t nh = static_cast<std::size_t>(config_.num_heads);
    const std::size_t d = h / nh;

    if (b == 0) throw ContractError("forward: empty batch");
    if (options.train && options.rng == nullptr) {
        throw ContractError("forward: training mode requires an rng");
    }

    std::vector<int> flat_ids;
    flat_ids.reserve(b * l);
    std::vector<bool> pad_flags(b * l, false);
    for (std::size_t i = 0; i < b; ++i) {
        if (batch_ids[i].size() != l) {
            throw ContractError("forward: row " + std::to_string(i) + " has length " +
                                std::to_string(batch_ids[i].size()) + ", expected " +
                                std::to_string(l));
        }
        for (std::size_t t = 0; t < l; ++t) {
            const int id = batch_ids[i][t];
            if (id < 0 || id > num_items_ + 1) {
                throw ContractError("forward: id " + std::to_string(id) + " out of range [0," +
                                    std::to_string(num_items_ + 1) + "]");
            }
            if (id == mask_id() && config_.causality == Causality::AR) {
                throw ContractError("forward: mask token is only valid for AE models");
            }
            flat_ids.push_back(id);
            pad_flags[i * l + t] = id == pad_id();
        }
    }

    std::vector<int> users = user_ids;
    if (config_.use_user_embedding) {
        if (users.size() != b) {
            throw ContractError("forward: user embeddings enabled but got " +
                                std::to_string(users.size()) + " user ids for batch " +
                                std::to_string(b));
        }
        for (int u : users) {
            if (u < 1 || u > num_users_) {
                throw ContractError("forward: user id " + std::to_string(u) + " out of range");
            }
        }
        if (options.train && config_.sse_probability > 0.0) {
            users = apply_sse(users, config_.sse_probability, *options.rng, true, num_users_);
        }
    }

    Rng* rng = options.rng;
    const bool train = options.train;

    // Embeddings: items + positions (+ user), then norm and dropout.
    Tensor x = embedding_gather(param("embedding.item"), flat_ids);  // [B*L, H]
    Tensor pos_flat = reshape(param("embedding.position"), {l * h});
    x = add_bias(reshape(x, {b, l * h}), pos_flat);
    x = reshape(x, {b, l, h});
    if (config_.use_user_embedding) {
        x = add_per_batch(x, embedding_gather(param("embedding.user"), users));
    }
    x = layer_norm(x, param("embedding.norm.gamma"), param("embedding.norm.beta"));
    if (train) x = dropout(x, config_.dropout_hidden, *rng, true);

    // Additive attention masks, cached per distinct non-padding prefix and
    // expanded over heads. Windowed heads are 0..local_heads-1 when a local
    // window is configured (-1 means every head).
    const int windowed_heads =
        config_.local_window ? (config_.local_heads == -1 ? config_.num_heads : config_.local_heads)
                             : 0;
    std::unordered_map<std::size_t, std::vector<double>> global_cache, local_cache;
    auto additive_for = [&](const std::vector<bool>& flags, bool windowed) -> const std::vector<double>& {
        std::size_t pad_count = 0;
        for (bool f : flags) pad_count += f ? 1 : 0;
        auto& cache = windowed ? local_cache : global_cache;
        auto it = cache.find(pad_count);
        if (it != cache.end()) return it->second;
        const AttentionMask m = build_attention_mask(
            config_.causality, windowed ? config_.local_window : std::nullopt, flags);
        std::vector<double> values(l * l);
        for (std::size_t i = 0; i < l * l; ++i) values[i] = m.attendable[i] ? 0.0 : kMaskValue;
        return cache.emplace(pad_count, std::move(values)).first->second;
    };

    std::vector<double> mask_values(b * nh * l * l);
    for (std::size_t i = 0; i < b; ++i) {
        std::vector<bool> flags(pad_flags.begin() + static_cast<std::ptrdiff_t>(i * l),
                                pad_flags.begin() + static_cast<std::ptrdiff_t>((i + 1) * l));
        for (std::size_t head = 0; head < nh; ++head) {
            const auto& values = additive_for(flags, head < static_cast<std::size_t>(windowed_heads));
            std::copy(values.begin(), values.end(),
                      mask_values.begin() + static_cast<std::ptrdiff_t>(((i * nh) + head) * l * l));
        }
    }
    Tensor additive_mask = Tensor::from_values({b * nh, l, l}, std::move(mask_values));

    HiddenResult result;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    for (int layer = 0; layer < config_.num_layers; ++layer) {
        const std::string p = "layer" + std::to_string(layer) + ".";
        Tensor flat = reshape(x, {b * l, h});
        Tensor q = reshape(add_bias(matmul(flat, param(p + "attn.wq")), param(p + "attn.bq")), {b, l, h});
        Tensor k = reshape(add_bias(matmul(flat, param(p + "attn.wk")), param(p + "attn.bk")), {b, l, h});
        Tensor v = reshape(add_bias(matmul(flat, param(p + "attn.wv")), param(p + "attn.bv")), {b, l, h});

        Tensor scores = scale(bmm_nt(split_heads(q, nh), split_heads(k, nh)), inv_sqrt_d);
        Tensor probs = softmax_rows(add(scores, additive_mask));

        if (options.capture_attention) {
            const auto& pv = probs.values();
            for (std::size_t i = 0; i < b; ++i) {
                std::size_t pads = 0;
                for (std::size_t t = 0; t < l; ++t) pads += pad_flags[i * l + t] ? 1 : 0;
                const std::size_t n = l - pads;
                if (n == 0) continue;
                for (std::size_t head = 0; head < nh; ++head) {
                    AttentionCaptureEntry entry;
                    entry.layer = layer;
                    entry.head = static_cast<int>(head);
                    entry.batch_row = i;
                    entry.len = n;
                    entry.matrix.resize(n * n);
                    const double* base = pv.data() + ((i * nh) + head) * l * l;
                    for (std::size_t t = 0; t < n; ++t)
                        for (std::size_t s = 0; s < n; ++s)
                            entry.matrix[t * n + s] = base[(l - n + t) * l + (l - n + s)];
                    result.captures.push_back(std::move(entry));
                }
            }
        }

        if (train) probs = dropout(probs, config_.dropout_attention, *rng, true);
        Tensor merged = merge_heads(bmm(probs, split_heads(v, nh)), nh, b);
        Tensor attn_out = add_bias(matmul(reshape(merged, {b * l, h}), param(p + "attn.wo")),
                                   param(p + "attn.bo"));
        attn_out = reshape(attn_out, {b, l, h});
        if (train) attn_out = dropout(attn_out, config_.dropout_hidden, *rng, true);
        x = layer_norm(add(x, attn_out), param(p + "norm1.gamma"), param(p + "norm1.beta"));

        Tensor ffn_in = reshape(x, {b * l, h});
        Tensor ffn_h = gelu(add_bias(matmul(ffn_in, param(p + "ffn.w1")), param(p + "ffn.b1")));
        Tensor ffn_out = add_bias(matmul(ffn_h, param(p + "ffn.w2")), param(p + "ffn.b2"));
        ffn_out = reshape(ffn_out, {b, l, h});
        if (train) ffn_out = dropout(ffn_out, config_.dropout_hidden, *rng, true);
        x = layer_norm(add(x, ffn_out), param(p + "norm2.gamma"), param(p + "norm2.beta"));
    }

    result.hidden = std::move(x);
    return result;
}

Tensor SelfAttentiveModel::forward_logits(const std::vector<std::vector<int>>& batch_ids,
                                          const std::vector<int>& user_ids,
                                          const ForwardOptions& options,
                                          std::vector<AttentionCaptureEntry>* captures) const {
    HiddenResult hr = forward_hidden(batch_ids, user_ids, options);
    if (captures) *captures = std::move(hr.captures);
    const std::size_t b = batch_ids.size();
    const std::size_t l = static_cast<std::size_t>(config_.max_len);
    std::vector<int> all_rows(b * l);
    for (std::size_t i = 0; i < all_rows.size(); ++i) all_rows[i] = static_cast<int>(i);
    Tensor logits = logits_for_rows(hr.hidden, all_rows);
    return reshape(logits, {b, l, static_cast<std::size_t>(vocab_size())});
}

Tensor SelfAttentiveModel::logits_for_rows(const Tensor& hidden,
                                           const std::vector<int>& flat_rows) const {
    const std::size_t h = static_cast<std::size_t>(config_.hidden_size);
    Tensor flat = reshape(hidden, {hidden.size() / h, h});
    Tensor selected = select_rows(flat, flat_rows);
    return add_bias(matmul_nt(selected, param("embedding.item")), param("head.bias"));
}

}  // namespace seqrec
