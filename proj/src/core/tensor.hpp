// Copyright (c) 2026 the seqrec authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense f64 tensors with reverse-mode differentiation. Each operation builds
// a node in a per-trial computation graph; backward() walks the graph in
// reverse creation order and accumulates gradients into every reachable
// tensor that requires them. Gradients persist across backward() calls until
// zero_grad() so multi-loss accumulation works.
//
// All arithmetic is double precision. GEMM kernels are delegated to Eigen
// maps over the row-major buffers; every other kernel is written out here.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace seqrec {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// Additive attention-mask sentinel. A large negative constant rather than a
// literal -inf keeps softmax backward NaN-free; softmax treats anything at or
// below kMaskThreshold as excluded and emits an exact 0 there.
constexpr double kMaskValue = -1e9;
constexpr double kMaskThreshold = -1e8;

// Forward-op output scanning for NaN/Inf. On by default in debug builds;
// tests may toggle it at runtime.
bool debug_checks_enabled();
void set_debug_checks(bool enabled);

// While a guard is alive, ops produce plain values without graph edges.
// Used for evaluation against frozen parameters.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until first use
    bool requires_grad = false;
    std::uint64_t id = 0;
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::function<void(TensorNode&)> backward_fn;

    std::size_t size() const { return values.size(); }
    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

class Tensor {
public:
    Tensor() = default;

    static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value);
    static Tensor randn(Shape shape, double stddev, Rng& rng, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->values.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t ndim() const { return node_->shape.size(); }

    std::vector<double>& values() { return node_->values; }
    const std::vector<double>& values() const { return node_->values; }
    double* data() { return node_->values.data(); }
    const double* data() const { return node_->values.data(); }

    bool requires_grad() const { return node_->requires_grad; }
    std::vector<double>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::vector<double>& grad() const { return node_->grad; }
    bool has_grad() const { return node_->grad.size() == node_->values.size(); }
    void zero_grad() {
        if (!node_->grad.empty()) node_->grad.assign(node_->values.size(), 0.0);
    }

    // Value of a single-element tensor.
    double item() const;

    // Reverse-mode pass from a scalar. Accumulates into existing gradients.
    void backward();

    // Deep copy of values only; the copy is a detached leaf.
    Tensor clone_detached(bool requires_grad = false) const;

    TensorNode* node() const { return node_.get(); }
    std::shared_ptr<TensorNode> node_ptr() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<TensorNode> node_;

    friend Tensor make_op_output(Shape shape, std::vector<double> values,
                                 std::vector<Tensor> inputs,
                                 std::function<void(TensorNode&)> backward_fn,
                                 const char* op_name);
};

// --- elementwise ---
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor gelu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor neg(const Tensor& x);

// out = mask ? value : x. Gradient is blocked at masked positions.
Tensor masked_fill(const Tensor& x, const std::vector<bool>& mask, double value);

// --- broadcasts ---
// a: [N, D] (or any [rows, D] flattening), bias: [D]; bias added to each row.
Tensor add_bias(const Tensor& a, const Tensor& bias);
// a: [B, L, H], per: [B, H]; per-batch vector added to all L positions.
Tensor add_per_batch(const Tensor& a, const Tensor& per);
// a: [P, K], col: [P]; out[p, j] = a[p, j] - col[p].
Tensor sub_col_broadcast(const Tensor& a, const Tensor& col);

// --- linear algebra ---
Tensor matmul(const Tensor& a, const Tensor& b);     // [M,K] x [K,N]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [M,K] x [N,K]^T
Tensor bmm(const Tensor& a, const Tensor& b);        // [B,M,K] x [B,K,N]
Tensor bmm_nt(const Tensor& a, const Tensor& b);     // [B,M,K] x [B,N,K]^T

// --- shape ---
Tensor reshape(const Tensor& x, Shape new_shape);
// [B, L, H] -> [B*num_heads, L, H/num_heads] and back.
Tensor split_heads(const Tensor& x, std::size_t num_heads);
Tensor merge_heads(const Tensor& x, std::size_t num_heads, std::size_t batch);

// --- normalization & regularization ---
// Softmax over the last axis with max-subtraction. Entries at or below
// kMaskThreshold are excluded and come out exactly 0; a fully excluded row
// comes out all zeros.
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-8);
// Inverted dropout; identity when train is false or p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool train);

// --- gather/scatter ---
// table: [R, D], ids: N entries in [0, R); out: [N, D]. Backward scatter-adds.
Tensor embedding_gather(const Tensor& table, const std::vector<int>& ids);
// x: [N, D]; out: [P, D] with out[p] = x[rows[p]].
Tensor select_rows(const Tensor& x, const std::vector<int>& rows);
// x: [P, D], table: [R, D], ids: P*k entries; out[p, j] = dot(x[p], table[ids[p*k+j]]).
Tensor rows_dot_gather(const Tensor& x, const Tensor& table, const std::vector<int>& ids,
                       std::size_t k);

// --- reductions & losses ---
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// logits: [P, C], targets: P class indices. Mean of per-row negative
// log-softmax at the target. Rows are stabilized by max subtraction;
// candidates excluded with kMaskValue contribute nothing.
Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int>& targets);

}  // namespace seqrec
