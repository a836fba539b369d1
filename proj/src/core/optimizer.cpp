// Copyright (c) 2026 the seqrec authors
// SPDX-License-Identifier: Apache-2.0

#include "core/optimizer.hpp"

#include <cmath>

namespace seqrec {

double LrSchedule::factor(std::int64_t step) const {
    double f = 1.0;
    if (warmup_enabled && warmup_steps > 0) {
        f *= std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup_steps));
    }
    if (decay_enabled && max_steps > 0) {
        const std::int64_t past_warmup =
            warmup_enabled ? std::max<std::int64_t>(0, step - warmup_steps) : step;
        f *= std::max(0.0, 1.0 - static_cast<double>(past_warmup) / static_cast<double>(max_steps));
    }
    return f;
}

AdamOptimizer::AdamOptimizer(LrSchedule schedule, double weight_decay, double beta1, double beta2,
                             double eps)
    : schedule_(schedule), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(ParameterList& params) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i].tensor.size(), 0.0);
            v_[i].assign(params[i].tensor.size(), 0.0);
        }
    }
    if (m_.size() != params.size()) {
        throw ContractError("adam: parameter list changed size between steps");
    }

    ++step_count_;
    const double lr = schedule_.base_lr * schedule_.factor(step_count_);
    last_lr_ = lr;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& t = params[i].tensor;
        if (!t.has_grad()) continue;
        auto& values = t.values();
        const auto& grad = t.grad();
        auto& m = m_[i];
        auto& v = v_[i];
        if (m.size() != values.size()) {
            throw ContractError("adam: moment buffer shape mismatch for " + params[i].name);
        }
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double g = grad[j];
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            values[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
            if (weight_decay_ > 0.0) values[j] -= lr * weight_decay_ * values[j];
        }
    }
}

void AdamOptimizer::zero_grad(ParameterList& params) {
    for (auto& p : params) p.tensor.zero_grad();
}

void assign_parameter_values(ParameterList& dst, const ParameterList& src) {
    for (auto& d : dst) {
        const Parameter* found = nullptr;
        for (const auto& s : src) {
            if (s.name == d.name) {
                found = &s;
                break;
            }
        }
        if (!found) throw ContractError("assign_parameter_values: missing '" + d.name + "'");
        if (found->tensor.shape() != d.tensor.shape()) {
            throw ContractError("assign_parameter_values: shape mismatch for '" + d.name + "'");
        }
        d.tensor.values() = found->tensor.values();
        d.tensor.zero_grad();
    }
}

}  // namespace seqrec
