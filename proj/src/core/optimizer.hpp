// Copyright (c) 2026 the seqrec authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace seqrec {

// A named learnable tensor. Models keep parameters in declaration order so
// optimizer passes and checkpoints are deterministic.
struct Parameter {
    std::string name;
    Tensor tensor;
};

using ParameterList = std::vector<Parameter>;

// Copies values from src into dst by name; every dst parameter must be
// present in src with an identical shape.
void assign_parameter_values(ParameterList& dst, const ParameterList& src);

// Learning-rate schedule switches. Warm-up ramps linearly from zero over
// warmup_steps; decay then ramps linearly to zero over max_steps more
// updates. Either side can be disabled independently so the standard
// (constant-rate) and augmented training environments share one optimizer.
struct LrSchedule {
    double base_lr = 1e-3;
    bool warmup_enabled = false;
    std::int64_t warmup_steps = 0;
    bool decay_enabled = false;
    std::int64_t max_steps = 0;

    // Effective multiplier at a 1-based step count.
    double factor(std::int64_t step) const;
};

// Adam with optional decoupled weight decay (applied directly to the
// weights, scaled by the effective learning rate, never through the
// moment estimates).
class AdamOptimizer {
public:
    AdamOptimizer(LrSchedule schedule, double weight_decay = 0.0, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);

    // One update over every parameter with a populated gradient.
    void step(ParameterList& params);

    void zero_grad(ParameterList& params);

    std::int64_t step_count() const { return step_count_; }
    double last_effective_lr() const { return last_lr_; }

private:
    LrSchedule schedule_;
    double weight_decay_;
    double beta1_, beta2_, eps_;
    std::int64_t step_count_ = 0;
    double last_lr_ = 0.0;
    // Moment buffers keyed by parameter position; shapes fixed at first step.
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

}  // namespace seqrec
