// Copyright (c) 2026 the seqrec authors
// SPDX-License-Identifier: Apache-2.0

#include "core/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace seqrec {

namespace {

std::atomic<std::uint64_t> g_node_counter{0};

thread_local bool g_grad_enabled = true;

#ifdef NDEBUG
bool g_debug_checks = false;
#else
bool g_debug_checks = true;
#endif

std::size_t shape_product(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

inline double sigmoid(double x) {
    if (x >= 0.0) {
        const double z = std::exp(-x);
        return 1.0 / (1.0 + z);
    }
    const double z = std::exp(x);
    return z / (1.0 + z);
}

inline double softplus_stable(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double norm_cdf(double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)); }
inline double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ContractError(std::string(op) + ": shape mismatch: " + shape_str(a.shape()) +
                            " vs " + shape_str(b.shape()));
    }
}

}  // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

bool debug_checks_enabled() { return g_debug_checks; }
void set_debug_checks(bool enabled) { g_debug_checks = enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_op_output(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                      std::function<void(TensorNode&)> backward_fn, const char* op_name) {
    if (values.size() != shape_product(shape)) {
        throw ContractError(std::string(op_name) + ": internal size mismatch");
    }
    if (debug_checks_enabled()) {
        for (double v : values) {
            if (!std::isfinite(v)) {
                throw ContractError(std::string(op_name) + ": non-finite value in output");
            }
        }
    }
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->id = g_node_counter.fetch_add(1, std::memory_order_relaxed);
    bool needs_grad = false;
    if (g_grad_enabled) {
        for (const auto& in : inputs) {
            if (in.defined() && in.requires_grad()) {
                needs_grad = true;
                break;
            }
        }
    }
    if (needs_grad) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (const auto& in : inputs) node->inputs.push_back(in.node_ptr());
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
    if (values.size() != shape_product(shape)) {
        throw ContractError("from_values: " + std::to_string(values.size()) +
                            " values for shape " + shape_str(shape));
    }
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->requires_grad = requires_grad;
    node->id = g_node_counter.fetch_add(1, std::memory_order_relaxed);
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return from_values(shape, std::vector<double>(shape_product(shape), 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    return from_values(shape, std::vector<double>(shape_product(shape), value), requires_grad);
}

Tensor Tensor::scalar(double value) { return from_values({1}, {value}); }

Tensor Tensor::randn(Shape shape, double stddev, Rng& rng, bool requires_grad) {
    std::vector<double> v(shape_product(shape));
    for (auto& x : v) x = rng.normal() * stddev;
    return from_values(std::move(shape), std::move(v), requires_grad);
}

double Tensor::item() const {
    if (size() != 1) throw ContractError("item: tensor has shape " + shape_str(shape()));
    return node_->values[0];
}

Tensor Tensor::clone_detached(bool requires_grad) const {
    return from_values(shape(), values(), requires_grad);
}

void Tensor::backward() {
    if (size() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " + shape_str(shape()));
    }
    if (!node_->requires_grad) return;

    // Collect ancestors, then run in reverse creation order so every
    // consumer finishes before its producers.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<TensorNode*> stack{node_.get()};
    seen.insert(node_.get());
    while (!stack.empty()) {
        TensorNode* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& in : n->inputs) {
            if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
        }
    }
    std::sort(order.begin(), order.end(),
              [](const TensorNode* a, const TensorNode* b) { return a->id > b->id; });

    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (TensorNode* n : order) {
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    auto an = a.node_ptr(), bn = b.node_ptr();
    return make_op_output(a.shape(), std::move(out), {a, b},
                          [an, bn](TensorNode& o) {
                              if (an->requires_grad) {
                                  an->ensure_grad();
                                  for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
                              }
                              if (bn->requires_grad) {
                                  bn->ensure_grad();
                                  for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] += o.grad[i];
                              }
                          },
                          "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    auto an = a.node_ptr(), bn = b.node_ptr();
    return make_op_output(a.shape(), std::move(out), {a, b},
                          [an, bn](TensorNode& o) {
                              if (an->requires_grad) {
                                  an->ensure_grad();
                                  for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
                              }
                              if (bn->requires_grad) {
                                  bn->ensure_grad();
                                  for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] -= o.grad[i];
                              }
                          },
                          "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    auto an = a.node_ptr(), bn = b.node_ptr();
    return make_op_output(a.shape(), std::move(out), {a, b},
                          [an, bn](TensorNode& o) {
                              if (an->requires_grad) {
                                  an->ensure_grad();
                                  for (std::size_t i = 0; i < o.grad.size(); ++i)
                                      an->grad[i] += o.grad[i] * bn->values[i];
                              }
                              if (bn->requires_grad) {
                                  bn->ensure_grad();
                                  for (std::size_t i = 0; i < o.grad.size(); ++i)
                                      bn->grad[i] += o.grad[i] * an->values[i];
                              }
                          },
                          "mul");
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    const auto& av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
    auto an = a.node_ptr();
    return make_op_output(a.shape(), std::move(out), {a},
                          [an, s](TensorNode& o) {
                              if (!an->requires_grad) return;
                              an->ensure_grad();
                              for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += s * o.grad[i];
                          },
                          "scale");
}

Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    const auto& av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + s;
    auto an = a.node_ptr();
    return make_op_output(a.shape(), std::move(out), {a},
                          [an](TensorNode& o) {
                              if (!an->requires_grad) return;
                              an->ensure_grad();
                              for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
                          },
                          "add_scalar");
}

Tensor gelu(const Tensor& x) {
    std::vector<double> out(x.size());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * norm_cdf(xv[i]);
    auto xn = x.node_ptr();
    return make_op_output(x.shape(), std::move(out), {x},
                          [xn](TensorNode& o) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < o.grad.size(); ++i) {
                                  const double v = xn->values[i];
                                  xn->grad[i] += o.grad[i] * (norm_cdf(v) + v * norm_pdf(v));
                              }
                          },
                          "gelu");
}

Tensor softplus(const Tensor& x) {
    std::vector<double> out(x.size());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = softplus_stable(xv[i]);
    auto xn = x.node_ptr();
    return make_op_output(x.shape(), std::move(out), {x},
                          [xn](TensorNode& o) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < o.grad.size(); ++i)
                                  xn->grad[i] += o.grad[i] * sigmoid(xn->values[i]);
                          },
                          "softplus");
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor masked_fill(const Tensor& x, const std::vector<bool>& mask, double value) {
    if (mask.size() != x.size()) {
        throw ContractError("masked_fill: mask size " + std::to_string(mask.size()) +
                            " vs tensor " + shape_str(x.shape()));
    }
    std::vector<double> out(x.size());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask[i] ? value : xv[i];
    auto xn = x.node_ptr();
    auto m = mask;
    return make_op_output(x.shape(), std::move(out), {x},
                          [xn, m = std::move(m)](TensorNode& o) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < o.grad.size(); ++i)
                                  if (!m[i]) xn->grad[i] += o.grad[i];
                          },
                          "masked_fill");
}

// ----------------------------------------------------------------- broadcasts

Tensor add_bias(const Tensor& a, const Tensor& bias) {
    const std::size_t d = bias.size();
    if (a.size() % d != 0) {
        throw ContractError("add_bias: bias " + shape_str(bias.shape()) +
                            " does not divide " + shape_str(a.shape()));
    }
    const std::size_t rows = a.size() / d;
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& bv = bias.values();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = av[r * d + j] + bv[j];
    auto an = a.node_ptr(), bn = bias.node_ptr();
    return make_op_output(a.shape(), std::move(out), {a, bias},
                          [an, bn, rows, d](TensorNode& o) {
                              if (an->requires_grad) {
                                  an->ensure_grad();
                                  for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
                              }
                              if (bn->requires_grad) {
                                  bn->ensure_grad();
                                  for (std::size_t r = 0; r < rows; ++r)
                                      for (std::size_t j = 0; j < d; ++j) bn->grad[j] += o.grad[r * d + j];
                              }
                          },
                          "add_bias");
}

Tensor add_per_batch(const Tensor& a, const Tensor& per) {
    if (a.ndim() != 3 || per.ndim() != 2 || a.dim(0) != per.dim(0) || a.dim(2) != per.dim(1)) {
        throw ContractError("add_per_batch: shapes " + shape_str(a.shape()) + " vs " +
                            shape_str(per.shape()));
    }
    const std::size_t b = a.dim(0), l = a.dim(1), h = a.dim(2);
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& pv = per.values();
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t t = 0; t < l; ++t)
            for (std::size_t j = 0; j < h; ++j)
                out[(i * l + t) * h + j] = av[(i * l + t) * h + j] + pv[i * h + j];
    auto an = a.node_ptr(), pn = per.node_ptr();
    return make_op_output(a.shape(), std::move(out), {a, per},
                          [an, pn, b, l, h](TensorNode& o) {
                              if (an->requires_grad) {
                                  an->ensure_grad();
                                  for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
                              }
                              if (pn->requires_grad) {
                                  pn->ensure_grad();
                                  for (std::size_t i = 0; i < b; ++i)
                                      for (std::size_t t = 0; t < l; ++t)
                                          for (std::size_t j = 0; j < h; ++j)
                                              pn->grad[i * h + j] += o.grad[(i * l + t) * h + j];
                              }
                          },
                          "add_per_batch");
}

Tensor sub_col_broadcast(const Tensor& a, const Tensor& col) {
    if (a.ndim() != 2 || col.size() != a.dim(0)) {
        throw ContractError("sub_col_broadcast: shapes " + shape_str(a.shape()) + " vs " +
                            shape_str(col.shape()));
    }
    const std::size_t p = a.dim(0), k = a.dim(1);
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& cv = col.values();
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < k; ++j) out[i * k + j] = av[i * k + j] - cv[i];
    auto an = a.node_ptr(), cn = col.node_ptr();
    return make_op_output(a.shape(), std::move(out), {a, col},
                          [an, cn, p, k](TensorNode& o) {
                              if (an->requires_grad) {
                                  an->ensure_grad();
                                  for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
                              }
                              if (cn->requires_grad) {
                                  cn->ensure_grad();
                                  for (std::size_t i = 0; i < p; ++i)
                                      for (std::size_t j = 0; j < k; ++j) cn->grad[i] -= o.grad[i * k + j];
                              }
                          },
                          "sub_col_broadcast");
}

// ------------------------------------------------------------- linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
        throw ContractError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                            shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n);
    {
        CMap A(a.data(), m, k), B(b.data(), k, n);
        Map C(out.data(), m, n);
        C.noalias() = A * B;
    }
    auto an = a.node_ptr(), bn = b.node_ptr();
    return make_op_output({m, n}, std::move(out), {a, b},
                          [an, bn, m, k, n](TensorNode& o) {
                              CMap G(o.grad.data(), m, n);
                              if (an->requires_grad) {
                                  an->ensure_grad();
                                  Map GA(an->grad.data(), m, k);
                                  CMap B(bn->values.data(), k, n);
                                  GA.noalias() += G * B.transpose();
                              }
                              if (bn->requires_grad) {
                                  bn->ensure_grad();
                                  Map GB(bn->grad.data(), k, n);
                                  CMap A(an->values.data(), m, k);
                                  GB.noalias() += A.transpose() * G;
                              }
                          },
                          "matmul");
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1)) {
        throw ContractError("matmul_nt: incompatible shapes " + shape_str(a.shape()) + " x " +
                            shape_str(b.shape()) + "^T");
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    std::vector<double> out(m * n);
    {
        CMap A(a.data(), m, k), B(b.data(), n, k);
        Map C(out.data(), m, n);
        C.noalias() = A * B.transpose();
    }
    auto an = a.node_ptr(), bn = b.node_ptr();
    return make_op_output({m, n}, std::move(out), {a, b},
                          [an, bn, m, k, n](TensorNode& o) {
                              CMap G(o.grad.data(), m, n);
                              if (an->requires_grad) {
                                  an->ensure_grad();
                                  Map GA(an->grad.data(), m, k);
                                  CMap B(bn->values.data(), n, k);
                                  GA.noalias() += G * B;
                              }
                              if (bn->requires_grad) {
                                  bn->ensure_grad();
                                  Map GB(bn->grad.data(), n, k);
                                  CMap A(an->values.data(), m, k);
                                  GB.noalias() += G.transpose() * A;
                              }
                          },
                          "matmul_nt");
}

namespace {

void check_bmm(const char* op, const Tensor& a, const Tensor& b, bool transposed) {
    const bool ok = a.ndim() == 3 && b.ndim() == 3 && a.dim(0) == b.dim(0) &&
                    (transposed ? a.dim(2) == b.dim(2) : a.dim(2) == b.dim(1));
    if (!ok) {
        throw ContractError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                            " x " + shape_str(b.shape()));
    }
}

}  // namespace

Tensor bmm(const Tensor& a, const Tensor& b) {
    check_bmm("bmm", a, b, false);
    const std::size_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    std::vector<double> out(bs * m * n);
    for (std::size_t i = 0; i < bs; ++i) {
        CMap A(a.data() + i * m * k, m, k), B(b.data() + i * k * n, k, n);
        Map C(out.data() + i * m * n, m, n);
        C.noalias() = A * B;
    }
    auto an = a.node_ptr(), bn = b.node_ptr();
    return make_op_output({bs, m, n}, std::move(out), {a, b},
                          [an, bn, bs, m, k, n](TensorNode& o) {
                              for (std::size_t i = 0; i < bs; ++i) {
                                  CMap G(o.grad.data() + i * m * n, m, n);
                                  if (an->requires_grad) {
                                      an->ensure_grad();
                                      Map GA(an->grad.data() + i * m * k, m, k);
                                      CMap B(bn->values.data() + i * k * n, k, n);
                                      GA.noalias() += G * B.transpose();
                                  }
                                  if (bn->requires_grad) {
                                      bn->ensure_grad();
                                      Map GB(bn->grad.data() + i * k * n, k, n);
                                      CMap A(an->values.data() + i * m * k, m, k);
                                      GB.noalias() += A.transpose() * G;
                                  }
                              }
                          },
                          "bmm");
}

Tensor bmm_nt(const Tensor& a, const Tensor& b) {
    check_bmm("bmm_nt", a, b, true);
    const std::size_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
    std::vector<double> out(bs * m * n);
    for (std::size_t i = 0; i < bs; ++i) {
        CMap A(a.data() + i * m * k, m, k), B(b.data() + i * n * k, n, k);
        Map C(out.data() + i * m * n, m, n);
        C.noalias() = A * B.transpose();
    }
    auto an = a.node_ptr(), bn = b.node_ptr();
    return make_op_output({bs, m, n}, std::move(out), {a, b},
                          [an, bn, bs, m, k, n](TensorNode& o) {
                              for (std::size_t i = 0; i < bs; ++i) {
                                  CMap G(o.grad.data() + i * m * n, m, n);
                                  if (an->requires_grad) {
                                      an->ensure_grad();
                                      Map GA(an->grad.data() + i * m * k, m, k);
                                      CMap B(bn->values.data() + i * n * k, n, k);
                                      GA.noalias() += G * B;
                                  }
                                  if (bn->requires_grad) {
                                      bn->ensure_grad();
                                      Map GB(bn->grad.data() + i * n * k, n, k);
                                      CMap A(an->values.data() + i * m * k, m, k);
                                      GB.noalias() += G.transpose() * A;
                                  }
                              }
                          },
                          "bmm_nt");
}

// ------------------------------------------------------------------- reshapes

Tensor reshape(const Tensor& x, Shape new_shape) {
    if (shape_product(new_shape) != x.size()) {
        throw ContractError("reshape: " + shape_str(x.shape()) + " to " + shape_str(new_shape));
    }
    std::vector<double> out = x.values();
    auto xn = x.node_ptr();
    return make_op_output(std::move(new_shape), std::move(out), {x},
                          [xn](TensorNode& o) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < o.grad.size(); ++i) xn->grad[i] += o.grad[i];
                          },
                          "reshape");
}

Tensor split_heads(const Tensor& x, std::size_t num_heads) {
    if (x.ndim() != 3 || x.dim(2) % num_heads != 0) {
        throw ContractError("split_heads: shape " + shape_str(x.shape()) + " with " +
                            std::to_string(num_heads) + " heads");
    }
    const std::size_t b = x.dim(0), l = x.dim(1), hd = x.dim(2), d = hd / num_heads;
    std::vector<double> out(x.size());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t h = 0; h < num_heads; ++h)
            for (std::size_t t = 0; t < l; ++t)
                for (std::size_t j = 0; j < d; ++j)
                    out[((i * num_heads + h) * l + t) * d + j] = xv[(i * l + t) * hd + h * d + j];
    auto xn = x.node_ptr();
    return make_op_output({b * num_heads, l, d}, std::move(out), {x},
                          [xn, b, l, hd, d, num_heads](TensorNode& o) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < b; ++i)
                                  for (std::size_t h = 0; h < num_heads; ++h)
                                      for (std::size_t t = 0; t < l; ++t)
                                          for (std::size_t j = 0; j < d; ++j)
                                              xn->grad[(i * l + t) * hd + h * d + j] +=
                                                  o.grad[((i * num_heads + h) * l + t) * d + j];
                          },
                          "split_heads");
}

Tensor merge_heads(const Tensor& x, std::size_t num_heads, std::size_t batch) {
    if (x.ndim() != 3 || x.dim(0) != batch * num_heads) {
        throw ContractError("merge_heads: shape " + shape_str(x.shape()) + " with " +
                            std::to_string(num_heads) + " heads, batch " + std::to_string(batch));
    }
    const std::size_t l = x.dim(1), d = x.dim(2), hd = num_heads * d;
    std::vector<double> out(x.size());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t h = 0; h < num_heads; ++h)
            for (std::size_t t = 0; t < l; ++t)
                for (std::size_t j = 0; j < d; ++j)
                    out[(i * l + t) * hd + h * d + j] = xv[((i * num_heads + h) * l + t) * d + j];
    auto xn = x.node_ptr();
    return make_op_output({batch, l, hd}, std::move(out), {x},
                          [xn, batch, l, d, hd, num_heads](TensorNode& o) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < batch; ++i)
                                  for (std::size_t h = 0; h < num_heads; ++h)
                                      for (std::size_t t = 0; t < l; ++t)
                                          for (std::size_t j = 0; j < d; ++j)
                                              xn->grad[((i * num_heads + h) * l + t) * d + j] +=
                                                  o.grad[(i * l + t) * hd + h * d + j];
                          },
                          "merge_heads");
}

// ------------------------------------------------- normalization & regularizers

Tensor softmax_rows(const Tensor& x) {
    if (x.ndim() == 0 || x.shape().back() == 0) {
        throw ContractError("softmax_rows: empty last axis in " + shape_str(x.shape()));
    }
    const std::size_t c = x.shape().back();
    const std::size_t rows = x.size() / c;
    std::vector<double> out(x.size());
    const auto& xv = x.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * c;
        double* orow = out.data() + r * c;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c; ++j)
            if (row[j] > kMaskThreshold && row[j] > mx) mx = row[j];
        if (!std::isfinite(mx)) {
            // Fully excluded row: attends to nothing.
            for (std::size_t j = 0; j < c; ++j) orow[j] = 0.0;
            continue;
        }
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            if (row[j] > kMaskThreshold) {
                orow[j] = std::exp(row[j] - mx);
                total += orow[j];
            } else {
                orow[j] = 0.0;
            }
        }
        for (std::size_t j = 0; j < c; ++j) orow[j] /= total;
    }
    auto xn = x.node_ptr();
    auto probs = out;  // kept for backward
    return make_op_output(x.shape(), std::move(out), {x},
                          [xn, c, rows, probs = std::move(probs)](TensorNode& o) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              for (std::size_t r = 0; r < rows; ++r) {
                                  const double* p = probs.data() + r * c;
                                  const double* g = o.grad.data() + r * c;
                                  double dot = 0.0;
                                  for (std::size_t j = 0; j < c; ++j) dot += g[j] * p[j];
                                  double* gx = xn->grad.data() + r * c;
                                  for (std::size_t j = 0; j < c; ++j) gx[j] += p[j] * (g[j] - dot);
                              }
                          },
                          "softmax_rows");
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const std::size_t d = x.shape().back();
    if (gamma.size() != d || beta.size() != d) {
        throw ContractError("layer_norm: affine shapes " + shape_str(gamma.shape()) + "/" +
                            shape_str(beta.shape()) + " vs last dim " + std::to_string(d));
    }
    const std::size_t rows = x.size() / d;
    std::vector<double> out(x.size());
    std::vector<double> xhat(x.size());
    std::vector<double> inv_std(rows);
    const auto& xv = x.values();
    const auto& gv = gamma.values();
    const auto& bv = beta.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * d;
        double mean_v = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean_v += row[j];
        mean_v /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = row[j] - mean_v;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (row[j] - mean_v) * is;
            xhat[r * d + j] = h;
            out[r * d + j] = gv[j] * h + bv[j];
        }
    }
    auto xn = x.node_ptr(), gn = gamma.node_ptr(), bn = beta.node_ptr();
    return make_op_output(
        x.shape(), std::move(out), {x, gamma, beta},
        [xn, gn, bn, rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorNode& o) {
            const auto& gv = gn->values;
            for (std::size_t r = 0; r < rows; ++r) {
                const double* g = o.grad.data() + r * d;
                const double* h = xhat.data() + r * d;
                if (gn->requires_grad) {
                    gn->ensure_grad();
                    for (std::size_t j = 0; j < d; ++j) gn->grad[j] += g[j] * h[j];
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    for (std::size_t j = 0; j < d; ++j) bn->grad[j] += g[j];
                }
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    double mean_dh = 0.0, mean_dhh = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dh = g[j] * gv[j];
                        mean_dh += dh;
                        mean_dhh += dh * h[j];
                    }
                    mean_dh /= static_cast<double>(d);
                    mean_dhh /= static_cast<double>(d);
                    double* gx = xn->grad.data() + r * d;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dh = g[j] * gv[j];
                        gx[j] += inv_std[r] * (dh - mean_dh - h[j] * mean_dhh);
                    }
                }
            }
        },
        "layer_norm");
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool train) {
    if (p < 0.0 || p >= 1.0) throw ContractError("dropout: p must be in [0,1), got " + std::to_string(p));
    if (!train || p == 0.0) return x;
    const double inv_keep = 1.0 / (1.0 - p);
    std::vector<char> keep(x.size());
    std::vector<double> out(x.size());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        keep[i] = rng.uniform() >= p ? 1 : 0;
        out[i] = keep[i] ? xv[i] * inv_keep : 0.0;
    }
    auto xn = x.node_ptr();
    return make_op_output(x.shape(), std::move(out), {x},
                          [xn, inv_keep, keep = std::move(keep)](TensorNode& o) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < o.grad.size(); ++i)
                                  if (keep[i]) xn->grad[i] += o.grad[i] * inv_keep;
                          },
                          "dropout");
}

// ------------------------------------------------------------- gather/scatter

Tensor embedding_gather(const Tensor& table, const std::vector<int>& ids) {
    if (table.ndim() != 2) throw ContractError("embedding_gather: table must be 2-D");
    const std::size_t r = table.dim(0), d = table.dim(1);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= r) {
            throw ContractError("embedding_gather: id " + std::to_string(ids[i]) + " at position " +
                                std::to_string(i) + " out of range [0," + std::to_string(r) + ")");
        }
    }
    std::vector<double> out(ids.size() * d);
    const auto& tv = table.values();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const double* src = tv.data() + static_cast<std::size_t>(ids[i]) * d;
        std::copy(src, src + d, out.data() + i * d);
    }
    auto tn = table.node_ptr();
    auto idc = ids;
    return make_op_output({ids.size(), d}, std::move(out), {table},
                          [tn, d, idc = std::move(idc)](TensorNode& o) {
                              if (!tn->requires_grad) return;
                              tn->ensure_grad();
                              for (std::size_t i = 0; i < idc.size(); ++i) {
                                  double* dst = tn->grad.data() + static_cast<std::size_t>(idc[i]) * d;
                                  const double* g = o.grad.data() + i * d;
                                  for (std::size_t j = 0; j < d; ++j) dst[j] += g[j];
                              }
                          },
                          "embedding_gather");
}

Tensor select_rows(const Tensor& x, const std::vector<int>& rows) {
    if (x.ndim() != 2) throw ContractError("select_rows: input must be 2-D");
    const std::size_t n = x.dim(0), d = x.dim(1);
    for (int r : rows) {
        if (r < 0 || static_cast<std::size_t>(r) >= n) {
            throw ContractError("select_rows: row " + std::to_string(r) + " out of range [0," +
                                std::to_string(n) + ")");
        }
    }
    std::vector<double> out(rows.size() * d);
    const auto& xv = x.values();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double* src = xv.data() + static_cast<std::size_t>(rows[i]) * d;
        std::copy(src, src + d, out.data() + i * d);
    }
    auto xn = x.node_ptr();
    auto rc = rows;
    return make_op_output({rows.size(), d}, std::move(out), {x},
                          [xn, d, rc = std::move(rc)](TensorNode& o) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < rc.size(); ++i) {
                                  double* dst = xn->grad.data() + static_cast<std::size_t>(rc[i]) * d;
                                  const double* g = o.grad.data() + i * d;
                                  for (std::size_t j = 0; j < d; ++j) dst[j] += g[j];
                              }
                          },
                          "select_rows");
}

Tensor rows_dot_gather(const Tensor& x, const Tensor& table, const std::vector<int>& ids,
                       std::size_t k) {
    if (x.ndim() != 2 || table.ndim() != 2 || x.dim(1) != table.dim(1)) {
        throw ContractError("rows_dot_gather: shapes " + shape_str(x.shape()) + " vs " +
                            shape_str(table.shape()));
    }
    const std::size_t p = x.dim(0), d = x.dim(1), r = table.dim(0);
    if (ids.size() != p * k) {
        throw ContractError("rows_dot_gather: expected " + std::to_string(p * k) + " ids, got " +
                            std::to_string(ids.size()));
    }
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= r) {
            throw ContractError("rows_dot_gather: id " + std::to_string(id) + " out of range");
        }
    }
    std::vector<double> out(p * k);
    const auto& xv = x.values();
    const auto& tv = table.values();
    for (std::size_t i = 0; i < p; ++i) {
        const double* xr = xv.data() + i * d;
        for (std::size_t j = 0; j < k; ++j) {
            const double* tr = tv.data() + static_cast<std::size_t>(ids[i * k + j]) * d;
            double s = 0.0;
            for (std::size_t t = 0; t < d; ++t) s += xr[t] * tr[t];
            out[i * k + j] = s;
        }
    }
    auto xn = x.node_ptr(), tn = table.node_ptr();
    auto idc = ids;
    return make_op_output({p, k}, std::move(out), {x, table},
                          [xn, tn, p, d, k, idc = std::move(idc)](TensorNode& o) {
                              for (std::size_t i = 0; i < p; ++i) {
                                  for (std::size_t j = 0; j < k; ++j) {
                                      const double g = o.grad[i * k + j];
                                      const std::size_t id = static_cast<std::size_t>(idc[i * k + j]);
                                      if (xn->requires_grad) {
                                          xn->ensure_grad();
                                          double* gx = xn->grad.data() + i * d;
                                          const double* tr = tn->values.data() + id * d;
                                          for (std::size_t t = 0; t < d; ++t) gx[t] += g * tr[t];
                                      }
                                      if (tn->requires_grad) {
                                          tn->ensure_grad();
                                          double* gt = tn->grad.data() + id * d;
                                          const double* xr = xn->values.data() + i * d;
                                          for (std::size_t t = 0; t < d; ++t) gt[t] += g * xr[t];
                                      }
                                  }
                              }
                          },
                          "rows_dot_gather");
}

// --------------------------------------------------------- reductions & losses

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.values()) total += v;
    auto xn = x.node_ptr();
    return make_op_output({1}, {total}, {x},
                          [xn](TensorNode& o) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              const double g = o.grad[0];
                              for (auto& gv : xn->grad) gv += g;
                          },
                          "sum");
}

Tensor mean(const Tensor& x) {
    if (x.size() == 0) throw ContractError("mean: empty tensor");
    double total = 0.0;
    for (double v : x.values()) total += v;
    const double inv = 1.0 / static_cast<double>(x.size());
    auto xn = x.node_ptr();
    return make_op_output({1}, {total * inv}, {x},
                          [xn, inv](TensorNode& o) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              const double g = o.grad[0] * inv;
                              for (auto& gv : xn->grad) gv += g;
                          },
                          "mean");
}

Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int>& targets) {
    if (logits.ndim() != 2) throw ContractError("cross_entropy_mean: logits must be 2-D");
    const std::size_t p = logits.dim(0), c = logits.dim(1);
    if (targets.size() != p || p == 0) {
        throw ContractError("cross_entropy_mean: " + std::to_string(targets.size()) +
                            " targets for " + std::to_string(p) + " rows");
    }
    const auto& lv = logits.values();
    double total = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
        const int t = targets[i];
        if (t < 0 || static_cast<std::size_t>(t) >= c) {
            throw ContractError("cross_entropy_mean: target " + std::to_string(t) + " out of range");
        }
        const double* row = lv.data() + i * c;
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double lse = 0.0;
        for (std::size_t j = 0; j < c; ++j) lse += std::exp(row[j] - mx);
        total += std::log(lse) + mx - row[static_cast<std::size_t>(t)];
    }
    const double inv = 1.0 / static_cast<double>(p);
    auto ln = logits.node_ptr();
    auto tc = targets;
    return make_op_output({1}, {total * inv}, {logits},
                          [ln, p, c, inv, tc = std::move(tc)](TensorNode& o) {
                              if (!ln->requires_grad) return;
                              ln->ensure_grad();
                              const double g = o.grad[0] * inv;
                              for (std::size_t i = 0; i < p; ++i) {
                                  const double* row = ln->values.data() + i * c;
                                  double* grow = ln->grad.data() + i * c;
                                  double mx = row[0];
                                  for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
                                  double lse = 0.0;
                                  for (std::size_t j = 0; j < c; ++j) lse += std::exp(row[j] - mx);
                                  const double inv_lse = 1.0 / lse;
                                  for (std::size_t j = 0; j < c; ++j)
                                      grow[j] += g * std::exp(row[j] - mx) * inv_lse;
                                  grow[static_cast<std::size_t>(tc[i])] -= g;
                              }
                          },
                          "cross_entropy_mean");
}

}  // namespace seqrec
