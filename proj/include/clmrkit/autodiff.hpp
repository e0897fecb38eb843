#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "clmrkit/rng.hpp"

// Reverse-mode automatic differentiation on dense float32 tensors. Ops build
// a dynamic DAG of shared nodes; backward() walks it in reverse topological
// order. Reductions accumulate in float64. Only what the encoder, projector,
// probes and losses need — no broadcasting zoo, no graph rewriting.

namespace clmrkit::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    std::vector<int64_t> shape;
    std::vector<float> data;
    std::vector<float> grad; // allocated lazily, same numel as data
    bool requires_grad = false;

    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn; // reads own grad, accumulates into parents

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<int64_t> shape, float value, bool requires_grad = false);
    static Tensor from_data(std::vector<int64_t> shape, std::vector<float> data,
                            bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int64_t>& shape() const { return node_->shape; }
    int64_t dim(size_t i) const { return node_->shape[i]; }
    int64_t ndim() const { return static_cast<int64_t>(node_->shape.size()); }
    int64_t numel() const { return node_->numel(); }

    std::vector<float>& data() { return node_->data; }
    const std::vector<float>& data() const { return node_->data; }
    std::vector<float>& grad() { node_->ensure_grad(); return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }
    void zero_grad() { if (!node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0f); }

    float item() const; // scalar tensors only

    NodePtr node() const { return node_; }

private:
    NodePtr node_;
};

// Thread-local switch; ops record no graph while disabled.
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    bool previous;
};

// Builds an op node. requires_grad is derived from the parents and the grad
// mode; when false, parents and the backward function are dropped.
Tensor make_op(std::vector<int64_t> shape, std::vector<float> data, std::vector<Tensor> parents,
               std::function<void(Node&)> backward);

// ---- elementwise / reduction ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// ---- shaped ops ----
// x [B, in], w [out, in], b [out] -> [B, out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
// input [B, C_in, L], weight [C_out, C_in, K], bias [C_out]; valid, no padding
Tensor conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride);
// zero padding along the last axis
Tensor pad1d(const Tensor& x, int64_t left, int64_t right);
// non-overlapping windows, ties to the lowest index; trailing remainder dropped
Tensor maxpool1d(const Tensor& x, int pool);
// [B, C, L] -> [B, C]
Tensor global_avg_pool(const Tensor& x);

struct BatchNormStats {
    Tensor running_mean; // [C], no grad
    Tensor running_var;  // [C], no grad
    static BatchNormStats make(int64_t channels);
};

// Per-channel over batch x length. Train mode normalizes with batch moments
// and updates running stats; eval mode uses the running stats.
Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormStats& stats, bool training, double momentum = 0.1,
                   double eps = 1e-5);

// Numerically stable sigmoid + binary cross-entropy, mean over all entries.
Tensor bce_with_logits(const Tensor& logits, const std::vector<float>& targets);

// Populates grads of every requires_grad tensor reachable from the scalar loss.
void backward(const Tensor& loss);

// ---- init / optimizer ----
Tensor kaiming_init(std::vector<int64_t> shape, int64_t fan_in, Rng& rng);

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig cfg);
    void step();
    void zero_grad();
    int64_t step_count() const { return step_count_; }

private:
    std::vector<Tensor> params_;
    AdamConfig cfg_;
    int64_t step_count_ = 0;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
};

} // namespace clmrkit::ad
