#include "clmrkit/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "clmrkit/errors.hpp"
#include "clmrkit/parallel.hpp"

namespace clmrkit::ad {

namespace {

thread_local bool g_grad_enabled = true;

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) throw ShapeMismatch("non-positive dimension");
        n *= d;
    }
    return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeMismatch(std::string(op) + ": operand shapes differ");
}

void accumulate(Node& target, const std::vector<float>& delta) {
    target.ensure_grad();
    for (size_t i = 0; i < delta.size(); ++i) target.grad[i] += delta[i];
}

} // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous; }

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
    return from_data(std::move(shape), {}, requires_grad);
}

Tensor Tensor::full(std::vector<int64_t> shape, float value, bool requires_grad) {
    int64_t n = shape_numel(shape);
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data.assign(static_cast<size_t>(n), value);
    node->requires_grad = requires_grad;
    return Tensor(node);
}

Tensor Tensor::from_data(std::vector<int64_t> shape, std::vector<float> data,
                         bool requires_grad) {
    int64_t n = shape_numel(shape);
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    if (data.empty()) {
        node->data.assign(static_cast<size_t>(n), 0.0f);
    } else {
        if (static_cast<int64_t>(data.size()) != n)
            throw ShapeMismatch("data length does not match shape");
        node->data = std::move(data);
    }
    node->requires_grad = requires_grad;
    return Tensor(node);
}

float Tensor::item() const {
    if (numel() != 1) throw ShapeMismatch("item() on non-scalar tensor");
    return node_->data[0];
}

Tensor make_op(std::vector<int64_t> shape, std::vector<float> data, std::vector<Tensor> parents,
               std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    int64_t n = shape_numel(shape);
    if (static_cast<int64_t>(data.size()) != n)
        throw ShapeMismatch("make_op: data length does not match shape");
    node->shape = std::move(shape);
    node->data = std::move(data);
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) needs = needs || p.requires_grad();
    }
    node->requires_grad = needs;
    if (needs) {
        node->parents.reserve(parents.size());
        for (const auto& p : parents) node->parents.push_back(p.node());
        node->backward_fn = std::move(backward);
    }
    return Tensor(node);
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<float> out(a.data());
    const auto& bd = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
    NodePtr an = a.node(), bn = b.node();
    return make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
        if (an->requires_grad) accumulate(*an, self.grad);
        if (bn->requires_grad) accumulate(*bn, self.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<float> out(a.data());
    const auto& bd = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
    NodePtr an = a.node(), bn = b.node();
    return make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
        if (an->requires_grad) accumulate(*an, self.grad);
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<float> out(a.data());
    const auto& bd = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
    NodePtr an = a.node(), bn = b.node();
    return make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                an->grad[i] += self.grad[i] * bn->data[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                bn->grad[i] += self.grad[i] * an->data[i];
        }
    });
}

Tensor scale(const Tensor& x, double factor) {
    std::vector<float> out(x.data());
    for (float& v : out) v = static_cast<float>(v * factor);
    NodePtr xn = x.node();
    return make_op(x.shape(), std::move(out), {x}, [xn, factor](Node& self) {
        xn->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            xn->grad[i] += static_cast<float>(self.grad[i] * factor);
    });
}

Tensor relu(const Tensor& x) {
    std::vector<float> out(x.data());
    for (float& v : out) v = v > 0.0f ? v : 0.0f;
    NodePtr xn = x.node();
    return make_op(x.shape(), std::move(out), {x}, [xn](Node& self) {
        xn->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (xn->data[i] > 0.0f) xn->grad[i] += self.grad[i];
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<float> out(x.data().size());
    for (size_t i = 0; i < out.size(); ++i) {
        double v = x.data()[i];
        double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        out[i] = static_cast<float>(s);
    }
    NodePtr xn = x.node();
    return make_op(x.shape(), std::move(out), {x}, [xn](Node& self) {
        xn->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            double s = self.data[i];
            xn->grad[i] += static_cast<float>(self.grad[i] * s * (1.0 - s));
        }
    });
}

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    for (float v : x.data()) acc += v;
    NodePtr xn = x.node();
    return make_op({1}, {static_cast<float>(acc)}, {x}, [xn](Node& self) {
        xn->ensure_grad();
        float g = self.grad[0];
        for (float& v : xn->grad) v += g;
    });
}

Tensor mean_all(const Tensor& x) {
    double acc = 0.0;
    for (float v : x.data()) acc += v;
    double inv = 1.0 / static_cast<double>(x.numel());
    NodePtr xn = x.node();
    return make_op({1}, {static_cast<float>(acc * inv)}, {x}, [xn, inv](Node& self) {
        xn->ensure_grad();
        float g = static_cast<float>(self.grad[0] * inv);
        for (float& v : xn->grad) v += g;
    });
}

// ---------------------------------------------------------------------------
// linear
// ---------------------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.ndim() != 2 || w.ndim() != 2 || b.ndim() != 1)
        throw ShapeMismatch("linear: expected x[B,in], w[out,in], b[out]");
    int64_t B = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
    if (w.dim(1) != in || b.dim(0) != out_dim)
        throw ShapeMismatch("linear: inner dimensions disagree");

    std::vector<float> out(static_cast<size_t>(B * out_dim));
    const float* xd = x.data().data();
    const float* wd = w.data().data();
    const float* bd = b.data().data();
    parallel_for(B, [&](int64_t lo, int64_t hi) {
        for (int64_t r = lo; r < hi; ++r) {
            for (int64_t o = 0; o < out_dim; ++o) {
                double acc = bd[o];
                const float* xr = xd + r * in;
                const float* wr = wd + o * in;
                for (int64_t i = 0; i < in; ++i) acc += static_cast<double>(xr[i]) * wr[i];
                out[static_cast<size_t>(r * out_dim + o)] = static_cast<float>(acc);
            }
        }
    });

    NodePtr xn = x.node(), wn = w.node(), bn = b.node();
    return make_op({B, out_dim}, std::move(out), {x, w, b},
                   [xn, wn, bn, B, in, out_dim](Node& self) {
        const float* g = self.grad.data();
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (int64_t r = 0; r < B; ++r)
                for (int64_t o = 0; o < out_dim; ++o) {
                    float gv = g[r * out_dim + o];
                    if (gv == 0.0f) continue;
                    const float* wr = wn->data.data() + o * in;
                    float* xg = xn->grad.data() + r * in;
                    for (int64_t i = 0; i < in; ++i) xg[i] += gv * wr[i];
                }
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            for (int64_t o = 0; o < out_dim; ++o) {
                float* wg = wn->grad.data() + o * in;
                for (int64_t i = 0; i < in; ++i) {
                    double acc = 0.0;
                    for (int64_t r = 0; r < B; ++r)
                        acc += static_cast<double>(g[r * out_dim + o]) * xn->data[r * in + i];
                    wg[i] += static_cast<float>(acc);
                }
            }
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t o = 0; o < out_dim; ++o) {
                double acc = 0.0;
                for (int64_t r = 0; r < B; ++r) acc += g[r * out_dim + o];
                bn->grad[o] += static_cast<float>(acc);
            }
        }
    });
}

// ---------------------------------------------------------------------------
// conv1d / pad1d
// ---------------------------------------------------------------------------

Tensor conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride) {
    if (input.ndim() != 3 || weight.ndim() != 3 || bias.ndim() != 1)
        throw ShapeMismatch("conv1d: expected input[B,C,L], weight[O,C,K], bias[O]");
    int64_t B = input.dim(0), C = input.dim(1), L = input.dim(2);
    int64_t O = weight.dim(0), K = weight.dim(2);
    if (weight.dim(1) != C || bias.dim(0) != O)
        throw ShapeMismatch("conv1d: channel counts disagree");
    if (L < K) throw ShapeMismatch("conv1d: input shorter than kernel");
    if (stride < 1) throw ShapeMismatch("conv1d: stride must be >= 1");
    int64_t Lout = (L - K) / stride + 1;

    std::vector<float> out(static_cast<size_t>(B * O * Lout));
    const float* xd = input.data().data();
    const float* wd = weight.data().data();
    const float* bd = bias.data().data();

    parallel_for(B * O, [&](int64_t lo, int64_t hi) {
        std::vector<double> row(static_cast<size_t>(Lout));
        for (int64_t bo = lo; bo < hi; ++bo) {
            int64_t b = bo / O, o = bo % O;
            std::fill(row.begin(), row.end(), static_cast<double>(bd[o]));
            for (int64_t c = 0; c < C; ++c) {
                const float* xr = xd + (b * C + c) * L;
                const float* wr = wd + (o * C + c) * K;
                for (int64_t t = 0; t < Lout; ++t) {
                    const float* xt = xr + t * stride;
                    double acc = 0.0;
                    for (int64_t k = 0; k < K; ++k) acc += static_cast<double>(xt[k]) * wr[k];
                    row[static_cast<size_t>(t)] += acc;
                }
            }
            float* orow = out.data() + bo * Lout;
            for (int64_t t = 0; t < Lout; ++t) orow[t] = static_cast<float>(row[static_cast<size_t>(t)]);
        }
    });

    NodePtr xn = input.node(), wn = weight.node(), bn = bias.node();
    return make_op({B, O, Lout}, std::move(out), {input, weight, bias},
                   [xn, wn, bn, B, C, L, O, K, Lout, stride](Node& self) {
        const float* g = self.grad.data();
        if (xn->requires_grad) {
            xn->ensure_grad();
            float* xg = xn->grad.data();
            parallel_for(B * C, [&](int64_t lo, int64_t hi) {
                for (int64_t bc = lo; bc < hi; ++bc) {
                    int64_t b = bc / C, c = bc % C;
                    float* xr = xg + (b * C + c) * L;
                    for (int64_t o = 0; o < O; ++o) {
                        const float* gr = g + (b * O + o) * Lout;
                        const float* wr = wn->data.data() + (o * C + c) * K;
                        for (int64_t t = 0; t < Lout; ++t) {
                            float gv = gr[t];
                            if (gv == 0.0f) continue;
                            float* xt = xr + t * stride;
                            for (int64_t k = 0; k < K; ++k) xt[k] += gv * wr[k];
                        }
                    }
                }
            });
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            float* wg = wn->grad.data();
            parallel_for(O, [&](int64_t lo, int64_t hi) {
                for (int64_t o = lo; o < hi; ++o) {
                    for (int64_t c = 0; c < C; ++c) {
                        for (int64_t k = 0; k < K; ++k) {
                            double acc = 0.0;
                            for (int64_t b = 0; b < B; ++b) {
                                const float* gr = g + (b * O + o) * Lout;
                                const float* xr = xn->data.data() + (b * C + c) * L + k;
                                for (int64_t t = 0; t < Lout; ++t)
                                    acc += static_cast<double>(gr[t]) * xr[t * stride];
                            }
                            wg[(o * C + c) * K + k] += static_cast<float>(acc);
                        }
                    }
                }
            });
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t o = 0; o < O; ++o) {
                double acc = 0.0;
                for (int64_t b = 0; b < B; ++b) {
                    const float* gr = g + (b * O + o) * Lout;
                    for (int64_t t = 0; t < Lout; ++t) acc += gr[t];
                }
                bn->grad[o] += static_cast<float>(acc);
            }
        }
    });
}

Tensor pad1d(const Tensor& x, int64_t left, int64_t right) {
    if (x.ndim() != 3) throw ShapeMismatch("pad1d: expected [B,C,L]");
    if (left < 0 || right < 0) throw ShapeMismatch("pad1d: negative padding");
    int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
    int64_t Lp = L + left + right;
    std::vector<float> out(static_cast<size_t>(B * C * Lp), 0.0f);
    const float* xd = x.data().data();
    for (int64_t r = 0; r < B * C; ++r)
        std::copy(xd + r * L, xd + (r + 1) * L, out.data() + r * Lp + left);
    NodePtr xn = x.node();
    return make_op({B, C, Lp}, std::move(out), {x}, [xn, B, C, L, left, Lp](Node& self) {
        xn->ensure_grad();
        for (int64_t r = 0; r < B * C; ++r) {
            const float* g = self.grad.data() + r * Lp + left;
            float* xg = xn->grad.data() + r * L;
            for (int64_t i = 0; i < L; ++i) xg[i] += g[i];
        }
    });
}

Tensor maxpool1d(const Tensor& x, int pool) {
    if (x.ndim() != 3) throw ShapeMismatch("maxpool1d: expected [B,C,L]");
    if (pool < 1) throw ShapeMismatch("maxpool1d: pool must be >= 1");
    int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
    int64_t Lout = L / pool;
    if (Lout < 1) throw ShapeMismatch("maxpool1d: input shorter than pool window");

    std::vector<float> out(static_cast<size_t>(B * C * Lout));
    auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(B * C * Lout));
    const float* xd = x.data().data();
    for (int64_t r = 0; r < B * C; ++r) {
        const float* xr = xd + r * L;
        for (int64_t t = 0; t < Lout; ++t) {
            int64_t base = t * pool;
            int64_t best = base;
            for (int64_t k = 1; k < pool; ++k)
                if (xr[base + k] > xr[best]) best = base + k; // strict: ties keep lowest index
            out[static_cast<size_t>(r * Lout + t)] = xr[best];
            (*argmax)[static_cast<size_t>(r * Lout + t)] = best;
        }
    }
    NodePtr xn = x.node();
    return make_op({B, C, Lout}, std::move(out), {x}, [xn, argmax, L, Lout](Node& self) {
        xn->ensure_grad();
        int64_t rows = self.numel() / Lout;
        for (int64_t r = 0; r < rows; ++r) {
            const float* g = self.grad.data() + r * Lout;
            float* xg = xn->grad.data() + r * L;
            for (int64_t t = 0; t < Lout; ++t)
                xg[(*argmax)[static_cast<size_t>(r * Lout + t)]] += g[t];
        }
    });
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.ndim() != 3) throw ShapeMismatch("global_avg_pool: expected [B,C,L]");
    int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
    std::vector<float> out(static_cast<size_t>(B * C));
    const float* xd = x.data().data();
    for (int64_t r = 0; r < B * C; ++r) {
        double acc = 0.0;
        for (int64_t i = 0; i < L; ++i) acc += xd[r * L + i];
        out[static_cast<size_t>(r)] = static_cast<float>(acc / static_cast<double>(L));
    }
    NodePtr xn = x.node();
    return make_op({B, C}, std::move(out), {x}, [xn, L](Node& self) {
        xn->ensure_grad();
        double inv = 1.0 / static_cast<double>(L);
        for (int64_t r = 0; r < self.numel(); ++r) {
            float g = static_cast<float>(self.grad[static_cast<size_t>(r)] * inv);
            float* xg = xn->grad.data() + r * L;
            for (int64_t i = 0; i < L; ++i) xg[i] += g;
        }
    });
}

// ---------------------------------------------------------------------------
// batch norm
// ---------------------------------------------------------------------------

BatchNormStats BatchNormStats::make(int64_t channels) {
    BatchNormStats s;
    s.running_mean = Tensor::zeros({channels});
    s.running_var = Tensor::full({channels}, 1.0f);
    return s;
}

Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormStats& stats, bool training, double momentum, double eps) {
    if (x.ndim() != 3) throw ShapeMismatch("batchnorm1d: expected [B,C,L]");
    int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
    if (gamma.ndim() != 1 || gamma.dim(0) != C || beta.ndim() != 1 || beta.dim(0) != C)
        throw ShapeMismatch("batchnorm1d: gamma/beta must be [C]");
    int64_t n = B * L;
    if (training && n < 2)
        throw DegenerateBatch("batch x length = " + std::to_string(n) + " < 2");

    std::vector<float> out(x.data().size());
    auto xhat = std::make_shared<std::vector<float>>(x.data().size());
    auto invstd = std::make_shared<std::vector<double>>(static_cast<size_t>(C));
    const float* xd = x.data().data();
    const float* gd = gamma.data().data();
    const float* bd = beta.data().data();

    parallel_for(C, [&](int64_t lo, int64_t hi) {
        for (int64_t c = lo; c < hi; ++c) {
            double mean, var;
            if (training) {
                double s = 0.0;
                for (int64_t b = 0; b < B; ++b) {
                    const float* xr = xd + (b * C + c) * L;
                    for (int64_t i = 0; i < L; ++i) s += xr[i];
                }
                mean = s / static_cast<double>(n);
                double sq = 0.0;
                for (int64_t b = 0; b < B; ++b) {
                    const float* xr = xd + (b * C + c) * L;
                    for (int64_t i = 0; i < L; ++i) {
                        double d = xr[i] - mean;
                        sq += d * d;
                    }
                }
                var = sq / static_cast<double>(n);
                double unbiased = n > 1 ? sq / static_cast<double>(n - 1) : var;
                auto& rm = stats.running_mean.data();
                auto& rv = stats.running_var.data();
                rm[static_cast<size_t>(c)] = static_cast<float>(
                    (1.0 - momentum) * rm[static_cast<size_t>(c)] + momentum * mean);
                rv[static_cast<size_t>(c)] = static_cast<float>(
                    (1.0 - momentum) * rv[static_cast<size_t>(c)] + momentum * unbiased);
            } else {
                mean = stats.running_mean.data()[static_cast<size_t>(c)];
                var = stats.running_var.data()[static_cast<size_t>(c)];
            }
            double istd = 1.0 / std::sqrt(var + eps);
            (*invstd)[static_cast<size_t>(c)] = istd;
            for (int64_t b = 0; b < B; ++b) {
                const float* xr = xd + (b * C + c) * L;
                float* hr = xhat->data() + (b * C + c) * L;
                float* orow = out.data() + (b * C + c) * L;
                for (int64_t i = 0; i < L; ++i) {
                    double h = (xr[i] - mean) * istd;
                    hr[i] = static_cast<float>(h);
                    orow[i] = static_cast<float>(gd[c] * h + bd[c]);
                }
            }
        }
    });

    NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node();
    return make_op(x.shape(), std::move(out), {x, gamma, beta},
                   [xn, gn, bn, xhat, invstd, B, C, L, training](Node& self) {
        int64_t n = B * L;
        const float* g = self.grad.data();
        if (gn->requires_grad) gn->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        if (xn->requires_grad) xn->ensure_grad();
        parallel_for(C, [&](int64_t lo, int64_t hi) {
            for (int64_t c = lo; c < hi; ++c) {
                double sum_g = 0.0, sum_gh = 0.0;
                for (int64_t b = 0; b < B; ++b) {
                    const float* gr = g + (b * C + c) * L;
                    const float* hr = xhat->data() + (b * C + c) * L;
                    for (int64_t i = 0; i < L; ++i) {
                        sum_g += gr[i];
                        sum_gh += static_cast<double>(gr[i]) * hr[i];
                    }
                }
                if (gn->requires_grad) gn->grad[static_cast<size_t>(c)] += static_cast<float>(sum_gh);
                if (bn->requires_grad) bn->grad[static_cast<size_t>(c)] += static_cast<float>(sum_g);
                if (!xn->requires_grad) continue;
                double gamma_istd =
                    static_cast<double>(gn->data[static_cast<size_t>(c)]) * (*invstd)[static_cast<size_t>(c)];
                double mean_g = sum_g / static_cast<double>(n);
                double mean_gh = sum_gh / static_cast<double>(n);
                for (int64_t b = 0; b < B; ++b) {
                    const float* gr = g + (b * C + c) * L;
                    const float* hr = xhat->data() + (b * C + c) * L;
                    float* xg = xn->grad.data() + (b * C + c) * L;
                    for (int64_t i = 0; i < L; ++i) {
                        double dx = training ? gamma_istd * (gr[i] - mean_g - hr[i] * mean_gh)
                                             : gamma_istd * gr[i];
                        xg[i] += static_cast<float>(dx);
                    }
                }
            }
        });
    });
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

Tensor bce_with_logits(const Tensor& logits, const std::vector<float>& targets) {
    if (logits.data().size() != targets.size())
        throw ShapeMismatch("bce_with_logits: logits/targets size mismatch");
    const auto& xd = logits.data();
    double acc = 0.0;
    for (size_t i = 0; i < xd.size(); ++i) {
        double x = xd[i], y = targets[i];
        acc += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::fabs(x)));
    }
    double inv = 1.0 / static_cast<double>(xd.size());
    NodePtr xn = logits.node();
    auto t = std::make_shared<std::vector<float>>(targets);
    return make_op({1}, {static_cast<float>(acc * inv)}, {logits}, [xn, t, inv](Node& self) {
        xn->ensure_grad();
        double g = self.grad[0] * inv;
        for (size_t i = 0; i < xn->data.size(); ++i) {
            double x = xn->data[i];
            double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
            xn->grad[i] += static_cast<float>(g * (s - (*t)[i]));
        }
    });
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw NonScalarLoss("backward() needs a scalar loss");
    Node* root = loss.node().get();
    if (!root->requires_grad) return;

    // iterative post-order DFS -> topological order
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* next = node->parents[idx++].get();
            if (next->requires_grad && !visited.count(next)) {
                visited.insert(next);
                stack.emplace_back(next, 0);
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0f;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn) {
            node->ensure_grad();
            node->backward_fn(*node);
        }
    }
}

// ---------------------------------------------------------------------------
// init / optimizer
// ---------------------------------------------------------------------------

Tensor kaiming_init(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
    if (fan_in < 1) throw ShapeMismatch("kaiming_init: fan_in must be >= 1");
    double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    Tensor t = Tensor::zeros(shape, true);
    for (float& v : t.data()) v = static_cast<float>(std_dev * rng.normal());
    return t;
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(params_[i].data().size(), 0.0f);
        v_[i].assign(params_[i].data().size(), 0.0f);
    }
}

void Adam::step() {
    ++step_count_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
    for (size_t p = 0; p < params_.size(); ++p) {
        auto& param = params_[p];
        if (!param.has_grad()) continue;
        auto& data = param.data();
        auto& grad = param.node()->grad;
        for (size_t i = 0; i < data.size(); ++i) {
            double g = grad[i] + cfg_.weight_decay * data[i];
            double m = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * g;
            double v = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * g * g;
            m_[p][i] = static_cast<float>(m);
            v_[p][i] = static_cast<float>(v);
            data[i] -= static_cast<float>(cfg_.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps));
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

} // namespace clmrkit::ad
