#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "clmrkit/autodiff.hpp"
#include "clmrkit/errors.hpp"
#include "test_util.hpp"

using namespace clmrkit;
using namespace clmrkit::ad;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, bool requires_grad = true,
                     double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(shape, requires_grad);
    for (float& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

} // namespace

TEST_CASE("conv1d forward semantics") {
    Tensor x = Tensor::from_data({1, 1, 5}, {1, 2, 3, 4, 5});
    Tensor w = Tensor::from_data({1, 1, 3}, {1, 1, 1});
    Tensor b = Tensor::zeros({1});
    Tensor y = conv1d(x, w, b, 1);
    CHECK(y.shape() == std::vector<int64_t>{1, 1, 3});
    CHECK(y.data() == std::vector<float>{6, 9, 12});

    Tensor identity = Tensor::from_data({1, 1, 3}, {0, 1, 0});
    Tensor y2 = conv1d(x, identity, b, 1);
    CHECK(y2.data() == std::vector<float>{2, 3, 4});

    Tensor big = Tensor::zeros({1, 1, 59049});
    CHECK(conv1d(big, w, b, 3).dim(2) == 19683);

    CHECK_THROWS_AS(conv1d(Tensor::zeros({1, 1, 2}), w, b, 1), ShapeMismatch);
    CHECK_THROWS_AS(conv1d(x, Tensor::zeros({1, 2, 3}), b, 1), ShapeMismatch);
}

TEST_CASE("conv1d is linear in its input") {
    Rng rng(41);
    Tensor a = random_tensor({2, 3, 17}, rng, false);
    Tensor bb = random_tensor({2, 3, 17}, rng, false);
    Tensor w = random_tensor({4, 3, 3}, rng, false);
    Tensor bias = Tensor::zeros({4});
    Tensor lhs = conv1d(add(a, bb), w, bias, 2);
    Tensor rhs = add(conv1d(a, w, bias, 2), conv1d(bb, w, bias, 2));
    for (size_t i = 0; i < lhs.data().size(); ++i)
        CHECK(lhs.data()[i] == doctest::Approx(rhs.data()[i]).epsilon(1e-6));
}

TEST_CASE("gradient check: conv1d") {
    Rng rng(42);
    for (int trial = 0; trial < 5; ++trial) {
        auto B = static_cast<int64_t>(rng.uniform_int(1, 2));
        auto C = static_cast<int64_t>(rng.uniform_int(1, 3));
        auto O = static_cast<int64_t>(rng.uniform_int(1, 3));
        auto L = static_cast<int64_t>(rng.uniform_int(6, 12));
        int stride = static_cast<int>(rng.uniform_int(1, 2));
        Tensor x = random_tensor({B, C, L}, rng);
        Tensor w = random_tensor({O, C, 3}, rng);
        Tensor b = random_tensor({O}, rng);
        auto forward = [&]() { return conv1d(x, w, b, stride); };
        CHECK(testutil::max_gradient_error(forward, {x, w, b}) < 1e-3);
    }
}

TEST_CASE("gradient check: pad1d, maxpool1d, global_avg_pool") {
    Rng rng(43);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x = random_tensor({2, 2, 9}, rng);
        auto forward = [&]() { return pad1d(x, 1, 1); };
        CHECK(testutil::max_gradient_error(forward, {x}) < 1e-3);
    }
    for (int trial = 0; trial < 10; ++trial) {
        // off-tie instance: enforce clear gaps inside every pooling window
        Tensor x = Tensor::zeros({1, 2, 9}, true);
        bool ok = false;
        while (!ok) {
            for (float& v : x.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
            ok = true;
            for (size_t wstart = 0; wstart + 3 <= x.data().size(); wstart += 3)
                for (size_t i = wstart; i < wstart + 3 && ok; ++i)
                    for (size_t j = i + 1; j < wstart + 3; ++j)
                        if (std::fabs(x.data()[i] - x.data()[j]) < 0.05) ok = false;
        }
        auto forward = [&]() { return maxpool1d(x, 3); };
        CHECK(testutil::max_gradient_error(forward, {x}) < 1e-3);
    }
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x = random_tensor({2, 3, 7}, rng);
        auto forward = [&]() { return global_avg_pool(x); };
        CHECK(testutil::max_gradient_error(forward, {x}) < 1e-3);
    }
}

TEST_CASE("maxpool semantics") {
    Tensor x = Tensor::from_data({1, 1, 6}, {1, 3, 2, 5, 4, 6});
    Tensor y = maxpool1d(x, 3);
    CHECK(y.data() == std::vector<float>{3, 6});

    // ties go to the lowest index
    Tensor tie = Tensor::from_data({1, 1, 3}, {2, 2, 1}, true);
    Tensor out = sum_all(maxpool1d(tie, 3));
    backward(out);
    CHECK(tie.grad() == std::vector<float>{1, 0, 0});
}

TEST_CASE("relu and sigmoid definitions") {
    Tensor x = Tensor::from_data({3}, {-2.0f, 0.0f, 2.0f});
    CHECK(relu(x).data() == std::vector<float>{0, 0, 2});
    CHECK(sigmoid(Tensor::from_data({1}, {0.0f})).item() == doctest::Approx(0.5));
}

TEST_CASE("gradient check: linear, sigmoid, relu composite") {
    Rng rng(44);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x = random_tensor({3, 4}, rng);
        Tensor w = random_tensor({5, 4}, rng);
        Tensor b = random_tensor({5}, rng);
        auto forward = [&]() { return sigmoid(linear(x, w, b)); };
        CHECK(testutil::max_gradient_error(forward, {x, w, b}) < 1e-3);
    }
}

TEST_CASE("batchnorm1d normalizes per channel in train mode") {
    Rng rng(45);
    Tensor x = random_tensor({4, 3, 8}, rng, false, -2.0, 3.0);
    Tensor gamma = Tensor::full({3}, 1.0f, false);
    Tensor beta = Tensor::zeros({3}, false);
    auto stats = BatchNormStats::make(3);
    Tensor y = batchnorm1d(x, gamma, beta, stats, true);
    for (int c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        int n = 0;
        for (int b = 0; b < 4; ++b)
            for (int i = 0; i < 8; ++i) {
                mean += y.data()[static_cast<size_t>((b * 3 + c) * 8 + i)];
                ++n;
            }
        mean /= n;
        for (int b = 0; b < 4; ++b)
            for (int i = 0; i < 8; ++i) {
                double d = y.data()[static_cast<size_t>((b * 3 + c) * 8 + i)] - mean;
                var += d * d;
            }
        var /= n;
        CHECK(std::fabs(mean) < 1e-4);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }

    Tensor gamma2 = Tensor::full({3}, 2.0f, false);
    Tensor beta2 = Tensor::full({3}, 3.0f, false);
    Tensor y2 = batchnorm1d(x, gamma2, beta2, stats, true);
    double mean2 = 0.0;
    for (float v : y2.data()) mean2 += v;
    mean2 /= static_cast<double>(y2.numel());
    CHECK(mean2 == doctest::Approx(3.0).epsilon(1e-3));

    // eval mode with identity stats is gamma * x + beta
    auto fresh = BatchNormStats::make(3);
    Tensor y3 = batchnorm1d(x, gamma2, beta2, fresh, false, 0.1, 0.0);
    for (size_t i = 0; i < x.data().size(); ++i)
        CHECK(y3.data()[i] == doctest::Approx(2.0 * x.data()[i] + 3.0).epsilon(1e-5));

    CHECK_THROWS_AS(batchnorm1d(Tensor::zeros({1, 3, 1}), gamma, beta, stats, true),
                    DegenerateBatch);
}

TEST_CASE("batchnorm running stats update with momentum 0.1") {
    Tensor x = Tensor::from_data({1, 1, 4}, {1, 2, 3, 4});
    Tensor gamma = Tensor::full({1}, 1.0f);
    Tensor beta = Tensor::zeros({1});
    auto stats = BatchNormStats::make(1);
    batchnorm1d(x, gamma, beta, stats, true);
    // mean 2.5, unbiased var of {1,2,3,4} = 5/3
    CHECK(stats.running_mean.data()[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.5));
    CHECK(stats.running_var.data()[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 5.0 / 3.0));
}

TEST_CASE("gradient check: batchnorm1d (train mode)") {
    Rng rng(46);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x = random_tensor({3, 2, 5}, rng, true, -1.5, 1.5);
        Tensor gamma = random_tensor({2}, rng, true, 0.5, 1.5);
        Tensor beta = random_tensor({2}, rng);
        auto forward = [&]() {
            auto stats = BatchNormStats::make(2);
            return batchnorm1d(x, gamma, beta, stats, true);
        };
        CHECK(testutil::max_gradient_error(forward, {x, gamma, beta}) < 1e-3);
    }
}

TEST_CASE("gradient check: bce_with_logits") {
    Rng rng(47);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor logits = random_tensor({4, 3}, rng, true, -2.0, 2.0);
        std::vector<float> targets(12);
        for (float& t : targets) t = rng.bernoulli(0.5) ? 1.0f : 0.0f;
        auto forward = [&]() { return bce_with_logits(logits, targets); };
        CHECK(testutil::max_gradient_error(forward, {logits}) < 1e-3);
    }
}

TEST_CASE("backward: accumulation, reuse and isolation") {
    Tensor w = Tensor::from_data({2}, {1, 2}, true);
    Tensor x = Tensor::from_data({2}, {3, 4}, false);
    Tensor loss = sum_all(mul(w, x));
    backward(loss);
    CHECK(w.grad() == std::vector<float>{3, 4});

    Tensor w2 = Tensor::from_data({2}, {1, 2}, true);
    Tensor double_use = add(sum_all(w2), sum_all(w2));
    backward(double_use);
    CHECK(w2.grad() == std::vector<float>{2, 2});

    // disjoint graphs stay independent
    Tensor a = Tensor::from_data({2}, {1, 1}, true);
    Tensor b = Tensor::from_data({2}, {1, 1}, true);
    Tensor la = sum_all(a);
    Tensor lb = sum_all(scale(b, 5.0));
    backward(la);
    CHECK(a.grad() == std::vector<float>{1, 1});
    CHECK_FALSE(b.has_grad());
    backward(lb);
    CHECK(b.grad() == std::vector<float>{5, 5});
    CHECK(a.grad() == std::vector<float>{1, 1});

    CHECK_THROWS_AS(backward(Tensor::from_data({2}, {1, 2}, true)), NonScalarLoss);
}

TEST_CASE("no-grad mode records no graph") {
    Tensor w = Tensor::from_data({2}, {1, 2}, true);
    NoGradGuard guard;
    Tensor y = scale(w, 2.0);
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("adam: fixed points and first-step magnitude") {
    Tensor p = Tensor::from_data({1}, {1.0f}, true);
    AdamConfig cfg;
    cfg.lr = 3e-4;
    Adam opt({p}, cfg);

    p.grad(); // zero gradient
    opt.step();
    CHECK(p.data()[0] == doctest::Approx(1.0));

    // fresh state: first-step magnitude equals lr after bias correction
    Tensor p2 = Tensor::from_data({1}, {1.0f}, true);
    Adam opt2({p2}, cfg);
    p2.grad()[0] = 1.0f;
    opt2.step();
    CHECK(p2.data()[0] == doctest::Approx(1.0 - 3e-4).epsilon(1e-6));

    Tensor q = Tensor::from_data({3}, {1, 2, 3}, true);
    AdamConfig frozen;
    frozen.lr = 0.0;
    Adam opt0({q}, frozen);
    q.grad() = {5, 5, 5};
    opt0.step();
    CHECK(q.data() == std::vector<float>{1, 2, 3});
}

TEST_CASE("adam decreases a convex quadratic") {
    Tensor p = Tensor::from_data({1}, {5.0f}, true);
    Tensor target = Tensor::full({1}, 3.0f);
    AdamConfig cfg;
    cfg.lr = 0.1;
    Adam opt({p}, cfg);
    auto loss_of = [&]() {
        Tensor d = sub(p, target);
        return sum_all(mul(d, d));
    };
    double prev = loss_of().item();
    for (int i = 0; i < 2; ++i) {
        Tensor loss = loss_of();
        opt.zero_grad();
        backward(loss);
        opt.step();
        double now = loss_of().item();
        CHECK(now < prev);
        prev = now;
    }
}

TEST_CASE("kaiming init statistics") {
    Rng rng(48);
    Tensor small = kaiming_init({4}, 2, rng); // target std = 1
    (void)small;

    Tensor big = kaiming_init({100000}, 200, rng);
    double mean = 0.0;
    for (float v : big.data()) mean += v;
    mean /= static_cast<double>(big.numel());
    double var = 0.0;
    for (float v : big.data()) var += (v - mean) * (v - mean);
    double std_dev = std::sqrt(var / static_cast<double>(big.numel()));
    CHECK(mean > -0.01);
    CHECK(mean < 0.01);
    CHECK(std_dev > 0.095);
    CHECK(std_dev < 0.105);
    CHECK(big.requires_grad());

    CHECK_THROWS_AS(kaiming_init({4}, 0, rng), ShapeMismatch);
}
