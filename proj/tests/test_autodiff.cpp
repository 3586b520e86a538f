#include <doctest.h>

#include <cmath>

#include "iic/autodiff.hpp"
#include "iic/loss_graph.hpp"
#include "iic/rng.hpp"
#include "oracles.hpp"

using iic::Tensor;
using iic::TensorD;
namespace ad = iic::ad;

namespace {

TensorD random_tensor(iic::Rng& rng, iic::Shape shape, double lo = -1.0, double hi = 1.0) {
    TensorD t(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Max relative error between analytic gradients and central differences for
// every element of `param`, where `forward` rebuilds the graph and returns the
// scalar root.
double grad_check(ad::Var<double> param, const std::function<ad::Var<double>()>& forward, double step = 1e-5) {
    auto root = forward();
    ad::zero_grad<double>({param});
    ad::backward(root);
    Tensor<double> analytic = param->grad;
    double worst = 0.0;
    for (int64_t i = 0; i < param->value.numel(); ++i) {
        auto f = [&]() { return forward()->value[0]; };
        const double fd = oracle::central_diff(f, param->value[i], step);
        const double rel = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
        worst = std::max(worst, rel);
    }
    return worst;
}

// Scalar-valued readout for making any tensor output differentiable-testable:
// weighted sum with fixed random weights.
ad::Var<double> weighted_sum(const ad::Var<double>& x, const TensorD& w) {
    const int64_t n = x->value.numel();
    TensorD flat_w = w;
    auto node = ad::detail::make_op<double>(
        Tensor<double>::scalar([&] {
            double s = 0.0;
            for (int64_t i = 0; i < n; ++i) s += x->value[i] * w[i];
            return s;
        }()),
        {x}, [flat_w, n](ad::Node<double>& self) {
            ad::Node<double>* p = self.parents[0].get();
            if (!p->requires_grad) return;
            p->ensure_grad();
            for (int64_t i = 0; i < n; ++i) p->grad[i] += self.grad[0] * flat_w[i];
        });
    return node;
}

}  // namespace

TEST_CASE("dense: identity and affine arithmetic") {
    auto x = ad::constant(TensorD({2, 2}, {1, 0, 0, 1}));
    auto w = ad::parameter(TensorD({2, 2}, {1, 0, 0, 1}));
    auto b = ad::parameter(TensorD({2}, {0, 0}));
    auto y = ad::dense(x, w, b);
    CHECK(y->value.at(0, 0) == 1.0);
    CHECK(y->value.at(0, 1) == 0.0);
    CHECK(y->value.at(1, 1) == 1.0);

    auto x2 = ad::constant(TensorD({1, 2}, {1, 2}));
    auto b2 = ad::parameter(TensorD({2}, {3, 3}));
    auto y2 = ad::dense(x2, w, b2);
    CHECK(y2->value.at(0, 0) == doctest::Approx(4.0));
    CHECK(y2->value.at(0, 1) == doctest::Approx(5.0));
}

TEST_CASE("dense: gradient check") {
    iic::Rng rng(101);
    auto x = ad::parameter(random_tensor(rng, {3, 4}));
    auto w = ad::parameter(random_tensor(rng, {4, 5}));
    auto b = ad::parameter(random_tensor(rng, {5}));
    TensorD read = random_tensor(rng, {3 * 5});
    auto forward = [&]() { return weighted_sum(ad::dense(x, w, b), read); };
    CHECK(grad_check(w, forward) < 1e-6);
    CHECK(grad_check(b, forward) < 1e-6);
    CHECK(grad_check(x, forward) < 1e-6);
}

TEST_CASE("conv2d: ones image, scalar kernel") {
    TensorD img({1, 1, 3, 3});
    img.fill(1.0);
    auto x = ad::constant(img);
    auto k = ad::parameter(TensorD({1, 1, 1, 1}, {2.0}));
    auto y = ad::conv2d<double>(x, k, nullptr, 1, 0);
    CHECK(y->value.shape() == iic::Shape{1, 1, 3, 3});
    for (int64_t i = 0; i < 9; ++i) CHECK(y->value[i] == doctest::Approx(2.0));
}

TEST_CASE("conv2d: impulse response reproduces the kernel (cross-correlation indexing)") {
    TensorD img({1, 1, 5, 5});
    img.at(0, 0, 2, 2) = 1.0;  // delta at the center
    auto x = ad::constant(img);
    iic::Rng rng(7);
    auto k = ad::parameter(random_tensor(rng, {1, 1, 3, 3}));
    auto y = ad::conv2d<double>(x, k, nullptr, 1, 1);
    // y[r, c] = sum_{u,v} x[r+u-1, c+v-1] k[u, v] = k[2-(r-2)+... ]; the delta
    // appears flipped about the impulse under cross-correlation.
    for (int64_t u = 0; u < 3; ++u)
        for (int64_t v = 0; v < 3; ++v)
            CHECK(y->value.at(0, 0, 2 + 1 - u, 2 + 1 - v) == doctest::Approx(k->value.at(0, 0, u, v)));
}

TEST_CASE("conv2d: matches the naive 6-loop reference") {
    iic::Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const int64_t n = rng.uniform_int(1, 3), cin = rng.uniform_int(1, 3), cout = rng.uniform_int(1, 4);
        const int64_t H = rng.uniform_int(4, 9), W = rng.uniform_int(4, 9);
        const int64_t kh = rng.uniform_int(1, 3), kw = rng.uniform_int(1, 3);
        const int64_t stride = rng.uniform_int(1, 2), pad = rng.uniform_int(0, 1);
        if ((H + 2 * pad - kh) % stride != 0 || (W + 2 * pad - kw) % stride != 0 || H + 2 * pad < kh ||
            W + 2 * pad < kw) {
            continue;
        }
        TensorD xv = random_tensor(rng, {n, cin, H, W});
        TensorD kv = random_tensor(rng, {cout, cin, kh, kw});
        std::vector<double> bias(static_cast<size_t>(cout));
        for (auto& v : bias) v = rng.uniform(-0.5, 0.5);
        auto x = ad::constant(xv);
        auto k = ad::constant(kv);
        auto b = ad::constant(TensorD({cout}, std::vector<double>(bias)));
        auto y = ad::conv2d(x, k, b, stride, pad);
        TensorD ref = oracle::naive_conv2d(xv, kv, bias, stride, pad);
        REQUIRE(y->value.shape() == ref.shape());
        for (int64_t i = 0; i < ref.numel(); ++i) CHECK(std::abs(y->value[i] - ref[i]) < 1e-5);
    }
}

TEST_CASE("conv2d: non-integral output size is an error") {
    auto x = ad::constant(TensorD({1, 1, 5, 5}));
    auto k = ad::constant(TensorD({1, 1, 2, 2}));
    CHECK_THROWS_AS(ad::conv2d<double>(x, k, nullptr, 2, 0), std::invalid_argument);
}

TEST_CASE("conv2d: gradient check (input, kernel, bias)") {
    iic::Rng rng(13);
    auto x = ad::parameter(random_tensor(rng, {2, 2, 5, 5}));
    auto k = ad::parameter(random_tensor(rng, {3, 2, 3, 3}));
    auto b = ad::parameter(random_tensor(rng, {3}));
    TensorD read = random_tensor(rng, {2 * 3 * 3 * 3});
    auto forward = [&]() { return weighted_sum(ad::conv2d(x, k, b, 2, 1), read); };
    CHECK(grad_check(x, forward) < 1e-6);
    CHECK(grad_check(k, forward) < 1e-6);
    CHECK(grad_check(b, forward) < 1e-6);
}

TEST_CASE("softmax_rows: symmetry, stabilization, gradient") {
    auto x = ad::constant(TensorD({1, 2}, {0.0, 0.0}));
    auto y = ad::softmax_rows(x);
    CHECK(y->value.at(0, 0) == doctest::Approx(0.5));

    auto big = ad::constant(TensorD({1, 2}, {1000.0, 0.0}));
    auto yb = ad::softmax_rows(big);
    CHECK(yb->value.at(0, 0) == doctest::Approx(1.0));
    CHECK(std::isfinite(yb->value.at(0, 1)));

    iic::Rng rng(17);
    auto xp = ad::parameter(random_tensor(rng, {4, 5}, -2.0, 2.0));
    TensorD read = random_tensor(rng, {20});
    auto forward = [&]() { return weighted_sum(ad::softmax_rows(xp), read); };
    CHECK(grad_check(xp, forward) < 1e-6);

    // Rows remain simplex points.
    for (int64_t i = 0; i < 4; ++i) {
        double s = 0.0;
        auto yy = ad::softmax_rows(xp);
        for (int64_t j = 0; j < 5; ++j) s += yy->value.at(i, j);
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("softmax_channels: per-pixel simplex and gradient") {
    iic::Rng rng(19);
    auto xp = ad::parameter(random_tensor(rng, {2, 3, 2, 2}, -2.0, 2.0));
    auto y = ad::softmax_channels(xp);
    for (int64_t i = 0; i < 2; ++i)
        for (int64_t p = 0; p < 4; ++p) {
            double s = 0.0;
            for (int64_t c = 0; c < 3; ++c) s += y->value[((i * 3 + c) * 4) + p];
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
    TensorD read = random_tensor(rng, {2 * 3 * 2 * 2});
    auto forward = [&]() { return weighted_sum(ad::softmax_channels(xp), read); };
    CHECK(grad_check(xp, forward) < 1e-6);
}

TEST_CASE("batchnorm: constant channel collapses to the shift parameter") {
    TensorD xv({2, 1, 2, 2});
    xv.fill(3.14);
    auto x = ad::constant(xv);
    auto gamma = ad::parameter(TensorD({1}, {1.0}));
    auto beta = ad::parameter(TensorD({1}, {0.7}));
    TensorD rm({1}), rv({1});
    rv.fill(1.0);
    auto y = ad::batchnorm_nchw(x, gamma, beta, rm, rv, true, 0.1, 1e-5);
    for (int64_t i = 0; i < y->value.numel(); ++i) CHECK(y->value[i] == doctest::Approx(0.7));
}

TEST_CASE("batchnorm: standardized input passes through, running stats update") {
    iic::Rng rng(23);
    TensorD xv = random_tensor(rng, {4, 2, 3, 3});
    // Standardize per channel.
    for (int64_t c = 0; c < 2; ++c) {
        double mu = 0.0, var = 0.0;
        const int64_t m = 4 * 9;
        for (int64_t i = 0; i < 4; ++i)
            for (int64_t p = 0; p < 9; ++p) mu += xv[((i * 2 + c) * 9) + p];
        mu /= m;
        for (int64_t i = 0; i < 4; ++i)
            for (int64_t p = 0; p < 9; ++p) {
                double d = xv[((i * 2 + c) * 9) + p] - mu;
                var += d * d;
            }
        var /= m;
        for (int64_t i = 0; i < 4; ++i)
            for (int64_t p = 0; p < 9; ++p) xv[((i * 2 + c) * 9) + p] = (xv[((i * 2 + c) * 9) + p] - mu) / std::sqrt(var);
    }
    auto x = ad::constant(xv);
    auto gamma = ad::parameter(TensorD({2}, {1.0, 1.0}));
    auto beta = ad::parameter(TensorD({2}, {0.0, 0.0}));
    TensorD rm({2}), rv({2});
    rv.fill(1.0);
    auto y = ad::batchnorm_nchw(x, gamma, beta, rm, rv, true, 0.1, 1e-5);
    for (int64_t i = 0; i < y->value.numel(); ++i) CHECK(y->value[i] == doctest::Approx(xv[i]).epsilon(1e-4));
    CHECK(std::abs(rm[0]) < 1e-6);                     // running mean pulled toward 0
    CHECK(rv[0] == doctest::Approx(0.9 + 0.1 * 1.0));  // (1-m)*1 + m*var
}

TEST_CASE("batchnorm: gradient check in training and eval modes") {
    iic::Rng rng(29);
    auto x = ad::parameter(random_tensor(rng, {3, 2, 2, 2}));
    auto gamma = ad::parameter(TensorD({2}, {1.2, 0.8}));
    auto beta = ad::parameter(TensorD({2}, {0.1, -0.2}));
    TensorD read = random_tensor(rng, {3 * 2 * 2 * 2});
    for (bool training : {true, false}) {
        auto forward = [&]() {
            TensorD rm({2}), rv({2});
            rv.fill(1.0);
            rm[0] = 0.05;
            return weighted_sum(ad::batchnorm_nchw(x, gamma, beta, rm, rv, training, 0.1, 1e-5), read);
        };
        CHECK(grad_check(x, forward) < 1e-5);
        CHECK(grad_check(gamma, forward) < 1e-6);
        CHECK(grad_check(beta, forward) < 1e-6);
    }
}

TEST_CASE("global_avg_pool and relu gradients") {
    iic::Rng rng(31);
    auto x = ad::parameter(random_tensor(rng, {2, 3, 4, 4}));
    TensorD read = random_tensor(rng, {6});
    auto forward = [&]() { return weighted_sum(ad::global_avg_pool(ad::relu(x)), read); };
    CHECK(grad_check(x, forward) < 1e-6);
}

TEST_CASE("backward: sum of a parameter tensor gives all-ones gradient") {
    auto p = ad::parameter(TensorD({2, 3}, {1, 2, 3, 4, 5, 6}));
    TensorD ones({6});
    ones.fill(1.0);
    auto root = weighted_sum(p, ones);
    ad::zero_grad<double>({p});
    ad::backward(root);
    for (int64_t i = 0; i < 6; ++i) CHECK(p->grad[i] == doctest::Approx(1.0));
}

TEST_CASE("backward: non-scalar root is an error") {
    auto p = ad::parameter(TensorD({2, 2}));
    CHECK_THROWS_AS(ad::backward(ad::relu(p)), std::invalid_argument);
}

TEST_CASE("backward: chain rule on dense-relu-dense-softmax matches hand derivation") {
    // 1x1 chain: z = softmax over 2 classes of [w2 * relu(w1 * x), 0].
    // Hand-derived dz0/dw1 = z0 z1 w2 x (for positive pre-activation).
    auto x = ad::constant(TensorD({1, 1}, {2.0}));
    auto w1 = ad::parameter(TensorD({1, 1}, {0.5}));
    auto w2 = ad::parameter(TensorD({1, 2}, {1.5, 0.0}));
    auto b1 = ad::parameter(TensorD({1}, {0.0}));
    auto b2 = ad::parameter(TensorD({2}, {0.0, 0.0}));
    auto z = ad::softmax_rows(ad::dense(ad::relu(ad::dense(x, w1, b1)), w2, b2));
    TensorD pick({2}, {1.0, 0.0});
    auto root = weighted_sum(z, pick);
    ad::zero_grad<double>({w1});
    ad::backward(root);
    const double a = 1.5 * 1.0;  // w2 activation path
    const double z0 = z->value.at(0, 0), z1 = z->value.at(0, 1);
    const double expected = z0 * z1 * a * 2.0;
    CHECK(w1->grad[0] == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("iic_pair_loss: gradient check through softmax heads") {
    iic::Rng rng(37);
    for (int trial = 0; trial < 5; ++trial) {
        const int64_t n = rng.uniform_int(2, 8), C = rng.uniform_int(2, 5);
        auto a = ad::parameter(random_tensor(rng, {n, C}, -1.5, 1.5));
        auto b = ad::parameter(random_tensor(rng, {n, C}, -1.5, 1.5));
        const double lambda = trial % 2 == 0 ? 1.0 : 1.5;
        auto forward = [&]() {
            return ad::iic_pair_loss(ad::softmax_rows(a), ad::softmax_rows(b), lambda, 1e-10);
        };
        CHECK(grad_check(a, forward) < 1e-4);
        CHECK(grad_check(b, forward) < 1e-4);
    }
}

TEST_CASE("iic_pair_loss: value agrees with the pure double path") {
    iic::Rng rng(41);
    oracle::Mat z = oracle::random_simplex(rng, 9, 4);
    oracle::Mat zt = oracle::random_simplex(rng, 9, 4);
    TensorD tz({9, 4}), tzt({9, 4});
    iic::AssignmentBatch az, azt;
    az.values.resize(9, 4);
    azt.values.resize(9, 4);
    for (int64_t i = 0; i < 9; ++i)
        for (int64_t c = 0; c < 4; ++c) {
            tz.at(i, c) = z[static_cast<size_t>(i)][static_cast<size_t>(c)];
            tzt.at(i, c) = zt[static_cast<size_t>(i)][static_cast<size_t>(c)];
            az.values(i, c) = tz.at(i, c);
            azt.values(i, c) = tzt.at(i, c);
        }
    auto loss = ad::iic_pair_loss(ad::constant(tz), ad::constant(tzt), 1.5, 1e-10);
    CHECK(loss->value[0] == doctest::Approx(iic::iic_loss(az, azt, 1.5, 1e-10)).epsilon(1e-12));
}
