#include <doctest.h>

#include <cmath>

#include "iic/info.hpp"
#include "iic/rng.hpp"
#include "iic/seg.hpp"
#include "oracles.hpp"

using iic::Affine2D;
using iic::DisplacementSet;
using iic::SegAverageMode;
using iic::TensorD;
namespace ad = iic::ad;

namespace {

// Random per-pixel simplex field.
TensorD random_label_field(iic::Rng& rng, int64_t n, int64_t C, int64_t H, int64_t W) {
    TensorD y({n, C, H, W});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t p = 0; p < H * W; ++p) {
            double sum = 0.0;
            for (int64_t c = 0; c < C; ++c) {
                const double v = rng.uniform(0.05, 1.0);
                y.data()[((i * C + c) * H * W) + p] = v;
                sum += v;
            }
            for (int64_t c = 0; c < C; ++c) y.data()[((i * C + c) * H * W) + p] /= sum;
        }
    return y;
}

TensorD ones_mask(int64_t n, int64_t H, int64_t W) {
    TensorD m({n, H, W});
    m.fill(1.0);
    return m;
}

TensorD hflip_field(const TensorD& y) {
    TensorD out = y;
    const int64_t n = y.dim(0), C = y.dim(1), H = y.dim(2), W = y.dim(3);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t r = 0; r < H; ++r)
                for (int64_t w = 0; w < W; ++w) out.at(i, c, r, w) = y.at(i, c, r, W - 1 - w);
    return out;
}

}  // namespace

TEST_CASE("bilinear_resample: identity map returns the input") {
    iic::Rng rng(3);
    TensorD y = random_label_field(rng, 2, 3, 5, 6);
    TensorD mask;
    TensorD out = iic::bilinear_resample(y, std::vector<Affine2D>(2, Affine2D::identity()), mask);
    for (int64_t i = 0; i < y.numel(); ++i) CHECK(out[i] == doctest::Approx(y[i]).epsilon(1e-12));
    for (int64_t i = 0; i < mask.numel(); ++i) CHECK(mask[i] == 1.0);
}

TEST_CASE("bilinear_resample: hflip map on an hflipped tensor recovers the original") {
    iic::Rng rng(5);
    TensorD y = random_label_field(rng, 1, 2, 4, 7);
    TensorD flipped = hflip_field(y);
    TensorD mask;
    TensorD back = iic::bilinear_resample(flipped, {Affine2D::hflip(7)}, mask);
    for (int64_t i = 0; i < y.numel(); ++i) CHECK(back[i] == doctest::Approx(y[i]).epsilon(1e-12));
}

TEST_CASE("bilinear_resample: 90-degree rotation relocates a delta") {
    const int64_t H = 5, W = 5;
    TensorD y({1, 1, H, W});
    y.at(0, 0, 1, 3) = 1.0;
    // Coordinate-mapping oracle: with theta = 90 about (2,2) the sampling map
    // is (r,c) -> (4-c, r), so output(r,c) = y(4-c, r).
    TensorD mask;
    TensorD out = iic::bilinear_resample(y, {Affine2D::rotation_sampling(90.0, 2.0, 2.0)}, mask);
    for (int64_t r = 0; r < H; ++r)
        for (int64_t c = 0; c < W; ++c) {
            const double expect = (4 - c == 1 && r == 3) ? 1.0 : 0.0;
            CHECK(out.at(0, 0, r, c) == doctest::Approx(expect).epsilon(1e-9));
        }
}

TEST_CASE("bilinear_resample: out-of-frame samples are masked out") {
    TensorD y({1, 1, 4, 4});
    y.fill(1.0);
    TensorD mask;
    TensorD out = iic::bilinear_resample(y, {Affine2D::translation(2.5, 0.0)}, mask);
    // Rows mapping beyond the last source row are invalid.
    CHECK(mask.data()[0 * 4 + 0] == 1.0);
    CHECK(mask.data()[2 * 4 + 0] == 0.0);
    CHECK(out.at(0, 0, 2, 0) == 0.0);
    CHECK(out.at(0, 0, 0, 0) == doctest::Approx(1.0));
}

TEST_CASE("bilinear_resample: non-invertible affine is an error") {
    TensorD y({1, 1, 3, 3});
    Affine2D degenerate;
    degenerate.m = {0, 0, 0, 0, 0, 0};
    TensorD mask;
    CHECK_THROWS_AS(iic::bilinear_resample(y, {degenerate}, mask), std::invalid_argument);
}

TEST_CASE("seg_joint_conv: 1x1 spatial extent with T={(0,0)} reduces to the batch joint") {
    iic::Rng rng(7);
    const int64_t n = 6, C = 3;
    TensorD y = random_label_field(rng, n, C, 1, 1);
    TensorD yt = random_label_field(rng, n, C, 1, 1);
    TensorD joint = iic::seg_joint_conv(y, yt, DisplacementSet(0), ones_mask(n, 1, 1), 1e-10);

    iic::AssignmentBatch z, zt;
    z.values.resize(n, C);
    zt.values.resize(n, C);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t c = 0; c < C; ++c) {
            z.values(i, c) = y.at(i, c, 0, 0);
            zt.values(i, c) = yt.at(i, c, 0, 0);
        }
    auto P = iic::joint_matrix(z, zt, 1e-10);
    for (int64_t a = 0; a < C; ++a)
        for (int64_t b = 0; b < C; ++b) CHECK(joint.at(a, b, 0, 0) == doctest::Approx(P.values(a, b)).epsilon(1e-9));
}

TEST_CASE("seg_joint_conv: uniform fields give uniform slices") {
    TensorD y({1, 2, 4, 4});
    y.fill(0.5);
    TensorD joint = iic::seg_joint_conv(y, y, DisplacementSet(1), ones_mask(1, 4, 4), 0.0);
    for (int64_t a = 0; a < 2; ++a)
        for (int64_t b = 0; b < 2; ++b)
            for (int64_t u = 0; u < 3; ++u)
                for (int64_t v = 0; v < 3; ++v) CHECK(joint.at(a, b, u, v) == doctest::Approx(0.25));
}

TEST_CASE("seg_joint_conv: matches the brute-force enumeration oracle") {
    iic::Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const int64_t n = rng.uniform_int(1, 2), C = rng.uniform_int(2, 4);
        const int64_t H = rng.uniform_int(3, 8), W = rng.uniform_int(3, 8);
        const int64_t d = rng.uniform_int(0, 2);
        TensorD y = random_label_field(rng, n, C, H, W);
        TensorD yt = random_label_field(rng, n, C, H, W);
        TensorD mask = ones_mask(n, H, W);
        // Knock out a few mask pixels.
        for (int64_t hits = rng.uniform_int(0, 5); hits > 0; --hits)
            mask.data()[rng.uniform_int(0, n * H * W - 1)] = 0.0;
        TensorD joint = iic::seg_joint_conv(y, yt, DisplacementSet(d), mask, 1e-10);
        auto ref = oracle::seg_joints_reference(y, yt, d, mask, 1e-10);
        int64_t ti = 0;
        for (int64_t tr = -d; tr <= d; ++tr)
            for (int64_t tc = -d; tc <= d; ++tc, ++ti)
                for (int64_t a = 0; a < C; ++a)
                    for (int64_t b = 0; b < C; ++b)
                        CHECK(std::abs(joint.at(a, b, tr + d, tc + d) -
                                       ref[static_cast<size_t>(ti)][static_cast<size_t>(a)][static_cast<size_t>(b)]) <
                              1e-6);
    }
}

TEST_CASE("seg loss: T={(0,0)} with identity transforms equals the flattened-pixel pair loss") {
    iic::Rng rng(13);
    const int64_t n = 2, C = 3, H = 3, W = 4;
    TensorD y = random_label_field(rng, n, C, H, W);
    TensorD yt = random_label_field(rng, n, C, H, W);
    TensorD mask = ones_mask(n, H, W);
    for (auto mode : {SegAverageMode::outside, SegAverageMode::inside}) {
        const double seg = iic::seg_loss_value(y, yt, mask, DisplacementSet(0), 1.0, 1e-10, mode);
        iic::AssignmentBatch z, zt;
        z.values.resize(n * H * W, C);
        zt.values.resize(n * H * W, C);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t p = 0; p < H * W; ++p)
                for (int64_t c = 0; c < C; ++c) {
                    z.values(i * H * W + p, c) = y.data()[((i * C + c) * H * W) + p];
                    zt.values(i * H * W + p, c) = yt.data()[((i * C + c) * H * W) + p];
                }
        CHECK(seg == doctest::Approx(iic::iic_loss(z, zt, 1.0, 1e-10)).epsilon(1e-9));
    }
}

TEST_CASE("seg loss: balanced constant one-hot fields reach -ln C in both modes") {
    const int64_t C = 3, H = 4, W = 4;
    TensorD y({static_cast<int64_t>(C), C, H, W});
    for (int64_t i = 0; i < C; ++i)
        for (int64_t p = 0; p < H * W; ++p) y.data()[((i * C + i) * H * W) + p] = 1.0;
    TensorD mask = ones_mask(C, H, W);
    for (auto mode : {SegAverageMode::outside, SegAverageMode::inside}) {
        const double loss = iic::seg_loss_value(y, y, mask, DisplacementSet(2), 1.0, 1e-12, mode);
        CHECK(loss == doctest::Approx(-std::log(3.0)).epsilon(1e-6));
    }
}

TEST_CASE("seg loss: each averaging mode matches its own brute-force reference") {
    iic::Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const int64_t n = 1, C = rng.uniform_int(2, 4), H = rng.uniform_int(3, 6), W = rng.uniform_int(3, 6);
        const int64_t d = 1;
        TensorD y = random_label_field(rng, n, C, H, W);
        TensorD yt = random_label_field(rng, n, C, H, W);
        TensorD mask = ones_mask(n, H, W);

        // outside: mean over t of I_lambda of each finalized slice.
        auto slices = oracle::seg_joints_reference(y, yt, d, mask, 1e-10);
        double outside_ref = 0.0;
        for (const auto& P : slices) {
            const double mi = oracle::mi_reference(P);
            const double hr = oracle::marginal_entropy_rows(P), hc = oracle::marginal_entropy_cols(P);
            outside_ref += -(mi + 0.5 * (hr + hc));
        }
        outside_ref /= static_cast<double>(slices.size());
        CHECK(iic::seg_loss_value(y, yt, mask, DisplacementSet(d), 1.5, 1e-10, SegAverageMode::outside) ==
              doctest::Approx(outside_ref).epsilon(1e-9));

        // inside: average the raw symmetrized slices, then one finalize + MI.
        auto raw_slices = oracle::seg_joints_reference(y, yt, d, mask, 0.0);  // clamp off, still normalized
        // Reconstruct unnormalized raws by redoing the sums here instead.
        const int64_t side = 2 * d + 1;
        oracle::Mat mean_raw = oracle::zeros(C, C);
        int64_t ti = 0;
        for (int64_t tr = -d; tr <= d; ++tr)
            for (int64_t tc = -d; tc <= d; ++tc, ++ti) {
                oracle::Mat S = oracle::zeros(C, C);
                for (int64_t r = 0; r < H; ++r)
                    for (int64_t c = 0; c < W; ++c) {
                        const int64_t vr = r + tr, vc = c + tc;
                        if (vr < 0 || vr >= H || vc < 0 || vc >= W) continue;
                        for (int64_t a = 0; a < C; ++a)
                            for (int64_t b = 0; b < C; ++b)
                                S[static_cast<size_t>(a)][static_cast<size_t>(b)] +=
                                    y.at(0, a, r, c) * yt.at(0, b, vr, vc);
                    }
                for (int64_t a = 0; a < C; ++a)
                    for (int64_t b = 0; b < C; ++b)
                        mean_raw[static_cast<size_t>(a)][static_cast<size_t>(b)] +=
                            0.5 * (S[static_cast<size_t>(a)][static_cast<size_t>(b)] +
                                   S[static_cast<size_t>(b)][static_cast<size_t>(a)]) /
                            static_cast<double>(side * side);
            }
        double total = 0.0;
        for (auto& row : mean_raw)
            for (double v : row) total += v;
        for (auto& row : mean_raw)
            for (auto& v : row) v = std::max(v / total, 1e-10);
        const double inside_ref = -(oracle::mi_reference(mean_raw) +
                                    0.5 * (oracle::marginal_entropy_rows(mean_raw) +
                                           oracle::marginal_entropy_cols(mean_raw)));
        CHECK(iic::seg_loss_value(y, yt, mask, DisplacementSet(d), 1.5, 1e-10, SegAverageMode::inside) ==
              doctest::Approx(inside_ref).epsilon(1e-9));
        (void)raw_slices;
    }
}

TEST_CASE("seg loss geometric consistency: resampler alignment equals manual index flip") {
    iic::Rng rng(19);
    const int64_t n = 2, C = 3, H = 5, W = 6, d = 1;
    TensorD y = random_label_field(rng, n, C, H, W);
    // Let yt be predictions on the flipped image; flipping back aligns them.
    TensorD yt_on_flipped = random_label_field(rng, n, C, H, W);
    TensorD mask;
    TensorD aligned =
        iic::bilinear_resample(yt_on_flipped, std::vector<Affine2D>(n, Affine2D::hflip(W)), mask);
    TensorD manual = hflip_field(yt_on_flipped);
    for (int64_t i = 0; i < manual.numel(); ++i) CHECK(aligned[i] == doctest::Approx(manual[i]).epsilon(1e-12));

    const double via_resample =
        iic::seg_loss_value(y, aligned, mask, DisplacementSet(d), 1.0, 1e-10, SegAverageMode::outside);
    const double via_manual =
        iic::seg_loss_value(y, manual, ones_mask(n, H, W), DisplacementSet(d), 1.0, 1e-10, SegAverageMode::outside);
    CHECK(via_resample == doctest::Approx(via_manual).epsilon(1e-6));
}

TEST_CASE("seg_mi_loss: gradient matches finite differences through resample + joint") {
    iic::Rng rng(23);
    const int64_t n = 1, C = 2, H = 4, W = 4, d = 1;
    auto y_param = ad::parameter(random_label_field(rng, n, C, H, W));
    auto yt_param = ad::parameter(random_label_field(rng, n, C, H, W));
    const std::vector<Affine2D> affines(n, Affine2D::hflip(W));

    for (auto mode : {SegAverageMode::outside, SegAverageMode::inside}) {
        auto forward = [&]() {
            auto ys = ad::softmax_channels(y_param);
            auto yts = ad::softmax_channels(yt_param);
            TensorD mask;
            auto aligned = ad::bilinear_resample(yts, affines, mask);
            return ad::seg_mi_loss(ys, aligned, mask, DisplacementSet(d), 1.5, 1e-10, mode);
        };
        for (auto& param : {y_param, yt_param}) {
            auto root = forward();
            ad::zero_grad<double>({param});
            ad::backward(root);
            TensorD analytic = param->grad;
            double worst = 0.0;
            for (int64_t i = 0; i < param->value.numel(); ++i) {
                auto f = [&]() { return forward()->value[0]; };
                const double fd = oracle::central_diff(f, param->value[i], 1e-5);
                worst = std::max(worst, std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd)));
            }
            CHECK(worst < 1e-4);
        }
    }
}

TEST_CASE("displacement set: size and containment of the zero offset") {
    DisplacementSet t(2);
    CHECK(t.size() == 25);
    bool has_zero = false;
    for (auto [a, b] : t.offsets) has_zero |= (a == 0 && b == 0);
    CHECK(has_zero);
    CHECK_THROWS_AS(DisplacementSet(-1), std::invalid_argument);
}
