// Dense-prediction IIC objective: spatial-proximity pairing over a square
// displacement window, inverse geometric alignment via a bilinear resampler
// with a validity mask, and the per-displacement joint computed as a
// cross-correlation of the two label tensors.
#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "iic/autodiff.hpp"
#include "iic/loss_graph.hpp"
#include "iic/tensor.hpp"

namespace iic {

// Row/col affine map on pixel coordinates: (r, c) -> (m0 r + m1 c + m2, m3 r + m4 c + m5).
struct Affine2D {
    std::array<double, 6> m{1, 0, 0, 0, 1, 0};

    static Affine2D identity() { return {}; }

    static Affine2D translation(double dr, double dc) { return {{1, 0, dr, 0, 1, dc}}; }

    // Horizontal flip of a width-W grid: c -> W-1-c.
    static Affine2D hflip(int64_t width) { return {{1, 0, 0, 0, -1, double(width - 1)}}; }

    // Sampling map of a rotation by `deg` about (cr, cc): output pixels read
    // from the source rotated by -deg (the standard inverse-warp convention).
    static Affine2D rotation_sampling(double deg, double cr, double cc) {
        const double th = deg * M_PI / 180.0;
        const double ct = std::cos(th), st = std::sin(th);
        // [r';c'] = R(-th) [r-cr; c-cc] + [cr; cc]
        return {{ct, -st, cr - ct * cr + st * cc, st, ct, cc - st * cr - ct * cc}};
    }

    std::pair<double, double> apply(double r, double c) const {
        return {m[0] * r + m[1] * c + m[2], m[3] * r + m[4] * c + m[5]};
    }

    // a.compose(b) maps u -> a(b(u)).
    Affine2D compose(const Affine2D& b) const {
        const auto& a = m;
        return {{a[0] * b.m[0] + a[1] * b.m[3], a[0] * b.m[1] + a[1] * b.m[4], a[0] * b.m[2] + a[1] * b.m[5] + a[2],
                 a[3] * b.m[0] + a[4] * b.m[3], a[3] * b.m[1] + a[4] * b.m[4], a[3] * b.m[2] + a[4] * b.m[5] + a[5]}};
    }

    double det() const { return m[0] * m[4] - m[1] * m[3]; }

    Affine2D inverse() const {
        const double d = det();
        if (std::abs(d) < 1e-8) throw std::invalid_argument("Affine2D: non-invertible (|det| < 1e-8)");
        const double i0 = m[4] / d, i1 = -m[1] / d, i3 = -m[3] / d, i4 = m[0] / d;
        return {{i0, i1, -(i0 * m[2] + i1 * m[5]), i3, i4, -(i3 * m[2] + i4 * m[5])}};
    }
};

// All integer offsets (t_row, t_col) with |t_row| <= d and |t_col| <= d,
// in fixed row-major order; always contains (0,0).
struct DisplacementSet {
    int64_t d = 0;
    std::vector<std::pair<int64_t, int64_t>> offsets;

    explicit DisplacementSet(int64_t d_) : d(d_) {
        if (d < 0) throw std::invalid_argument("DisplacementSet: d must be >= 0");
        offsets.reserve(static_cast<size_t>((2 * d + 1) * (2 * d + 1)));
        for (int64_t tr = -d; tr <= d; ++tr)
            for (int64_t tc = -d; tc <= d; ++tc) offsets.emplace_back(tr, tc);
    }

    int64_t size() const { return static_cast<int64_t>(offsets.size()); }
};

enum class SegAverageMode {
    outside,  // mean over t of I_lambda(P_t); the default
    inside,   // I_lambda of the per-t-averaged joint
};

// ---------------------------------------------------------------------------
// Pure (non-graph) reference path, double precision
// ---------------------------------------------------------------------------

// Bilinear resample of an [n,C,H,W] field. affines[i] maps output pixel
// coordinates to source coordinates in y[i]. Out-of-frame samples produce 0
// and a 0 entry in the returned [n,H,W] validity mask.
template <typename T>
Tensor<T> bilinear_resample(const Tensor<T>& y, const std::vector<Affine2D>& affines, Tensor<T>& mask_out) {
    if (y.rank() != 4) throw std::invalid_argument("bilinear_resample: rank-4 input required");
    const int64_t n = y.dim(0), C = y.dim(1), H = y.dim(2), W = y.dim(3);
    if (static_cast<int64_t>(affines.size()) != n)
        throw std::invalid_argument("bilinear_resample: one affine per sample required");
    Tensor<T> out({n, C, H, W});
    mask_out = Tensor<T>({n, H, W});
    for (int64_t i = 0; i < n; ++i) {
        (void)affines[i].inverse();  // rejects degenerate maps up front
        for (int64_t r = 0; r < H; ++r) {
            for (int64_t c = 0; c < W; ++c) {
                auto [sr, sc] = affines[i].apply(double(r), double(c));
                if (sr < 0.0 || sr > double(H - 1) || sc < 0.0 || sc > double(W - 1)) continue;
                int64_t r0 = static_cast<int64_t>(std::floor(sr));
                int64_t c0 = static_cast<int64_t>(std::floor(sc));
                if (r0 > H - 2) r0 = H - 2;
                if (c0 > W - 2) c0 = W - 2;
                if (H == 1) r0 = 0;
                if (W == 1) c0 = 0;
                const double fr = sr - double(r0), fc = sc - double(c0);
                const int64_t r1 = std::min(r0 + 1, H - 1), c1 = std::min(c0 + 1, W - 1);
                mask_out.data()[(i * H + r) * W + c] = T(1);
                for (int64_t ch = 0; ch < C; ++ch) {
                    const T* src = y.data() + ((i * C + ch) * H) * W;
                    const double v = (1 - fr) * (1 - fc) * src[r0 * W + c0] + (1 - fr) * fc * src[r0 * W + c1] +
                                     fr * (1 - fc) * src[r1 * W + c0] + fr * fc * src[r1 * W + c1];
                    out.data()[((i * C + ch) * H + r) * W + c] = static_cast<T>(v);
                }
            }
        }
    }
    return out;
}

namespace detail_seg {

// Raw (unsymmetrized, unnormalized) per-displacement joints, double precision.
// raw[t](c,c') = sum over samples and valid pixels of y[c,u] * yt[c',u+t].
template <typename T>
std::vector<Eigen::MatrixXd> raw_displacement_joints(const Tensor<T>& y, const Tensor<T>& yt_aligned,
                                                     const DisplacementSet& T_set, const Tensor<T>& mask) {
    const int64_t n = y.dim(0), C = y.dim(1), H = y.dim(2), W = y.dim(3);
    std::vector<Eigen::MatrixXd> raws(static_cast<size_t>(T_set.size()), Eigen::MatrixXd::Zero(C, C));
    for (size_t ti = 0; ti < T_set.offsets.size(); ++ti) {
        auto [tr, tc] = T_set.offsets[ti];
        Eigen::MatrixXd& S = raws[ti];
        for (int64_t i = 0; i < n; ++i) {
            const T* mrow = mask.data() + i * H * W;
            for (int64_t r = std::max<int64_t>(0, -tr); r < std::min(H, H - tr); ++r) {
                for (int64_t c = std::max<int64_t>(0, -tc); c < std::min(W, W - tc); ++c) {
                    const int64_t v = (r + tr) * W + (c + tc);
                    if (mrow[v] == T(0)) continue;
                    const int64_t u = r * W + c;
                    for (int64_t a = 0; a < C; ++a) {
                        const double ya = y.data()[((i * C + a) * H) * W + u];
                        if (ya == 0.0) continue;
                        for (int64_t b = 0; b < C; ++b)
                            S(a, b) += ya * static_cast<double>(yt_aligned.data()[((i * C + b) * H) * W + v]);
                    }
                }
            }
        }
    }
    return raws;
}

}  // namespace detail_seg

// Per-displacement joint distributions: each (2d+1)^2 slice symmetrized,
// normalized by its own mass, and clamped, exactly as the batch joint.
// Output tensor is [C, C, 2d+1, 2d+1]; slice [., ., d+tr, d+tc] belongs to
// displacement (tr, tc).
template <typename T>
Tensor<double> seg_joint_conv(const Tensor<T>& y, const Tensor<T>& yt_aligned, const DisplacementSet& T_set,
                              const Tensor<T>& mask, double clamp_eps) {
    if (!y.same_shape(yt_aligned)) throw std::invalid_argument("seg_joint_conv: label field shape mismatch");
    if (y.rank() != 4) throw std::invalid_argument("seg_joint_conv: rank-4 label fields required");
    const int64_t C = y.dim(1), side = 2 * T_set.d + 1;
    auto raws = detail_seg::raw_displacement_joints(y, yt_aligned, T_set, mask);
    Tensor<double> out({C, C, side, side});
    for (size_t ti = 0; ti < T_set.offsets.size(); ++ti) {
        auto [tr, tc] = T_set.offsets[ti];
        JointMatrix P = finalize_joint(raws[ti], clamp_eps);
        for (int64_t a = 0; a < C; ++a)
            for (int64_t b = 0; b < C; ++b) out.at(a, b, tr + T_set.d, tc + T_set.d) = P.values(a, b);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Graph ops
// ---------------------------------------------------------------------------

namespace ad {

// Differentiable bilinear resampler; writes the validity mask to mask_out.
template <typename T>
Var<T> bilinear_resample(const Var<T>& y, const std::vector<Affine2D>& affines, Tensor<T>& mask_out) {
    Tensor<T> value = iic::bilinear_resample(y->value, affines, mask_out);
    const int64_t n = y->value.dim(0), C = y->value.dim(1), H = y->value.dim(2), W = y->value.dim(3);
    auto maps = std::make_shared<std::vector<Affine2D>>(affines);
    auto bw = [maps, n, C, H, W](Node<T>& self) {
        Node<T>* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t r = 0; r < H; ++r) {
                for (int64_t c = 0; c < W; ++c) {
                    auto [sr, sc] = (*maps)[i].apply(double(r), double(c));
                    if (sr < 0.0 || sr > double(H - 1) || sc < 0.0 || sc > double(W - 1)) continue;
                    int64_t r0 = static_cast<int64_t>(std::floor(sr));
                    int64_t c0 = static_cast<int64_t>(std::floor(sc));
                    if (r0 > H - 2) r0 = H - 2;
                    if (c0 > W - 2) c0 = W - 2;
                    if (H == 1) r0 = 0;
                    if (W == 1) c0 = 0;
                    const double fr = sr - double(r0), fc = sc - double(c0);
                    const int64_t r1 = std::min(r0 + 1, H - 1), c1 = std::min(c0 + 1, W - 1);
                    for (int64_t ch = 0; ch < C; ++ch) {
                        const T g = self.grad.data()[((i * C + ch) * H + r) * W + c];
                        if (g == T(0)) continue;
                        T* dst = p->grad.data() + ((i * C + ch) * H) * W;
                        dst[r0 * W + c0] += static_cast<T>((1 - fr) * (1 - fc)) * g;
                        dst[r0 * W + c1] += static_cast<T>((1 - fr) * fc) * g;
                        dst[r1 * W + c0] += static_cast<T>(fr * (1 - fc)) * g;
                        dst[r1 * W + c1] += static_cast<T>(fr * fc) * g;
                    }
                }
            }
        }
    };
    return detail::make_op<T>(std::move(value), {y}, std::move(bw));
}

// Scalar segmentation loss over aligned label fields.
//   outside: -(1/|T|) sum_t I_lambda(P_t), each slice normalized on its own
//   inside:  -I_lambda of the normalized average of the per-t symmetrized raws
// Displacement slices with zero mass (fully masked) are skipped.
template <typename T>
Var<T> seg_mi_loss(const Var<T>& y, const Var<T>& yt_aligned, const Tensor<T>& mask, const DisplacementSet& T_set,
                   double lambda, double clamp_eps, SegAverageMode mode) {
    if (!y->value.same_shape(yt_aligned->value)) throw std::invalid_argument("seg_mi_loss: shape mismatch");
    if (y->value.rank() != 4) throw std::invalid_argument("seg_mi_loss: rank-4 label fields required");
    if (lambda < 1.0) throw std::invalid_argument("seg_mi_loss: lambda must be >= 1");
    const int64_t n = y->value.dim(0), C = y->value.dim(1), H = y->value.dim(2), W = y->value.dim(3);

    auto raws = detail_seg::raw_displacement_joints(y->value, yt_aligned->value, T_set, mask);

    struct SavedState {
        std::vector<Eigen::MatrixXd> grads_raw;  // dLoss/dS_t per displacement
        std::vector<std::pair<int64_t, int64_t>> offsets;
    };
    auto saved = std::make_shared<SavedState>();
    saved->offsets = T_set.offsets;
    saved->grads_raw.assign(raws.size(), Eigen::MatrixXd::Zero(C, C));

    double loss = 0.0;
    if (mode == SegAverageMode::outside) {
        int64_t live = 0;
        std::vector<int> active(raws.size(), 0);
        std::vector<JointChain> chains(raws.size());
        for (size_t ti = 0; ti < raws.size(); ++ti) {
            if (!(raws[ti].sum() > 0.0)) continue;
            chains[ti] = joint_chain_forward(raws[ti], clamp_eps);
            active[ti] = 1;
            ++live;
        }
        if (live == 0) throw std::runtime_error("seg_mi_loss: all displacement slices are empty");
        for (size_t ti = 0; ti < raws.size(); ++ti) {
            if (!active[ti]) continue;
            loss += chains[ti].loss(lambda) / double(live);
            saved->grads_raw[ti] = joint_chain_backward(chains[ti], lambda, clamp_eps) / double(live);
        }
    } else {
        Eigen::MatrixXd mean_raw = Eigen::MatrixXd::Zero(C, C);
        for (const auto& S : raws) mean_raw += S;
        mean_raw /= double(raws.size());
        JointChain chain = joint_chain_forward(mean_raw, clamp_eps);
        loss = chain.loss(lambda);
        Eigen::MatrixXd E = joint_chain_backward(chain, lambda, clamp_eps) / double(raws.size());
        for (size_t ti = 0; ti < raws.size(); ++ti) saved->grads_raw[ti] = E;
    }

    auto mask_copy = std::make_shared<Tensor<T>>(mask);
    auto bw = [saved, mask_copy, n, C, H, W](Node<T>& self) {
        const double g0 = static_cast<double>(self.grad[0]);
        Node<T>* py = self.parents[0].get();
        Node<T>* pt = self.parents[1].get();
        for (size_t ti = 0; ti < saved->offsets.size(); ++ti) {
            auto [tr, tc] = saved->offsets[ti];
            const Eigen::MatrixXd& E = saved->grads_raw[ti];
            if (E.cwiseAbs().sum() == 0.0) continue;
            for (int64_t i = 0; i < n; ++i) {
                const T* mrow = mask_copy->data() + i * H * W;
                for (int64_t r = std::max<int64_t>(0, -tr); r < std::min(H, H - tr); ++r) {
                    for (int64_t c = std::max<int64_t>(0, -tc); c < std::min(W, W - tc); ++c) {
                        const int64_t v = (r + tr) * W + (c + tc);
                        if (mrow[v] == T(0)) continue;
                        const int64_t u = r * W + c;
                        if (py->requires_grad) {
                            py->ensure_grad();
                            for (int64_t a = 0; a < C; ++a) {
                                double s = 0.0;
                                for (int64_t b = 0; b < C; ++b)
                                    s += E(a, b) * static_cast<double>(pt->value.data()[((i * C + b) * H) * W + v]);
                                py->grad.data()[((i * C + a) * H) * W + u] += static_cast<T>(s * g0);
                            }
                        }
                        if (pt->requires_grad) {
                            pt->ensure_grad();
                            for (int64_t b = 0; b < C; ++b) {
                                double s = 0.0;
                                for (int64_t a = 0; a < C; ++a)
                                    s += E(a, b) * static_cast<double>(py->value.data()[((i * C + a) * H) * W + u]);
                                pt->grad.data()[((i * C + b) * H) * W + v] += static_cast<T>(s * g0);
                            }
                        }
                    }
                }
            }
        }
    };
    return detail::make_op<T>(Tensor<T>::scalar(static_cast<T>(loss)), {y, yt_aligned}, std::move(bw));
}

}  // namespace ad

// Non-graph segmentation loss value (double path for tests and evaluation).
template <typename T>
double seg_loss_value(const Tensor<T>& y, const Tensor<T>& yt_aligned, const Tensor<T>& mask,
                      const DisplacementSet& T_set, double lambda, double clamp_eps, SegAverageMode mode) {
    auto raws = detail_seg::raw_displacement_joints(y, yt_aligned, T_set, mask);
    if (mode == SegAverageMode::outside) {
        double loss = 0.0;
        int64_t live = 0;
        for (const auto& S : raws) {
            if (!(S.sum() > 0.0)) continue;
            loss += joint_chain_forward(S, clamp_eps).loss(lambda);
            ++live;
        }
        if (live == 0) throw std::runtime_error("seg_loss_value: all displacement slices are empty");
        return loss / double(live);
    }
    Eigen::MatrixXd mean_raw = Eigen::MatrixXd::Zero(y.dim(1), y.dim(1));
    for (const auto& S : raws) mean_raw += S;
    mean_raw /= double(raws.size());
    return joint_chain_forward(mean_raw, clamp_eps).loss(lambda);
}

}  // namespace iic
