#include "iic/pairing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace iic {

TransformSpec sample_transform(Rng& rng, const TransformPolicy& policy, int64_t src_h, int64_t src_w,
                               int64_t channels) {
    TransformSpec g;
    g.color_scale.assign(static_cast<size_t>(channels), 1.0f);
    g.color_shift.assign(static_cast<size_t>(channels), 0.0f);
    if (policy.enable_crop) {
        if (policy.crop_size > src_h || policy.crop_size > src_w)
            throw std::invalid_argument("sample_transform: crop window exceeds source bounds");
        g.crop_h = g.crop_w = policy.crop_size;
        g.crop_r0 = rng.uniform_int(0, src_h - policy.crop_size);
        g.crop_c0 = rng.uniform_int(0, src_w - policy.crop_size);
    } else {
        g.crop_r0 = g.crop_c0 = 0;
        g.crop_h = src_h;
        g.crop_w = src_w;
    }
    if (policy.enable_rotation) g.rotation_deg = rng.uniform(-policy.rotation_max_deg, policy.rotation_max_deg);
    if (policy.enable_hflip) g.hflip = rng.bernoulli(0.5);
    if (policy.enable_color) {
        for (int64_t c = 0; c < channels; ++c) {
            g.color_scale[static_cast<size_t>(c)] =
                static_cast<float>(rng.uniform(policy.color_scale_min, policy.color_scale_max));
            g.color_shift[static_cast<size_t>(c)] =
                static_cast<float>(rng.uniform(policy.color_shift_min, policy.color_shift_max));
        }
    }
    return g;
}

TransformSpec center_spec(const TransformPolicy& policy, int64_t src_h, int64_t src_w, int64_t channels) {
    TransformSpec g;
    g.color_scale.assign(static_cast<size_t>(channels), 1.0f);
    g.color_shift.assign(static_cast<size_t>(channels), 0.0f);
    if (policy.enable_crop) {
        if (policy.crop_size > src_h || policy.crop_size > src_w)
            throw std::invalid_argument("center_spec: crop window exceeds source bounds");
        g.crop_h = g.crop_w = policy.crop_size;
        g.crop_r0 = (src_h - policy.crop_size) / 2;
        g.crop_c0 = (src_w - policy.crop_size) / 2;
    } else {
        g.crop_h = src_h;
        g.crop_w = src_w;
    }
    return g;
}

namespace {

inline float sample_clamped(const float* img, int64_t H, int64_t W, double r, double c) {
    // Bilinear with clamp-to-edge.
    r = std::min(std::max(r, 0.0), double(H - 1));
    c = std::min(std::max(c, 0.0), double(W - 1));
    int64_t r0 = std::min<int64_t>(static_cast<int64_t>(r), H - 1);
    int64_t c0 = std::min<int64_t>(static_cast<int64_t>(c), W - 1);
    int64_t r1 = std::min<int64_t>(r0 + 1, H - 1);
    int64_t c1 = std::min<int64_t>(c0 + 1, W - 1);
    double fr = r - double(r0), fc = c - double(c0);
    return static_cast<float>((1 - fr) * (1 - fc) * img[r0 * W + c0] + (1 - fr) * fc * img[r0 * W + c1] +
                              fr * (1 - fc) * img[r1 * W + c0] + fr * fc * img[r1 * W + c1]);
}

}  // namespace

TensorF apply_transform(const TensorF& x, const TransformSpec& g) {
    if (x.rank() != 3) throw std::invalid_argument("apply_transform: expected c x H x W image");
    const int64_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (g.crop_r0 < 0 || g.crop_c0 < 0 || g.crop_r0 + g.crop_h > H || g.crop_c0 + g.crop_w > W)
        throw std::invalid_argument("apply_transform: crop outside source bounds");
    if (static_cast<int64_t>(g.color_scale.size()) != C || static_cast<int64_t>(g.color_shift.size()) != C)
        throw std::invalid_argument("apply_transform: channel count mismatch with spec");

    const int64_t oh = g.crop_h, ow = g.crop_w;
    TensorF out({C, oh, ow});

    const bool rotate = g.rotation_deg != 0.0;
    Affine2D rot;
    if (rotate) rot = Affine2D::rotation_sampling(g.rotation_deg, (oh - 1) / 2.0, (ow - 1) / 2.0);

    std::vector<float> cropped(static_cast<size_t>(oh * ow));
    for (int64_t ch = 0; ch < C; ++ch) {
        const float* src = x.data() + ch * H * W;
        for (int64_t r = 0; r < oh; ++r)
            for (int64_t c = 0; c < ow; ++c)
                cropped[static_cast<size_t>(r * ow + c)] = src[(r + g.crop_r0) * W + (c + g.crop_c0)];

        float* dst = out.data() + ch * oh * ow;
        for (int64_t r = 0; r < oh; ++r) {
            for (int64_t c = 0; c < ow; ++c) {
                const int64_t cc = g.hflip ? ow - 1 - c : c;
                float v;
                if (rotate) {
                    auto [sr, sc] = rot.apply(double(r), double(cc));
                    v = sample_clamped(cropped.data(), oh, ow, sr, sc);
                } else {
                    v = cropped[static_cast<size_t>(r * ow + cc)];
                }
                v = v * g.color_scale[static_cast<size_t>(ch)] + g.color_shift[static_cast<size_t>(ch)];
                dst[r * ow + c] = std::min(std::max(v, 0.0f), 1.0f);
            }
        }
    }
    return out;
}

Affine2D transform_geometry_to_original(const TransformSpec& g, const TransformSpec& center) {
    if (g.crop_h != center.crop_h || g.crop_w != center.crop_w)
        throw std::invalid_argument("transform_geometry_to_original: crop sizes differ");
    Affine2D m = Affine2D::identity();
    if (g.hflip) m = Affine2D::hflip(g.crop_w);
    if (g.rotation_deg != 0.0)
        m = Affine2D::rotation_sampling(g.rotation_deg, (g.crop_h - 1) / 2.0, (g.crop_w - 1) / 2.0).compose(m);
    m = Affine2D::translation(double(g.crop_r0 - center.crop_r0), double(g.crop_c0 - center.crop_c0)).compose(m);
    return m;
}

TensorF rgb_to_gray(const TensorF& x) {
    if (x.rank() != 3) throw std::invalid_argument("rgb_to_gray: expected c x H x W image");
    if (x.dim(0) == 1) return x;
    if (x.dim(0) != 3) throw std::invalid_argument("rgb_to_gray: expected 1 or 3 channels");
    const int64_t H = x.dim(1), W = x.dim(2), hw = H * W;
    TensorF out({1, H, W});
    for (int64_t p = 0; p < hw; ++p)
        out[p] = 0.299f * x[p] + 0.587f * x[hw + p] + 0.114f * x[2 * hw + p];
    return out;
}

TensorF sobel_preprocess(const TensorF& gray) {
    TensorF g = gray;
    if (g.rank() == 2) g = g.reshaped({1, gray.dim(0), gray.dim(1)});
    if (g.rank() != 3 || g.dim(0) != 1) throw std::invalid_argument("sobel_preprocess: single-channel input required");
    const int64_t H = g.dim(1), W = g.dim(2);
    TensorF out({2, H, W});
    auto refl = [](int64_t i, int64_t n) {
        if (i < 0) return -i;
        if (i >= n) return 2 * n - 2 - i;
        return i;
    };
    const float* src = g.data();
    for (int64_t r = 0; r < H; ++r) {
        for (int64_t c = 0; c < W; ++c) {
            float gx = 0.0f, gy = 0.0f;
            for (int64_t dr = -1; dr <= 1; ++dr) {
                for (int64_t dc = -1; dc <= 1; ++dc) {
                    const float v = src[refl(r + dr, H) * W + refl(c + dc, W)];
                    // Gx: column derivative, Gy: row derivative.
                    const int64_t wx = dc * (dr == 0 ? 2 : 1);
                    const int64_t wy = dr * (dc == 0 ? 2 : 1);
                    gx += static_cast<float>(wx) * v;
                    gy += static_cast<float>(wy) * v;
                }
            }
            out.data()[r * W + c] = gx / 8.0f;
            out.data()[H * W + r * W + c] = gy / 8.0f;
        }
    }
    return out;
}

PairBatch make_pair_batch(const std::vector<TensorF>& images, const std::vector<int64_t>& indices, int64_t r,
                          const TransformPolicy& policy, bool apply_sobel, Rng& rng) {
    if (indices.empty()) throw std::invalid_argument("make_pair_batch: empty index list");
    if (r < 1) throw std::invalid_argument("make_pair_batch: r must be >= 1");
    const TensorF& first = images.at(static_cast<size_t>(indices[0]));
    const int64_t src_c = first.dim(0), src_h = first.dim(1), src_w = first.dim(2);
    const TransformSpec center = center_spec(policy, src_h, src_w, src_c);

    PairBatch batch;
    const int64_t n = static_cast<int64_t>(indices.size()) * r;
    const int64_t out_c = apply_sobel ? 2 : src_c;
    batch.originals = TensorF({n, out_c, center.crop_h, center.crop_w});
    batch.transformed = TensorF({n, out_c, center.crop_h, center.crop_w});
    batch.specs.reserve(static_cast<size_t>(n));
    batch.center_specs.reserve(static_cast<size_t>(n));
    batch.source_indices.reserve(static_cast<size_t>(n));

    int64_t row = 0;
    for (int64_t idx : indices) {
        const TensorF& img = images.at(static_cast<size_t>(idx));
        TensorF original = apply_transform(img, center);
        if (apply_sobel) original = sobel_preprocess(rgb_to_gray(original));
        for (int64_t rep = 0; rep < r; ++rep, ++row) {
            TransformSpec spec = sample_transform(rng, policy, src_h, src_w, src_c);
            TensorF transformed = apply_transform(img, spec);
            if (apply_sobel) transformed = sobel_preprocess(rgb_to_gray(transformed));
            const int64_t plane = out_c * center.crop_h * center.crop_w;
            std::copy(original.data(), original.data() + plane, batch.originals.data() + row * plane);
            std::copy(transformed.data(), transformed.data() + plane, batch.transformed.data() + row * plane);
            batch.specs.push_back(std::move(spec));
            batch.center_specs.push_back(center);
            batch.source_indices.push_back(idx);
        }
    }
    return batch;
}

VectorPairs synth_gaussian_pairs(const std::vector<std::array<double, 2>>& centers, double sigma, double jitter,
                                 int64_t n_per_cluster, Rng& rng) {
    if (centers.size() < 2) throw std::invalid_argument("synth_gaussian_pairs: need >= 2 centers");
    if (!(sigma > 0.0) || !(jitter >= 0.0)) throw std::invalid_argument("synth_gaussian_pairs: sigma/jitter invalid");

    double min_sep = 1e300;
    for (size_t a = 0; a < centers.size(); ++a)
        for (size_t b = a + 1; b < centers.size(); ++b) {
            const double dr = centers[a][0] - centers[b][0], dc = centers[a][1] - centers[b][1];
            min_sep = std::min(min_sep, std::sqrt(dr * dr + dc * dc));
        }
    const bool check_labels = min_sep >= 10.0 * sigma && jitter <= sigma;

    const int64_t n = static_cast<int64_t>(centers.size()) * n_per_cluster;
    VectorPairs out;
    out.x = TensorF({n, 2});
    out.xt = TensorF({n, 2});
    out.labels.reserve(static_cast<size_t>(n));
    out.source_indices.reserve(static_cast<size_t>(n));

    auto nearest = [&](double r, double c) {
        int64_t best = 0;
        double bd = 1e300;
        for (size_t k = 0; k < centers.size(); ++k) {
            const double dr = r - centers[k][0], dc = c - centers[k][1];
            const double d2 = dr * dr + dc * dc;
            if (d2 < bd) {
                bd = d2;
                best = static_cast<int64_t>(k);
            }
        }
        return best;
    };

    int64_t row = 0;
    for (size_t k = 0; k < centers.size(); ++k) {
        for (int64_t i = 0; i < n_per_cluster; ++i, ++row) {
            const double xr = centers[k][0] + sigma * rng.normal();
            const double xc = centers[k][1] + sigma * rng.normal();
            const double tr = xr + jitter * rng.normal();
            const double tc = xc + jitter * rng.normal();
            out.x.at(row, 0) = static_cast<float>(xr);
            out.x.at(row, 1) = static_cast<float>(xc);
            out.xt.at(row, 0) = static_cast<float>(tr);
            out.xt.at(row, 1) = static_cast<float>(tc);
            out.labels.push_back(static_cast<int64_t>(k));
            out.source_indices.push_back(row);
            if (check_labels && (nearest(xr, xc) != static_cast<int64_t>(k) || nearest(tr, tc) != static_cast<int64_t>(k)))
                throw std::runtime_error("synth_gaussian_pairs: pairing broke the nearest-center label");
        }
    }
    return out;
}

VectorPairs make_vector_pair_batch(const std::vector<TensorF>& points, const std::vector<int64_t>& indices,
                                   int64_t r, double jitter, Rng& rng) {
    if (indices.empty()) throw std::invalid_argument("make_vector_pair_batch: empty index list");
    if (r < 1) throw std::invalid_argument("make_vector_pair_batch: r must be >= 1");
    const int64_t d = points.at(static_cast<size_t>(indices[0])).numel();
    const int64_t n = static_cast<int64_t>(indices.size()) * r;
    VectorPairs out;
    out.x = TensorF({n, d});
    out.xt = TensorF({n, d});
    out.source_indices.reserve(static_cast<size_t>(n));
    int64_t row = 0;
    for (int64_t idx : indices) {
        const TensorF& p = points.at(static_cast<size_t>(idx));
        for (int64_t rep = 0; rep < r; ++rep, ++row) {
            for (int64_t j = 0; j < d; ++j) {
                out.x.at(row, j) = p[j];
                out.xt.at(row, j) = p[j] + static_cast<float>(jitter * rng.normal());
            }
            out.source_indices.push_back(idx);
        }
    }
    return out;
}

}  // namespace iic
