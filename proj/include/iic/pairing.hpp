// Paired-sample generation: random geometric/photometric image transforms,
// Sobel preprocessing, batch repeats, and the synthetic paired-point-cloud
// fixture. Everything is driven by an explicit seeded generator.
//
// Transform application order is fixed: crop -> rotate -> hflip -> color.
// When color transforms and Sobel are both enabled, color is applied first
// and Sobel afterwards.
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "iic/rng.hpp"
#include "iic/seg.hpp"
#include "iic/tensor.hpp"

namespace iic {

// A fully deterministic transform: applying it twice to the same image
// yields identical outputs.
struct TransformSpec {
    bool hflip = false;
    int64_t crop_r0 = 0, crop_c0 = 0, crop_h = 0, crop_w = 0;  // window in source pixels
    std::vector<float> color_scale;  // per channel, identity = 1
    std::vector<float> color_shift;  // per channel, identity = 0
    double rotation_deg = 0.0;
};

struct TransformPolicy {
    bool enable_crop = false;
    int64_t crop_size = 25;  // square output window when cropping is enabled
    bool enable_hflip = false;
    bool enable_color = false;
    double color_scale_min = 0.6, color_scale_max = 1.4;
    double color_shift_min = -0.25, color_shift_max = 0.25;
    bool enable_rotation = false;
    double rotation_max_deg = 25.0;
};

TransformSpec sample_transform(Rng& rng, const TransformPolicy& policy, int64_t src_h, int64_t src_w,
                               int64_t channels);

// Identity spec for the deterministic eval-style preparation: full frame or
// center crop, no flip/rotation/color.
TransformSpec center_spec(const TransformPolicy& policy, int64_t src_h, int64_t src_w, int64_t channels);

// Order: crop -> rotate (bilinear, clamp-to-edge) -> hflip -> per-channel
// affine color (scale then shift) clamped to [0,1].
TensorF apply_transform(const TensorF& x, const TransformSpec& g);

// Map from transformed-image pixel coordinates to the coordinates of the
// deterministically prepared original (center crop of the same size); the
// geometric part of g only. Its inverse aligns predictions on gx back onto x.
Affine2D transform_geometry_to_original(const TransformSpec& g, const TransformSpec& center);

// Grayscale conversion by luma weights 0.299/0.587/0.114.
TensorF rgb_to_gray(const TensorF& x);

// 2 x H x W tensor: channel 0 horizontal response, channel 1 vertical, via
// the standard 3x3 kernels with reflect padding, scaled by 1/8.
TensorF sobel_preprocess(const TensorF& gray);

struct PairBatch {
    TensorF originals;    // n x c x H x W, eval-style preparation
    TensorF transformed;  // n x c x H x W, transformed[i] = apply(specs[i], source i)
    std::vector<TransformSpec> specs;
    std::vector<TransformSpec> center_specs;  // preparation applied to each original
    std::vector<int64_t> source_indices;
};

// Each selected image appears r times, every occurrence paired with an
// independently sampled transform. apply_sobel replaces intensity channels
// with the two Sobel responses on both halves of the pair.
PairBatch make_pair_batch(const std::vector<TensorF>& images, const std::vector<int64_t>& indices, int64_t r,
                          const TransformPolicy& policy, bool apply_sobel, Rng& rng);

struct VectorPairs {
    TensorF x;   // n x d
    TensorF xt;  // n x d
    std::vector<int64_t> labels;          // ground truth, evaluation only
    std::vector<int64_t> source_indices;
};

// Isotropic Gaussian clusters with jittered partners. When the centers are
// separated by >= 10 sigma and jitter <= sigma, generation asserts that every
// pair shares its nearest-center label.
VectorPairs synth_gaussian_pairs(const std::vector<std::array<double, 2>>& centers, double sigma, double jitter,
                                 int64_t n_per_cluster, Rng& rng);

// Pair batch over an existing vector dataset: partner = point + jitter noise.
VectorPairs make_vector_pair_batch(const std::vector<TensorF>& points, const std::vector<int64_t>& indices,
                                   int64_t r, double jitter, Rng& rng);

}  // namespace iic
