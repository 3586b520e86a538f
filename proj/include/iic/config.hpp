// Run configuration: flat `key = value` text, `#` comments. A run is fully
// reproducible from its config plus seed.
#pragma once

#include <cstdint>
#include <string>

#include "iic/nn.hpp"
#include "iic/pairing.hpp"
#include "iic/seg.hpp"

namespace iic {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    // task / data
    Task task = Task::cluster;
    std::string dataset = "gauss";  // gauss | textures | mnist
    std::string gauss_centers = "0,0;20,0;0,20";
    double gauss_sigma = 1.0;
    double gauss_jitter = 0.5;
    int64_t gauss_n_per_cluster = 500;
    int64_t tex_n_images = 200;
    int64_t tex_size = 64;
    std::string mnist_images;  // IDX image file
    std::string mnist_labels;  // IDX label file
    int64_t mnist_subset = 10000;  // 0 = all

    // architecture
    std::string preset = "mlp-small";
    int64_t k_gt = 3;
    int64_t k_aux = 9;
    int64_t h = 5;
    bool aux = true;

    // objective
    double lambda = 1.0;
    double clamp_eps = 0.0;  // 0 = dtype default
    int64_t d = 3;           // segmentation displacement radius
    std::string average_mode = "outside";

    // training
    int64_t epochs = 10;
    int64_t batch_size = 128;
    int64_t r = 1;
    double lr = 1e-4;
    uint64_t seed = 1;
    std::string dtype = "f32";
    int64_t checkpoint_every = 1;  // epochs; 0 = only final

    // pairing
    bool sobel = false;
    double jitter = 0.5;  // vector-pair noise
    bool crop = false;
    int64_t crop_size = 25;  // odd, so stride-2 3x3 convs produce integral sizes
    bool hflip = false;
    bool color = false;
    double color_scale_min = 0.6, color_scale_max = 1.4;
    double color_shift_min = -0.25, color_shift_max = 0.25;
    bool rotation = false;
    double rotation_max_deg = 25.0;

    // split / output
    std::string split = "unsupervised_full";
    double train_frac = 0.8;
    std::string out_dir = "out";

    TransformPolicy transform_policy() const;
    SegAverageMode seg_average_mode() const;
    void validate() const;
    std::string to_string() const;  // resolved config, defaults filled
};

RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text);

}  // namespace iic
