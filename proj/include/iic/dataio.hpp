// Dataset ingestion (IDX, binary PNM, synthetic fixtures), splits, and
// metrics export.
#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "iic/rng.hpp"
#include "iic/tensor.hpp"

namespace iic {

struct IdxError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PnmError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class DatasetKind { vectors, images };

struct SplitTag {
    bool train = false;
    bool eval = false;
};

struct Dataset {
    DatasetKind kind = DatasetKind::images;
    std::vector<TensorF> samples;                   // vectors: {d}; images: {c,H,W}
    std::vector<int64_t> labels;                    // per-sample class ids (evaluation only); empty if unlabelled
    std::vector<std::vector<uint8_t>> pixel_labels; // per-pixel ground truth for segmentation; empty otherwise
    std::vector<SplitTag> split_tags;

    int64_t size() const { return static_cast<int64_t>(samples.size()); }
    bool has_labels() const { return !labels.empty(); }

    std::vector<int64_t> train_indices() const;
    std::vector<int64_t> eval_indices() const;
};

// IDX: big-endian u32 magic (0x00000801 labels, 0x00000803 images),
// big-endian u32 dims, raw u8 payload. Pixels scaled to [0,1].
Dataset read_idx_images(const std::string& path);
std::vector<int64_t> read_idx_labels(const std::string& path);

// Attach labels to an image dataset (sizes must agree).
void attach_labels(Dataset& ds, std::vector<int64_t> labels);

// Binary PNM, P5 (gray) / P6 (rgb), maxval 255. Lossless round trip for u8.
struct PnmImage {
    int64_t channels = 1;  // 1 or 3
    int64_t height = 0, width = 0;
    std::vector<uint8_t> data;  // interleaved rows, channel-minor
};

PnmImage read_pnm(const std::string& path);
void write_pnm(const std::string& path, const PnmImage& img);

// Render a label raster through a fixed color palette (distinct per class).
void write_label_pnm(const std::string& path, const std::vector<uint8_t>& labels, int64_t height, int64_t width);

TensorF pnm_to_tensor(const PnmImage& img);  // c x H x W in [0,1]

enum class SplitProtocol { unsupervised_full, separated };

// unsupervised_full: all samples train, labelled samples eval.
// separated: disjoint stratified partition by seeded shuffle.
void make_splits(Dataset& ds, SplitProtocol protocol, double train_frac, Rng& rng);

// Desk-scale dense-prediction fixture: images partitioned into 2-4 rectangular
// regions filled with procedural textures (horizontal stripes, checkerboard,
// high-mean uniform noise); per-pixel ground truth retained.
Dataset synth_texture_seg(int64_t n_images, int64_t size, int64_t n_classes, Rng& rng);

// Metrics CSV, one row per epoch, flushed per row.
struct MetricsRecord {
    int64_t epoch = 0;
    double loss_main = 0.0;
    double loss_aux = 0.0;
    double acc_best = 0.0;
    double acc_avg = 0.0;
    double acc_std = 0.0;
    std::vector<double> marginal_entropy_per_head;
};

class MetricsWriter {
public:
    MetricsWriter() = default;
    MetricsWriter(const std::string& path, int64_t n_heads);

    void append(const MetricsRecord& rec);

private:
    std::ofstream out_;
    int64_t n_heads_ = 0;
};

std::string format_metric(double v);

}  // namespace iic
