#include "iic/dataio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace iic {

std::vector<int64_t> Dataset::train_indices() const {
    std::vector<int64_t> out;
    for (size_t i = 0; i < split_tags.size(); ++i)
        if (split_tags[i].train) out.push_back(static_cast<int64_t>(i));
    return out;
}

std::vector<int64_t> Dataset::eval_indices() const {
    std::vector<int64_t> out;
    for (size_t i = 0; i < split_tags.size(); ++i)
        if (split_tags[i].eval) out.push_back(static_cast<int64_t>(i));
    return out;
}

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

namespace {

std::vector<uint8_t> read_file_bytes(const std::string& path, const char* who) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IdxError(std::string(who) + ": cannot open " + path);
    in.seekg(0, std::ios::end);
    const std::streamoff len = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<uint8_t> bytes(static_cast<size_t>(len));
    if (len > 0) in.read(reinterpret_cast<char*>(bytes.data()), len);
    if (!in) throw IdxError(std::string(who) + ": read failed for " + path);
    return bytes;
}

uint32_t be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

struct IdxHeader {
    uint32_t magic = 0;
    std::vector<uint32_t> dims;
    size_t payload_offset = 0;
};

IdxHeader parse_idx_header(const std::vector<uint8_t>& bytes, uint32_t expected_magic, const char* who) {
    if (bytes.size() < 4) throw IdxError(std::string(who) + ": truncated header");
    IdxHeader h;
    h.magic = be32(bytes.data());
    if (h.magic != expected_magic) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), ": bad magic 0x%08x", h.magic);
        throw IdxError(std::string(who) + buf);
    }
    const size_t ndims = h.magic & 0xff;
    if (bytes.size() < 4 + 4 * ndims) throw IdxError(std::string(who) + ": truncated dimension list");
    uint64_t numel = 1;
    for (size_t i = 0; i < ndims; ++i) {
        uint32_t d = be32(bytes.data() + 4 + 4 * i);
        if (d == 0) throw IdxError(std::string(who) + ": zero dimension");
        h.dims.push_back(d);
        numel *= d;
        if (numel > (uint64_t(1) << 40)) throw IdxError(std::string(who) + ": dimension product implausibly large");
    }
    h.payload_offset = 4 + 4 * ndims;
    if (bytes.size() - h.payload_offset != numel)
        throw IdxError(std::string(who) + ": payload size " + std::to_string(bytes.size() - h.payload_offset) +
                       " does not match dims (" + std::to_string(numel) + ")");
    return h;
}

}  // namespace

Dataset read_idx_images(const std::string& path) {
    auto bytes = read_file_bytes(path, "read_idx_images");
    IdxHeader h = parse_idx_header(bytes, 0x00000803u, "read_idx_images");
    const int64_t n = h.dims[0], H = h.dims[1], W = h.dims[2];
    Dataset ds;
    ds.kind = DatasetKind::images;
    ds.samples.reserve(static_cast<size_t>(n));
    const uint8_t* p = bytes.data() + h.payload_offset;
    for (int64_t i = 0; i < n; ++i) {
        TensorF img({1, H, W});
        for (int64_t q = 0; q < H * W; ++q) img[q] = static_cast<float>(p[i * H * W + q]) / 255.0f;
        ds.samples.push_back(std::move(img));
    }
    return ds;
}

std::vector<int64_t> read_idx_labels(const std::string& path) {
    auto bytes = read_file_bytes(path, "read_idx_labels");
    IdxHeader h = parse_idx_header(bytes, 0x00000801u, "read_idx_labels");
    const int64_t n = h.dims[0];
    std::vector<int64_t> labels(static_cast<size_t>(n));
    const uint8_t* p = bytes.data() + h.payload_offset;
    for (int64_t i = 0; i < n; ++i) labels[static_cast<size_t>(i)] = p[i];
    return labels;
}

void attach_labels(Dataset& ds, std::vector<int64_t> labels) {
    if (static_cast<int64_t>(labels.size()) != ds.size())
        throw std::invalid_argument("attach_labels: label count does not match sample count");
    ds.labels = std::move(labels);
}

// ---------------------------------------------------------------------------
// PNM (P5/P6 binary, maxval 255)
// ---------------------------------------------------------------------------

namespace {

// Reads one whitespace/comment-delimited token from a PNM header.
std::string next_pnm_token(const std::vector<uint8_t>& bytes, size_t& pos) {
    while (pos < bytes.size()) {
        if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (std::isspace(bytes[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
    if (tok.empty()) throw PnmError("read_pnm: truncated header");
    return tok;
}

}  // namespace

PnmImage read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PnmError("read_pnm: cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    size_t pos = 0;
    const std::string magic = next_pnm_token(bytes, pos);
    PnmImage img;
    if (magic == "P5")
        img.channels = 1;
    else if (magic == "P6")
        img.channels = 3;
    else
        throw PnmError("read_pnm: unsupported magic '" + magic + "'");
    img.width = std::stoll(next_pnm_token(bytes, pos));
    img.height = std::stoll(next_pnm_token(bytes, pos));
    const int64_t maxval = std::stoll(next_pnm_token(bytes, pos));
    if (maxval != 255) throw PnmError("read_pnm: maxval must be 255, got " + std::to_string(maxval));
    if (img.width <= 0 || img.height <= 0) throw PnmError("read_pnm: bad dimensions");
    ++pos;  // single whitespace after maxval
    const size_t need = static_cast<size_t>(img.channels * img.height * img.width);
    if (bytes.size() - pos < need) throw PnmError("read_pnm: truncated pixel data");
    img.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
    return img;
}

void write_pnm(const std::string& path, const PnmImage& img) {
    if (img.channels != 1 && img.channels != 3) throw PnmError("write_pnm: channels must be 1 or 3");
    if (static_cast<int64_t>(img.data.size()) != img.channels * img.height * img.width)
        throw PnmError("write_pnm: data size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw PnmError("write_pnm: cannot open " + path);
    out << (img.channels == 1 ? "P5" : "P6") << "\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
    if (!out) throw PnmError("write_pnm: write failed for " + path);
}

namespace {
// Fixed palette; distinct colors for up to 8 classes.
constexpr std::array<std::array<uint8_t, 3>, 8> kPalette = {{{230, 25, 75},
                                                             {60, 180, 75},
                                                             {0, 130, 200},
                                                             {255, 225, 25},
                                                             {145, 30, 180},
                                                             {70, 240, 240},
                                                             {240, 50, 230},
                                                             {128, 128, 128}}};
}  // namespace

void write_label_pnm(const std::string& path, const std::vector<uint8_t>& labels, int64_t height, int64_t width) {
    if (static_cast<int64_t>(labels.size()) != height * width)
        throw PnmError("write_label_pnm: label raster size mismatch");
    PnmImage img;
    img.channels = 3;
    img.height = height;
    img.width = width;
    img.data.resize(static_cast<size_t>(3 * height * width));
    for (int64_t p = 0; p < height * width; ++p) {
        const auto& color = kPalette[labels[static_cast<size_t>(p)] % kPalette.size()];
        img.data[static_cast<size_t>(3 * p + 0)] = color[0];
        img.data[static_cast<size_t>(3 * p + 1)] = color[1];
        img.data[static_cast<size_t>(3 * p + 2)] = color[2];
    }
    write_pnm(path, img);
}

TensorF pnm_to_tensor(const PnmImage& img) {
    TensorF t({img.channels, img.height, img.width});
    for (int64_t c = 0; c < img.channels; ++c)
        for (int64_t p = 0; p < img.height * img.width; ++p)
            t[c * img.height * img.width + p] =
                static_cast<float>(img.data[static_cast<size_t>(p * img.channels + c)]) / 255.0f;
    return t;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

void make_splits(Dataset& ds, SplitProtocol protocol, double train_frac, Rng& rng) {
    ds.split_tags.assign(static_cast<size_t>(ds.size()), SplitTag{});
    if (protocol == SplitProtocol::unsupervised_full) {
        const bool labelled = ds.has_labels() || !ds.pixel_labels.empty();
        for (auto& tag : ds.split_tags) {
            tag.train = true;
            tag.eval = labelled;  // only labelled samples can be evaluated
        }
        return;
    }
    if (!ds.has_labels()) throw std::invalid_argument("make_splits: separated protocol requires labels");
    if (!(train_frac > 0.0 && train_frac < 1.0))
        throw std::invalid_argument("make_splits: train_frac must be in (0,1)");
    std::map<int64_t, std::vector<int64_t>> by_class;
    for (int64_t i = 0; i < ds.size(); ++i) by_class[ds.labels[static_cast<size_t>(i)]].push_back(i);
    for (auto& [cls, idxs] : by_class) {
        rng.shuffle(idxs);
        const int64_t n_train = static_cast<int64_t>(std::llround(train_frac * static_cast<double>(idxs.size())));
        for (size_t j = 0; j < idxs.size(); ++j) {
            auto& tag = ds.split_tags[static_cast<size_t>(idxs[j])];
            tag.train = static_cast<int64_t>(j) < n_train;
            tag.eval = !tag.train;
        }
    }
}

// ---------------------------------------------------------------------------
// Texture segmentation fixture
// ---------------------------------------------------------------------------

namespace {

// Texture value at (r, c): class 0 horizontal stripes, class 1 checkerboard,
// class 2 high-mean uniform noise. Means are well separated (~0.20 / 0.60 /
// 0.92) so a small patch is sufficient to identify the class.
float texture_value(int64_t cls, int64_t r, int64_t c, int64_t phase_r, int64_t phase_c, int64_t period, Rng& rng) {
    switch (cls) {
        case 0:
            return (((r + phase_r) / period) % 2 == 0) ? 0.05f : 0.35f;
        case 1:
            return ((((r + phase_r) / period) + ((c + phase_c) / period)) % 2 == 0) ? 0.4f : 0.8f;
        default:
            return static_cast<float>(rng.uniform(0.85, 1.0));
    }
}

struct Rect {
    int64_t r0, c0, h, w;

    bool intersects(const Rect& o) const {
        return r0 < o.r0 + o.h && o.r0 < r0 + h && c0 < o.c0 + o.w && o.c0 < c0 + w;
    }
};

}  // namespace

Dataset synth_texture_seg(int64_t n_images, int64_t size, int64_t n_classes, Rng& rng) {
    if (size < 32) throw std::invalid_argument("synth_texture_seg: size must be >= 32");
    if (n_classes != 3) throw std::invalid_argument("synth_texture_seg: fixture is defined for 3 classes");
    Dataset ds;
    ds.kind = DatasetKind::images;
    ds.samples.reserve(static_cast<size_t>(n_images));
    ds.pixel_labels.reserve(static_cast<size_t>(n_images));
    for (int64_t i = 0; i < n_images; ++i) {
        std::vector<uint8_t> label(static_cast<size_t>(size * size));
        const int64_t base_cls = rng.uniform_int(0, 2);
        std::fill(label.begin(), label.end(), static_cast<uint8_t>(base_cls));
        // Overlay 1-3 rectangles. Every remaining strip of the base region must
        // stay at least `gap` wide, so local patches away from a boundary are
        // pure: each rectangle side is either flush with the image border or
        // >= gap away from it, and rectangles keep >= gap distance from each
        // other.
        const int64_t gap = 8;
        const int64_t n_rects = rng.uniform_int(1, 3);
        std::vector<Rect> placed;
        auto side_ok = [&](int64_t lo, int64_t len) { return (lo == 0 || lo >= gap) && (lo + len == size || lo + len <= size - gap); };
        for (int64_t k = 0; k < n_rects; ++k) {
            for (int attempt = 0; attempt < 30; ++attempt) {
                Rect cand;
                cand.h = rng.uniform_int(size / 4, size / 2);
                cand.w = rng.uniform_int(size / 4, size / 2);
                cand.r0 = rng.uniform_int(0, size - cand.h);
                cand.c0 = rng.uniform_int(0, size - cand.w);
                if (!side_ok(cand.r0, cand.h) || !side_ok(cand.c0, cand.w)) continue;
                Rect grown{cand.r0 - gap, cand.c0 - gap, cand.h + 2 * gap, cand.w + 2 * gap};
                bool clear = true;
                for (const auto& other : placed) clear &= !grown.intersects(other);
                if (!clear) continue;
                placed.push_back(cand);
                // Pick a class different from the base so regions stay visible.
                int64_t cls = rng.uniform_int(0, 1);
                if (cls >= base_cls) ++cls;
                for (int64_t r = cand.r0; r < cand.r0 + cand.h; ++r)
                    for (int64_t c = cand.c0; c < cand.c0 + cand.w; ++c)
                        label[static_cast<size_t>(r * size + c)] = static_cast<uint8_t>(cls);
                break;
            }
        }
        // Per-class random phases and periods, fixed within the image.
        std::array<int64_t, 3> phase_r{}, phase_c{}, period{};
        for (int64_t cls = 0; cls < 3; ++cls) {
            period[static_cast<size_t>(cls)] = rng.uniform_int(3, 4);
            phase_r[static_cast<size_t>(cls)] = rng.uniform_int(0, 7);
            phase_c[static_cast<size_t>(cls)] = rng.uniform_int(0, 7);
        }
        TensorF img({1, size, size});
        for (int64_t r = 0; r < size; ++r)
            for (int64_t c = 0; c < size; ++c) {
                const int64_t cls = label[static_cast<size_t>(r * size + c)];
                img[r * size + c] = texture_value(cls, r, c, phase_r[static_cast<size_t>(cls)],
                                                  phase_c[static_cast<size_t>(cls)], period[static_cast<size_t>(cls)],
                                                  rng);
            }
        ds.samples.push_back(std::move(img));
        ds.pixel_labels.push_back(std::move(label));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Metrics CSV
// ---------------------------------------------------------------------------

std::string format_metric(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

MetricsWriter::MetricsWriter(const std::string& path, int64_t n_heads) : n_heads_(n_heads) {
    out_.open(path);
    if (!out_) throw std::runtime_error("MetricsWriter: cannot open " + path);
    out_ << "epoch,loss_main,loss_aux,acc_best,acc_avg,acc_std";
    for (int64_t h = 0; h < n_heads_; ++h) out_ << ",entropy_h" << h;
    out_ << "\n";
    out_.flush();
}

void MetricsWriter::append(const MetricsRecord& rec) {
    out_ << rec.epoch << "," << format_metric(rec.loss_main) << "," << format_metric(rec.loss_aux) << ","
         << format_metric(rec.acc_best) << "," << format_metric(rec.acc_avg) << "," << format_metric(rec.acc_std);
    for (int64_t h = 0; h < n_heads_; ++h)
        out_ << "," << format_metric(h < static_cast<int64_t>(rec.marginal_entropy_per_head.size())
                                         ? rec.marginal_entropy_per_head[static_cast<size_t>(h)]
                                         : 0.0);
    out_ << "\n";
    out_.flush();
}

}  // namespace iic
