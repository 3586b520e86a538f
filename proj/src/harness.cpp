#include "iic/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <optional>
#include <sstream>

#include "iic/checkpoint.hpp"
#include "iic/loss_graph.hpp"
#include "iic/pairing.hpp"
#include "iic/seg.hpp"

namespace fs = std::filesystem;

namespace iic {

namespace {

// RNG stream ids derived from the master seed.
constexpr uint64_t kStreamData = 1;
constexpr uint64_t kStreamInit = 2;
constexpr uint64_t kStreamShuffleBase = 0x100;
constexpr uint64_t kStreamBatchBase = 0x100000000ULL;

uint64_t batch_stream(int64_t epoch, int64_t step) {
    return kStreamBatchBase + static_cast<uint64_t>(epoch) * 0x10000ULL + static_cast<uint64_t>(step);
}

std::vector<std::array<double, 2>> parse_centers(const std::string& spec) {
    std::vector<std::array<double, 2>> centers;
    std::istringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ';')) {
        const size_t comma = part.find(',');
        if (comma == std::string::npos) throw ConfigError("gauss_centers: expected 'r,c;r,c;...'");
        centers.push_back({std::stod(part.substr(0, comma)), std::stod(part.substr(comma + 1))});
    }
    if (centers.size() < 2) throw ConfigError("gauss_centers: need at least two centers");
    return centers;
}

template <typename T>
Tensor<T> to_dtype(const TensorF& t) {
    if constexpr (std::is_same_v<T, float>)
        return t;
    else
        return t.template cast<T>();
}

template <typename T>
double default_clamp_eps() {
    return std::is_same_v<T, float> ? kClampEpsF32 : kClampEpsF64;
}

std::string ckpt_name(const std::string& dir, int64_t epoch) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "epoch_%04d.ckpt", static_cast<int>(epoch));
    return dir + "/" + buf;
}

std::string pred_name(const std::string& dir, int64_t epoch, int64_t image) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "pred_%04d_%03d.pnm", static_cast<int>(epoch), static_cast<int>(image));
    return dir + "/" + buf;
}

}  // namespace

Dataset build_dataset(const RunConfig& cfg, Rng& rng) {
    if (cfg.dataset == "gauss") {
        VectorPairs pairs =
            synth_gaussian_pairs(parse_centers(cfg.gauss_centers), cfg.gauss_sigma, cfg.gauss_jitter,
                                 cfg.gauss_n_per_cluster, rng);
        Dataset ds;
        ds.kind = DatasetKind::vectors;
        const int64_t n = pairs.x.dim(0), dim = pairs.x.dim(1);
        ds.samples.reserve(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) {
            TensorF row({dim});
            for (int64_t j = 0; j < dim; ++j) row[j] = pairs.x.at(i, j);
            ds.samples.push_back(std::move(row));
        }
        ds.labels = pairs.labels;
        return ds;
    }
    if (cfg.dataset == "textures") {
        return synth_texture_seg(cfg.tex_n_images, cfg.tex_size, 3, rng);
    }
    // mnist
    Dataset ds = read_idx_images(cfg.mnist_images);
    attach_labels(ds, read_idx_labels(cfg.mnist_labels));
    if (cfg.mnist_subset > 0 && cfg.mnist_subset < ds.size()) {
        ds.samples.resize(static_cast<size_t>(cfg.mnist_subset));
        ds.labels.resize(static_cast<size_t>(cfg.mnist_subset));
    }
    return ds;
}

namespace {

// ---------------------------------------------------------------------------
// Shared evaluation machinery
// ---------------------------------------------------------------------------

template <typename T>
struct AssignmentSweep {
    // One entry per head: argmax labels over the swept samples (or pixels).
    std::vector<std::vector<int64_t>> preds;
    // Mean soft assignment per head (cluster marginal distribution).
    std::vector<std::vector<double>> mean_soft;
    // Identical-pair IIC loss per head, sample-weighted.
    std::vector<double> ident_loss;
    // Per-image argmax rasters of head `render_head` for the first few images
    // (segmentation rendering); empty unless requested.
    std::vector<std::vector<uint8_t>> rasters;
    int64_t total_rows = 0;
};

// Forward the eval-prep inputs of `indices` through one head bank and gather
// argmax predictions, mean soft assignments, and identical-pair losses.
template <typename T>
AssignmentSweep<T> sweep_assignments(Network<T>& net, const Dataset& ds, const RunConfig& cfg,
                                     const std::vector<int64_t>& indices, bool aux_bank, double clamp_eps,
                                     int64_t n_rasters) {
    const int64_t n_heads = aux_bank ? net.aux_head_count() : net.main_head_count();
    const int64_t k = aux_bank ? net.cfg.k_aux : net.cfg.k_gt;
    AssignmentSweep<T> sweep;
    sweep.preds.assign(static_cast<size_t>(n_heads), {});
    sweep.mean_soft.assign(static_cast<size_t>(n_heads), std::vector<double>(static_cast<size_t>(k), 0.0));
    sweep.ident_loss.assign(static_cast<size_t>(n_heads), 0.0);

    const int64_t chunk = 256;
    const TransformPolicy policy = cfg.transform_policy();

    for (size_t begin = 0; begin < indices.size(); begin += static_cast<size_t>(chunk)) {
        const size_t end = std::min(indices.size(), begin + static_cast<size_t>(chunk));
        const int64_t bn = static_cast<int64_t>(end - begin);

        // Assemble eval-prep inputs.
        Tensor<T> input;
        if (ds.kind == DatasetKind::vectors) {
            const int64_t dim = ds.samples[0].numel();
            input = Tensor<T>({bn, dim});
            for (int64_t i = 0; i < bn; ++i) {
                const TensorF& s = ds.samples[static_cast<size_t>(indices[begin + static_cast<size_t>(i)])];
                for (int64_t j = 0; j < dim; ++j) input.at(i, j) = static_cast<T>(s[j]);
            }
        } else {
            const TensorF& first = ds.samples[static_cast<size_t>(indices[begin])];
            const TransformSpec center = center_spec(policy, first.dim(1), first.dim(2), first.dim(0));
            for (int64_t i = 0; i < bn; ++i) {
                TensorF img = apply_transform(ds.samples[static_cast<size_t>(indices[begin + static_cast<size_t>(i)])],
                                              center);
                if (cfg.sobel) img = sobel_preprocess(rgb_to_gray(img));
                if (input.empty()) input = Tensor<T>({bn, img.dim(0), img.dim(1), img.dim(2)});
                Tensor<T> cast = to_dtype<T>(img);
                std::copy(cast.data(), cast.data() + cast.numel(), input.data() + i * cast.numel());
            }
        }

        auto x = ad::constant(std::move(input));
        auto feats = net.features(x, /*training=*/false);
        int64_t rows_this_chunk = bn;
        for (int64_t hd = 0; hd < n_heads; ++hd) {
            auto z = net.head_output(feats, aux_bank, hd);
            const Tensor<T>& zv = z->value;
            if (net.cfg.task == Task::cluster) {
                Eigen::MatrixXd rows(bn, k);
                for (int64_t i = 0; i < bn; ++i) {
                    int64_t arg = 0;
                    for (int64_t c = 0; c < k; ++c) {
                        const double v = static_cast<double>(zv.at(i, c));
                        rows(i, c) = v;
                        sweep.mean_soft[static_cast<size_t>(hd)][static_cast<size_t>(c)] += v;
                        if (v > static_cast<double>(zv.at(i, arg))) arg = c;
                    }
                    sweep.preds[static_cast<size_t>(hd)].push_back(arg);
                }
                // Identical-pair loss; accumulation mirrors the training chain.
                const Eigen::MatrixXd raw = rows.transpose() * rows;
                const JointChain chain = joint_chain_forward(raw, clamp_eps);
                sweep.ident_loss[static_cast<size_t>(hd)] += chain.loss(cfg.lambda) * static_cast<double>(bn);
            } else {
                const int64_t H = zv.dim(2), W = zv.dim(3), hw = H * W;
                rows_this_chunk = bn * hw;
                for (int64_t i = 0; i < bn; ++i) {
                    std::vector<uint8_t> raster;
                    const bool keep_raster = static_cast<int64_t>(sweep.rasters.size()) < n_rasters && hd == 0;
                    if (keep_raster) raster.resize(static_cast<size_t>(hw));
                    for (int64_t p = 0; p < hw; ++p) {
                        int64_t arg = 0;
                        for (int64_t c = 0; c < k; ++c) {
                            const double v = static_cast<double>(zv.data()[((i * k + c) * hw) + p]);
                            sweep.mean_soft[static_cast<size_t>(hd)][static_cast<size_t>(c)] += v;
                            if (v > static_cast<double>(zv.data()[((i * k + arg) * hw) + p])) arg = c;
                        }
                        sweep.preds[static_cast<size_t>(hd)].push_back(arg);
                        if (keep_raster) raster[static_cast<size_t>(p)] = static_cast<uint8_t>(arg);
                    }
                    if (keep_raster) sweep.rasters.push_back(std::move(raster));
                }
                // Identical-pair loss over the pixel assignments.
                Tensor<T> mask({bn, H, W});
                mask.fill(T(1));
                sweep.ident_loss[static_cast<size_t>(hd)] +=
                    seg_loss_value(zv, zv, mask, DisplacementSet(0), cfg.lambda, clamp_eps,
                                   SegAverageMode::outside) *
                    static_cast<double>(bn * hw);
            }
        }
        sweep.total_rows += rows_this_chunk;
    }

    for (int64_t hd = 0; hd < n_heads; ++hd) {
        for (auto& v : sweep.mean_soft[static_cast<size_t>(hd)]) v /= static_cast<double>(sweep.total_rows);
        sweep.ident_loss[static_cast<size_t>(hd)] /= static_cast<double>(sweep.total_rows);
    }
    return sweep;
}

std::vector<int64_t> gather_truths(const Dataset& ds, const std::vector<int64_t>& indices) {
    std::vector<int64_t> truths;
    if (!ds.pixel_labels.empty()) {
        for (int64_t idx : indices)
            for (uint8_t l : ds.pixel_labels[static_cast<size_t>(idx)]) truths.push_back(l);
    } else {
        for (int64_t idx : indices) truths.push_back(ds.labels[static_cast<size_t>(idx)]);
    }
    return truths;
}

// Evaluate one head bank. one_to_one maps each main sub-head by linear
// assignment on the eval split; many_to_one maps each aux sub-head by a
// majority map computed on the train split only.
template <typename T>
EvalReport evaluate_net(Network<T>& net, const Dataset& ds, const RunConfig& cfg, EvalProtocol protocol,
                        double clamp_eps, const std::vector<double>& selection_losses, const std::string& render_dir,
                        int64_t epoch) {
    const bool aux_bank = protocol == EvalProtocol::many_to_one;
    if (aux_bank && net.aux_head_count() == 0)
        throw std::invalid_argument("evaluate: many_to_one protocol requires auxiliary heads");
    const int64_t k = aux_bank ? net.cfg.k_aux : net.cfg.k_gt;
    const int64_t k_gt = cfg.k_gt;

    const auto eval_idx = ds.eval_indices();
    if (eval_idx.empty()) throw std::invalid_argument("evaluate: no labelled eval samples");
    const int64_t n_rasters = (net.cfg.task == Task::segment && !render_dir.empty()) ? 8 : 0;
    AssignmentSweep<T> eval_sweep = sweep_assignments(net, ds, cfg, eval_idx, aux_bank, clamp_eps, n_rasters);
    const std::vector<int64_t> eval_truths = gather_truths(ds, eval_idx);

    const int64_t n_heads = static_cast<int64_t>(eval_sweep.preds.size());
    EvalReport report;
    report.per_head_loss = selection_losses.empty() ? eval_sweep.ident_loss : selection_losses;

    std::optional<AssignmentSweep<T>> train_sweep;
    std::vector<int64_t> train_truths;
    if (aux_bank) {
        // Mapping hygiene: the many-to-one map comes from the train split.
        const auto train_idx = ds.train_indices();
        train_sweep = sweep_assignments(net, ds, cfg, train_idx, aux_bank, clamp_eps, 0);
        train_truths = gather_truths(ds, train_idx);
    }

    for (int64_t hd = 0; hd < n_heads; ++hd) {
        EvalMap map;
        if (aux_bank) {
            ConfusionMatrix cm =
                confusion_from_labels(train_sweep->preds[static_cast<size_t>(hd)], train_truths, k, k_gt);
            map = majority_map(cm);
        } else {
            ConfusionMatrix cm =
                confusion_from_labels(eval_sweep.preds[static_cast<size_t>(hd)], eval_truths, k, k_gt);
            map = hungarian_match(cm);
        }
        report.per_head_accuracy.push_back(
            accuracy(eval_sweep.preds[static_cast<size_t>(hd)], eval_truths, map, k_gt));

        const auto& soft = eval_sweep.mean_soft[static_cast<size_t>(hd)];
        double ent = 0.0;
        for (double p : soft)
            if (p > 0.0) ent -= p * std::log(p);
        report.marginal_entropy_per_head.push_back(ent);
        report.marginals_per_head.push_back(soft);

        std::vector<double> assign(static_cast<size_t>(k), 0.0);
        for (int64_t p : eval_sweep.preds[static_cast<size_t>(hd)]) assign[static_cast<size_t>(p)] += 1.0;
        for (double& v : assign) v /= static_cast<double>(eval_sweep.preds[static_cast<size_t>(hd)].size());
        report.assign_marginals_per_head.push_back(std::move(assign));
    }

    report.best_head = select_subhead(report.per_head_loss);
    report.acc_best = report.per_head_accuracy[static_cast<size_t>(report.best_head)];
    const double mean = std::accumulate(report.per_head_accuracy.begin(), report.per_head_accuracy.end(), 0.0) /
                        static_cast<double>(n_heads);
    double var = 0.0;
    for (double a : report.per_head_accuracy) var += (a - mean) * (a - mean);
    report.acc_avg = mean;
    report.acc_std = n_heads > 1 ? std::sqrt(var / static_cast<double>(n_heads)) : 0.0;

    if (n_rasters > 0) {
        const int64_t size = ds.samples[static_cast<size_t>(eval_idx[0])].dim(1);
        for (size_t i = 0; i < eval_sweep.rasters.size(); ++i)
            write_label_pnm(pred_name(render_dir, epoch, static_cast<int64_t>(i)), eval_sweep.rasters[i], size,
                            size);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochLossTally {
    std::vector<double> main_sum, aux_sum;
    int64_t steps = 0;

    EpochLossTally(int64_t h_main, int64_t h_aux)
        : main_sum(static_cast<size_t>(h_main), 0.0), aux_sum(static_cast<size_t>(h_aux), 0.0) {}

    std::vector<double> main_means() const {
        std::vector<double> out(main_sum.size());
        for (size_t i = 0; i < main_sum.size(); ++i) out[i] = main_sum[i] / static_cast<double>(std::max<int64_t>(1, steps));
        return out;
    }
    std::vector<double> aux_means() const {
        std::vector<double> out(aux_sum.size());
        for (size_t i = 0; i < aux_sum.size(); ++i) out[i] = aux_sum[i] / static_cast<double>(std::max<int64_t>(1, steps));
        return out;
    }
};

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

template <typename T>
TrainResult train_impl(const RunConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    const double clamp_eps = cfg.clamp_eps > 0.0 ? cfg.clamp_eps : default_clamp_eps<T>();

    const Rng master = Rng(cfg.seed);
    Rng data_rng = master.child(kStreamData);
    Dataset ds = build_dataset(cfg, data_rng);
    make_splits(ds, cfg.split == "separated" ? SplitProtocol::separated : SplitProtocol::unsupervised_full,
                cfg.train_frac, data_rng);

    NetworkConfig ncfg;
    ncfg.preset = cfg.preset;
    ncfg.task = cfg.task;
    ncfg.k_gt = cfg.k_gt;
    ncfg.k_aux = cfg.k_aux;
    ncfg.h = cfg.h;
    ncfg.with_aux = cfg.aux;
    const TransformPolicy policy = cfg.transform_policy();
    if (ds.kind == DatasetKind::vectors) {
        ncfg.input_dim = ds.samples.at(0).numel();
    } else {
        const TensorF& first = ds.samples.at(0);
        ncfg.in_channels = cfg.sobel ? 2 : first.dim(0);
        ncfg.in_h = policy.enable_crop ? policy.crop_size : first.dim(1);
        ncfg.in_w = policy.enable_crop ? policy.crop_size : first.dim(2);
    }
    Rng init_rng = master.child(kStreamInit);
    Network<T> net = build_network<T>(ncfg, init_rng);

    auto main_params = net.params_base();
    {
        auto heads = net.params_heads(false);
        main_params.insert(main_params.end(), heads.begin(), heads.end());
    }
    auto aux_params = net.params_base();
    {
        auto heads = net.params_heads(true);
        aux_params.insert(aux_params.end(), heads.begin(), heads.end());
    }
    AdamState<T> opt_main(main_params, cfg.lr);
    AdamState<T> opt_aux(aux_params, cfg.lr);

    const int64_t h_main = net.main_head_count(), h_aux = net.aux_head_count();
    TrainResult result;
    result.metrics_path = cfg.out_dir + "/metrics.csv";
    MetricsWriter metrics(result.metrics_path, h_main);

    const auto train_idx_all = ds.train_indices();
    const int64_t distinct_per_step = std::max<int64_t>(1, cfg.batch_size / cfg.r);
    const DisplacementSet t_set(cfg.d);

    std::vector<double> last_main_losses(static_cast<size_t>(h_main), 0.0);

    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const bool train_main = (epoch % 2 == 0) || h_aux == 0;
        std::vector<int64_t> order = train_idx_all;
        Rng shuffle_rng = master.child(kStreamShuffleBase + static_cast<uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        EpochLossTally tally(h_main, h_aux);
        int64_t step = 0;
        for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(distinct_per_step), ++step) {
            const size_t end = std::min(order.size(), begin + static_cast<size_t>(distinct_per_step));
            std::vector<int64_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                       order.begin() + static_cast<std::ptrdiff_t>(end));
            if (static_cast<int64_t>(chunk.size()) * cfg.r < 2) continue;  // degenerate tail
            const uint64_t stream = batch_stream(epoch, step);
            Rng batch_rng = master.child(stream);

            ad::Var<T> x, xt;
            std::vector<Affine2D> align;
            Tensor<T> resample_mask;
            if (ds.kind == DatasetKind::vectors) {
                VectorPairs vp = make_vector_pair_batch(ds.samples, chunk, cfg.r, cfg.jitter, batch_rng);
                x = ad::constant(to_dtype<T>(vp.x));
                xt = ad::constant(to_dtype<T>(vp.xt));
            } else {
                PairBatch pb = make_pair_batch(ds.samples, chunk, cfg.r, policy, cfg.sobel, batch_rng);
                x = ad::constant(to_dtype<T>(pb.originals));
                xt = ad::constant(to_dtype<T>(pb.transformed));
                if (cfg.task == Task::segment) {
                    align.reserve(pb.specs.size());
                    for (size_t i = 0; i < pb.specs.size(); ++i)
                        align.push_back(
                            transform_geometry_to_original(pb.specs[i], pb.center_specs[i]).inverse());
                }
            }

            auto feats = net.features(x, /*training=*/true);
            auto feats_t = net.features(xt, /*training=*/true);

            auto head_loss = [&](bool aux_bank, int64_t hd) -> ad::Var<T> {
                auto z = net.head_output(feats, aux_bank, hd);
                auto zt = net.head_output(feats_t, aux_bank, hd);
                if (cfg.task == Task::cluster) return ad::iic_pair_loss(z, zt, cfg.lambda, clamp_eps);
                auto aligned = ad::bilinear_resample(zt, align, resample_mask);
                return ad::seg_mi_loss(z, aligned, resample_mask, t_set, cfg.lambda, clamp_eps,
                                       cfg.seg_average_mode());
            };

            auto checked_loss = [&](bool aux_bank, int64_t hd) {
                const char* bank = aux_bank ? "aux" : "main";
                ad::Var<T> l;
                try {
                    l = head_loss(aux_bank, hd);
                } catch (const std::runtime_error& e) {
                    throw TrainAbort(std::string("loss computation failed (") + e.what() + "): epoch " +
                                     std::to_string(epoch) + ", " + bank + " head " + std::to_string(hd) +
                                     ", batch stream " + std::to_string(stream));
                }
                if (!std::isfinite(static_cast<double>(l->value[0])))
                    throw TrainAbort(std::string("NaN loss: epoch ") + std::to_string(epoch) + ", " + bank +
                                     " head " + std::to_string(hd) + ", batch stream " + std::to_string(stream));
                return l;
            };

            std::vector<ad::Var<T>> active_losses;
            for (int64_t hd = 0; hd < h_main; ++hd) {
                auto l = checked_loss(false, hd);
                tally.main_sum[static_cast<size_t>(hd)] += static_cast<double>(l->value[0]);
                if (train_main) active_losses.push_back(l);
            }
            for (int64_t hd = 0; hd < h_aux; ++hd) {
                auto l = checked_loss(true, hd);
                tally.aux_sum[static_cast<size_t>(hd)] += static_cast<double>(l->value[0]);
                if (!train_main) active_losses.push_back(l);
            }
            tally.steps += 1;

            // Sum (not mean) over active sub-heads; per-head gradient scale is
            // then independent of h.
            auto total = ad::add_scalars(active_losses);
            auto& opt = train_main ? opt_main : opt_aux;
            ad::zero_grad(opt.params);
            ad::backward(total);
            adam_step(opt);
        }

        last_main_losses = tally.main_means();
        EvalReport er = evaluate_net(net, ds, cfg, EvalProtocol::one_to_one, clamp_eps, last_main_losses,
                                     cfg.task == Task::segment ? cfg.out_dir : "", epoch);
        MetricsRecord rec;
        rec.epoch = epoch;
        rec.loss_main = mean_of(tally.main_means());
        rec.loss_aux = mean_of(tally.aux_means());
        rec.acc_best = er.acc_best;
        rec.acc_avg = er.acc_avg;
        rec.acc_std = er.acc_std;
        rec.marginal_entropy_per_head = er.marginal_entropy_per_head;
        metrics.append(rec);
        result.history.push_back(rec);
        result.final_record = rec;
        result.final_eval = er;

        if (cfg.checkpoint_every > 0 && (epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs - 1)) {
            save_network(ckpt_name(cfg.out_dir, epoch), net);
            result.final_checkpoint = ckpt_name(cfg.out_dir, epoch);
        }
    }

    if (cfg.epochs == 0) {
        // No training: evaluate the randomly initialized network.
        EvalReport er = evaluate_net(net, ds, cfg, EvalProtocol::one_to_one, clamp_eps, {}, "", 0);
        MetricsRecord rec;
        rec.epoch = 0;
        rec.acc_best = er.acc_best;
        rec.acc_avg = er.acc_avg;
        rec.acc_std = er.acc_std;
        rec.marginal_entropy_per_head = er.marginal_entropy_per_head;
        result.final_record = rec;
        result.final_eval = er;
        save_network(ckpt_name(cfg.out_dir, 0), net);
        result.final_checkpoint = ckpt_name(cfg.out_dir, 0);
    }
    return result;
}

}  // namespace

TrainResult train_cluster(const RunConfig& cfg) {
    if (cfg.task != Task::cluster) throw ConfigError("train_cluster: config task must be cluster");
    return cfg.dtype == "f64" ? train_impl<double>(cfg) : train_impl<float>(cfg);
}

TrainResult train_segment(const RunConfig& cfg) {
    if (cfg.task != Task::segment) throw ConfigError("train_segment: config task must be segment");
    return cfg.dtype == "f64" ? train_impl<double>(cfg) : train_impl<float>(cfg);
}

namespace {

template <typename T>
EvalReport evaluate_checkpoint_impl(const std::string& ckpt_path, const RunConfig& cfg, EvalProtocol protocol) {
    cfg.validate();
    const double clamp_eps = cfg.clamp_eps > 0.0 ? cfg.clamp_eps : default_clamp_eps<T>();
    const Rng master = Rng(cfg.seed);
    Rng data_rng = master.child(kStreamData);
    Dataset ds = build_dataset(cfg, data_rng);
    make_splits(ds, cfg.split == "separated" ? SplitProtocol::separated : SplitProtocol::unsupervised_full,
                cfg.train_frac, data_rng);

    NetworkConfig ncfg;
    ncfg.preset = cfg.preset;
    ncfg.task = cfg.task;
    ncfg.k_gt = cfg.k_gt;
    ncfg.k_aux = cfg.k_aux;
    ncfg.h = cfg.h;
    ncfg.with_aux = cfg.aux;
    const TransformPolicy policy = cfg.transform_policy();
    if (ds.kind == DatasetKind::vectors) {
        ncfg.input_dim = ds.samples.at(0).numel();
    } else {
        const TensorF& first = ds.samples.at(0);
        ncfg.in_channels = cfg.sobel ? 2 : first.dim(0);
        ncfg.in_h = policy.enable_crop ? policy.crop_size : first.dim(1);
        ncfg.in_w = policy.enable_crop ? policy.crop_size : first.dim(2);
    }
    Rng init_rng = master.child(kStreamInit);
    Network<T> net = build_network<T>(ncfg, init_rng);
    load_network(ckpt_path, net);
    return evaluate_net(net, ds, cfg, protocol, clamp_eps, {}, "", 0);
}

}  // namespace

EvalReport evaluate_checkpoint(const std::string& ckpt_path, const RunConfig& cfg, EvalProtocol protocol) {
    return cfg.dtype == "f64" ? evaluate_checkpoint_impl<double>(ckpt_path, cfg, protocol)
                              : evaluate_checkpoint_impl<float>(ckpt_path, cfg, protocol);
}

}  // namespace iic
