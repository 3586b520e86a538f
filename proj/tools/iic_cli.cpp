// Command line front end: train clusterers and segmenters, evaluate
// checkpoints, generate synthetic fixtures, inspect configs.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "iic/config.hpp"
#include "iic/dataio.hpp"
#include "iic/harness.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int64_t> epochs;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "run config file (key = value lines)")->required();
    cmd->add_option("--seed", args.seed, "override config seed");
    cmd->add_option("--out", args.out, "override output directory");
    cmd->add_option("--epochs", args.epochs, "override epoch count");
}

iic::RunConfig load_config(const CommonArgs& args) {
    iic::RunConfig cfg = iic::parse_config_file(args.config_path);
    if (args.seed) cfg.seed = *args.seed;
    if (args.out) cfg.out_dir = *args.out;
    if (args.epochs) cfg.epochs = *args.epochs;
    return cfg;
}

void print_report(const iic::EvalReport& report) {
    std::printf("best sub-head: %lld (loss %.6f), accuracy %.4f\n", static_cast<long long>(report.best_head),
                report.per_head_loss[static_cast<size_t>(report.best_head)], report.acc_best);
    std::printf("sub-head accuracy: avg %.4f +- %.4f (std across sub-heads of this run)\n", report.acc_avg,
                report.acc_std);
    for (size_t h = 0; h < report.per_head_accuracy.size(); ++h)
        std::printf("  head %zu: acc %.4f, loss %.6f, marginal entropy %.4f\n", h, report.per_head_accuracy[h],
                    report.per_head_loss[h], report.marginal_entropy_per_head[h]);
}

int run_gen_synth(const iic::RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    iic::Rng rng = iic::Rng(cfg.seed).child(1);
    iic::Dataset ds = iic::build_dataset(cfg, rng);
    if (ds.kind == iic::DatasetKind::vectors) {
        const std::string path = cfg.out_dir + "/points.csv";
        std::ofstream out(path);
        out << "x0,x1,label\n";
        for (int64_t i = 0; i < ds.size(); ++i)
            out << iic::format_metric(ds.samples[static_cast<size_t>(i)][0]) << ","
                << iic::format_metric(ds.samples[static_cast<size_t>(i)][1]) << ","
                << ds.labels[static_cast<size_t>(i)] << "\n";
        std::printf("wrote %lld points to %s\n", static_cast<long long>(ds.size()), path.c_str());
        return 0;
    }
    for (int64_t i = 0; i < ds.size(); ++i) {
        const iic::TensorF& img = ds.samples[static_cast<size_t>(i)];
        iic::PnmImage pnm;
        pnm.channels = 1;
        pnm.height = img.dim(1);
        pnm.width = img.dim(2);
        pnm.data.resize(static_cast<size_t>(pnm.height * pnm.width));
        for (int64_t p = 0; p < pnm.height * pnm.width; ++p)
            pnm.data[static_cast<size_t>(p)] = static_cast<uint8_t>(std::min(255.0f, img[p] * 255.0f + 0.5f));
        char buf[32];
        std::snprintf(buf, sizeof(buf), "img_%04d.pgm", static_cast<int>(i));
        iic::write_pnm(cfg.out_dir + "/" + buf, pnm);
        if (!ds.pixel_labels.empty()) {
            std::snprintf(buf, sizeof(buf), "gt_%04d.ppm", static_cast<int>(i));
            iic::write_label_pnm(cfg.out_dir + "/" + buf, ds.pixel_labels[static_cast<size_t>(i)], pnm.height,
                                 pnm.width);
        }
    }
    std::printf("wrote %lld images (and ground-truth rasters) to %s\n", static_cast<long long>(ds.size()),
                cfg.out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Invariant-information clustering and segmentation trainer"};
    app.require_subcommand(1);

    CommonArgs train_cluster_args, train_seg_args, eval_args, synth_args, show_args;
    std::string ckpt_path, protocol = "one_to_one";

    CLI::App* cmd_tc = app.add_subcommand("train-cluster", "train an image/vector clusterer");
    add_common(cmd_tc, train_cluster_args);
    CLI::App* cmd_ts = app.add_subcommand("train-seg", "train a dense segmenter");
    add_common(cmd_ts, train_seg_args);
    CLI::App* cmd_ev = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(cmd_ev, eval_args);
    cmd_ev->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    cmd_ev->add_option("--protocol", protocol, "one_to_one | many_to_one");
    CLI::App* cmd_gs = app.add_subcommand("gen-synth", "generate the config's synthetic dataset");
    add_common(cmd_gs, synth_args);
    CLI::App* cmd_sc = app.add_subcommand("show-config", "echo the resolved config with defaults filled");
    add_common(cmd_sc, show_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << e.what() << "\n" << app.help() << "\n";
        return 1;
    }

    try {
        if (cmd_tc->parsed()) {
            iic::RunConfig cfg = load_config(train_cluster_args);
            iic::TrainResult res = iic::train_cluster(cfg);
            std::printf("done: %lld epochs, metrics at %s\n", static_cast<long long>(cfg.epochs),
                        res.metrics_path.c_str());
            print_report(res.final_eval);
        } else if (cmd_ts->parsed()) {
            iic::RunConfig cfg = load_config(train_seg_args);
            iic::TrainResult res = iic::train_segment(cfg);
            std::printf("done: %lld epochs, metrics at %s\n", static_cast<long long>(cfg.epochs),
                        res.metrics_path.c_str());
            print_report(res.final_eval);
        } else if (cmd_ev->parsed()) {
            iic::RunConfig cfg = load_config(eval_args);
            iic::EvalProtocol proto;
            if (protocol == "one_to_one")
                proto = iic::EvalProtocol::one_to_one;
            else if (protocol == "many_to_one")
                proto = iic::EvalProtocol::many_to_one;
            else {
                std::cerr << "unknown protocol '" << protocol << "'\n";
                return 1;
            }
            print_report(iic::evaluate_checkpoint(ckpt_path, cfg, proto));
        } else if (cmd_gs->parsed()) {
            return run_gen_synth(load_config(synth_args));
        } else if (cmd_sc->parsed()) {
            iic::RunConfig cfg = load_config(show_args);
            cfg.validate();
            std::cout << cfg.to_string();
        }
    } catch (const iic::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
