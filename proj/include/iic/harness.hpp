// Training loops for image clustering and dense segmentation, alternate-epoch
// main/aux head scheduling, checkpointing, and checkpoint evaluation.
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "iic/config.hpp"
#include "iic/dataio.hpp"
#include "iic/evalmap.hpp"

namespace iic {

// NaN losses abort the run with a diagnostic; silent recovery would mask
// objective regressions.
struct TrainAbort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EvalReport {
    std::vector<double> per_head_accuracy;
    std::vector<double> per_head_loss;  // selection losses (lowest wins)
    std::vector<double> marginal_entropy_per_head;
    std::vector<std::vector<double>> marginals_per_head;         // mean soft assignment
    std::vector<std::vector<double>> assign_marginals_per_head;  // argmax assignment frequencies
    int64_t best_head = 0;
    double acc_best = 0.0, acc_avg = 0.0, acc_std = 0.0;
};

struct TrainResult {
    MetricsRecord final_record;
    std::vector<MetricsRecord> history;
    EvalReport final_eval;
    std::string metrics_path;
    std::string final_checkpoint;
};

// Seeded dataset construction from the config (fixtures or IDX files).
Dataset build_dataset(const RunConfig& cfg, Rng& rng);

TrainResult train_cluster(const RunConfig& cfg);
TrainResult train_segment(const RunConfig& cfg);

enum class EvalProtocol { one_to_one, many_to_one };

// Load a checkpoint produced by a run of `cfg` and evaluate it. one_to_one
// maps main heads via linear assignment on the eval split; many_to_one maps
// aux heads via a majority map computed on the train split and applied
// unchanged to the eval split.
EvalReport evaluate_checkpoint(const std::string& ckpt_path, const RunConfig& cfg, EvalProtocol protocol);

}  // namespace iic
