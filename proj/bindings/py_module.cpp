// Python bindings for the core operations: the information objective, the
// evaluation maps, Sobel preprocessing, the segmentation joint, and
// config-driven training.
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "iic/config.hpp"
#include "iic/evalmap.hpp"
#include "iic/harness.hpp"
#include "iic/info.hpp"
#include "iic/pairing.hpp"
#include "iic/seg.hpp"

namespace py = pybind11;

namespace {

iic::ConfusionMatrix confusion_from_ndarray(const Eigen::MatrixXd& counts) {
    iic::ConfusionMatrix cm;
    cm.counts.assign(static_cast<size_t>(counts.rows()),
                     std::vector<int64_t>(static_cast<size_t>(counts.cols()), 0));
    for (Eigen::Index r = 0; r < counts.rows(); ++r)
        for (Eigen::Index c = 0; c < counts.cols(); ++c)
            cm.counts[static_cast<size_t>(r)][static_cast<size_t>(c)] = static_cast<int64_t>(counts(r, c));
    return cm;
}

py::dict report_to_dict(const iic::EvalReport& report) {
    py::dict d;
    d["per_head_accuracy"] = report.per_head_accuracy;
    d["per_head_loss"] = report.per_head_loss;
    d["marginal_entropy_per_head"] = report.marginal_entropy_per_head;
    d["best_head"] = report.best_head;
    d["acc_best"] = report.acc_best;
    d["acc_avg"] = report.acc_avg;
    d["acc_std"] = report.acc_std;
    return d;
}

}  // namespace

PYBIND11_MODULE(_iic, m) {
    m.doc() = "Invariant-information clustering: exact discrete MI objective, "
              "evaluation maps, and config-driven training.";

    m.def(
        "joint_matrix",
        [](const Eigen::MatrixXd& z, const Eigen::MatrixXd& zt, double clamp_eps) {
            return iic::joint_matrix({z}, {zt}, clamp_eps).values;
        },
        py::arg("z"), py::arg("zt"), py::arg("clamp_eps") = iic::kClampEpsF64,
        "Symmetrized, normalized, clamped C x C joint from paired soft assignments.");

    m.def(
        "mutual_information",
        [](const Eigen::MatrixXd& P, double clamp_eps) {
            auto b = iic::mutual_information({P, clamp_eps});
            py::dict d;
            d["mi"] = b.mi;
            d["h_z"] = b.h_z;
            d["h_z_given_zt"] = b.h_z_given_zt;
            return d;
        },
        py::arg("P"), py::arg("clamp_eps") = 0.0, "MI and its entropy decomposition (nats).");

    m.def(
        "iic_loss",
        [](const Eigen::MatrixXd& z, const Eigen::MatrixXd& zt, double lam, double clamp_eps) {
            return iic::iic_loss({z}, {zt}, lam, clamp_eps);
        },
        py::arg("z"), py::arg("zt"), py::arg("lam") = 1.0, py::arg("clamp_eps") = iic::kClampEpsF64,
        "Negative I_lambda of the pair (the training loss).");

    m.def(
        "mi_gradient_oracle",
        [](const Eigen::MatrixXd& P, double clamp_eps) { return iic::mi_gradient_oracle({P, clamp_eps}); },
        py::arg("P"), py::arg("clamp_eps") = iic::kClampEpsF64,
        "dI/dP treating the joint's entries as free variables.");

    m.def(
        "hungarian_match",
        [](const Eigen::MatrixXd& counts) { return iic::hungarian_match(confusion_from_ndarray(counts)).map; },
        py::arg("counts"), "Accuracy-maximizing permutation of predicted clusters onto classes.");

    m.def(
        "majority_map",
        [](const Eigen::MatrixXd& counts) { return iic::majority_map(confusion_from_ndarray(counts)).map; },
        py::arg("counts"), "Many-to-one map: each predicted cluster to its majority class.");

    m.def(
        "accuracy",
        [](const std::vector<int64_t>& preds, const std::vector<int64_t>& truths,
           const std::vector<int64_t>& mapping, int64_t k_gt) {
            iic::EvalMap em;
            em.kind = iic::MapKind::many_to_one;
            em.map = mapping;
            return iic::accuracy(preds, truths, em, k_gt);
        },
        py::arg("predictions"), py::arg("truths"), py::arg("mapping"), py::arg("k_gt"));

    m.def("select_subhead", &iic::select_subhead, py::arg("losses"), "Index of the lowest loss (ties to lowest).");

    m.def(
        "sobel",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> image) {
            if (image.ndim() != 2) throw std::invalid_argument("sobel: expected an H x W array");
            const int64_t H = image.shape(0), W = image.shape(1);
            iic::TensorF t({1, H, W});
            std::copy(image.data(), image.data() + H * W, t.data());
            iic::TensorF s = iic::sobel_preprocess(t);
            py::array_t<float> out({int64_t(2), H, W});
            std::copy(s.data(), s.data() + s.numel(), out.mutable_data());
            return out;
        },
        py::arg("image"), "Horizontal/vertical Sobel responses, reflect padding, scaled by 1/8.");

    m.def(
        "seg_joint",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> y,
           py::array_t<double, py::array::c_style | py::array::forcecast> yt, int64_t d, double clamp_eps) {
            if (y.ndim() != 4 || yt.ndim() != 4) throw std::invalid_argument("seg_joint: expected n x C x H x W");
            iic::Shape shape{y.shape(0), y.shape(1), y.shape(2), y.shape(3)};
            iic::TensorD ty(shape), tyt(shape);
            std::copy(y.data(), y.data() + ty.numel(), ty.data());
            std::copy(yt.data(), yt.data() + tyt.numel(), tyt.data());
            iic::TensorD mask({shape[0], shape[2], shape[3]});
            mask.fill(1.0);
            iic::TensorD joint = iic::seg_joint_conv(ty, tyt, iic::DisplacementSet(d), mask, clamp_eps);
            py::array_t<double> out({joint.dim(0), joint.dim(1), joint.dim(2), joint.dim(3)});
            std::copy(joint.data(), joint.data() + joint.numel(), out.mutable_data());
            return out;
        },
        py::arg("y"), py::arg("yt"), py::arg("d"), py::arg("clamp_eps") = iic::kClampEpsF64,
        "Per-displacement joint distributions over a (2d+1)^2 window.");

    m.def(
        "train",
        [](const std::string& config_text) {
            iic::RunConfig cfg = iic::parse_config_text(config_text);
            iic::TrainResult res = cfg.task == iic::Task::cluster ? iic::train_cluster(cfg)
                                                                  : iic::train_segment(cfg);
            py::dict d = report_to_dict(res.final_eval);
            d["metrics_path"] = res.metrics_path;
            d["final_checkpoint"] = res.final_checkpoint;
            d["loss_main"] = res.final_record.loss_main;
            d["loss_aux"] = res.final_record.loss_aux;
            return d;
        },
        py::arg("config_text"), "Run a training config (flat key = value text); returns the final report.");

    m.def(
        "evaluate",
        [](const std::string& ckpt, const std::string& config_text, const std::string& protocol) {
            iic::RunConfig cfg = iic::parse_config_text(config_text);
            iic::EvalProtocol proto = protocol == "many_to_one" ? iic::EvalProtocol::many_to_one
                                                                : iic::EvalProtocol::one_to_one;
            return report_to_dict(iic::evaluate_checkpoint(ckpt, cfg, proto));
        },
        py::arg("checkpoint"), py::arg("config_text"), py::arg("protocol") = "one_to_one");
}
