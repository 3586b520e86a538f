// Network presets, multi-head architecture with auxiliary overclustering,
// and the Adam optimizer.
//
// Presets (desk-scale stand-ins for the paper-scale bases):
//   mlp-small: dense(in,64) relu dense(64,64) relu, dense heads
//   cnn-small: conv3x3(in,32) bn relu / conv3x3(32,64) bn relu /
//              conv3x3(64,64) bn relu; clustering uses strides {1,2,2} and a
//              global average pool with dense heads; segmentation keeps all
//              strides 1 and uses 1x1-conv heads for a full-resolution field.
// Heads are duplicated h times (sub-heads); the auxiliary bank outputs
// k_aux > k_gt clusters. All heads end in a softmax.
#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "iic/autodiff.hpp"
#include "iic/rng.hpp"
#include "iic/tensor.hpp"

namespace iic {

enum class Task { cluster, segment };

namespace nn {

template <typename T>
Tensor<T> he_uniform(Rng& rng, Shape shape, int64_t fan_in) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor<T> t(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(-limit, limit));
    return t;
}

template <typename T>
struct DenseLayer {
    ad::Var<T> w, b;

    static DenseLayer make(Rng& rng, int64_t d_in, int64_t d_out) {
        DenseLayer l;
        l.w = ad::parameter(he_uniform<T>(rng, {d_in, d_out}, d_in));
        l.b = ad::parameter(Tensor<T>::zeros({d_out}));
        return l;
    }

    ad::Var<T> operator()(const ad::Var<T>& x) const { return ad::dense(x, w, b); }

    void params(std::vector<ad::Var<T>>& out) const {
        out.push_back(w);
        out.push_back(b);
    }
};

template <typename T>
struct Conv2dLayer {
    ad::Var<T> k, b;
    int64_t stride = 1, pad = 0;

    static Conv2dLayer make(Rng& rng, int64_t cin, int64_t cout, int64_t ksize, int64_t stride, int64_t pad) {
        Conv2dLayer l;
        l.k = ad::parameter(he_uniform<T>(rng, {cout, cin, ksize, ksize}, cin * ksize * ksize));
        l.b = ad::parameter(Tensor<T>::zeros({cout}));
        l.stride = stride;
        l.pad = pad;
        return l;
    }

    ad::Var<T> operator()(const ad::Var<T>& x) const { return ad::conv2d(x, k, b, stride, pad); }

    void params(std::vector<ad::Var<T>>& out) const {
        out.push_back(k);
        out.push_back(b);
    }
};

template <typename T>
struct BatchNormLayer {
    ad::Var<T> gamma, beta;
    Tensor<T> running_mean, running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    static BatchNormLayer make(int64_t channels) {
        BatchNormLayer l;
        l.gamma = ad::parameter(Tensor<T>::full({channels}, T(1)));
        l.beta = ad::parameter(Tensor<T>::zeros({channels}));
        l.running_mean = Tensor<T>::zeros({channels});
        l.running_var = Tensor<T>::full({channels}, T(1));
        return l;
    }

    ad::Var<T> operator()(const ad::Var<T>& x, bool training) {
        return ad::batchnorm_nchw(x, gamma, beta, running_mean, running_var, training, momentum, eps);
    }

    void params(std::vector<ad::Var<T>>& out) const {
        out.push_back(gamma);
        out.push_back(beta);
    }
};

}  // namespace nn

struct NetworkConfig {
    std::string preset = "mlp-small";  // "mlp-small" | "cnn-small"
    Task task = Task::cluster;
    int64_t input_dim = 2;  // vector data (mlp)
    int64_t in_channels = 1, in_h = 25, in_w = 25;  // image data (cnn)
    int64_t k_gt = 3;
    int64_t k_aux = 9;
    int64_t h = 5;
    bool with_aux = true;
};

// Base network plus a bank of h main sub-heads at k_gt and (optionally)
// h auxiliary overclustering sub-heads at k_aux > k_gt. Sub-heads share the
// base parameters but own their head parameters.
template <typename T>
class Network {
public:
    NetworkConfig cfg;

    // mlp base
    nn::DenseLayer<T> fc1, fc2;
    // cnn base
    nn::Conv2dLayer<T> conv1, conv2, conv3;
    nn::BatchNormLayer<T> bn1, bn2, bn3;

    std::vector<nn::DenseLayer<T>> main_fc, aux_fc;     // cluster heads
    std::vector<nn::Conv2dLayer<T>> main_conv, aux_conv;  // segment heads (1x1)

    bool is_mlp() const { return cfg.preset == "mlp-small"; }

    // Shared trunk. Cluster task: [n, feat]; segment task: [n, feat, H, W].
    ad::Var<T> features(const ad::Var<T>& x, bool training) {
        if (is_mlp()) {
            return ad::relu(fc2(ad::relu(fc1(x))));
        }
        auto h1 = ad::relu(bn1(conv1(x), training));
        auto h2 = ad::relu(bn2(conv2(h1), training));
        auto h3 = ad::relu(bn3(conv3(h2), training));
        if (cfg.task == Task::cluster) return ad::global_avg_pool(h3);
        return h3;
    }

    int64_t main_head_count() const { return static_cast<int64_t>(is_mlp() || cfg.task == Task::cluster
                                                                      ? main_fc.size()
                                                                      : main_conv.size()); }
    int64_t aux_head_count() const { return static_cast<int64_t>(is_mlp() || cfg.task == Task::cluster
                                                                     ? aux_fc.size()
                                                                     : aux_conv.size()); }

    // Softmaxed output of one sub-head. Cluster: n x k simplex rows.
    // Segment: n x k x H x W per-pixel simplex fiber.
    ad::Var<T> head_output(const ad::Var<T>& feat, bool aux, int64_t idx) {
        if (cfg.task == Task::cluster) {
            const auto& bank = aux ? aux_fc : main_fc;
            return ad::softmax_rows(bank.at(static_cast<size_t>(idx))(feat));
        }
        const auto& bank = aux ? aux_conv : main_conv;
        return ad::softmax_channels(bank.at(static_cast<size_t>(idx))(feat));
    }

    std::vector<ad::Var<T>> params_base() const {
        std::vector<ad::Var<T>> out;
        if (is_mlp()) {
            fc1.params(out);
            fc2.params(out);
        } else {
            conv1.params(out);
            bn1.params(out);
            conv2.params(out);
            bn2.params(out);
            conv3.params(out);
            bn3.params(out);
        }
        return out;
    }

    std::vector<ad::Var<T>> params_heads(bool aux) const {
        std::vector<ad::Var<T>> out;
        for (const auto& l : (aux ? aux_fc : main_fc)) l.params(out);
        for (const auto& l : (aux ? aux_conv : main_conv)) l.params(out);
        return out;
    }

    std::vector<ad::Var<T>> params_all() const {
        auto out = params_base();
        auto m = params_heads(false);
        auto a = params_heads(true);
        out.insert(out.end(), m.begin(), m.end());
        out.insert(out.end(), a.begin(), a.end());
        return out;
    }
};

template <typename T>
Network<T> build_network(const NetworkConfig& cfg, Rng& rng) {
    if (cfg.h < 1) throw std::invalid_argument("build_network: h must be >= 1");
    if (cfg.k_gt < 2) throw std::invalid_argument("build_network: k_gt must be >= 2");
    if (cfg.with_aux && cfg.k_aux <= cfg.k_gt)
        throw std::invalid_argument("build_network: k_aux must exceed k_gt");
    if (cfg.preset != "mlp-small" && cfg.preset != "cnn-small")
        throw std::invalid_argument("build_network: unknown preset '" + cfg.preset + "'");
    if (cfg.preset == "mlp-small" && cfg.task == Task::segment)
        throw std::invalid_argument("build_network: segmentation requires a convolutional preset");

    Network<T> net;
    net.cfg = cfg;
    int64_t feat_dim = 64;
    if (cfg.preset == "mlp-small") {
        net.fc1 = nn::DenseLayer<T>::make(rng, cfg.input_dim, 64);
        net.fc2 = nn::DenseLayer<T>::make(rng, 64, 64);
    } else {
        const bool down = cfg.task == Task::cluster;  // stride-2 twice for clustering only
        net.conv1 = nn::Conv2dLayer<T>::make(rng, cfg.in_channels, 32, 3, 1, 1);
        net.bn1 = nn::BatchNormLayer<T>::make(32);
        net.conv2 = nn::Conv2dLayer<T>::make(rng, 32, 64, 3, down ? 2 : 1, 1);
        net.bn2 = nn::BatchNormLayer<T>::make(64);
        net.conv3 = nn::Conv2dLayer<T>::make(rng, 64, 64, 3, down ? 2 : 1, 1);
        net.bn3 = nn::BatchNormLayer<T>::make(64);
    }

    const int64_t n_aux = cfg.with_aux ? cfg.h : 0;
    if (cfg.task == Task::cluster) {
        for (int64_t i = 0; i < cfg.h; ++i) net.main_fc.push_back(nn::DenseLayer<T>::make(rng, feat_dim, cfg.k_gt));
        for (int64_t i = 0; i < n_aux; ++i) net.aux_fc.push_back(nn::DenseLayer<T>::make(rng, feat_dim, cfg.k_aux));
    } else {
        for (int64_t i = 0; i < cfg.h; ++i)
            net.main_conv.push_back(nn::Conv2dLayer<T>::make(rng, feat_dim, cfg.k_gt, 1, 1, 0));
        for (int64_t i = 0; i < n_aux; ++i)
            net.aux_conv.push_back(nn::Conv2dLayer<T>::make(rng, feat_dim, cfg.k_aux, 1, 1, 0));
    }
    return net;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

// State is bound to a fixed parameter list; step counts updates of that list.
template <typename T>
struct AdamState {
    int64_t step = 0;
    double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<ad::Var<T>> params;
    std::vector<Tensor<T>> m, v;

    explicit AdamState(std::vector<ad::Var<T>> p, double lr_ = 1e-4) : lr(lr_), params(std::move(p)) {
        m.reserve(params.size());
        v.reserve(params.size());
        for (const auto& q : params) {
            m.push_back(Tensor<T>::zeros(q->value.shape()));
            v.push_back(Tensor<T>::zeros(q->value.shape()));
        }
    }
};

// Standard Adam update with bias correction; gradients must be populated.
template <typename T>
void adam_step(AdamState<T>& st) {
    st.step += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (size_t i = 0; i < st.params.size(); ++i) {
        auto& p = st.params[i];
        p->ensure_grad();
        T* pv = p->value.data();
        const T* g = p->grad.data();
        T* mi = st.m[i].data();
        T* vi = st.v[i].data();
        for (int64_t j = 0; j < p->value.numel(); ++j) {
            const double gj = static_cast<double>(g[j]);
            const double mj = st.beta1 * static_cast<double>(mi[j]) + (1.0 - st.beta1) * gj;
            const double vj = st.beta2 * static_cast<double>(vi[j]) + (1.0 - st.beta2) * gj * gj;
            mi[j] = static_cast<T>(mj);
            vi[j] = static_cast<T>(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            pv[j] = static_cast<T>(static_cast<double>(pv[j]) - st.lr * mhat / (std::sqrt(vhat) + st.eps));
        }
    }
}

}  // namespace iic
