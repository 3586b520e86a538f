// Checkpoint container. Layout, bit-exact:
//   magic "IICCKPT1"
//   u32 LE array count
//   per array: u16 LE name length, UTF-8 name, u8 dtype (0=f32, 1=f64),
//              u8 rank, rank x u32 LE dims, raw little-endian scalar data.
#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "iic/nn.hpp"
#include "iic/tensor.hpp"

namespace iic {

struct CkptError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NamedArray {
    std::string name;
    uint8_t dtype = 0;  // 0=f32, 1=f64
    Shape dims;
    std::vector<float> f32;
    std::vector<double> f64;
};

void save_checkpoint(const std::string& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Network <-> named tensors
// ---------------------------------------------------------------------------

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> named_tensors(Network<T>& net) {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    auto add = [&out](const std::string& name, Tensor<T>& t) { out.emplace_back(name, &t); };
    if (net.is_mlp()) {
        add("base.fc1.w", net.fc1.w->value);
        add("base.fc1.b", net.fc1.b->value);
        add("base.fc2.w", net.fc2.w->value);
        add("base.fc2.b", net.fc2.b->value);
    } else {
        auto add_conv = [&](const std::string& p, nn::Conv2dLayer<T>& c) {
            add(p + ".k", c.k->value);
            add(p + ".b", c.b->value);
        };
        auto add_bn = [&](const std::string& p, nn::BatchNormLayer<T>& b) {
            add(p + ".gamma", b.gamma->value);
            add(p + ".beta", b.beta->value);
            add(p + ".running_mean", b.running_mean);
            add(p + ".running_var", b.running_var);
        };
        add_conv("base.conv1", net.conv1);
        add_bn("base.bn1", net.bn1);
        add_conv("base.conv2", net.conv2);
        add_bn("base.bn2", net.bn2);
        add_conv("base.conv3", net.conv3);
        add_bn("base.bn3", net.bn3);
    }
    for (size_t i = 0; i < net.main_fc.size(); ++i) {
        add("main." + std::to_string(i) + ".w", net.main_fc[i].w->value);
        add("main." + std::to_string(i) + ".b", net.main_fc[i].b->value);
    }
    for (size_t i = 0; i < net.aux_fc.size(); ++i) {
        add("aux." + std::to_string(i) + ".w", net.aux_fc[i].w->value);
        add("aux." + std::to_string(i) + ".b", net.aux_fc[i].b->value);
    }
    for (size_t i = 0; i < net.main_conv.size(); ++i) {
        add("main." + std::to_string(i) + ".k", net.main_conv[i].k->value);
        add("main." + std::to_string(i) + ".b", net.main_conv[i].b->value);
    }
    for (size_t i = 0; i < net.aux_conv.size(); ++i) {
        add("aux." + std::to_string(i) + ".k", net.aux_conv[i].k->value);
        add("aux." + std::to_string(i) + ".b", net.aux_conv[i].b->value);
    }
    return out;
}

namespace detail_ckpt {

inline void tensor_to_array(const Tensor<float>& t, NamedArray& a) {
    a.dtype = 0;
    a.f32.assign(t.data(), t.data() + t.numel());
}
inline void tensor_to_array(const Tensor<double>& t, NamedArray& a) {
    a.dtype = 1;
    a.f64.assign(t.data(), t.data() + t.numel());
}
inline void array_to_tensor(const NamedArray& a, Tensor<float>& t) {
    if (a.dtype != 0) throw CkptError("checkpoint: dtype mismatch for " + a.name);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = a.f32[static_cast<size_t>(i)];
}
inline void array_to_tensor(const NamedArray& a, Tensor<double>& t) {
    if (a.dtype != 1) throw CkptError("checkpoint: dtype mismatch for " + a.name);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = a.f64[static_cast<size_t>(i)];
}

}  // namespace detail_ckpt

template <typename T>
void save_network(const std::string& path, Network<T>& net) {
    std::vector<NamedArray> arrays;
    for (auto& [name, tensor] : named_tensors(net)) {
        NamedArray a;
        a.name = name;
        a.dims = tensor->shape();
        detail_ckpt::tensor_to_array(*tensor, a);
        arrays.push_back(std::move(a));
    }
    save_checkpoint(path, arrays);
}

template <typename T>
void load_network(const std::string& path, Network<T>& net) {
    auto arrays = load_checkpoint(path);
    auto slots = named_tensors(net);
    if (arrays.size() != slots.size())
        throw CkptError("checkpoint: expected " + std::to_string(slots.size()) + " arrays, found " +
                        std::to_string(arrays.size()));
    for (size_t i = 0; i < slots.size(); ++i) {
        const auto& a = arrays[i];
        auto& [name, tensor] = slots[i];
        if (a.name != name) throw CkptError("checkpoint: array '" + a.name + "' where '" + name + "' expected");
        if (a.dims != tensor->shape())
            throw CkptError("checkpoint: shape mismatch for " + name + ": " + shape_str(a.dims) + " vs " +
                            shape_str(tensor->shape()));
        detail_ckpt::array_to_tensor(a, *tensor);
    }
}

}  // namespace iic
