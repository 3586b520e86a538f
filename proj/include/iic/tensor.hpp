// Dense n-dimensional array, the numeric carrier for the nn engine.
#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace iic {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

// Contiguous row-major tensor, rank <= 4 (batch x channel x height x width maximal).
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
        check_shape(shape_);
        data_.assign(static_cast<size_t>(shape_numel(shape_)), fill);
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape(shape_);
        if (static_cast<int64_t>(data_.size()) != shape_numel(shape_))
            throw std::invalid_argument("tensor data/shape mismatch: " + shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, T v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(T v) { return Tensor({1}, std::vector<T>{v}); }

    const Shape& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // 2D access (rank 2 only).
    T& at(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * shape_[1] + c)]; }
    const T& at(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * shape_[1] + c)]; }

    // NCHW access (rank 4 only).
    T& at(int64_t n, int64_t c, int64_t h, int64_t w) {
        return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    const T& at(int64_t n, int64_t c, int64_t h, int64_t w) const {
        return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != numel())
            throw std::invalid_argument("reshape numel mismatch " + shape_str(shape_) + " -> " + shape_str(s));
        Tensor out = *this;
        out.shape_ = std::move(s);
        return out;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> d(data_.size());
        for (size_t i = 0; i < data_.size(); ++i) d[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(d));
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    static void check_shape(const Shape& s) {
        if (s.empty() || s.size() > 4)
            throw std::invalid_argument("tensor rank must be 1..4, got " + shape_str(s));
        for (int64_t d : s)
            if (d <= 0) throw std::invalid_argument("tensor dims must be positive: " + shape_str(s));
    }

    Shape shape_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace iic
