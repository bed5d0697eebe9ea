#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "stressnet/common.hpp"

namespace stressnet {

/// Dense row-major tensor over a real scalar type. Shape dimensions are
/// all positive; product(shape) == data.size() is maintained by every
/// constructor.
template <typename T>
class TensorT {
public:
    using value_type = T;

    TensorT() = default;

    explicit TensorT(std::vector<size_t> shape)
        : shape_(std::move(shape)), data_(checked_numel(shape_), T(0)) {}

    TensorT(std::vector<size_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_numel(shape_) != data_.size()) {
            throw Error("tensor shape/data mismatch: shape implies " +
                        std::to_string(checked_numel(shape_)) + " values, got " +
                        std::to_string(data_.size()));
        }
    }

    static TensorT zeros(std::vector<size_t> shape) { return TensorT(std::move(shape)); }

    const std::vector<size_t>& shape() const { return shape_; }
    size_t dim(size_t i) const { return shape_.at(i); }
    size_t rank() const { return shape_.size(); }
    size_t numel() const { return data_.size(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](size_t i) { return data_[i]; }
    T operator[](size_t i) const { return data_[i]; }

    // 2D accessor for [C, L] feature maps.
    T& at(size_t c, size_t t) { return data_[c * shape_[1] + t]; }
    T at(size_t c, size_t t) const { return data_[c * shape_[1] + t]; }

    // 3D accessor for [out_ch, in_ch, k] conv weights.
    T& at(size_t a, size_t b, size_t c) {
        return data_[(a * shape_[1] + b) * shape_[2] + c];
    }
    T at(size_t a, size_t b, size_t c) const {
        return data_[(a * shape_[1] + b) * shape_[2] + c];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (T v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    template <typename U>
    TensorT<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return TensorT<U>(shape_, std::move(out));
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (size_t i = 0; i < shape_.size(); ++i) {
            if (i) os << ',';
            os << shape_[i];
        }
        os << ']';
        return os.str();
    }

    /// Debug text form: shape header, then row-major values (rows split on
    /// the last dimension).
    std::string to_string() const {
        std::ostringstream os;
        os << "tensor " << shape_str() << '\n';
        size_t row = shape_.empty() ? 1 : shape_.back();
        for (size_t i = 0; i < data_.size(); ++i) {
            os << data_[i];
            os << ((i + 1) % row == 0 ? '\n' : ' ');
        }
        return os.str();
    }

private:
    static size_t checked_numel(const std::vector<size_t>& shape) {
        size_t n = 1;
        for (size_t d : shape) {
            if (d == 0) throw Error("tensor dimension must be positive");
            n *= d;
        }
        return shape.empty() ? 0 : n;
    }

    std::vector<size_t> shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;

}  // namespace stressnet
