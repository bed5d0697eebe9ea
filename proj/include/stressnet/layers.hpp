#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "stressnet/tensor.hpp"

namespace stressnet {

enum class LayerKind : uint8_t {
    Conv1D = 1,
    MaxPool1D = 2,
    Relu = 3,
    Dropout = 4,
    Flatten = 5,
    Dense = 6,
    Softmax = 7,
};

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv1D: return "conv1d";
        case LayerKind::MaxPool1D: return "maxpool1d";
        case LayerKind::Relu: return "relu";
        case LayerKind::Dropout: return "dropout";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Dense: return "dense";
        case LayerKind::Softmax: return "softmax";
    }
    return "?";
}

/// Per-pass scratch written by forward and consumed by the matching
/// backward. Owned by the caller, so an inference-mode network stays
/// read-only and can be shared across threads.
template <typename T>
struct LayerCacheT {
    TensorT<T> input;             // cached input (or output, for softmax)
    std::vector<size_t> argmax;   // max-pool winners
    std::vector<uint8_t> mask;    // dropout keep mask
    T dropout_scale = T(1);       // 1/(1-rate) in training, 1 at inference
    bool valid = false;
};

/// Parameter gradients for one layer; tensors are empty for layers
/// without parameters.
template <typename T>
struct ParamGradsT {
    TensorT<T> weight;
    TensorT<T> bias;
};

template <typename T>
class LayerT {
public:
    virtual ~LayerT() = default;
    virtual LayerKind kind() const = 0;
    const char* name() const { return layer_kind_name(kind()); }

    /// cache may be null in pure inference; rng is only consulted by
    /// stochastic layers in training mode.
    virtual TensorT<T> forward(const TensorT<T>& in, LayerCacheT<T>* cache, bool training,
                               std::mt19937* rng) const = 0;

    /// Requires the cache written by the matching forward. Returns the
    /// input gradient; parameter gradients are written into *grads when
    /// non-null.
    virtual TensorT<T> backward(const TensorT<T>& upstream, const LayerCacheT<T>& cache,
                                ParamGradsT<T>* grads) const = 0;

    virtual std::vector<TensorT<T>*> params() { return {}; }
    virtual std::vector<const TensorT<T>*> params() const { return {}; }
    bool has_params() const { return !params().empty(); }

    bool frozen() const { return frozen_; }
    void set_frozen(bool f) { frozen_ = f; }

    virtual std::unique_ptr<LayerT<T>> clone() const = 0;

protected:
    void require_cache(const LayerCacheT<T>& cache) const {
        if (!cache.valid) {
            throw Error(std::string(name()) + ": backward called without a prior forward");
        }
    }
    bool frozen_ = false;
};

inline size_t slide_out_len(size_t in_len, size_t window, size_t stride) {
    return (in_len - window) / stride + 1;
}

template <typename T>
class Conv1DLayerT final : public LayerT<T> {
public:
    Conv1DLayerT(size_t out_ch, size_t in_ch, size_t kernel, size_t stride = 1)
        : weights_({out_ch, in_ch, kernel}), bias_({out_ch}), stride_(stride) {
        if (kernel < 1 || stride < 1) throw Error("conv1d: kernel and stride must be >= 1");
    }

    LayerKind kind() const override { return LayerKind::Conv1D; }

    size_t out_channels() const { return weights_.dim(0); }
    size_t in_channels() const { return weights_.dim(1); }
    size_t kernel_size() const { return weights_.dim(2); }
    size_t stride() const { return stride_; }
    TensorT<T>& weights() { return weights_; }
    TensorT<T>& bias() { return bias_; }
    const TensorT<T>& weights() const { return weights_; }
    const TensorT<T>& bias() const { return bias_; }

    TensorT<T> forward(const TensorT<T>& in, LayerCacheT<T>* cache, bool,
                       std::mt19937*) const override {
        check_input(in);
        const size_t oc = out_channels(), ic = in_channels(), k = kernel_size();
        const size_t len = in.dim(1), out_len = slide_out_len(len, k, stride_);
        TensorT<T> out({oc, out_len});
        for (size_t o = 0; o < oc; ++o) {
            T* orow = out.data() + o * out_len;
            std::fill(orow, orow + out_len, bias_[o]);
            for (size_t i = 0; i < ic; ++i) {
                const T* irow = in.data() + i * len;
                const T* wrow = weights_.data() + (o * ic + i) * k;
                for (size_t tap = 0; tap < k; ++tap) {
                    const T w = wrow[tap];
                    const T* __restrict src = irow + tap;
                    T* __restrict dst = orow;
                    if (stride_ == 1) {
                        for (size_t t = 0; t < out_len; ++t) dst[t] += w * src[t];
                    } else {
                        for (size_t t = 0; t < out_len; ++t) dst[t] += w * src[t * stride_];
                    }
                }
            }
        }
        if (cache) {
            cache->input = in;
            cache->valid = true;
        }
        return out;
    }

    TensorT<T> backward(const TensorT<T>& upstream, const LayerCacheT<T>& cache,
                        ParamGradsT<T>* grads) const override {
        this->require_cache(cache);
        const TensorT<T>& in = cache.input;
        const size_t oc = out_channels(), ic = in_channels(), k = kernel_size();
        const size_t len = in.dim(1), out_len = slide_out_len(len, k, stride_);
        if (upstream.rank() != 2 || upstream.dim(0) != oc || upstream.dim(1) != out_len) {
            throw Error("conv1d backward: upstream shape " + upstream.shape_str() +
                        " does not match forward output");
        }
        TensorT<T> in_grad({ic, len});
        if (grads) {
            grads->weight = TensorT<T>::zeros({oc, ic, k});
            grads->bias = TensorT<T>::zeros({oc});
        }
        for (size_t o = 0; o < oc; ++o) {
            const T* urow = upstream.data() + o * out_len;
            if (grads) {
                T bsum = T(0);
                for (size_t t = 0; t < out_len; ++t) bsum += urow[t];
                grads->bias[o] += bsum;
            }
            for (size_t i = 0; i < ic; ++i) {
                T* grow = in_grad.data() + i * len;
                const T* irow = in.data() + i * len;
                const T* wrow = weights_.data() + (o * ic + i) * k;
                T* wgrow = grads ? grads->weight.data() + (o * ic + i) * k : nullptr;
                for (size_t tap = 0; tap < k; ++tap) {
                    const T w = wrow[tap];
                    T wg = T(0);
                    if (stride_ == 1) {
                        T* __restrict dst = grow + tap;
                        const T* __restrict src = irow + tap;
                        const T* __restrict u = urow;
                        for (size_t t = 0; t < out_len; ++t) dst[t] += w * u[t];
                        // 4-way accumulation so the reduction vectorizes
                        T wg0 = T(0), wg1 = T(0), wg2 = T(0), wg3 = T(0);
                        size_t t = 0;
                        for (; t + 4 <= out_len; t += 4) {
                            wg0 += u[t] * src[t];
                            wg1 += u[t + 1] * src[t + 1];
                            wg2 += u[t + 2] * src[t + 2];
                            wg3 += u[t + 3] * src[t + 3];
                        }
                        for (; t < out_len; ++t) wg0 += u[t] * src[t];
                        wg = (wg0 + wg1) + (wg2 + wg3);
                    } else {
                        for (size_t t = 0; t < out_len; ++t) {
                            grow[t * stride_ + tap] += w * urow[t];
                            wg += urow[t] * irow[t * stride_ + tap];
                        }
                    }
                    if (wgrow) wgrow[tap] += wg;
                }
            }
        }
        return in_grad;
    }

    std::vector<TensorT<T>*> params() override { return {&weights_, &bias_}; }
    std::vector<const TensorT<T>*> params() const override { return {&weights_, &bias_}; }

    std::unique_ptr<LayerT<T>> clone() const override {
        return std::make_unique<Conv1DLayerT>(*this);
    }

private:
    void check_input(const TensorT<T>& in) const {
        if (in.rank() != 2 || in.dim(0) != in_channels()) {
            throw Error("conv1d: expected input [" + std::to_string(in_channels()) +
                        ",L], got " + in.shape_str());
        }
        if (in.dim(1) < kernel_size()) {
            throw Error("conv1d: input length " + std::to_string(in.dim(1)) +
                        " shorter than kernel " + std::to_string(kernel_size()));
        }
    }

    TensorT<T> weights_;  // [out_ch, in_ch, kernel]
    TensorT<T> bias_;     // [out_ch]
    size_t stride_;
};

template <typename T>
class MaxPool1DLayerT final : public LayerT<T> {
public:
    MaxPool1DLayerT(size_t pool, size_t stride) : pool_(pool), stride_(stride) {
        if (pool < 1 || stride < 1) throw Error("maxpool1d: pool and stride must be >= 1");
    }
    explicit MaxPool1DLayerT(size_t pool) : MaxPool1DLayerT(pool, pool) {}

    LayerKind kind() const override { return LayerKind::MaxPool1D; }
    size_t pool_size() const { return pool_; }
    size_t stride() const { return stride_; }

    TensorT<T> forward(const TensorT<T>& in, LayerCacheT<T>* cache, bool,
                       std::mt19937*) const override {
        if (in.rank() != 2) {
            throw Error("maxpool1d: expected rank-2 input, got " + in.shape_str());
        }
        const size_t ch = in.dim(0), len = in.dim(1);
        if (len < pool_) {
            throw Error("maxpool1d: input length " + std::to_string(len) +
                        " shorter than pool size " + std::to_string(pool_));
        }
        const size_t out_len = slide_out_len(len, pool_, stride_);
        TensorT<T> out({ch, out_len});
        if (cache) cache->argmax.assign(ch * out_len, 0);
        for (size_t c = 0; c < ch; ++c) {
            const T* irow = in.data() + c * len;
            for (size_t t = 0; t < out_len; ++t) {
                size_t start = t * stride_;
                size_t best = start;
                T bv = irow[start];
                for (size_t j = 1; j < pool_; ++j) {
                    if (irow[start + j] > bv) {  // strict: first index wins ties
                        bv = irow[start + j];
                        best = start + j;
                    }
                }
                out.at(c, t) = bv;
                if (cache) cache->argmax[c * out_len + t] = best;
            }
        }
        if (cache) {
            cache->input = in;
            cache->valid = true;
        }
        return out;
    }

    TensorT<T> backward(const TensorT<T>& upstream, const LayerCacheT<T>& cache,
                        ParamGradsT<T>*) const override {
        this->require_cache(cache);
        const size_t ch = cache.input.dim(0), len = cache.input.dim(1);
        const size_t out_len = slide_out_len(len, pool_, stride_);
        if (upstream.rank() != 2 || upstream.dim(0) != ch || upstream.dim(1) != out_len) {
            throw Error("maxpool1d backward: upstream shape " + upstream.shape_str() +
                        " does not match forward output");
        }
        TensorT<T> in_grad({ch, len});
        for (size_t c = 0; c < ch; ++c) {
            for (size_t t = 0; t < out_len; ++t) {
                in_grad[c * len + cache.argmax[c * out_len + t]] += upstream.at(c, t);
            }
        }
        return in_grad;
    }

    std::unique_ptr<LayerT<T>> clone() const override {
        return std::make_unique<MaxPool1DLayerT>(*this);
    }

private:
    size_t pool_;
    size_t stride_;
};

template <typename T>
class ReluLayerT final : public LayerT<T> {
public:
    LayerKind kind() const override { return LayerKind::Relu; }

    TensorT<T> forward(const TensorT<T>& in, LayerCacheT<T>* cache, bool,
                       std::mt19937*) const override {
        TensorT<T> out = in;
        for (T& v : out.vec()) v = v > T(0) ? v : T(0);
        if (cache) {
            cache->input = in;
            cache->valid = true;
        }
        return out;
    }

    TensorT<T> backward(const TensorT<T>& upstream, const LayerCacheT<T>& cache,
                        ParamGradsT<T>*) const override {
        this->require_cache(cache);
        if (!upstream.same_shape(cache.input)) {
            throw Error("relu backward: upstream shape " + upstream.shape_str() +
                        " does not match input " + cache.input.shape_str());
        }
        TensorT<T> in_grad = upstream;
        for (size_t i = 0; i < in_grad.numel(); ++i) {
            if (cache.input[i] <= T(0)) in_grad[i] = T(0);  // zero subgradient at 0
        }
        return in_grad;
    }

    std::unique_ptr<LayerT<T>> clone() const override {
        return std::make_unique<ReluLayerT>(*this);
    }
};

/// Inverted dropout: survivors scaled by 1/(1-rate) at training time,
/// identity at inference.
template <typename T>
class DropoutLayerT final : public LayerT<T> {
public:
    explicit DropoutLayerT(T rate) : rate_(rate) {
        if (rate < T(0) || rate >= T(1)) throw Error("dropout: rate must be in [0,1)");
    }

    LayerKind kind() const override { return LayerKind::Dropout; }
    T rate() const { return rate_; }

    TensorT<T> forward(const TensorT<T>& in, LayerCacheT<T>* cache, bool training,
                       std::mt19937* rng) const override {
        if (!training || rate_ == T(0)) {
            if (cache) {
                cache->input = in;
                cache->mask.assign(in.numel(), 1);
                cache->dropout_scale = T(1);
                cache->valid = true;
            }
            return in;
        }
        if (!rng) throw Error("dropout: training-mode forward needs an RNG");
        TensorT<T> out = in;
        const T scale = T(1) / (T(1) - rate_);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        if (cache) {
            cache->mask.assign(in.numel(), 1);
            cache->dropout_scale = scale;
        }
        for (size_t i = 0; i < out.numel(); ++i) {
            if (u(*rng) < static_cast<double>(rate_)) {
                out[i] = T(0);
                if (cache) cache->mask[i] = 0;
            } else {
                out[i] *= scale;
            }
        }
        if (cache) {
            cache->input = in;
            cache->valid = true;
        }
        return out;
    }

    TensorT<T> backward(const TensorT<T>& upstream, const LayerCacheT<T>& cache,
                        ParamGradsT<T>*) const override {
        this->require_cache(cache);
        TensorT<T> in_grad = upstream;
        for (size_t i = 0; i < in_grad.numel(); ++i) {
            in_grad[i] = cache.mask[i] ? in_grad[i] * cache.dropout_scale : T(0);
        }
        return in_grad;
    }

    std::unique_ptr<LayerT<T>> clone() const override {
        return std::make_unique<DropoutLayerT>(*this);
    }

private:
    T rate_;
};

template <typename T>
class FlattenLayerT final : public LayerT<T> {
public:
    LayerKind kind() const override { return LayerKind::Flatten; }

    TensorT<T> forward(const TensorT<T>& in, LayerCacheT<T>* cache, bool,
                       std::mt19937*) const override {
        TensorT<T> out({in.numel()}, in.vec());
        if (cache) {
            cache->input = in;
            cache->valid = true;
        }
        return out;
    }

    TensorT<T> backward(const TensorT<T>& upstream, const LayerCacheT<T>& cache,
                        ParamGradsT<T>*) const override {
        this->require_cache(cache);
        if (upstream.numel() != cache.input.numel()) {
            throw Error("flatten backward: upstream size mismatch");
        }
        return TensorT<T>(cache.input.shape(), upstream.vec());
    }

    std::unique_ptr<LayerT<T>> clone() const override {
        return std::make_unique<FlattenLayerT>(*this);
    }
};

template <typename T>
class DenseLayerT final : public LayerT<T> {
public:
    DenseLayerT(size_t out_units, size_t in_units)
        : weights_({out_units, in_units}), bias_({out_units}) {}

    LayerKind kind() const override { return LayerKind::Dense; }

    size_t out_units() const { return weights_.dim(0); }
    size_t in_units() const { return weights_.dim(1); }
    TensorT<T>& weights() { return weights_; }
    TensorT<T>& bias() { return bias_; }
    const TensorT<T>& weights() const { return weights_; }
    const TensorT<T>& bias() const { return bias_; }

    TensorT<T> forward(const TensorT<T>& in, LayerCacheT<T>* cache, bool,
                       std::mt19937*) const override {
        if (in.rank() != 1 || in.dim(0) != in_units()) {
            throw Error("dense: expected input [" + std::to_string(in_units()) + "], got " +
                        in.shape_str());
        }
        const size_t n_out = out_units(), n_in = in_units();
        TensorT<T> out({n_out});
        const T* __restrict x = in.data();
        for (size_t o = 0; o < n_out; ++o) {
            const T* __restrict wrow = weights_.data() + o * n_in;
            // 4-way accumulation so the dot product vectorizes
            T a0 = T(0), a1 = T(0), a2 = T(0), a3 = T(0);
            size_t i = 0;
            for (; i + 4 <= n_in; i += 4) {
                a0 += wrow[i] * x[i];
                a1 += wrow[i + 1] * x[i + 1];
                a2 += wrow[i + 2] * x[i + 2];
                a3 += wrow[i + 3] * x[i + 3];
            }
            for (; i < n_in; ++i) a0 += wrow[i] * x[i];
            out[o] = bias_[o] + (a0 + a1) + (a2 + a3);
        }
        if (cache) {
            cache->input = in;
            cache->valid = true;
        }
        return out;
    }

    TensorT<T> backward(const TensorT<T>& upstream, const LayerCacheT<T>& cache,
                        ParamGradsT<T>* grads) const override {
        this->require_cache(cache);
        const size_t n_out = out_units(), n_in = in_units();
        if (upstream.rank() != 1 || upstream.dim(0) != n_out) {
            throw Error("dense backward: upstream shape " + upstream.shape_str() +
                        " does not match [" + std::to_string(n_out) + "]");
        }
        const TensorT<T>& in = cache.input;
        TensorT<T> in_grad({n_in});
        if (grads) {
            // every entry is overwritten below, so reuse the buffers
            if (grads->weight.shape() != std::vector<size_t>{n_out, n_in}) {
                grads->weight = TensorT<T>::zeros({n_out, n_in});
            }
            if (grads->bias.shape() != std::vector<size_t>{n_out}) {
                grads->bias = TensorT<T>::zeros({n_out});
            }
        }
        T* __restrict ig = in_grad.data();
        const T* __restrict x = in.data();
        for (size_t o = 0; o < n_out; ++o) {
            const T u = upstream[o];
            const T* __restrict wrow = weights_.data() + o * n_in;
            if (grads) {
                T* __restrict wgrow = grads->weight.data() + o * n_in;
                for (size_t i = 0; i < n_in; ++i) {
                    ig[i] += u * wrow[i];
                    wgrow[i] = u * x[i];
                }
                grads->bias[o] = u;
            } else {
                for (size_t i = 0; i < n_in; ++i) ig[i] += u * wrow[i];
            }
        }
        return in_grad;
    }

    std::vector<TensorT<T>*> params() override { return {&weights_, &bias_}; }
    std::vector<const TensorT<T>*> params() const override { return {&weights_, &bias_}; }

    std::unique_ptr<LayerT<T>> clone() const override {
        return std::make_unique<DenseLayerT>(*this);
    }

private:
    TensorT<T> weights_;  // [out, in]
    TensorT<T> bias_;     // [out]
};

/// Numerically stable softmax (max subtraction) over a logit vector.
template <typename T>
TensorT<T> softmax(const TensorT<T>& logits) {
    if (logits.rank() != 1 || logits.numel() == 0) {
        throw Error("softmax: expected non-empty rank-1 input, got " + logits.shape_str());
    }
    TensorT<T> out = logits;
    T mx = out[0];
    for (T v : out.vec()) mx = std::max(mx, v);
    T sum = T(0);
    for (T& v : out.vec()) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (T& v : out.vec()) v /= sum;
    return out;
}

template <typename T>
class SoftmaxLayerT final : public LayerT<T> {
public:
    LayerKind kind() const override { return LayerKind::Softmax; }

    TensorT<T> forward(const TensorT<T>& in, LayerCacheT<T>* cache, bool,
                       std::mt19937*) const override {
        TensorT<T> out = softmax(in);
        if (cache) {
            cache->input = out;  // Jacobian needs the probabilities, not the logits
            cache->valid = true;
        }
        return out;
    }

    TensorT<T> backward(const TensorT<T>& upstream, const LayerCacheT<T>& cache,
                        ParamGradsT<T>*) const override {
        this->require_cache(cache);
        const TensorT<T>& p = cache.input;
        if (!upstream.same_shape(p)) {
            throw Error("softmax backward: upstream shape mismatch");
        }
        T dot = T(0);
        for (size_t i = 0; i < p.numel(); ++i) dot += upstream[i] * p[i];
        TensorT<T> in_grad = p;
        for (size_t i = 0; i < p.numel(); ++i) in_grad[i] = p[i] * (upstream[i] - dot);
        return in_grad;
    }

    std::unique_ptr<LayerT<T>> clone() const override {
        return std::make_unique<SoftmaxLayerT>(*this);
    }
};

using Layer = LayerT<float>;
using LayerCache = LayerCacheT<float>;
using ParamGrads = ParamGradsT<float>;
using Conv1DLayer = Conv1DLayerT<float>;
using MaxPool1DLayer = MaxPool1DLayerT<float>;
using ReluLayer = ReluLayerT<float>;
using DropoutLayer = DropoutLayerT<float>;
using FlattenLayer = FlattenLayerT<float>;
using DenseLayer = DenseLayerT<float>;
using SoftmaxLayer = SoftmaxLayerT<float>;

}  // namespace stressnet
