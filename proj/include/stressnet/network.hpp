#pragma once

#include <memory>
#include <random>
#include <utility>
#include <vector>

#include "stressnet/layers.hpp"
#include "stressnet/loss.hpp"

namespace stressnet {

/// Ordered layer stack. Forward/backward caches live outside the network,
/// so an inference-mode network is read-only and shareable; training is
/// single-writer.
template <typename T>
class NetworkT {
public:
    NetworkT() = default;

    NetworkT(const NetworkT& other) {
        layers_.reserve(other.layers_.size());
        for (const auto& l : other.layers_) layers_.push_back(l->clone());
    }
    NetworkT& operator=(const NetworkT& other) {
        if (this != &other) {
            NetworkT tmp(other);
            layers_ = std::move(tmp.layers_);
        }
        return *this;
    }
    NetworkT(NetworkT&&) noexcept = default;
    NetworkT& operator=(NetworkT&&) noexcept = default;

    void add(std::unique_ptr<LayerT<T>> layer) { layers_.push_back(std::move(layer)); }

    size_t size() const { return layers_.size(); }
    LayerT<T>& layer(size_t i) { return *layers_.at(i); }
    const LayerT<T>& layer(size_t i) const { return *layers_.at(i); }
    const std::vector<std::unique_ptr<LayerT<T>>>& layers() const { return layers_; }

    TensorT<T> forward(const TensorT<T>& in, std::vector<LayerCacheT<T>>* caches,
                       bool training, std::mt19937* rng) const {
        if (caches) caches->resize(layers_.size());
        TensorT<T> x = in;
        for (size_t i = 0; i < layers_.size(); ++i) {
            x = layers_[i]->forward(x, caches ? &(*caches)[i] : nullptr, training, rng);
        }
        return x;
    }

    TensorT<T> infer(const TensorT<T>& in) const { return forward(in, nullptr, false, nullptr); }

    /// Backprop of softmax cross-entropy at `label`. Uses the combined
    /// probs-onehot gradient, so the final layer must be softmax and its
    /// cache must hold the probabilities from the matching forward.
    /// Returns the loss; per-layer parameter gradients land in `grads`.
    T backward_cross_entropy(size_t label, const std::vector<LayerCacheT<T>>& caches,
                             std::vector<ParamGradsT<T>>& grads,
                             TensorT<T>* input_grad = nullptr) const {
        if (layers_.empty() || layers_.back()->kind() != LayerKind::Softmax) {
            throw Error("backward_cross_entropy: network must end in softmax");
        }
        if (caches.size() != layers_.size()) {
            throw Error("backward_cross_entropy: cache count mismatch (run forward first)");
        }
        grads.resize(layers_.size());
        const TensorT<T>& probs = caches.back().input;
        auto lr = cross_entropy(probs, label);
        TensorT<T> upstream = std::move(lr.logit_grad);
        for (size_t i = layers_.size() - 1; i-- > 0;) {
            upstream = layers_[i]->backward(upstream, caches[i], &grads[i]);
        }
        if (input_grad) *input_grad = std::move(upstream);
        return lr.loss;
    }

    /// Loss of a single example, inference-mode dropout, no side effects.
    T loss_at(const TensorT<T>& in, size_t label) const {
        TensorT<T> probs = infer(in);
        return cross_entropy(probs, label).loss;
    }

    std::vector<TensorT<T>*> all_params() {
        std::vector<TensorT<T>*> out;
        for (auto& l : layers_) {
            for (TensorT<T>* p : l->params()) out.push_back(p);
        }
        return out;
    }

    /// Parameters of non-frozen layers only, in layer order.
    std::vector<TensorT<T>*> trainable_params() {
        std::vector<TensorT<T>*> out;
        for (auto& l : layers_) {
            if (l->frozen()) continue;
            for (TensorT<T>* p : l->params()) out.push_back(p);
        }
        return out;
    }

    /// Gradient pointers lining up with trainable_params(), drawn from a
    /// per-layer gradient vector.
    std::vector<const TensorT<T>*> trainable_grads(std::vector<ParamGradsT<T>>& grads) const {
        std::vector<const TensorT<T>*> out;
        for (size_t i = 0; i < layers_.size(); ++i) {
            if (layers_[i]->frozen() || !layers_[i]->has_params()) continue;
            out.push_back(&grads[i].weight);
            out.push_back(&grads[i].bias);
        }
        return out;
    }

    /// Fan-in-scaled uniform initialization, deterministic per seed.
    /// Weights ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), biases zero.
    void init_params(uint32_t seed) {
        std::mt19937 rng(seed);
        for (auto& l : layers_) init_layer(*l, rng);
    }

    static void init_layer(LayerT<T>& l, std::mt19937& rng) {
        size_t fan_in = 0;
        if (auto* c = dynamic_cast<Conv1DLayerT<T>*>(&l)) {
            fan_in = c->in_channels() * c->kernel_size();
        } else if (auto* d = dynamic_cast<DenseLayerT<T>*>(&l)) {
            fan_in = d->in_units();
        } else {
            return;
        }
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        auto ps = l.params();
        for (T& v : ps[0]->vec()) v = static_cast<T>(u(rng));
        ps[1]->fill(T(0));
    }

    /// Rebuild this network with a different scalar type, copying
    /// parameters and freeze flags.
    template <typename U>
    NetworkT<U> cast() const {
        NetworkT<U> out;
        for (const auto& l : layers_) {
            std::unique_ptr<LayerT<U>> nl;
            switch (l->kind()) {
                case LayerKind::Conv1D: {
                    auto& c = dynamic_cast<const Conv1DLayerT<T>&>(*l);
                    auto n = std::make_unique<Conv1DLayerT<U>>(
                        c.out_channels(), c.in_channels(), c.kernel_size(), c.stride());
                    n->weights() = c.weights().template cast<U>();
                    n->bias() = c.bias().template cast<U>();
                    nl = std::move(n);
                    break;
                }
                case LayerKind::MaxPool1D: {
                    auto& p = dynamic_cast<const MaxPool1DLayerT<T>&>(*l);
                    nl = std::make_unique<MaxPool1DLayerT<U>>(p.pool_size(), p.stride());
                    break;
                }
                case LayerKind::Relu:
                    nl = std::make_unique<ReluLayerT<U>>();
                    break;
                case LayerKind::Dropout: {
                    auto& d = dynamic_cast<const DropoutLayerT<T>&>(*l);
                    nl = std::make_unique<DropoutLayerT<U>>(static_cast<U>(d.rate()));
                    break;
                }
                case LayerKind::Flatten:
                    nl = std::make_unique<FlattenLayerT<U>>();
                    break;
                case LayerKind::Dense: {
                    auto& d = dynamic_cast<const DenseLayerT<T>&>(*l);
                    auto n = std::make_unique<DenseLayerT<U>>(d.out_units(), d.in_units());
                    n->weights() = d.weights().template cast<U>();
                    n->bias() = d.bias().template cast<U>();
                    nl = std::move(n);
                    break;
                }
                case LayerKind::Softmax:
                    nl = std::make_unique<SoftmaxLayerT<U>>();
                    break;
            }
            nl->set_frozen(l->frozen());
            out.add(std::move(nl));
        }
        return out;
    }

private:
    std::vector<std::unique_ptr<LayerT<T>>> layers_;
};

using Network = NetworkT<float>;

namespace detail {

/// ReLU sign pattern and max-pool winner indices of a forward pass.
/// Two passes with equal patterns lie on the same smooth piece of the
/// loss, so central differences between them are valid.
template <typename T>
std::vector<size_t> activation_pattern(const NetworkT<T>& net,
                                       const std::vector<LayerCacheT<T>>& caches) {
    std::vector<size_t> pat;
    for (size_t i = 0; i < net.size(); ++i) {
        switch (net.layer(i).kind()) {
            case LayerKind::Relu:
                for (size_t j = 0; j < caches[i].input.numel(); ++j) {
                    pat.push_back(caches[i].input[j] > T(0) ? 1 : 0);
                }
                break;
            case LayerKind::MaxPool1D:
                pat.insert(pat.end(), caches[i].argmax.begin(), caches[i].argmax.end());
                break;
            default:
                break;
        }
    }
    return pat;
}

}  // namespace detail

/// Max relative error between analytic and central-finite-difference
/// gradients of the softmax cross-entropy loss, taken over every
/// parameter of every non-frozen layer (dropout behaves as identity:
/// the loss is evaluated in inference mode). A parameter whose +/-eps
/// perturbation flips a ReLU sign or a max-pool winner sits on a kink
/// where no finite-difference estimate exists; those are skipped.
template <typename T>
T grad_check(NetworkT<T>& net, const TensorT<T>& input, size_t label, T eps) {
    if (!(eps > T(0))) throw Error("grad_check: eps must be positive");
    std::vector<LayerCacheT<T>> caches;
    net.forward(input, &caches, false, nullptr);
    std::vector<ParamGradsT<T>> grads;
    net.backward_cross_entropy(label, caches, grads);
    const std::vector<size_t> base_pattern = detail::activation_pattern(net, caches);

    std::vector<LayerCacheT<T>> probe;
    T max_rel = T(0);
    for (size_t li = 0; li < net.size(); ++li) {
        auto& l = net.layer(li);
        if (!l.has_params() || l.frozen()) continue;
        auto ps = l.params();
        const TensorT<T>* gs[2] = {&grads[li].weight, &grads[li].bias};
        for (int pi = 0; pi < 2; ++pi) {
            TensorT<T>& p = *ps[pi];
            for (size_t j = 0; j < p.numel(); ++j) {
                const T saved = p[j];
                bool smooth = true;
                auto probed_loss = [&](T h) {
                    p[j] = saved + h;
                    TensorT<T> probs = net.forward(input, &probe, false, nullptr);
                    if (detail::activation_pattern(net, probe) != base_pattern) smooth = false;
                    return cross_entropy(probs, label).loss;
                };
                const T lp = probed_loss(eps);
                const T lm = probed_loss(-eps);
                p[j] = saved;
                if (!smooth) continue;  // kink inside the stencil
                const T numeric = (lp - lm) / (T(2) * eps);
                const T analytic = (*gs[pi])[j];
                const T denom = std::max({std::abs(analytic), std::abs(numeric), T(1e-8)});
                max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
            }
        }
    }
    return max_rel;
}

/// Single-layer gradient check against a fixed pseudo-random linear
/// functional of the layer output; covers both parameter and input
/// gradients. Runs the layer in inference mode.
template <typename T>
T grad_check_layer(LayerT<T>& layer, const TensorT<T>& input, T eps) {
    if (!(eps > T(0))) throw Error("grad_check_layer: eps must be positive");

    auto loss_of = [&](const TensorT<T>& in) {
        TensorT<T> out = layer.forward(in, nullptr, false, nullptr);
        T acc = T(0);
        for (size_t i = 0; i < out.numel(); ++i) {
            acc += out[i] * static_cast<T>(std::sin(0.7 * static_cast<double>(i)) + 1.1);
        }
        return acc;
    };

    LayerCacheT<T> cache;
    TensorT<T> out = layer.forward(input, &cache, false, nullptr);
    TensorT<T> upstream = out;
    for (size_t i = 0; i < upstream.numel(); ++i) {
        upstream[i] = static_cast<T>(std::sin(0.7 * static_cast<double>(i)) + 1.1);
    }
    ParamGradsT<T> grads;
    TensorT<T> in_grad = layer.backward(upstream, cache, &grads);

    T max_rel = T(0);
    auto check = [&](TensorT<T>& target, const TensorT<T>& analytic_grad, auto reloss) {
        for (size_t j = 0; j < target.numel(); ++j) {
            const T saved = target[j];
            target[j] = saved + eps;
            const T lp = reloss();
            target[j] = saved - eps;
            const T lm = reloss();
            target[j] = saved;
            const T numeric = (lp - lm) / (T(2) * eps);
            const T analytic = analytic_grad[j];
            const T denom = std::max({std::abs(analytic), std::abs(numeric), T(1e-8)});
            max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
        }
    };

    TensorT<T> in_copy = input;
    check(in_copy, in_grad, [&] { return loss_of(in_copy); });
    if (layer.has_params()) {
        auto ps = layer.params();
        check(*ps[0], grads.weight, [&] { return loss_of(input); });
        check(*ps[1], grads.bias, [&] { return loss_of(input); });
    }
    return max_rel;
}

}  // namespace stressnet
