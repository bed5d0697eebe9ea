#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "stressnet/tensor.hpp"

namespace stressnet {

enum class OptimizerKind { SgdMomentum, Adam };

/// SGD-with-momentum (default) or Adam. Accumulators are allocated to
/// match the parameter list on the first step and must keep matching it.
template <typename T>
class OptimizerT {
public:
    explicit OptimizerT(OptimizerKind kind = OptimizerKind::SgdMomentum,
                        T learning_rate = T(0.01), T momentum = T(0.9),
                        T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
        : kind_(kind),
          lr_(learning_rate),
          momentum_(momentum),
          beta1_(beta1),
          beta2_(beta2),
          eps_(eps) {
        if (learning_rate < T(0)) throw Error("optimizer: learning rate must be >= 0");
    }

    OptimizerKind kind() const { return kind_; }
    T learning_rate() const { return lr_; }
    void set_learning_rate(T lr) { lr_ = lr; }
    uint64_t step_count() const { return step_; }

    /// One update over a flat (param, grad) pairing. Deterministic given
    /// state; params and grads must line up index-for-index with every
    /// previous call.
    void step(const std::vector<TensorT<T>*>& params,
              const std::vector<const TensorT<T>*>& grads) {
        if (params.size() != grads.size()) {
            throw Error("optimizer: params/grads count mismatch");
        }
        ensure_state(params);
        ++step_;
        for (size_t i = 0; i < params.size(); ++i) {
            TensorT<T>& p = *params[i];
            const TensorT<T>& g = *grads[i];
            if (!p.same_shape(g)) {
                throw Error("optimizer: grad shape " + g.shape_str() +
                            " does not match param " + p.shape_str());
            }
            if (kind_ == OptimizerKind::SgdMomentum) {
                TensorT<T>& v = velocity_[i];
                for (size_t j = 0; j < p.numel(); ++j) {
                    v[j] = momentum_ * v[j] + g[j];
                    p[j] -= lr_ * v[j];
                }
            } else {
                TensorT<T>& m = velocity_[i];
                TensorT<T>& v = second_[i];
                const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(step_));
                const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(step_));
                for (size_t j = 0; j < p.numel(); ++j) {
                    m[j] = beta1_ * m[j] + (T(1) - beta1_) * g[j];
                    v[j] = beta2_ * v[j] + (T(1) - beta2_) * g[j] * g[j];
                    p[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
                }
            }
        }
    }

private:
    void ensure_state(const std::vector<TensorT<T>*>& params) {
        if (!velocity_.empty()) {
            if (velocity_.size() != params.size()) {
                throw Error("optimizer: parameter list changed between steps");
            }
            return;
        }
        for (const TensorT<T>* p : params) {
            velocity_.push_back(TensorT<T>::zeros(p->shape()));
            if (kind_ == OptimizerKind::Adam) second_.push_back(TensorT<T>::zeros(p->shape()));
        }
    }

    OptimizerKind kind_;
    T lr_, momentum_, beta1_, beta2_, eps_;
    uint64_t step_ = 0;
    std::vector<TensorT<T>> velocity_;  // momentum buffer, or Adam first moment
    std::vector<TensorT<T>> second_;    // Adam second moment
};

using Optimizer = OptimizerT<float>;

}  // namespace stressnet
