#pragma once

#include <cmath>

#include "stressnet/tensor.hpp"

namespace stressnet {

template <typename T>
struct LossResultT {
    T loss = T(0);
    TensorT<T> logit_grad;  // gradient w.r.t. the pre-softmax logits
};

/// Cross-entropy of softmax probabilities against an integer class label.
/// Probabilities are clamped to >= 1e-12 before the log. The returned
/// gradient is the combined softmax+cross-entropy one: probs - onehot.
template <typename T>
LossResultT<T> cross_entropy(const TensorT<T>& probs, size_t label) {
    if (probs.rank() != 1) throw Error("cross_entropy: probs must be rank-1");
    if (label >= probs.numel()) {
        throw Error("cross_entropy: label " + std::to_string(label) + " out of range for " +
                    std::to_string(probs.numel()) + " classes");
    }
    LossResultT<T> r;
    T p = std::max(probs[label], T(1e-12));
    r.loss = -std::log(p);
    r.logit_grad = probs;
    r.logit_grad[label] -= T(1);
    return r;
}

using LossResult = LossResultT<float>;

}  // namespace stressnet
