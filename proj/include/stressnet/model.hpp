#pragma once

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>
#include <vector>

#include "stressnet/data.hpp"
#include "stressnet/network.hpp"
#include "stressnet/optimizer.hpp"

namespace stressnet {

constexpr size_t kClassCount = 2;
constexpr size_t kDefaultWindowLen = 400;  // ~13.3 s at 30 Hz
constexpr size_t kDefaultStride = 100;
constexpr float kDropoutRate = 0.3f;
constexpr size_t kHeadHiddenWidth = 160;

struct TrainConfig {
    size_t epochs = 50;
    size_t batch_size = 32;
    float learning_rate = 0.01f;
    float momentum = 0.9f;
    OptimizerKind optimizer = OptimizerKind::SgdMomentum;
    uint32_t seed = 1;
    bool shuffle = true;
};

struct EpochStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;          // per-epoch training loss/accuracy
    std::vector<double> fold_accuracy;       // per-fold test accuracy (CV only)
    double mean_cv_accuracy = 0.0;
    double wall_seconds = 0.0;
};

/// Flatten dimension of the default stack for a given window length, or
/// throws when the window is too short for the pool/conv chain.
inline size_t base_model_flatten_dim(size_t window_len) {
    auto conv = [](size_t len, size_t k, size_t s) -> size_t {
        if (len < k) throw Error("window too short");
        return (len - k) / s + 1;
    };
    size_t l = window_len;
    l = conv(l, 7, 1);
    l = conv(l, 4, 4);
    l = conv(l, 5, 1);
    l = conv(l, 4, 4);
    l = conv(l, 3, 1);
    l = conv(l, 2, 2);
    return 64 * l;
}

inline size_t base_model_min_window_len() {
    for (size_t w = 1;; ++w) {
        try {
            base_model_flatten_dim(w);
            return w;
        } catch (const Error&) {
        }
    }
}

/// Default architecture: three conv+pool blocks, dropout 0.3 before a
/// 160-wide dense layer and the 2-class softmax head. Deterministic
/// initialization from the seed.
inline Network build_base_model(size_t window_len, uint32_t seed) {
    size_t flat;
    try {
        flat = base_model_flatten_dim(window_len);
    } catch (const Error&) {
        throw Error("build_base_model: window length " + std::to_string(window_len) +
                    " too short; minimum supported is " +
                    std::to_string(base_model_min_window_len()));
    }
    Network net;
    net.add(std::make_unique<Conv1DLayer>(16, kNumChannels, 7));
    net.add(std::make_unique<ReluLayer>());
    net.add(std::make_unique<MaxPool1DLayer>(4));
    net.add(std::make_unique<Conv1DLayer>(32, 16, 5));
    net.add(std::make_unique<ReluLayer>());
    net.add(std::make_unique<MaxPool1DLayer>(4));
    net.add(std::make_unique<Conv1DLayer>(64, 32, 3));
    net.add(std::make_unique<ReluLayer>());
    net.add(std::make_unique<MaxPool1DLayer>(2));
    net.add(std::make_unique<FlattenLayer>());
    net.add(std::make_unique<DropoutLayer>(kDropoutRate));
    net.add(std::make_unique<DenseLayer>(kHeadHiddenWidth, flat));
    net.add(std::make_unique<ReluLayer>());
    net.add(std::make_unique<DenseLayer>(kClassCount, kHeadHiddenWidth));
    net.add(std::make_unique<SoftmaxLayer>());
    net.init_params(seed);
    return net;
}

struct Prediction {
    int label = 0;
    Tensor probabilities;
};

/// Argmax of the class probabilities; first index wins ties.
inline Prediction predict(const Network& net, const Tensor& window) {
    Prediction p;
    p.probabilities = net.infer(window);
    for (size_t i = 1; i < p.probabilities.numel(); ++i) {
        if (p.probabilities[i] > p.probabilities[p.label]) p.label = static_cast<int>(i);
    }
    return p;
}

/// Mini-batch SGD over layers [first_layer, end). Inputs are fed to
/// layer first_layer directly; backprop stops there, so a frozen prefix
/// can be trained against cached features. Gradients are averaged over
/// the batch in index order (deterministic).
inline TrainReport train_range(Network& net, size_t first_layer,
                               const std::vector<Tensor>& inputs,
                               const std::vector<int>& labels, const TrainConfig& cfg) {
    if (inputs.size() != labels.size()) throw Error("train: inputs/labels size mismatch");
    if (inputs.empty()) throw Error("train: empty dataset");
    if (cfg.batch_size < 1) throw Error("train: batch size must be >= 1");
    {
        bool has0 = false, has1 = false;
        for (int l : labels) {
            if (l == kLabelRelaxed) has0 = true;
            else if (l == kLabelStressed) has1 = true;
            else throw Error("train: labels must be 0 or 1");
        }
        if (!has0 || !has1) {
            throw Error("train: dataset has a single class; both classes are required");
        }
    }

    const auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    if (cfg.epochs == 0) return report;

    const size_t n_layers = net.size();
    std::vector<Tensor*> params;
    for (size_t i = first_layer; i < n_layers; ++i) {
        if (net.layer(i).frozen()) continue;
        for (Tensor* p : net.layer(i).params()) params.push_back(p);
    }
    Optimizer opt(cfg.optimizer, cfg.learning_rate, cfg.momentum);

    std::mt19937 shuffle_rng(cfg.seed);
    std::mt19937 dropout_rng(cfg.seed ^ 0x9E3779B9u);

    std::vector<size_t> order(inputs.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<LayerCache> caches(n_layers);
    std::vector<ParamGrads> grads(n_layers);
    std::vector<ParamGrads> batch_grads(n_layers);

    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        size_t correct = 0;
        for (size_t b = 0; b < order.size(); b += cfg.batch_size) {
            const size_t bend = std::min(b + cfg.batch_size, order.size());
            const auto bcount = static_cast<float>(bend - b);
            bool first = true;
            for (size_t e = b; e < bend; ++e) {
                const size_t idx = order[e];
                // forward through [first_layer, n)
                Tensor x = inputs[idx];
                for (size_t li = first_layer; li < n_layers; ++li) {
                    x = net.layer(li).forward(x, &caches[li], true, &dropout_rng);
                }
                const auto label = static_cast<size_t>(labels[idx]);
                auto lr = cross_entropy(x, label);
                if (!std::isfinite(lr.loss)) {
                    throw Error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                "; reduce the learning rate");
                }
                loss_sum += lr.loss;
                int pred = 0;
                for (size_t i = 1; i < x.numel(); ++i) {
                    if (x[i] > x[pred]) pred = static_cast<int>(i);
                }
                if (pred == labels[idx]) ++correct;

                Tensor upstream = std::move(lr.logit_grad);
                for (size_t li = n_layers - 1; li-- > first_layer;) {
                    ParamGrads* g = net.layer(li).has_params() && !net.layer(li).frozen()
                                        ? &grads[li]
                                        : nullptr;
                    if (li == first_layer && !g) break;  // nothing below needs this grad
                    upstream = net.layer(li).backward(upstream, caches[li], g);
                }
                for (size_t li = first_layer; li < n_layers; ++li) {
                    if (!net.layer(li).has_params() || net.layer(li).frozen()) continue;
                    if (first) {
                        batch_grads[li] = grads[li];
                    } else {
                        for (size_t j = 0; j < grads[li].weight.numel(); ++j) {
                            batch_grads[li].weight[j] += grads[li].weight[j];
                        }
                        for (size_t j = 0; j < grads[li].bias.numel(); ++j) {
                            batch_grads[li].bias[j] += grads[li].bias[j];
                        }
                    }
                }
                first = false;
            }
            std::vector<const Tensor*> gptrs;
            for (size_t li = first_layer; li < n_layers; ++li) {
                if (!net.layer(li).has_params() || net.layer(li).frozen()) continue;
                for (float& v : batch_grads[li].weight.vec()) v /= bcount;
                for (float& v : batch_grads[li].bias.vec()) v /= bcount;
                gptrs.push_back(&batch_grads[li].weight);
                gptrs.push_back(&batch_grads[li].bias);
            }
            opt.step(params, gptrs);
        }
        report.epochs.push_back(
            {loss_sum / static_cast<double>(order.size()),
             static_cast<double>(correct) / static_cast<double>(order.size())});
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

inline TrainReport train(Network& net, const WindowedDataset& ds, const TrainConfig& cfg) {
    return train_range(net, 0, ds.windows, ds.labels, cfg);
}

inline double accuracy_on(const Network& net, const std::vector<Tensor>& windows,
                          const std::vector<int>& labels) {
    size_t correct = 0;
    for (size_t i = 0; i < windows.size(); ++i) {
        if (predict(net, windows[i]).label == labels[i]) ++correct;
    }
    return windows.empty() ? 0.0
                           : static_cast<double>(correct) / static_cast<double>(windows.size());
}

/// k-fold cross-validation: k fresh models, normaliser fit on each
/// fold's training portion only. Returns per-fold and mean test accuracy
/// plus the last fold's epoch curve.
inline TrainReport cross_validate(const WindowedDataset& raw, const TrainConfig& cfg,
                                  size_t k = 10) {
    if (raw.normalised) throw Error("cross_validate: expects un-normalised windows");
    const auto t0 = std::chrono::steady_clock::now();
    auto folds = kfold_split(raw.size(), k, cfg.seed);
    TrainReport report;
    for (size_t f = 0; f < folds.size(); ++f) {
        const Fold& fold = folds[f];
        NormStats st = fit_normalizer(raw, fold.train);
        std::vector<Tensor> train_w, test_w;
        std::vector<int> train_l, test_l;
        train_w.reserve(fold.train.size());
        test_w.reserve(fold.test.size());
        for (size_t idx : fold.train) {
            train_w.push_back(normalize_window(raw.windows[idx], st));
            train_l.push_back(raw.labels[idx]);
        }
        for (size_t idx : fold.test) {
            test_w.push_back(normalize_window(raw.windows[idx], st));
            test_l.push_back(raw.labels[idx]);
        }
        TrainConfig fold_cfg = cfg;
        fold_cfg.seed = cfg.seed + static_cast<uint32_t>(f) * 101u;
        Network net = build_base_model(raw.window_len, fold_cfg.seed);
        TrainReport tr = train_range(net, 0, train_w, train_l, fold_cfg);
        report.epochs = std::move(tr.epochs);
        report.fold_accuracy.push_back(accuracy_on(net, test_w, test_l));
    }
    report.mean_cv_accuracy =
        std::accumulate(report.fold_accuracy.begin(), report.fold_accuracy.end(), 0.0) /
        static_cast<double>(report.fold_accuracy.size());
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace stressnet
