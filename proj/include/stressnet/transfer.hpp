#pragma once

#include <string>
#include <vector>

#include "stressnet/eval.hpp"
#include "stressnet/model.hpp"
#include "stressnet/serialize.hpp"

namespace stressnet {

struct AdaptationSpec {
    size_t hidden_width = kHeadHiddenWidth;
    size_t class_count = kClassCount;
    /// Layer indices to freeze; empty means the default policy: every
    /// conv layer (pool/relu/flatten carry no parameters either way).
    std::vector<size_t> freeze_policy;
    TrainConfig finetune;  // default: 50 epochs at 0.1x the base learning rate

    AdaptationSpec() {
        finetune.learning_rate = 0.001f;
    }
};

struct PersonalModel {
    Network net;
    NormStats norm;             // user-data statistics
    uint32_t base_checksum = 0;
    std::string user_id;
    AdaptationSpec spec;
};

/// Head replacement: everything after Flatten+Dropout is removed and a
/// fresh Dense(flatten_dim -> hidden) -> ReLU -> Dense(hidden -> classes)
/// -> Softmax head is appended. Conv layers are frozen per the policy.
inline PersonalModel adapt_head(const Network& base, const NormStats& base_norm,
                                const AdaptationSpec& spec, const std::string& user_id,
                                uint32_t head_seed) {
    size_t flatten_idx = base.size();
    for (size_t i = 0; i < base.size(); ++i) {
        if (base.layer(i).kind() == LayerKind::Flatten) {
            flatten_idx = i;
            break;
        }
    }
    if (flatten_idx == base.size()) throw Error("adapt_head: base model has no flatten layer");

    // flatten output width = input width of the first dense layer above it
    size_t flat_dim = 0;
    for (size_t i = flatten_idx + 1; i < base.size(); ++i) {
        if (base.layer(i).kind() == LayerKind::Dense) {
            flat_dim = dynamic_cast<const DenseLayer&>(base.layer(i)).in_units();
            break;
        }
    }
    if (flat_dim == 0) throw Error("adapt_head: base model has no dense head above flatten");

    PersonalModel pm;
    pm.user_id = user_id;
    pm.spec = spec;
    pm.base_checksum = model_checksum(base, base_norm);

    size_t keep = flatten_idx + 1;
    if (keep < base.size() && base.layer(keep).kind() == LayerKind::Dropout) ++keep;
    for (size_t i = 0; i < keep; ++i) pm.net.add(base.layer(i).clone());

    std::mt19937 rng(head_seed);
    auto d1 = std::make_unique<DenseLayer>(spec.hidden_width, flat_dim);
    Network::init_layer(*d1, rng);
    auto d2 = std::make_unique<DenseLayer>(spec.class_count, spec.hidden_width);
    Network::init_layer(*d2, rng);
    pm.net.add(std::move(d1));
    pm.net.add(std::make_unique<ReluLayer>());
    pm.net.add(std::move(d2));
    pm.net.add(std::make_unique<SoftmaxLayer>());

    if (spec.freeze_policy.empty()) {
        for (size_t i = 0; i < pm.net.size(); ++i) {
            if (pm.net.layer(i).kind() == LayerKind::Conv1D) pm.net.layer(i).set_frozen(true);
        }
    } else {
        for (size_t idx : spec.freeze_policy) {
            if (idx >= pm.net.size()) {
                throw Error("adapt_head: freeze policy index " + std::to_string(idx) +
                            " out of range for " + std::to_string(pm.net.size()) + " layers");
            }
            pm.net.layer(idx).set_frozen(true);
        }
    }
    return pm;
}

struct FinetuneResult {
    TrainReport report;
    EvalReport heldout;      // user test split, after fine-tuning
    Fold split;              // the 80/20 stratified split used
};

/// Fine-tune the non-frozen layers on the user's data. The normaliser is
/// refit on the user training split. When every layer below the first
/// trainable/stochastic one is frozen, their activations are computed
/// once per window and reused across epochs.
inline FinetuneResult finetune(PersonalModel& pm, const WindowedDataset& user_raw,
                               const TrainConfig& cfg, double test_frac = 0.2) {
    if (user_raw.normalised) throw Error("finetune: expects un-normalised user windows");
    {
        bool has0 = false, has1 = false;
        for (int l : user_raw.labels) {
            if (l == kLabelRelaxed) has0 = true;
            if (l == kLabelStressed) has1 = true;
        }
        if (!has0 || !has1) {
            throw Error(
                "finetune: user data contains a single class; label more data covering both "
                "stressed and relaxed periods");
        }
    }
    FinetuneResult out;
    out.split = stratified_split(user_raw.labels, test_frac, cfg.seed);
    NormStats st = fit_normalizer(user_raw, out.split.train);
    pm.norm = st;

    // longest frozen deterministic prefix
    size_t prefix = 0;
    while (prefix < pm.net.size()) {
        const auto& l = pm.net.layer(prefix);
        if (l.kind() == LayerKind::Dropout) break;
        if (l.has_params() && !l.frozen()) break;
        ++prefix;
    }

    std::vector<Tensor> train_in;
    std::vector<int> train_l;
    train_in.reserve(out.split.train.size());
    for (size_t idx : out.split.train) {
        Tensor x = normalize_window(user_raw.windows[idx], st);
        for (size_t li = 0; li < prefix; ++li) {
            x = pm.net.layer(li).forward(x, nullptr, false, nullptr);
        }
        train_in.push_back(std::move(x));
        train_l.push_back(user_raw.labels[idx]);
    }
    out.report = train_range(pm.net, prefix, train_in, train_l, cfg);

    std::vector<Tensor> test_w;
    std::vector<int> test_l;
    for (size_t idx : out.split.test) {
        test_w.push_back(user_raw.windows[idx]);
        test_l.push_back(user_raw.labels[idx]);
    }
    out.heldout = evaluate(pm.net, st, test_w, test_l);
    return out;
}

/// Degradation control: the unadapted base model, with its own
/// normalisation statistics, on the user's data.
inline EvalReport baseline_on_target(const Network& base, const NormStats& base_norm,
                                     const std::vector<Tensor>& windows,
                                     const std::vector<int>& labels) {
    return evaluate(base, base_norm, windows, labels);
}

/// Entry (i,j) = accuracy of model j on user i's held-out windows. Each
/// model evaluates with its own normalisation statistics.
inline CrossMatrix cross_user_matrix(const std::vector<PersonalModel>& models,
                                     const std::vector<std::vector<Tensor>>& user_windows,
                                     const std::vector<std::vector<int>>& user_labels) {
    if (user_windows.size() != user_labels.size()) {
        throw Error("cross_user_matrix: windows/labels count mismatch");
    }
    CrossMatrix m;
    m.acc.resize(user_windows.size());
    for (size_t i = 0; i < user_windows.size(); ++i) {
        for (const PersonalModel& pm : models) {
            m.acc[i].push_back(
                evaluate(pm.net, pm.norm, user_windows[i], user_labels[i]).accuracy);
        }
    }
    return m;
}

/// Frozen-layer bit-equality between a personal model and its base.
inline bool frozen_layers_match_base(const PersonalModel& pm, const Network& base) {
    for (size_t i = 0; i < pm.net.size() && i < base.size(); ++i) {
        if (!pm.net.layer(i).frozen()) continue;
        auto a = pm.net.layer(i).params();
        auto b = base.layer(i).params();
        if (a.size() != b.size()) return false;
        for (size_t p = 0; p < a.size(); ++p) {
            if (a[p]->vec() != b[p]->vec()) return false;
        }
    }
    return true;
}

inline void save_personal_model(const PersonalModel& pm, const std::string& path) {
    Provenance prov;
    prov.base_checksum = pm.base_checksum;
    prov.user_id = pm.user_id;
    prov.finetune_epochs = static_cast<uint32_t>(pm.spec.finetune.epochs);
    prov.finetune_batch = static_cast<uint32_t>(pm.spec.finetune.batch_size);
    prov.finetune_seed = pm.spec.finetune.seed;
    prov.finetune_lr = pm.spec.finetune.learning_rate;
    prov.hidden_width = static_cast<uint32_t>(pm.spec.hidden_width);
    save_model(pm.net, pm.norm, path, &prov);
}

inline PersonalModel load_personal_model(const std::string& path) {
    LoadedModel lm = load_model(path);
    if (!lm.has_provenance) {
        throw Error(path + ": not a personalised model (no provenance block)");
    }
    PersonalModel pm;
    pm.net = std::move(lm.net);
    pm.norm = lm.norm;
    pm.base_checksum = lm.provenance.base_checksum;
    pm.user_id = lm.provenance.user_id;
    pm.spec.hidden_width = lm.provenance.hidden_width;
    pm.spec.finetune.epochs = lm.provenance.finetune_epochs;
    pm.spec.finetune.batch_size = lm.provenance.finetune_batch;
    pm.spec.finetune.seed = lm.provenance.finetune_seed;
    pm.spec.finetune.learning_rate = lm.provenance.finetune_lr;
    return pm;
}

}  // namespace stressnet
