#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "stressnet/model.hpp"
#include "stressnet/serialize.hpp"

using namespace stressnet;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::path(::testing::TempDir()) / name).string();
}

// Two well-separated Gaussian blobs in window space.
void toy_blobs(size_t n_per_class, uint32_t seed, std::vector<Tensor>& windows,
               std::vector<int>& labels, size_t window_len = 10) {
    std::mt19937 rng(seed);
    std::normal_distribution<float> g(0.0f, 0.3f);
    for (int cls : {0, 1}) {
        const float mean = cls == 0 ? -1.0f : 1.0f;
        for (size_t i = 0; i < n_per_class; ++i) {
            Tensor t({kNumChannels, window_len});
            for (float& v : t.vec()) v = mean + g(rng);
            windows.push_back(std::move(t));
            labels.push_back(cls);
        }
    }
}

Network toy_net(uint32_t seed, size_t window_len = 10) {
    Network net;
    net.add(std::make_unique<FlattenLayer>());
    net.add(std::make_unique<DenseLayer>(kClassCount, kNumChannels * window_len));
    net.add(std::make_unique<SoftmaxLayer>());
    net.init_params(seed);
    return net;
}

std::vector<uint8_t> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::vector<uint8_t>& b) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

std::string error_of(const std::string& path) {
    try {
        load_model(path);
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(BaseModel, FlattenDimAndMinimumWindow) {
    EXPECT_EQ(base_model_flatten_dim(400), 640u);
    EXPECT_EQ(base_model_flatten_dim(100), 64u);
    const size_t min_w = base_model_min_window_len();
    EXPECT_NO_THROW(base_model_flatten_dim(min_w));
    EXPECT_THROW(base_model_flatten_dim(min_w - 1), Error);
    try {
        build_base_model(10, 0);
        FAIL() << "expected error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("minimum supported"), std::string::npos);
    }
}

TEST(BaseModel, DeterministicInitialization) {
    Network a = build_base_model(100, 7);
    Network b = build_base_model(100, 7);
    Network c = build_base_model(100, 8);
    auto pa = a.all_params(), pb = b.all_params(), pc = c.all_params();
    ASSERT_EQ(pa.size(), pb.size());
    bool differs_from_c = false;
    for (size_t i = 0; i < pa.size(); ++i) {
        for (size_t j = 0; j < pa[i]->numel(); ++j) {
            EXPECT_EQ((*pa[i])[j], (*pb[i])[j]);
            if ((*pa[i])[j] != (*pc[i])[j]) differs_from_c = true;
        }
    }
    EXPECT_TRUE(differs_from_c);
    EXPECT_EQ(a.size(), 15u);
    EXPECT_EQ(a.layer(a.size() - 1).kind(), LayerKind::Softmax);
}

TEST(Predict, ArgmaxWithFirstIndexTieBreak) {
    Network net = toy_net(1);
    for (Tensor* p : net.all_params()) p->fill(0.0f);  // logits all equal
    Tensor in({kNumChannels, 10});
    in.fill(0.5f);
    Prediction p = predict(net, in);
    EXPECT_EQ(p.label, 0);
    EXPECT_FLOAT_EQ(p.probabilities[0], 0.5f);
    EXPECT_FLOAT_EQ(p.probabilities[1], 0.5f);
}

TEST(Train, RejectsDegenerateDatasets) {
    Network net = toy_net(1);
    std::vector<Tensor> w;
    std::vector<int> l;
    TrainConfig cfg;
    EXPECT_THROW(train_range(net, 0, w, l, cfg), Error);
    toy_blobs(4, 1, w, l);
    l.assign(l.size(), 1);  // single class
    try {
        train_range(net, 0, w, l, cfg);
        FAIL() << "expected error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("single class"), std::string::npos);
    }
    l.pop_back();
    EXPECT_THROW(train_range(net, 0, w, l, cfg), Error);  // size mismatch
}

TEST(Train, ZeroEpochsIsANoOp) {
    Network net = toy_net(2);
    Network before = net;
    std::vector<Tensor> w;
    std::vector<int> l;
    toy_blobs(8, 3, w, l);
    TrainConfig cfg;
    cfg.epochs = 0;
    TrainReport r = train_range(net, 0, w, l, cfg);
    EXPECT_TRUE(r.epochs.empty());
    auto pa = net.all_params(), pb = before.all_params();
    for (size_t i = 0; i < pa.size(); ++i) {
        for (size_t j = 0; j < pa[i]->numel(); ++j) EXPECT_EQ((*pa[i])[j], (*pb[i])[j]);
    }
}

TEST(Train, LearnsSeparableBlobs) {
    std::vector<Tensor> w;
    std::vector<int> l;
    toy_blobs(60, 5, w, l);
    Network net = toy_net(5);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.learning_rate = 0.05f;
    TrainReport r = train_range(net, 0, w, l, cfg);
    ASSERT_EQ(r.epochs.size(), 20u);
    EXPECT_LT(r.epochs.back().loss, r.epochs.front().loss);
    EXPECT_GE(accuracy_on(net, w, l), 0.99);
    EXPECT_GE(r.epochs.back().accuracy, 0.99);
}

TEST(Train, DeterministicPerSeed) {
    std::vector<Tensor> w;
    std::vector<int> l;
    toy_blobs(20, 9, w, l);
    TrainConfig cfg;
    cfg.epochs = 5;
    Network a = toy_net(4), b = toy_net(4);
    train_range(a, 0, w, l, cfg);
    train_range(b, 0, w, l, cfg);
    auto pa = a.all_params(), pb = b.all_params();
    for (size_t i = 0; i < pa.size(); ++i) {
        for (size_t j = 0; j < pa[i]->numel(); ++j) EXPECT_EQ((*pa[i])[j], (*pb[i])[j]);
    }
}

TEST(Train, AdamOptimizerAlsoLearns) {
    std::vector<Tensor> w;
    std::vector<int> l;
    toy_blobs(40, 6, w, l);
    Network net = toy_net(6);
    TrainConfig cfg;
    cfg.epochs = 15;
    cfg.optimizer = OptimizerKind::Adam;
    cfg.learning_rate = 0.01f;
    train_range(net, 0, w, l, cfg);
    EXPECT_GE(accuracy_on(net, w, l), 0.95);
}

TEST(CrossValidate, SeparableDatasetScoresHigh) {
    WindowedDataset raw;
    raw.window_len = 100;
    std::mt19937 rng(8);
    std::normal_distribution<float> g(0.0f, 1.0f);
    for (int cls : {0, 1}) {
        for (int i = 0; i < 30; ++i) {
            Tensor t({kNumChannels, raw.window_len});
            const float mean = cls == 0 ? 60.0f : 90.0f;
            for (float& v : t.vec()) v = mean + 5.0f * g(rng);
            raw.windows.push_back(std::move(t));
            raw.labels.push_back(cls);
        }
    }
    TrainConfig cfg;
    cfg.epochs = 3;
    TrainReport r = cross_validate(raw, cfg, 3);
    ASSERT_EQ(r.fold_accuracy.size(), 3u);
    EXPECT_GE(r.mean_cv_accuracy, 0.9);

    apply_normalizer(raw, fit_normalizer(raw));
    EXPECT_THROW(cross_validate(raw, cfg, 3), Error);
}

TEST(Serialize, SaveLoadRoundTripIsBitIdentical) {
    Network net = build_base_model(100, 12);
    NormStats norm;
    norm.mean = {76.8f, 65.0f, 351.9f};
    norm.stddev = {6.1f, 6.2f, 63.0f};
    const std::string path = temp_path("model.bin");
    save_model(net, norm, path);
    EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));

    LoadedModel m = load_model(path);
    EXPECT_FALSE(m.has_provenance);
    EXPECT_EQ(m.checksum, model_checksum(net, norm));
    for (size_t c = 0; c < kNumChannels; ++c) {
        EXPECT_EQ(m.norm.mean[c], norm.mean[c]);
        EXPECT_EQ(m.norm.stddev[c], norm.stddev[c]);
    }
    ASSERT_EQ(m.net.size(), net.size());
    auto pa = net.all_params(), pb = m.net.all_params();
    ASSERT_EQ(pa.size(), pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
        ASSERT_EQ(pa[i]->numel(), pb[i]->numel());
        for (size_t j = 0; j < pa[i]->numel(); ++j) EXPECT_EQ((*pa[i])[j], (*pb[i])[j]);
    }

    std::mt19937 rng(13);
    std::uniform_real_distribution<float> u(-2.0f, 2.0f);
    for (int c = 0; c < 20; ++c) {
        Tensor in({kNumChannels, 100});
        for (float& v : in.vec()) v = u(rng);
        Prediction p0 = predict(net, in), p1 = predict(m.net, in);
        EXPECT_EQ(p0.label, p1.label);
        for (size_t i = 0; i < p0.probabilities.numel(); ++i) {
            EXPECT_EQ(p0.probabilities[i], p1.probabilities[i]);
        }
    }
}

TEST(Serialize, DistinctErrorsForDistinctCorruptions) {
    Network net = build_base_model(100, 12);
    NormStats norm;
    norm.stddev = {1.0f, 1.0f, 1.0f};
    const std::string good = temp_path("good.bin");
    save_model(net, norm, good);
    const std::vector<uint8_t> bytes = read_bytes(good);

    const std::string bad = temp_path("bad.bin");
    auto b = bytes;
    b[0] = 'X';
    write_bytes(bad, b);
    EXPECT_NE(error_of(bad).find("bad magic"), std::string::npos);

    b = bytes;
    b[8] = 99;  // format version field
    write_bytes(bad, b);
    EXPECT_NE(error_of(bad).find("version"), std::string::npos);

    b = bytes;
    b[200] ^= 0xFF;  // flip a payload byte
    write_bytes(bad, b);
    EXPECT_NE(error_of(bad).find("checksum"), std::string::npos);

    b = bytes;
    b.resize(12);
    write_bytes(bad, b);
    EXPECT_NE(error_of(bad).find("truncated"), std::string::npos);

    EXPECT_THROW(load_model(temp_path("missing.bin")), Error);
}

TEST(Serialize, ProvenanceRoundTrips) {
    Network net = toy_net(3);
    NormStats norm;
    norm.stddev = {1.0f, 1.0f, 1.0f};
    Provenance prov;
    prov.base_checksum = 0xDEADBEEF;
    prov.user_id = "target_2";
    prov.finetune_epochs = 25;
    prov.finetune_batch = 16;
    prov.finetune_seed = 99;
    prov.finetune_lr = 0.001f;
    prov.hidden_width = 160;
    const std::string path = temp_path("personal.bin");
    save_model(net, norm, path, &prov);
    LoadedModel m = load_model(path);
    ASSERT_TRUE(m.has_provenance);
    EXPECT_EQ(m.provenance.base_checksum, prov.base_checksum);
    EXPECT_EQ(m.provenance.user_id, prov.user_id);
    EXPECT_EQ(m.provenance.finetune_epochs, prov.finetune_epochs);
    EXPECT_EQ(m.provenance.finetune_batch, prov.finetune_batch);
    EXPECT_EQ(m.provenance.finetune_seed, prov.finetune_seed);
    EXPECT_EQ(m.provenance.finetune_lr, prov.finetune_lr);
    EXPECT_EQ(m.provenance.hidden_width, prov.hidden_width);
}

TEST(Serialize, ChecksumChangesWithWeights) {
    Network net = toy_net(3);
    NormStats norm;
    norm.stddev = {1.0f, 1.0f, 1.0f};
    const uint32_t before = model_checksum(net, norm);
    (*net.all_params()[0])[0] += 0.25f;
    EXPECT_NE(model_checksum(net, norm), before);
}
