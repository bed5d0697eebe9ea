#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "stressnet/data.hpp"
#include "stressnet/network.hpp"

namespace stressnet {

constexpr char kModelMagic[8] = {'S', 'T', 'R', 'S', 'C', 'N', 'N', '1'};
constexpr uint32_t kModelFormatVersion = 1;

/// Fine-tune provenance carried by personalised model files.
struct Provenance {
    uint32_t base_checksum = 0;
    std::string user_id;
    uint32_t finetune_epochs = 0;
    uint32_t finetune_batch = 0;
    uint32_t finetune_seed = 0;
    float finetune_lr = 0.0f;
    uint32_t hidden_width = 0;
};

namespace detail {

class ByteWriter {
public:
    void u8(uint8_t v) { push(&v, 1); }
    void u32(uint32_t v) { push_le(v); }
    void u64(uint64_t v) { push_le(v); }
    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        push_le(bits);
    }
    void raw(const void* p, size_t n) { push(p, n); }
    void f32_array(const float* p, size_t n) {
        for (size_t i = 0; i < n; ++i) f32(p[i]);
    }
    const std::vector<uint8_t>& bytes() const { return buf_; }

private:
    template <typename T>
    void push_le(T v) {
        for (size_t i = 0; i < sizeof(T); ++i) {
            uint8_t b = static_cast<uint8_t>(v >> (8 * i));
            buf_.push_back(b);
        }
    }
    void push(const void* p, size_t n) {
        const auto* b = static_cast<const uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    std::vector<uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(const uint8_t* p, size_t n) : p_(p), n_(n) {}

    uint8_t u8() { return read_le<uint8_t>(); }
    uint32_t u32() { return read_le<uint32_t>(); }
    uint64_t u64() { return read_le<uint64_t>(); }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    void raw(void* out, size_t n) {
        need(n);
        std::memcpy(out, p_ + pos_, n);
        pos_ += n;
    }
    size_t pos() const { return pos_; }
    size_t remaining() const { return n_ - pos_; }

private:
    template <typename T>
    T read_le() {
        need(sizeof(T));
        T v = 0;
        for (size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<T>(static_cast<T>(p_[pos_ + i]) << (8 * i));
        }
        pos_ += sizeof(T);
        return v;
    }
    void need(size_t n) {
        if (pos_ + n > n_) throw Error("model file truncated");
    }
    const uint8_t* p_;
    size_t n_;
    size_t pos_ = 0;
};

inline void write_layer(ByteWriter& w, const Layer& l) {
    w.u8(static_cast<uint8_t>(l.kind()));
    const Tensor* weights = nullptr;
    const Tensor* bias = nullptr;
    switch (l.kind()) {
        case LayerKind::Conv1D: {
            auto& c = dynamic_cast<const Conv1DLayer&>(l);
            w.u32(static_cast<uint32_t>(c.out_channels()));
            w.u32(static_cast<uint32_t>(c.in_channels()));
            w.u32(static_cast<uint32_t>(c.kernel_size()));
            w.u32(static_cast<uint32_t>(c.stride()));
            w.u32(c.frozen() ? 1 : 0);
            weights = &c.weights();
            bias = &c.bias();
            break;
        }
        case LayerKind::MaxPool1D: {
            auto& p = dynamic_cast<const MaxPool1DLayer&>(l);
            w.u32(static_cast<uint32_t>(p.pool_size()));
            w.u32(static_cast<uint32_t>(p.stride()));
            break;
        }
        case LayerKind::Dropout: {
            auto& d = dynamic_cast<const DropoutLayer&>(l);
            w.f32(d.rate());
            break;
        }
        case LayerKind::Dense: {
            auto& d = dynamic_cast<const DenseLayer&>(l);
            w.u32(static_cast<uint32_t>(d.out_units()));
            w.u32(static_cast<uint32_t>(d.in_units()));
            w.u32(d.frozen() ? 1 : 0);
            weights = &d.weights();
            bias = &d.bias();
            break;
        }
        case LayerKind::Relu:
        case LayerKind::Flatten:
        case LayerKind::Softmax:
            break;
    }
    const uint64_t payload = weights ? weights->numel() + bias->numel() : 0;
    w.u64(payload);
    if (weights) {
        w.f32_array(weights->data(), weights->numel());
        w.f32_array(bias->data(), bias->numel());
    }
}

inline std::unique_ptr<Layer> read_layer(ByteReader& r) {
    const auto tag = r.u8();
    std::unique_ptr<Layer> layer;
    Tensor* weights = nullptr;
    Tensor* bias = nullptr;
    switch (static_cast<LayerKind>(tag)) {
        case LayerKind::Conv1D: {
            uint32_t oc = r.u32(), ic = r.u32(), k = r.u32(), stride = r.u32(),
                     frozen = r.u32();
            auto c = std::make_unique<Conv1DLayer>(oc, ic, k, stride);
            c->set_frozen(frozen != 0);
            weights = &c->weights();
            bias = &c->bias();
            layer = std::move(c);
            break;
        }
        case LayerKind::MaxPool1D: {
            uint32_t pool = r.u32(), stride = r.u32();
            layer = std::make_unique<MaxPool1DLayer>(pool, stride);
            break;
        }
        case LayerKind::Relu:
            layer = std::make_unique<ReluLayer>();
            break;
        case LayerKind::Dropout:
            layer = std::make_unique<DropoutLayer>(r.f32());
            break;
        case LayerKind::Flatten:
            layer = std::make_unique<FlattenLayer>();
            break;
        case LayerKind::Dense: {
            uint32_t out = r.u32(), in = r.u32(), frozen = r.u32();
            auto d = std::make_unique<DenseLayer>(out, in);
            d->set_frozen(frozen != 0);
            weights = &d->weights();
            bias = &d->bias();
            layer = std::move(d);
            break;
        }
        case LayerKind::Softmax:
            layer = std::make_unique<SoftmaxLayer>();
            break;
        default:
            throw Error("model file: unknown layer tag " + std::to_string(tag));
    }
    const uint64_t payload = r.u64();
    const uint64_t expected = weights ? weights->numel() + bias->numel() : 0;
    if (payload != expected) {
        throw Error("model file: layer payload length " + std::to_string(payload) +
                    " does not match hyperparameters (" + std::to_string(expected) + ")");
    }
    if (weights) {
        for (size_t i = 0; i < weights->numel(); ++i) (*weights)[i] = r.f32();
        for (size_t i = 0; i < bias->numel(); ++i) (*bias)[i] = r.f32();
    }
    return layer;
}

inline std::vector<uint8_t> serialize_model(const Network& net, const NormStats& norm,
                                            const Provenance* prov) {
    ByteWriter w;
    w.raw(kModelMagic, 8);
    w.u32(kModelFormatVersion);
    w.u32(static_cast<uint32_t>(net.size()));
    for (size_t i = 0; i < net.size(); ++i) write_layer(w, net.layer(i));
    for (size_t c = 0; c < kNumChannels; ++c) w.f32(norm.mean[c]);
    for (size_t c = 0; c < kNumChannels; ++c) w.f32(norm.stddev[c]);
    w.u8(prov ? 1 : 0);
    if (prov) {
        w.u32(prov->base_checksum);
        w.u64(prov->user_id.size());
        w.raw(prov->user_id.data(), prov->user_id.size());
        w.u32(prov->finetune_epochs);
        w.u32(prov->finetune_batch);
        w.u32(prov->finetune_seed);
        w.f32(prov->finetune_lr);
        w.u32(prov->hidden_width);
    }
    const uint32_t crc = Crc32::of(w.bytes().data(), w.bytes().size());
    w.u32(crc);
    return w.bytes();
}

}  // namespace detail

/// CRC32 of a model's serialized body; also the trailing checksum of the
/// file that save_model writes.
inline uint32_t model_checksum(const Network& net, const NormStats& norm) {
    auto bytes = detail::serialize_model(net, norm, nullptr);
    // trailing 4 bytes are the checksum itself
    return Crc32::of(bytes.data(), bytes.size() - 4);
}

/// Atomic save: writes to a temp file in the same directory, then
/// renames.
inline void save_model(const Network& net, const NormStats& norm, const std::string& path,
                       const Provenance* prov = nullptr) {
    auto bytes = detail::serialize_model(net, norm, prov);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write model file: " + tmp);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

struct LoadedModel {
    Network net;
    NormStats norm;
    bool has_provenance = false;
    Provenance provenance;
    uint32_t checksum = 0;  // the file's trailing CRC
};

inline LoadedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open model file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kModelMagic, 8) != 0) {
        throw Error(path + ": bad magic (not a model file)");
    }
    if (bytes.size() < 16) throw Error(path + ": model file truncated");
    uint32_t trailer = 0;
    for (int i = 0; i < 4; ++i) {
        trailer |= static_cast<uint32_t>(bytes[bytes.size() - 4 + i]) << (8 * i);
    }
    const uint32_t actual = Crc32::of(bytes.data(), bytes.size() - 4);

    detail::ByteReader r(bytes.data(), bytes.size() - 4);
    char magic[8];
    r.raw(magic, 8);
    LoadedModel m;
    const uint32_t version = r.u32();
    if (version != kModelFormatVersion) {
        throw Error(path + ": unsupported format version " + std::to_string(version));
    }
    if (actual != trailer) {
        throw Error(path + ": checksum mismatch (file corrupted)");
    }
    const uint32_t layer_count = r.u32();
    for (uint32_t i = 0; i < layer_count; ++i) m.net.add(detail::read_layer(r));
    for (size_t c = 0; c < kNumChannels; ++c) m.norm.mean[c] = r.f32();
    for (size_t c = 0; c < kNumChannels; ++c) m.norm.stddev[c] = r.f32();
    m.has_provenance = r.u8() != 0;
    if (m.has_provenance) {
        m.provenance.base_checksum = r.u32();
        const uint64_t idlen = r.u64();
        if (idlen > r.remaining()) throw Error(path + ": model file truncated");
        m.provenance.user_id.resize(idlen);
        if (idlen) r.raw(m.provenance.user_id.data(), idlen);
        m.provenance.finetune_epochs = r.u32();
        m.provenance.finetune_batch = r.u32();
        m.provenance.finetune_seed = r.u32();
        m.provenance.finetune_lr = r.f32();
        m.provenance.hidden_width = r.u32();
    }
    if (r.remaining() != 0) throw Error(path + ": trailing bytes after model body");
    m.checksum = trailer;
    return m;
}

}  // namespace stressnet
