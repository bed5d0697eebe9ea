#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "stressnet/tensor.hpp"

namespace stressnet {

constexpr int kLabelUnlabeled = -1;
constexpr int kLabelRelaxed = 0;
constexpr int kLabelStressed = 1;

constexpr double kSampleRateHz = 30.0;
constexpr size_t kNumChannels = 3;  // hr, hrv, eda

constexpr const char* kSessionCsvHeader = "timestamp_ms,hr_bpm,hrv_ms,eda_raw,label";

struct SensorSample {
    int64_t timestamp_ms = 0;
    float hr = 0.0f;   // beats per minute
    float hrv = 0.0f;  // milliseconds (RMSSD-style proxy)
    float eda = 0.0f;  // raw sensor units
    int label = kLabelUnlabeled;
};

struct Session {
    std::string subject_id;
    double sample_rate_hz = kSampleRateHz;
    std::vector<SensorSample> samples;
};

inline void validate_sample(const SensorSample& s, size_t line_no) {
    auto bad = [&](const std::string& what) {
        throw Error("line " + std::to_string(line_no) + ": " + what);
    };
    if (!(s.hr > 0.0f)) bad("hr must be > 0, got " + std::to_string(s.hr));
    if (s.hrv < 0.0f) bad("hrv must be >= 0, got " + std::to_string(s.hrv));
    if (s.eda < 0.0f) bad("eda must be >= 0, got " + std::to_string(s.eda));
    if (s.label < -1 || s.label > 1) {
        bad("label must be -1, 0 or 1, got " + std::to_string(s.label));
    }
}

/// Parses the documented session CSV schema. Errors name the offending
/// line (1-based, header is line 1).
inline Session load_session_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open session file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw Error(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kSessionCsvHeader) {
        throw Error(path + ": line 1: bad header, expected '" +
                    std::string(kSessionCsvHeader) + "'");
    }
    Session s;
    s.subject_id = std::filesystem::path(path).stem().string();
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        SensorSample sample;
        char* end = nullptr;
        std::array<std::string, 5> fields;
        {
            size_t start = 0, fi = 0;
            for (size_t i = 0; i <= line.size(); ++i) {
                if (i == line.size() || line[i] == ',') {
                    if (fi >= 5) throw Error(path + ": line " + std::to_string(line_no) +
                                             ": too many columns");
                    fields[fi++] = line.substr(start, i - start);
                    start = i + 1;
                }
            }
            if (fi != 5) {
                throw Error(path + ": line " + std::to_string(line_no) +
                            ": expected 5 columns, got " + std::to_string(fi));
            }
        }
        auto parse_f = [&](const std::string& f, const char* name) {
            errno = 0;
            float v = std::strtof(f.c_str(), &end);
            if (end == f.c_str() || *end != '\0' || errno == ERANGE) {
                throw Error(path + ": line " + std::to_string(line_no) + ": unparsable " +
                            name + " value '" + f + "'");
            }
            return v;
        };
        auto parse_i = [&](const std::string& f, const char* name) {
            errno = 0;
            long v = std::strtol(f.c_str(), &end, 10);
            if (end == f.c_str() || *end != '\0' || errno == ERANGE) {
                throw Error(path + ": line " + std::to_string(line_no) + ": unparsable " +
                            name + " value '" + f + "'");
            }
            return v;
        };
        sample.timestamp_ms = parse_i(fields[0], "timestamp_ms");
        sample.hr = parse_f(fields[1], "hr_bpm");
        sample.hrv = parse_f(fields[2], "hrv_ms");
        sample.eda = parse_f(fields[3], "eda_raw");
        sample.label = static_cast<int>(parse_i(fields[4], "label"));
        try {
            validate_sample(sample, line_no);
        } catch (const Error& e) {
            throw Error(path + ": " + e.what());
        }
        if (!s.samples.empty() && sample.timestamp_ms <= s.samples.back().timestamp_ms) {
            throw Error(path + ": line " + std::to_string(line_no) +
                        ": non-monotonic timestamp " + std::to_string(sample.timestamp_ms));
        }
        s.samples.push_back(sample);
    }
    if (s.samples.empty()) throw Error(path + ": empty session");
    return s;
}

inline void save_session_csv(const Session& s, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write session file: " + path);
    out << kSessionCsvHeader << '\n';
    char buf[128];
    for (const SensorSample& sm : s.samples) {
        std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%d\n",
                      static_cast<long long>(sm.timestamp_ms), sm.hr, sm.hrv, sm.eda, sm.label);
        out << buf;
    }
    if (!out) throw Error("write failed: " + path);
}

/// Per-channel z-score statistics, channel order hr, hrv, eda.
struct NormStats {
    std::array<float, kNumChannels> mean{};
    std::array<float, kNumChannels> stddev{};
};

struct WindowedDataset {
    std::vector<Tensor> windows;  // each [3, W]
    std::vector<int> labels;      // class index per window
    size_t window_len = 0;
    NormStats norm;               // stats the windows were normalised with
    bool normalised = false;

    size_t size() const { return windows.size(); }
};

/// Sliding-window segmentation: count = floor((L - W) / S) + 1. A window
/// with more than 50% unlabeled samples is dropped; otherwise it takes
/// the majority label of its labelled samples, ties going to stressed.
inline WindowedDataset segment_windows(const Session& session, size_t window_len,
                                       size_t stride) {
    if (window_len < 1 || stride < 1) throw Error("segment_windows: window and stride must be >= 1");
    const size_t n = session.samples.size();
    if (n < window_len) {
        throw Error("segment_windows: session has " + std::to_string(n) +
                    " samples, shorter than window " + std::to_string(window_len));
    }
    WindowedDataset ds;
    ds.window_len = window_len;
    const size_t count = (n - window_len) / stride + 1;
    for (size_t w = 0; w < count; ++w) {
        const size_t start = w * stride;
        size_t unlabeled = 0, stressed = 0, relaxed = 0;
        for (size_t i = 0; i < window_len; ++i) {
            switch (session.samples[start + i].label) {
                case kLabelStressed: ++stressed; break;
                case kLabelRelaxed: ++relaxed; break;
                default: ++unlabeled; break;
            }
        }
        if (unlabeled * 2 > window_len) continue;
        Tensor t({kNumChannels, window_len});
        for (size_t i = 0; i < window_len; ++i) {
            const SensorSample& s = session.samples[start + i];
            t.at(0, i) = s.hr;
            t.at(1, i) = s.hrv;
            t.at(2, i) = s.eda;
        }
        ds.windows.push_back(std::move(t));
        ds.labels.push_back(stressed >= relaxed ? kLabelStressed : kLabelRelaxed);
    }
    return ds;
}

inline void merge_into(WindowedDataset& dst, WindowedDataset&& src) {
    if (dst.windows.empty()) {
        dst.window_len = src.window_len;
    } else if (dst.window_len != src.window_len) {
        throw Error("merge_into: window length mismatch");
    }
    for (auto& w : src.windows) dst.windows.push_back(std::move(w));
    dst.labels.insert(dst.labels.end(), src.labels.begin(), src.labels.end());
}

/// Per-channel mean/stddev over a set of window indices (all windows when
/// indices is empty is NOT implied; pass the full range explicitly).
inline NormStats fit_normalizer(const WindowedDataset& ds, const std::vector<size_t>& indices) {
    if (indices.empty()) throw Error("fit_normalizer: no windows");
    NormStats st;
    const size_t W = ds.window_len;
    for (size_t c = 0; c < kNumChannels; ++c) {
        double sum = 0.0, sq = 0.0;
        size_t n = 0;
        for (size_t idx : indices) {
            const Tensor& t = ds.windows[idx];
            for (size_t i = 0; i < W; ++i) {
                double v = t.at(c, i);
                sum += v;
                sq += v * v;
                ++n;
            }
        }
        double mean = sum / static_cast<double>(n);
        double var = sq / static_cast<double>(n) - mean * mean;
        if (var < 1e-12) {
            throw Error("fit_normalizer: degenerate channel " + std::to_string(c) +
                        " (zero variance)");
        }
        st.mean[c] = static_cast<float>(mean);
        st.stddev[c] = static_cast<float>(std::sqrt(var));
    }
    return st;
}

inline NormStats fit_normalizer(const WindowedDataset& ds) {
    std::vector<size_t> all(ds.size());
    std::iota(all.begin(), all.end(), 0);
    return fit_normalizer(ds, all);
}

inline Tensor normalize_window(const Tensor& w, const NormStats& st) {
    Tensor out = w;
    const size_t W = out.dim(1);
    for (size_t c = 0; c < kNumChannels; ++c) {
        const float m = st.mean[c], s = st.stddev[c];
        for (size_t i = 0; i < W; ++i) out.at(c, i) = (out.at(c, i) - m) / s;
    }
    return out;
}

inline void apply_normalizer(WindowedDataset& ds, const NormStats& st) {
    for (Tensor& w : ds.windows) w = normalize_window(w, st);
    ds.norm = st;
    ds.normalised = true;
}

inline void invert_normalizer(WindowedDataset& ds) {
    if (!ds.normalised) throw Error("invert_normalizer: dataset is not normalised");
    for (Tensor& w : ds.windows) {
        for (size_t c = 0; c < kNumChannels; ++c) {
            for (size_t i = 0; i < ds.window_len; ++i) {
                w.at(c, i) = w.at(c, i) * ds.norm.stddev[c] + ds.norm.mean[c];
            }
        }
    }
    ds.normalised = false;
}

struct Fold {
    std::vector<size_t> train;
    std::vector<size_t> test;
};

/// Deterministic shuffled k-fold split. Folds are disjoint, jointly
/// exhaustive, and differ in size by at most one.
inline std::vector<Fold> kfold_split(size_t n, size_t k, uint32_t seed) {
    if (k < 2) throw Error("kfold_split: k must be >= 2");
    if (n < k) throw Error("kfold_split: need at least k samples");
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<Fold> folds(k);
    const size_t base = n / k, extra = n % k;
    size_t pos = 0;
    for (size_t f = 0; f < k; ++f) {
        const size_t sz = base + (f < extra ? 1 : 0);
        folds[f].test.assign(order.begin() + pos, order.begin() + pos + sz);
        pos += sz;
    }
    for (size_t f = 0; f < k; ++f) {
        for (size_t g = 0; g < k; ++g) {
            if (g == f) continue;
            folds[f].train.insert(folds[f].train.end(), folds[g].test.begin(),
                                  folds[g].test.end());
        }
    }
    return folds;
}

/// Stratified train/test split preserving class proportions; test gets
/// ceil(test_frac * class count) per class.
inline Fold stratified_split(const std::vector<int>& labels, double test_frac, uint32_t seed) {
    if (test_frac <= 0.0 || test_frac >= 1.0) {
        throw Error("stratified_split: test fraction must be in (0,1)");
    }
    std::mt19937 rng(seed);
    Fold fold;
    for (int cls : {kLabelRelaxed, kLabelStressed}) {
        std::vector<size_t> idx;
        for (size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == cls) idx.push_back(i);
        }
        std::shuffle(idx.begin(), idx.end(), rng);
        const size_t ntest = static_cast<size_t>(
            std::ceil(test_frac * static_cast<double>(idx.size())));
        for (size_t i = 0; i < idx.size(); ++i) {
            (i < ntest ? fold.test : fold.train).push_back(idx[i]);
        }
    }
    std::sort(fold.train.begin(), fold.train.end());
    std::sort(fold.test.begin(), fold.test.end());
    return fold;
}

struct ClassBalance {
    size_t relaxed = 0;
    size_t stressed = 0;
    double relaxed_ratio = 0.0;
    double stressed_ratio = 0.0;
    bool imbalance_warning = false;  // minority class under 40%
};

inline ClassBalance class_balance_report(const std::vector<int>& labels) {
    if (labels.empty()) throw Error("class_balance_report: empty dataset");
    ClassBalance b;
    for (int l : labels) {
        if (l == kLabelStressed) ++b.stressed;
        else if (l == kLabelRelaxed) ++b.relaxed;
        else throw Error("class_balance_report: unlabeled window in dataset");
    }
    const double total = static_cast<double>(labels.size());
    b.relaxed_ratio = b.relaxed / total;
    b.stressed_ratio = b.stressed / total;
    b.imbalance_warning = std::min(b.relaxed_ratio, b.stressed_ratio) < 0.40;
    return b;
}

}  // namespace stressnet
