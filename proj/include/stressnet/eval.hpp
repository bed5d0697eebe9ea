#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "stressnet/data.hpp"
#include "stressnet/model.hpp"

namespace stressnet {

/// counts[actual][predicted], classes 0=relaxed, 1=stressed.
struct ConfusionMatrix {
    uint64_t counts[2][2] = {{0, 0}, {0, 0}};

    uint64_t total() const {
        return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
    }
    uint64_t tp() const { return counts[1][1]; }  // stressed is the positive class
    uint64_t fp() const { return counts[0][1]; }
    uint64_t fn() const { return counts[1][0]; }
    uint64_t tn() const { return counts[0][0]; }
};

struct EvalReport {
    double accuracy = 0.0;
    double precision[2] = {0.0, 0.0};  // per class
    double recall[2] = {0.0, 0.0};
    double f1 = 0.0;  // positive class = stressed
    ConfusionMatrix confusion;
    size_t n = 0;
};

inline EvalReport report_from_confusion(const ConfusionMatrix& cm) {
    EvalReport r;
    r.confusion = cm;
    r.n = cm.total();
    if (r.n == 0) throw Error("evaluate: empty dataset");
    r.accuracy = static_cast<double>(cm.tn() + cm.tp()) / static_cast<double>(r.n);
    for (int cls = 0; cls < 2; ++cls) {
        const auto pred = static_cast<double>(cm.counts[0][cls] + cm.counts[1][cls]);
        const auto actual = static_cast<double>(cm.counts[cls][0] + cm.counts[cls][1]);
        const auto hit = static_cast<double>(cm.counts[cls][cls]);
        r.precision[cls] = pred > 0 ? hit / pred : 0.0;
        r.recall[cls] = actual > 0 ? hit / actual : 0.0;
    }
    const double p = r.precision[1], q = r.recall[1];
    r.f1 = (p + q) > 0 ? 2.0 * p * q / (p + q) : 0.0;
    return r;
}

/// Deterministic window-level evaluation; windows are normalised with
/// the supplied stats before inference.
inline EvalReport evaluate(const Network& net, const NormStats& norm,
                           const std::vector<Tensor>& windows,
                           const std::vector<int>& labels) {
    if (windows.size() != labels.size()) throw Error("evaluate: windows/labels mismatch");
    ConfusionMatrix cm;
    for (size_t i = 0; i < windows.size(); ++i) {
        const int pred = predict(net, normalize_window(windows[i], norm)).label;
        cm.counts[labels[i]][pred]++;
    }
    return report_from_confusion(cm);
}

inline std::string format_pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f%%", v * 100.0);
    return buf;
}

/// Text rendering: accuracy/F1 line, per-class precision/recall, and the
/// confusion matrix.
inline std::string render_report(const EvalReport& r) {
    char buf[512];
    std::string out;
    std::snprintf(buf, sizeof(buf), "accuracy %s  f1 %.2f  (n=%zu)\n",
                  format_pct(r.accuracy).c_str(), r.f1, r.n);
    out += buf;
    std::snprintf(buf, sizeof(buf),
                  "class      precision  recall\nrelaxed    %9.3f  %6.3f\nstressed   %9.3f  %6.3f\n",
                  r.precision[0], r.recall[0], r.precision[1], r.recall[1]);
    out += buf;
    std::snprintf(buf, sizeof(buf),
                  "confusion (rows=actual, cols=predicted)\n"
                  "            relaxed  stressed\nrelaxed    %8llu  %8llu\nstressed   %8llu  %8llu\n",
                  static_cast<unsigned long long>(r.confusion.counts[0][0]),
                  static_cast<unsigned long long>(r.confusion.counts[0][1]),
                  static_cast<unsigned long long>(r.confusion.counts[1][0]),
                  static_cast<unsigned long long>(r.confusion.counts[1][1]));
    out += buf;
    return out;
}

/// CSV schema: accuracy,f1,precision_relaxed,recall_relaxed,
/// precision_stressed,recall_stressed,tn,fp,fn,tp,n
inline std::string report_csv(const EvalReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "accuracy,f1,precision_relaxed,recall_relaxed,precision_stressed,"
                  "recall_stressed,tn,fp,fn,tp,n\n"
                  "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%llu,%llu,%llu,%llu,%zu\n",
                  r.accuracy, r.f1, r.precision[0], r.recall[0], r.precision[1], r.recall[1],
                  static_cast<unsigned long long>(r.confusion.tn()),
                  static_cast<unsigned long long>(r.confusion.fp()),
                  static_cast<unsigned long long>(r.confusion.fn()),
                  static_cast<unsigned long long>(r.confusion.tp()), r.n);
    return buf;
}

/// Cross-user accuracy matrix, entry (row=user data i, col=model j).
struct CrossMatrix {
    std::vector<std::vector<double>> acc;  // [user][model]
};

inline std::string render_matrix(const CrossMatrix& m) {
    std::string out = "            ";
    char buf[64];
    const size_t ncols = m.acc.empty() ? 0 : m.acc[0].size();
    for (size_t j = 0; j < ncols; ++j) {
        std::snprintf(buf, sizeof(buf), "  MODEL %zu", j + 1);
        out += buf;
    }
    out += '\n';
    for (size_t i = 0; i < m.acc.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "USER %zu DATA ", i + 1);
        out += buf;
        for (double v : m.acc[i]) {
            std::snprintf(buf, sizeof(buf), "  %6s", format_pct(v).c_str());
            out += buf;
        }
        out += '\n';
    }
    return out;
}

inline std::string matrix_csv(const CrossMatrix& m) {
    std::string out = "user_data";
    char buf[64];
    const size_t cols = m.acc.empty() ? 0 : m.acc[0].size();
    for (size_t j = 0; j < cols; ++j) {
        std::snprintf(buf, sizeof(buf), ",model_%zu", j + 1);
        out += buf;
    }
    out += '\n';
    for (size_t i = 0; i < m.acc.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu", i + 1);
        out += buf;
        for (double v : m.acc[i]) {
            std::snprintf(buf, sizeof(buf), ",%.6f", v);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

struct Improvement {
    double accuracy_delta_points = 0.0;  // percentage points
    double f1_delta = 0.0;
};

inline Improvement compare_reports(const EvalReport& before, const EvalReport& after) {
    return {(after.accuracy - before.accuracy) * 100.0, after.f1 - before.f1};
}

inline std::string render_improvement(const Improvement& imp) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "accuracy %+.1f points, f1 %+.2f\n",
                  imp.accuracy_delta_points, imp.f1_delta);
    return buf;
}

}  // namespace stressnet
