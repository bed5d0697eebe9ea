// stressnet: synthesis, training, personalisation and live labelling of
// stress-detection models from 3-channel physiological time series.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <termios.h>
#include <unistd.h>

#include "CLI11.hpp"
#include "stressnet/synth.hpp"
#include "stressnet/transfer.hpp"

using namespace stressnet;

namespace {

struct Opts {
    std::string config;
    std::string data;     // directory (train) or session csv (others)
    std::string model;    // model container path
    std::string base;     // base model path (finetune)
    std::string user;     // user session csv (finetune)
    std::string source;   // replay source session (live)
    std::string out;      // output path
    std::string script;   // scripted keypresses for live mode
    std::vector<std::string> models;    // crosseval
    std::vector<std::string> datasets;  // crosseval
    uint32_t seed = 42;
    size_t window = kDefaultWindowLen;
    size_t stride = kDefaultStride;
    size_t epochs = 50;
    double lr = 0.0;  // 0 = subcommand default
    size_t batch = 32;
    size_t subjects = 20;
    size_t folds = 10;
    double speed = 1.0;
    bool benchmark = false;
};

// Plain-text key=value configuration; '#' starts a comment. Values fill
// in any option not given on the command line.
void apply_config_file(const Opts& given, Opts& o, const CLI::App* sub) {
    if (o.config.empty()) return;
    std::ifstream in(o.config);
    if (!in) throw Error("cannot open config file: " + o.config);

    const std::map<std::string, std::string> flag_of = {
        {"data", "--data"},     {"model", "--model"},       {"base", "--base"},
        {"user", "--user"},     {"source", "--source"},     {"out", "--out"},
        {"script", "--script"}, {"seed", "--seed"},         {"window", "--window"},
        {"stride", "--stride"}, {"epochs", "--epochs"},     {"lr", "--lr"},
        {"batch", "--batch"},   {"subjects", "--subjects"}, {"folds", "--folds"},
        {"speed", "--speed"},
    };
    auto overridden = [&](const std::string& flag) {
        const CLI::Option* op = sub->get_option_no_throw(flag);
        return op != nullptr && op->count() > 0;
    };

    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(o.config + ": line " + std::to_string(line_no) +
                        ": expected key=value");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        const auto it = flag_of.find(key);
        if (it == flag_of.end()) {
            throw Error(o.config + ": line " + std::to_string(line_no) +
                        ": unknown key '" + key + "'");
        }
        if (overridden(it->second)) continue;  // flags beat file values
        try {
            if (key == "data") o.data = val;
            else if (key == "model") o.model = val;
            else if (key == "base") o.base = val;
            else if (key == "user") o.user = val;
            else if (key == "source") o.source = val;
            else if (key == "out") o.out = val;
            else if (key == "script") o.script = val;
            else if (key == "seed") o.seed = static_cast<uint32_t>(std::stoul(val));
            else if (key == "window") o.window = std::stoul(val);
            else if (key == "stride") o.stride = std::stoul(val);
            else if (key == "epochs") o.epochs = std::stoul(val);
            else if (key == "lr") o.lr = std::stod(val);
            else if (key == "batch") o.batch = std::stoul(val);
            else if (key == "subjects") o.subjects = std::stoul(val);
            else if (key == "folds") o.folds = std::stoul(val);
            else if (key == "speed") o.speed = std::stod(val);
        } catch (const std::exception&) {
            throw Error(o.config + ": line " + std::to_string(line_no) + ": bad value '" +
                        val + "' for key '" + key + "'");
        }
    }
    (void)given;
}

void echo_kv(const char* key, const std::string& val) {
    if (!val.empty()) std::printf("config: %s = %s\n", key, val.c_str());
}

template <typename T>
void echo_kv(const char* key, T val) {
    std::ostringstream os;
    os << val;
    std::printf("config: %s = %s\n", key, os.str().c_str());
}

WindowedDataset window_session_file(const std::string& path, size_t window, size_t stride) {
    return segment_windows(load_session_csv(path), window, stride);
}

// All base-population sessions in a directory, windowed and merged.
WindowedDataset load_corpus(const std::string& dir, size_t window, size_t stride) {
    if (!std::filesystem::is_directory(dir)) {
        throw Error("data directory not found: " + dir);
    }
    std::vector<std::string> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (name.rfind("base_", 0) == 0 && e.path().extension() == ".csv") {
            files.push_back(e.path().string());
        }
    }
    if (files.empty()) throw Error("no base_*.csv sessions in " + dir);
    std::sort(files.begin(), files.end());
    WindowedDataset corpus;
    corpus.window_len = window;
    for (const auto& f : files) merge_into(corpus, window_session_file(f, window, stride));
    return corpus;
}

int cmd_synth(const Opts& o) {
    echo_kv("out", o.out);
    echo_kv("seed", o.seed);
    echo_kv("subjects", o.subjects);
    std::filesystem::create_directories(o.out);
    size_t relaxed = 0, stressed = 0;
    auto emit = [&](const SubjectProfile& p) {
        Session s = synth_generate(p, montreal_schedule());
        for (const auto& sm : s.samples) (sm.label == kLabelStressed ? stressed : relaxed)++;
        const std::string path = (std::filesystem::path(o.out) / (p.id + ".csv")).string();
        const std::string tmp = path + ".tmp";
        save_session_csv(s, tmp);
        std::filesystem::rename(tmp, path);
    };
    for (const auto& p : default_population(o.subjects, o.seed)) emit(p);
    for (const auto& p : shifted_target_population(o.seed)) emit(p);
    const double total = static_cast<double>(relaxed + stressed);
    std::printf("wrote %zu base + 3 target sessions to %s\n", o.subjects, o.out.c_str());
    std::printf("samples: %zu relaxed (%.1f%%), %zu stressed (%.1f%%)\n", relaxed,
                100.0 * relaxed / total, stressed, 100.0 * stressed / total);
    return 0;
}

int cmd_train(const Opts& o) {
    const float lr = o.lr > 0 ? static_cast<float>(o.lr) : 0.01f;
    echo_kv("data", o.data);
    echo_kv("out", o.out);
    echo_kv("seed", o.seed);
    echo_kv("window", o.window);
    echo_kv("stride", o.stride);
    echo_kv("epochs", o.epochs);
    echo_kv("lr", lr);
    echo_kv("batch", o.batch);
    echo_kv("folds", o.folds);

    WindowedDataset corpus = load_corpus(o.data, o.window, o.stride);
    const ClassBalance bal = class_balance_report(corpus.labels);
    std::printf("corpus: %zu windows (%s relaxed / %s stressed)\n", corpus.size(),
                format_pct(bal.relaxed_ratio).c_str(), format_pct(bal.stressed_ratio).c_str());
    if (bal.imbalance_warning) {
        std::printf("warning: class imbalance, minority under 40%%\n");
    }

    TrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch;
    cfg.learning_rate = lr;
    cfg.seed = o.seed;

    if (o.folds >= 2) {
        TrainReport cv = cross_validate(corpus, cfg, o.folds);
        for (size_t f = 0; f < cv.fold_accuracy.size(); ++f) {
            std::printf("fold %zu accuracy %s\n", f + 1, format_pct(cv.fold_accuracy[f]).c_str());
        }
        std::printf("cross-validation mean accuracy %s (%zu-fold, %.0f s)\n",
                    format_pct(cv.mean_cv_accuracy).c_str(), o.folds, cv.wall_seconds);
    }

    NormStats st = fit_normalizer(corpus);
    WindowedDataset normed = corpus;
    apply_normalizer(normed, st);
    Network net = build_base_model(o.window, o.seed);
    TrainReport tr = train(net, normed, cfg);
    std::printf("final model: train accuracy %s, loss %.4f, %.0f s\n",
                format_pct(tr.epochs.back().accuracy).c_str(), tr.epochs.back().loss,
                tr.wall_seconds);
    save_model(net, st, o.out);
    std::printf("saved %s (checksum %08x)\n", o.out.c_str(), model_checksum(net, st));
    return 0;
}

int cmd_finetune(const Opts& o) {
    const float lr = o.lr > 0 ? static_cast<float>(o.lr) : 0.001f;
    echo_kv("base", o.base);
    echo_kv("user", o.user);
    echo_kv("out", o.out);
    echo_kv("seed", o.seed);
    echo_kv("window", o.window);
    echo_kv("stride", o.stride);
    echo_kv("epochs", o.epochs);
    echo_kv("lr", lr);
    echo_kv("batch", o.batch);
    echo_kv("benchmark", o.benchmark ? "true" : "false");

    LoadedModel base = load_model(o.base);
    Session user_session = load_session_csv(o.user);
    WindowedDataset user_ds = segment_windows(user_session, o.window, o.stride);

    EvalReport before = baseline_on_target(base.net, base.norm, user_ds.windows, user_ds.labels);
    std::printf("baseline on %s: accuracy %s, f1 %.2f\n", user_session.subject_id.c_str(),
                format_pct(before.accuracy).c_str(), before.f1);

    AdaptationSpec spec;
    spec.finetune.epochs = o.epochs;
    spec.finetune.batch_size = o.batch;
    spec.finetune.learning_rate = lr;
    spec.finetune.seed = o.seed;

    const int runs = o.benchmark ? 3 : 1;
    std::vector<double> walls;
    PersonalModel pm;
    FinetuneResult fr;
    for (int r = 0; r < runs; ++r) {
        pm = adapt_head(base.net, base.norm, spec, user_session.subject_id, o.seed);
        fr = finetune(pm, user_ds, spec.finetune);
        walls.push_back(fr.report.wall_seconds);
        std::printf("fine-tune run %d: %.1f s\n", r + 1, fr.report.wall_seconds);
    }
    std::sort(walls.begin(), walls.end());
    if (o.benchmark) {
        std::printf("fine-tune median wall time over %d runs: %.1f s\n", runs,
                    walls[walls.size() / 2]);
    }

    std::printf("personalised held-out: accuracy %s, f1 %.2f\n",
                format_pct(fr.heldout.accuracy).c_str(), fr.heldout.f1);
    std::printf("improvement: %s", render_improvement(compare_reports(before, fr.heldout)).c_str());
    save_personal_model(pm, o.out);
    std::printf("saved %s\n", o.out.c_str());
    return 0;
}

int cmd_eval(const Opts& o) {
    echo_kv("model", o.model);
    echo_kv("data", o.data);
    echo_kv("window", o.window);
    echo_kv("stride", o.stride);
    LoadedModel m = load_model(o.model);
    WindowedDataset ds = window_session_file(o.data, o.window, o.stride);
    EvalReport r = evaluate(m.net, m.norm, ds.windows, ds.labels);
    std::printf("%s", render_report(r).c_str());
    if (!o.out.empty()) {
        std::ofstream out(o.out, std::ios::binary);
        if (!out) throw Error("cannot write " + o.out);
        out << report_csv(r);
        std::printf("wrote %s\n", o.out.c_str());
    }
    return 0;
}

int cmd_crosseval(const Opts& o) {
    echo_kv("window", o.window);
    echo_kv("stride", o.stride);
    if (o.models.empty() || o.datasets.empty()) {
        throw Error("crosseval needs at least one --model and one --data");
    }
    std::vector<PersonalModel> models;
    for (const auto& path : o.models) {
        echo_kv("model", path);
        LoadedModel lm = load_model(path);
        PersonalModel pm;
        pm.net = std::move(lm.net);
        pm.norm = lm.norm;
        models.push_back(std::move(pm));
    }
    std::vector<std::vector<Tensor>> windows;
    std::vector<std::vector<int>> labels;
    for (const auto& path : o.datasets) {
        echo_kv("data", path);
        WindowedDataset ds = window_session_file(path, o.window, o.stride);
        windows.push_back(std::move(ds.windows));
        labels.push_back(std::move(ds.labels));
    }
    CrossMatrix m = cross_user_matrix(models, windows, labels);
    std::printf("%s", render_matrix(m).c_str());
    if (!o.out.empty()) {
        std::ofstream out(o.out, std::ios::binary);
        if (!out) throw Error("cannot write " + o.out);
        out << matrix_csv(m);
        std::printf("wrote %s\n", o.out.c_str());
    }
    return 0;
}

int cmd_predict(const Opts& o) {
    echo_kv("model", o.model);
    echo_kv("data", o.data);
    echo_kv("window", o.window);
    echo_kv("stride", o.stride);
    LoadedModel m = load_model(o.model);
    Session s = load_session_csv(o.data);
    WindowedDataset ds = segment_windows(s, o.window, o.stride);

    std::ostringstream rows;
    rows << "window,start_ms,end_ms,label,prob_relaxed,prob_stressed\n";
    char buf[160];
    for (size_t w = 0; w < ds.size(); ++w) {
        const size_t start = w * o.stride;
        Prediction p = predict(m.net, normalize_window(ds.windows[w], m.norm));
        std::snprintf(buf, sizeof(buf), "%zu,%lld,%lld,%s,%.6f,%.6f\n", w,
                      static_cast<long long>(s.samples[start].timestamp_ms),
                      static_cast<long long>(s.samples[start + o.window - 1].timestamp_ms),
                      p.label == kLabelStressed ? "stressed" : "relaxed",
                      p.probabilities[0], p.probabilities[1]);
        rows << buf;
    }
    if (o.out.empty()) {
        std::printf("%s", rows.str().c_str());
    } else {
        std::ofstream out(o.out, std::ios::binary);
        if (!out) throw Error("cannot write " + o.out);
        out << rows.str();
        std::printf("wrote %zu predictions to %s\n", ds.size(), o.out.c_str());
    }
    return 0;
}

/// Puts the controlling terminal into unbuffered no-echo mode for the
/// object's lifetime.
class RawTerminal {
public:
    RawTerminal() {
        if (tcgetattr(STDIN_FILENO, &saved_) != 0) return;
        termios raw = saved_;
        raw.c_lflag &= ~static_cast<tcflag_t>(ICANON | ECHO);
        raw.c_cc[VMIN] = 0;
        raw.c_cc[VTIME] = 0;
        active_ = tcsetattr(STDIN_FILENO, TCSANOW, &raw) == 0;
    }
    ~RawTerminal() {
        if (active_) tcsetattr(STDIN_FILENO, TCSANOW, &saved_);
    }
    static int poll_key() {
        char c;
        return read(STDIN_FILENO, &c, 1) == 1 ? c : -1;
    }

private:
    termios saved_{};
    bool active_ = false;
};

// Scripted keypresses: lines of "<sample_index> <key>", sorted replay.
std::vector<std::pair<size_t, char>> load_script(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open script file: " + path);
    std::vector<std::pair<size_t, char>> events;
    size_t idx;
    std::string key;
    while (in >> idx >> key) {
        if (key.size() != 1 || std::string("sruq").find(key[0]) == std::string::npos) {
            throw Error(path + ": script keys must be one of s, r, u, q");
        }
        events.emplace_back(idx, key[0]);
    }
    std::sort(events.begin(), events.end());
    return events;
}

int cmd_live(const Opts& o) {
    echo_kv("model", o.model);
    echo_kv("source", o.source);
    echo_kv("out", o.out);
    echo_kv("speed", o.speed);
    echo_kv("window", o.window);
    echo_kv("stride", o.stride);
    if (!(o.speed > 0)) throw Error("live: speed must be positive");

    const bool scripted = !o.script.empty();
    if (!scripted && isatty(STDIN_FILENO) == 0) {
        throw Error(
            "live mode needs an interactive terminal (keys: s=stressed, r=relaxed, "
            "u=unlabeled, q=quit); for batch output over a recorded session use "
            "'stressnet predict'");
    }
    std::vector<std::pair<size_t, char>> script;
    if (scripted) script = load_script(o.script);

    LoadedModel m = load_model(o.model);
    Session src = load_session_csv(o.source);

    std::ofstream out(o.out, std::ios::binary);
    if (!out) throw Error("cannot write " + o.out);
    out << kSessionCsvHeader << '\n';

    std::printf("replaying %zu samples at %.0fx; press s/r/u to label, q to quit\n",
                src.samples.size(), o.speed);

    RawTerminal raw;  // no-op when stdin is not a tty (scripted runs)
    const auto start = std::chrono::steady_clock::now();
    const double dt_s = 1.0 / (kSampleRateHz * o.speed);

    Session labelled;
    labelled.subject_id = src.subject_id;
    int current_label = kLabelUnlabeled;
    size_t script_pos = 0;
    bool quit = false;
    std::vector<SensorSample> buffer;  // rolling window

    char row[128];
    for (size_t i = 0; i < src.samples.size() && !quit; ++i) {
        std::this_thread::sleep_until(
            start + std::chrono::duration<double>(static_cast<double>(i) * dt_s));

        int key = -1;
        if (scripted) {
            while (script_pos < script.size() && script[script_pos].first <= i) {
                key = script[script_pos++].second;
                if (key == 'q') break;
            }
        } else {
            key = RawTerminal::poll_key();
        }
        switch (key) {
            case 's': current_label = kLabelStressed; break;
            case 'r': current_label = kLabelRelaxed; break;
            case 'u': current_label = kLabelUnlabeled; break;
            case 'q': quit = true; continue;
            default: break;
        }

        SensorSample sm = src.samples[i];
        sm.label = current_label;
        labelled.samples.push_back(sm);
        buffer.push_back(sm);
        if (buffer.size() > o.window) buffer.erase(buffer.begin());

        std::snprintf(row, sizeof(row), "%lld,%.9g,%.9g,%.9g,%d\n",
                      static_cast<long long>(sm.timestamp_ms), sm.hr, sm.hrv, sm.eda,
                      sm.label);
        out << row;

        if (buffer.size() == o.window && (i + 1) % o.stride == 0) {
            Tensor t({kNumChannels, o.window});
            for (size_t j = 0; j < o.window; ++j) {
                t.at(0, j) = buffer[j].hr;
                t.at(1, j) = buffer[j].hrv;
                t.at(2, j) = buffer[j].eda;
            }
            Prediction p = predict(m.net, normalize_window(t, m.norm));
            const char* lbl = current_label == kLabelStressed   ? "stressed"
                              : current_label == kLabelRelaxed  ? "relaxed"
                                                                : "unlabeled";
            std::printf("t=%6.1fs  label=%-9s  model says %s (p=%.2f)\n",
                        static_cast<double>(sm.timestamp_ms) / 1000.0, lbl,
                        p.label == kLabelStressed ? "stressed" : "relaxed",
                        p.probabilities[p.label]);
            std::fflush(stdout);
        }
    }
    out.flush();
    if (!out) throw Error("write failed: " + o.out);
    std::printf("recorded %zu samples to %s\n", labelled.samples.size(), o.out.c_str());

    // batch-style personalisation on the freshly labelled data, offered
    // rather than automatic
    bool both_classes = false;
    {
        bool has0 = false, has1 = false;
        for (const auto& sm : labelled.samples) {
            has0 |= sm.label == kLabelRelaxed;
            has1 |= sm.label == kLabelStressed;
        }
        both_classes = has0 && has1;
    }
    if (both_classes && labelled.samples.size() >= o.window && !scripted) {
        std::printf("fine-tune the model on this labelled session now? [y/N] ");
        std::fflush(stdout);
        std::string answer;
        std::getline(std::cin, answer);
        if (!answer.empty() && (answer[0] == 'y' || answer[0] == 'Y')) {
            WindowedDataset ds = segment_windows(labelled, o.window, o.stride);
            AdaptationSpec spec;
            spec.finetune.seed = o.seed;
            PersonalModel pm =
                adapt_head(m.net, m.norm, spec, labelled.subject_id, o.seed);
            FinetuneResult fr = finetune(pm, ds, spec.finetune);
            std::printf("personalised held-out accuracy %s\n",
                        format_pct(fr.heldout.accuracy).c_str());
            const std::string path = o.out + ".model";
            save_personal_model(pm, path);
            std::printf("saved %s\n", path.c_str());
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stress-state classifier: synthetic data, training, personalisation"};
    app.require_subcommand(1);
    Opts o;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "key=value configuration file");
        sub->add_option("--seed", o.seed, "master random seed");
        return sub;
    };
    auto add_windowing = [&](CLI::App* sub) {
        sub->add_option("--window", o.window, "window length in samples");
        sub->add_option("--stride", o.stride, "window stride in samples");
    };
    auto add_training = [&](CLI::App* sub) {
        sub->add_option("--epochs", o.epochs, "training epochs");
        sub->add_option("--lr", o.lr, "learning rate");
        sub->add_option("--batch", o.batch, "mini-batch size");
    };

    CLI::App* synth = add_common(app.add_subcommand("synth", "generate session CSVs"));
    synth->add_option("--out", o.out, "output directory")->required();
    synth->add_option("--subjects", o.subjects, "base population size");

    CLI::App* train = add_common(app.add_subcommand("train", "train the base model"));
    train->add_option("--data", o.data, "directory of base_*.csv sessions")->required();
    train->add_option("--out", o.out, "model output path")->required();
    train->add_option("--folds", o.folds, "cross-validation folds (0 = skip CV)");
    add_windowing(train);
    add_training(train);

    CLI::App* ft = add_common(app.add_subcommand("finetune", "personalise for one user"));
    ft->add_option("--base", o.base, "base model path")->required();
    ft->add_option("--user", o.user, "user session CSV")->required();
    ft->add_option("--out", o.out, "personal model output path")->required();
    ft->add_flag("--benchmark", o.benchmark, "time 3 fine-tune runs, report median");
    add_windowing(ft);
    add_training(ft);

    CLI::App* ev = add_common(app.add_subcommand("eval", "evaluate a model on a session"));
    ev->add_option("--model", o.model, "model path")->required();
    ev->add_option("--data", o.data, "session CSV")->required();
    ev->add_option("--out", o.out, "also write the report as CSV");
    add_windowing(ev);

    CLI::App* ce = add_common(
        app.add_subcommand("crosseval", "models x datasets accuracy matrix"));
    ce->add_option("--model", o.models, "model path (repeatable)")->required();
    ce->add_option("--data", o.datasets, "session CSV (repeatable)")->required();
    ce->add_option("--out", o.out, "also write the matrix as CSV");
    add_windowing(ce);

    CLI::App* pr = add_common(app.add_subcommand("predict", "per-window predictions"));
    pr->add_option("--model", o.model, "model path")->required();
    pr->add_option("--data", o.data, "session CSV")->required();
    pr->add_option("--out", o.out, "write predictions CSV here instead of stdout");
    add_windowing(pr);

    CLI::App* lv = add_common(app.add_subcommand("live", "interactive labelling replay"));
    lv->add_option("--model", o.model, "model path")->required();
    lv->add_option("--source", o.source, "session CSV to replay")->required();
    lv->add_option("--out", o.out, "labelled output CSV")->required();
    lv->add_option("--speed", o.speed, "replay speed multiplier");
    lv->add_option("--script", o.script, "scripted keypress file (testing)");
    add_windowing(lv);

    CLI11_PARSE(app, argc, argv);

    try {
        CLI::App* sub = app.get_subcommands().front();
        apply_config_file(o, o, sub);
        if (sub == synth) return cmd_synth(o);
        if (sub == train) return cmd_train(o);
        if (sub == ft) return cmd_finetune(o);
        if (sub == ev) return cmd_eval(o);
        if (sub == ce) return cmd_crosseval(o);
        if (sub == pr) return cmd_predict(o);
        if (sub == lv) return cmd_live(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
