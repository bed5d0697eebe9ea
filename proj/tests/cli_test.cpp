#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "stressnet/model.hpp"
#include "stressnet/serialize.hpp"

using namespace stressnet;

namespace {

std::string g_cli;
std::string g_dir;  // shared corpus dir, seeded once

struct RunResult {
    int code = -1;
    std::string out;  // stdout + stderr
};

RunResult run(const std::string& args) {
    RunResult r;
    FILE* p = popen((g_cli + " " + args + " 2>&1").c_str(), "r");
    if (!p) return r;
    char buf[4096];
    size_t n;
    while ((n = fread(buf, 1, sizeof(buf), p)) > 0) r.out.append(buf, n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string path(const std::string& name) { return g_dir + "/" + name; }

std::vector<uint8_t> read_bytes(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

size_t count_lines(const std::string& p) {
    std::ifstream in(p);
    size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

// Small, fast settings shared by every test.
const char* kWin = " --window 100 --stride 400 ";

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        ASSERT_EQ(run("synth --out " + g_dir + " --subjects 2 --seed 7").code, 0);
        RunResult t = run("train --data " + g_dir + " --out " + path("model.bin") +
                          kWin + "--epochs 2 --folds 3 --seed 7");
        ASSERT_EQ(t.code, 0) << t.out;
    }
};

}  // namespace

TEST_F(Cli, SynthWritesDeterministicCorpus) {
    const std::string again = g_dir + "_again";
    RunResult r = run("synth --out " + again + " --subjects 2 --seed 7");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("2 base + 3 target"), std::string::npos);
    EXPECT_NE(r.out.find("relaxed"), std::string::npos);
    for (const char* f : {"base_1.csv", "base_2.csv", "target_1.csv", "target_3.csv"}) {
        EXPECT_EQ(read_bytes(path(f)), read_bytes(again + "/" + f)) << f;
    }
    std::filesystem::remove_all(again);
}

TEST_F(Cli, TrainProducesValidContainerAndCvLine) {
    RunResult r = run("train --data " + g_dir + " --out " + path("model2.bin") + kWin +
                      "--epochs 1 --folds 2 --seed 7");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("cross-validation mean accuracy"), std::string::npos);
    EXPECT_NE(r.out.find("%"), std::string::npos);
    auto bytes = read_bytes(path("model2.bin"));
    ASSERT_GE(bytes.size(), 8u);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "STRSCNN1");
    EXPECT_NO_THROW(load_model(path("model2.bin")));
}

TEST_F(Cli, MissingDataPathFailsOnStderr) {
    RunResult r = run("train --data /nonexistent_dir --out " + path("x.bin") + kWin);
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.out.find("error:"), std::string::npos);
    EXPECT_FALSE(std::filesystem::exists(path("x.bin")));
}

TEST_F(Cli, PredictMatchesLibraryCalls) {
    RunResult r = run("predict --model " + path("model.bin") + " --data " +
                      path("target_1.csv") + kWin + "--out " + path("pred.csv"));
    ASSERT_EQ(r.code, 0) << r.out;

    LoadedModel m = load_model(path("model.bin"));
    WindowedDataset ds = segment_windows(load_session_csv(path("target_1.csv")), 100, 400);
    EXPECT_EQ(count_lines(path("pred.csv")), ds.size() + 1);

    std::ifstream in(path("pred.csv"));
    std::string line;
    std::getline(in, line);  // header
    for (size_t w = 0; w < ds.size(); ++w) {
        ASSERT_TRUE(std::getline(in, line));
        Prediction p = predict(m.net, normalize_window(ds.windows[w], m.norm));
        const char* want = p.label == kLabelStressed ? "stressed" : "relaxed";
        EXPECT_NE(line.find(want), std::string::npos) << "window " << w << ": " << line;
    }
}

TEST_F(Cli, PredictRejectsShortSession) {
    RunResult r = run("predict --model " + path("model.bin") + " --data " +
                      path("target_1.csv") + " --window 999999 --stride 400");
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.out.find("error:"), std::string::npos);
}

TEST_F(Cli, EvalSingleModelAndReportCsv) {
    RunResult r = run("eval --model " + path("model.bin") + " --data " +
                      path("target_1.csv") + kWin + "--out " + path("report.csv"));
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("accuracy"), std::string::npos);
    EXPECT_NE(r.out.find("confusion"), std::string::npos);
    std::ifstream in(path("report.csv"));
    std::string header;
    std::getline(in, header);
    EXPECT_NE(header.find("accuracy,f1,"), std::string::npos);
}

TEST_F(Cli, CrossEvalMatrixRoundTrips) {
    RunResult r = run("crosseval --model " + path("model.bin") + " --model " +
                      path("model2.bin") + " --data " + path("target_1.csv") + " --data " +
                      path("target_2.csv") + kWin + "--out " + path("matrix.csv"));
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("MODEL 2"), std::string::npos);
    EXPECT_NE(r.out.find("USER 2 DATA"), std::string::npos);

    std::ifstream in(path("matrix.csv"));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "user_data,model_1,model_2");
    size_t rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        double a = 0.0, b = 0.0;
        size_t row_no = 0;
        ASSERT_EQ(std::sscanf(line.c_str(), "%zu,%lf,%lf", &row_no, &a, &b), 3) << line;
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
        EXPECT_GE(b, 0.0);
        EXPECT_LE(b, 1.0);
    }
    EXPECT_EQ(rows, 2u);
}

TEST_F(Cli, FinetunePrintsComparisonAndBenchmarkMedian) {
    RunResult r = run("finetune --base " + path("model.bin") + " --user " +
                      path("target_1.csv") + kWin +
                      "--epochs 3 --seed 7 --benchmark --out " + path("p1.bin"));
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("baseline on target_1"), std::string::npos);
    EXPECT_NE(r.out.find("personalised held-out"), std::string::npos);
    EXPECT_NE(r.out.find("improvement:"), std::string::npos);
    EXPECT_NE(r.out.find("median wall time over 3 runs"), std::string::npos);
    LoadedModel m = load_model(path("p1.bin"));
    EXPECT_TRUE(m.has_provenance);
    EXPECT_EQ(m.provenance.user_id, "target_1");
}

TEST_F(Cli, FinetuneSingleClassDataIsActionable) {
    // a session with only relaxed labels
    Session s = load_session_csv(path("target_1.csv"));
    for (auto& sm : s.samples) sm.label = kLabelRelaxed;
    save_session_csv(s, path("single_class.csv"));
    RunResult r = run("finetune --base " + path("model.bin") + " --user " +
                      path("single_class.csv") + kWin + "--epochs 1 --out " + path("p2.bin"));
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.out.find("label more data"), std::string::npos) << r.out;
}

TEST_F(Cli, ConfigFileAppliesAndFlagsOverride) {
    std::ofstream cfg(path("cfg.txt"));
    cfg << "# test config\nstride = 200\nwindow = 100\n";
    cfg.close();
    RunResult r = run("eval --model " + path("model.bin") + " --data " +
                      path("target_1.csv") + " --config " + path("cfg.txt"));
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("stride = 200"), std::string::npos);

    r = run("eval --model " + path("model.bin") + " --data " + path("target_1.csv") +
            " --config " + path("cfg.txt") + " --stride 400");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("stride = 400"), std::string::npos);
}

TEST_F(Cli, ConfigFileRejectsUnknownKeys) {
    std::ofstream cfg(path("bad_cfg.txt"));
    cfg << "strde = 200\n";
    cfg.close();
    RunResult r = run("eval --model " + path("model.bin") + " --data " +
                      path("target_1.csv") + kWin + "--config " + path("bad_cfg.txt"));
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.out.find("unknown key 'strde'"), std::string::npos) << r.out;
}

TEST_F(Cli, LiveRefusesWithoutTerminalOrScript) {
    RunResult r = run("live --model " + path("model.bin") + " --source " +
                      path("target_1.csv") + " --out " + path("live.csv") + kWin +
                      "< /dev/null");
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.out.find("predict"), std::string::npos) << r.out;
}

TEST_F(Cli, LiveScriptedSessionRecordsKeypressTimeline) {
    std::ofstream script(path("script.txt"));
    script << "0 r\n3000 s\n9000 r\n11000 q\n";
    script.close();
    RunResult r = run("live --model " + path("model.bin") + " --source " +
                      path("target_1.csv") + " --out " + path("live.csv") + kWin +
                      "--speed 600 --script " + path("script.txt"));
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("model says"), std::string::npos);

    Session rec = load_session_csv(path("live.csv"));
    ASSERT_EQ(rec.samples.size(), 11000u);  // quit at sample 11000
    for (size_t i = 0; i < rec.samples.size(); ++i) {
        const int want = i < 3000 ? kLabelRelaxed : i < 9000 ? kLabelStressed : kLabelRelaxed;
        ASSERT_EQ(rec.samples[i].label, want) << "sample " << i;
    }
    // the recording windowizes cleanly
    WindowedDataset ds = segment_windows(rec, 100, 400);
    EXPECT_EQ(ds.size(), (11000u - 100) / 400 + 1);
}

TEST_F(Cli, LiveWithNoKeypressesEmitsUnlabeled) {
    std::ofstream script(path("script_q.txt"));
    script << "2000 q\n";
    script.close();
    RunResult r = run("live --model " + path("model.bin") + " --source " +
                      path("target_1.csv") + " --out " + path("live_u.csv") + kWin +
                      "--speed 600 --script " + path("script_q.txt"));
    ASSERT_EQ(r.code, 0) << r.out;
    Session rec = load_session_csv(path("live_u.csv"));
    ASSERT_EQ(rec.samples.size(), 2000u);
    for (const auto& sm : rec.samples) ASSERT_EQ(sm.label, kLabelUnlabeled);
}

int main(int argc, char** argv) {
    ::testing::InitGoogleTest(&argc, argv);
    if (argc < 2) {
        std::fprintf(stderr, "usage: cli_test <path-to-stressnet-binary>\n");
        return 2;
    }
    g_cli = argv[1];
    g_dir = (std::filesystem::temp_directory_path() / "stressnet_cli_test").string();
    std::filesystem::remove_all(g_dir);
    std::filesystem::create_directories(g_dir);
    const int rc = RUN_ALL_TESTS();
    std::filesystem::remove_all(g_dir);
    return rc;
}
