#include <gtest/gtest.h>

#include "stressnet/synth.hpp"

using namespace stressnet;

namespace {

// Pooled per-phase channel mean over a set of subjects.
double pooled_mean(const std::vector<Session>& sessions, int label, int channel) {
    double sum = 0.0;
    size_t n = 0;
    for (const Session& s : sessions) {
        for (const SensorSample& sm : s.samples) {
            if (sm.label != label) continue;
            const float v = channel == 0 ? sm.hr : channel == 1 ? sm.hrv : sm.eda;
            sum += v;
            ++n;
        }
    }
    return sum / static_cast<double>(n);
}

}  // namespace

TEST(Schedule, MontrealLayoutAndDuration) {
    Schedule s = montreal_schedule();
    ASSERT_EQ(s.size(), 5u);
    EXPECT_DOUBLE_EQ(schedule_duration_s(s), 1320.0);
    EXPECT_EQ(s[3].phase, Phase::Stressed);
    EXPECT_DOUBLE_EQ(s[3].duration_s, 600.0);
    for (size_t i : {0u, 1u, 2u, 4u}) {
        EXPECT_EQ(s[i].phase, Phase::Relaxed);
        EXPECT_DOUBLE_EQ(s[i].duration_s, 180.0);
    }
}

TEST(SynthGenerate, SampleCountTimestampsAndLabels) {
    SubjectProfile p;
    p.id = "s1";
    p.seed = 5;
    Session s = synth_generate(p, montreal_schedule());
    ASSERT_EQ(s.samples.size(), 39600u);  // 1320 s at 30 Hz
    EXPECT_DOUBLE_EQ(s.sample_rate_hz, 30.0);
    EXPECT_EQ(s.subject_id, "s1");
    for (size_t i = 0; i < s.samples.size(); ++i) {
        EXPECT_EQ(s.samples[i].timestamp_ms, static_cast<int64_t>(i * 1000 / 30));
        const bool stressed = i >= 16200 && i < 34200;  // 540 s..1140 s
        EXPECT_EQ(s.samples[i].label, stressed ? kLabelStressed : kLabelRelaxed);
    }
}

TEST(SynthGenerate, DeterministicPerSeed) {
    SubjectProfile p;
    p.seed = 77;
    Session a = synth_generate(p, montreal_schedule());
    Session b = synth_generate(p, montreal_schedule());
    ASSERT_EQ(a.samples.size(), b.samples.size());
    for (size_t i = 0; i < a.samples.size(); ++i) {
        EXPECT_EQ(a.samples[i].hr, b.samples[i].hr);
        EXPECT_EQ(a.samples[i].hrv, b.samples[i].hrv);
        EXPECT_EQ(a.samples[i].eda, b.samples[i].eda);
    }
    p.seed = 78;
    Session c = synth_generate(p, montreal_schedule());
    EXPECT_NE(a.samples[0].hr, c.samples[0].hr);
}

TEST(SynthGenerate, RejectsBadSchedules) {
    SubjectProfile p;
    EXPECT_THROW(synth_generate(p, {}), Error);
    EXPECT_THROW(synth_generate(p, {{Phase::Relaxed, 0.0}}), Error);
    EXPECT_THROW(synth_generate(p, {{Phase::Relaxed, -3.0}}), Error);
}

TEST(SynthGenerate, ClampsToPhysicalRanges) {
    SubjectProfile p;
    p.seed = 3;
    p.baseline_offset = {-500.0, -500.0, -5000.0};
    Session s = synth_generate(p, {{Phase::Relaxed, 10.0}});
    for (const SensorSample& sm : s.samples) {
        EXPECT_GE(sm.hr, 1.0f);
        EXPECT_GE(sm.hrv, 0.0f);
        EXPECT_GE(sm.eda, 0.0f);
    }
}

TEST(Population, DefaultPopulationIsCentredAndDeterministic) {
    auto pop = default_population(20, 42);
    ASSERT_EQ(pop.size(), 20u);
    for (size_t c = 0; c < kNumChannels; ++c) {
        double sum = 0.0;
        for (const auto& p : pop) sum += p.baseline_offset[c];
        EXPECT_NEAR(sum, 0.0, 1e-9);
    }
    auto again = default_population(20, 42);
    for (size_t i = 0; i < pop.size(); ++i) {
        EXPECT_EQ(pop[i].seed, again[i].seed);
        EXPECT_EQ(pop[i].baseline_offset, again[i].baseline_offset);
        EXPECT_GE(pop[i].response_scale[0], 0.3);
    }
    EXPECT_NE(pop[0].id, pop[1].id);
    EXPECT_THROW(default_population(0, 1), Error);
}

TEST(Population, ShiftedTargetsAreDistinctAndNoisier) {
    auto targets = shifted_target_population(42);
    ASSERT_EQ(targets.size(), 3u);
    for (const auto& t : targets) {
        for (size_t c = 0; c < kNumChannels; ++c) EXPECT_DOUBLE_EQ(t.noise_scale[c], 1.5);
    }
    EXPECT_NE(targets[0].baseline_offset, targets[1].baseline_offset);
    EXPECT_NE(targets[1].baseline_offset, targets[2].baseline_offset);
    EXPECT_NE(targets[0].response_scale, targets[1].response_scale);
}

TEST(Calibration, PooledMontrealStatisticsMatchTargets) {
    auto pop = default_population(20, 42);
    std::vector<Session> sessions;
    for (const auto& p : pop) sessions.push_back(synth_generate(p, montreal_schedule()));

    const double hr_stressed = pooled_mean(sessions, kLabelStressed, 0);
    const double hr_relaxed = pooled_mean(sessions, kLabelRelaxed, 0);
    EXPECT_NEAR(hr_stressed, 81.2, 1.0);
    EXPECT_NEAR(hr_relaxed, 76.8, 1.0);

    const double eda_stressed = pooled_mean(sessions, kLabelStressed, 2);
    const double eda_relaxed = pooled_mean(sessions, kLabelRelaxed, 2);
    EXPECT_LT(eda_stressed, eda_relaxed);
    EXPECT_NEAR(eda_relaxed, 351.9, 10.0);
    EXPECT_NEAR(eda_stressed, 317.2, 10.0);

    const double hrv_stressed = pooled_mean(sessions, kLabelStressed, 1);
    const double hrv_relaxed = pooled_mean(sessions, kLabelRelaxed, 1);
    EXPECT_LT(hrv_stressed, hrv_relaxed);
}
