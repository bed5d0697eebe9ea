#pragma once

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "stressnet/data.hpp"

namespace stressnet {

enum class Phase { Relaxed = 0, Stressed = 1 };

struct SchedulePhase {
    Phase phase;
    double duration_s;
};
using Schedule = std::vector<SchedulePhase>;

/// Montreal-protocol session: rest, training (labelled relaxed), rest,
/// 10-minute stressor, final rest. Total 1320 s.
inline Schedule montreal_schedule() {
    return {
        {Phase::Relaxed, 180.0}, {Phase::Relaxed, 180.0}, {Phase::Relaxed, 180.0},
        {Phase::Stressed, 600.0}, {Phase::Relaxed, 180.0},
    };
}

inline double schedule_duration_s(const Schedule& s) {
    double total = 0.0;
    for (const auto& p : s) total += p.duration_s;
    return total;
}

/// Population constants, channel order hr (bpm), hrv (ms), eda (raw).
/// Relaxed means and the stress shifts are set so pooled stressed stats
/// land on HR 81.2 / EDA 317.2 with relaxed HR 76.8 / EDA 351.9.
struct PopulationModel {
    std::array<double, kNumChannels> base_mean{76.8, 65.0, 351.9};
    std::array<double, kNumChannels> stress_shift{4.4, -15.0, -34.7};
    std::array<double, kNumChannels> noise_sd{6.0, 6.0, 60.0};
    std::array<double, kNumChannels> stress_noise_factor{1.4, 1.3, 1.05};
    std::array<double, kNumChannels> drift_sd{4.0, 4.0, 30.0};
    std::array<double, kNumChannels> subject_offset_sd{8.0, 6.0, 130.0};
};

inline const PopulationModel& default_population_model() {
    static const PopulationModel m;
    return m;
}

/// One simulated subject: per-channel baseline offset from the population
/// mean, per-channel stress-response scaling, noise scaling, and a
/// mean-reverting drift time constant.
struct SubjectProfile {
    std::string id;
    std::array<double, kNumChannels> baseline_offset{0.0, 0.0, 0.0};
    std::array<double, kNumChannels> response_scale{1.0, 1.0, 1.0};
    std::array<double, kNumChannels> noise_scale{1.0, 1.0, 1.0};
    double drift_tau_s = 30.0;
    uint32_t seed = 0;
};

/// Deterministic population of n subjects. Baseline offsets are centred
/// draws (pooled mean exactly zero per channel) so population statistics
/// stay calibrated regardless of n; response scales vary per subject,
/// mean 1.
inline std::vector<SubjectProfile> default_population(size_t n, uint32_t master_seed) {
    if (n == 0) throw Error("default_population: need at least one subject");
    const PopulationModel& pm = default_population_model();
    std::mt19937 rng(master_seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // centred standard-normal draws per channel
    std::array<std::vector<double>, kNumChannels> z;
    for (size_t c = 0; c < kNumChannels; ++c) {
        z[c].resize(n);
        double mean = 0.0;
        for (size_t i = 0; i < n; ++i) {
            z[c][i] = gauss(rng);
            mean += z[c][i];
        }
        mean /= static_cast<double>(n);
        for (double& v : z[c]) v -= mean;
    }
    std::vector<double> rs(n);
    double rs_mean = 0.0;
    for (size_t i = 0; i < n; ++i) {
        rs[i] = gauss(rng);
        rs_mean += rs[i];
    }
    rs_mean /= static_cast<double>(n);

    std::vector<SubjectProfile> out(n);
    for (size_t i = 0; i < n; ++i) {
        SubjectProfile& p = out[i];
        p.id = "base_" + std::to_string(i + 1);
        for (size_t c = 0; c < kNumChannels; ++c) {
            p.baseline_offset[c] = pm.subject_offset_sd[c] * z[c][i];
            double scale = 1.0 + 0.25 * (rs[i] - rs_mean);
            p.response_scale[c] = std::max(0.3, scale);
        }
        p.seed = master_seed * 1000u + static_cast<uint32_t>(i) + 1u;
    }
    return out;
}

/// Target ("real-world") subjects drawn from a shifted population: large
/// idiosyncratic baseline offsets, 1.5x noise, and per-channel stress
/// responses that differ strongly between users, so the base model
/// degrades and the three users are mutually distinguishable.
inline std::vector<SubjectProfile> shifted_target_population(uint32_t master_seed) {
    const PopulationModel& pm = default_population_model();
    // direction patterns in units of population offset SD / response scale
    const std::array<std::array<double, 3>, 3> offsets = {{
        {+1.8, -1.4, +1.6},
        {-2.0, +1.5, -1.8},
        {+1.2, +1.8, -2.2},
    }};
    const std::array<std::array<double, 3>, 3> responses = {{
        {-0.6, +0.3, +1.6},
        {+1.7, -0.5, +0.3},
        {+0.3, +1.7, -0.6},
    }};
    std::vector<SubjectProfile> out(3);
    for (size_t i = 0; i < 3; ++i) {
        SubjectProfile& p = out[i];
        p.id = "target_" + std::to_string(i + 1);
        for (size_t c = 0; c < kNumChannels; ++c) {
            p.baseline_offset[c] = pm.subject_offset_sd[c] * offsets[i][c];
            p.response_scale[c] = responses[i][c];
            p.noise_scale[c] = 1.5;
        }
        p.seed = master_seed * 1000u + 900u + static_cast<uint32_t>(i) + 1u;
    }
    return out;
}

/// 30 Hz synthetic session: per channel, value = population base +
/// subject offset + phase shift + mean-reverting drift + Gaussian noise,
/// clamped to the channel's physical range. Deterministic per
/// (profile, schedule, profile.seed).
inline Session synth_generate(const SubjectProfile& profile, const Schedule& schedule,
                              const PopulationModel& pm = default_population_model()) {
    if (schedule.empty()) throw Error("synth_generate: empty schedule");
    for (const auto& ph : schedule) {
        if (!(ph.duration_s > 0.0)) throw Error("synth_generate: phase duration must be > 0");
    }
    Session session;
    session.subject_id = profile.id;
    session.sample_rate_hz = kSampleRateHz;

    std::mt19937 rng(profile.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double dt = 1.0 / kSampleRateHz;
    const double tau = profile.drift_tau_s;
    std::array<double, kNumChannels> drift{0.0, 0.0, 0.0};
    // drift noise scaled for a stationary SD of pm.drift_sd
    std::array<double, kNumChannels> drift_step{};
    for (size_t c = 0; c < kNumChannels; ++c) {
        drift_step[c] = pm.drift_sd[c] * std::sqrt(2.0 * dt / tau);
    }

    size_t sample_idx = 0;
    for (const auto& ph : schedule) {
        const bool stressed = ph.phase == Phase::Stressed;
        const auto count = static_cast<size_t>(std::llround(ph.duration_s * kSampleRateHz));
        for (size_t i = 0; i < count; ++i, ++sample_idx) {
            SensorSample s;
            s.timestamp_ms = static_cast<int64_t>(sample_idx * 1000 / 30);
            s.label = stressed ? kLabelStressed : kLabelRelaxed;
            std::array<double, kNumChannels> v{};
            for (size_t c = 0; c < kNumChannels; ++c) {
                drift[c] += -drift[c] / tau * dt + drift_step[c] * gauss(rng);
                double noise_sd = pm.noise_sd[c] * profile.noise_scale[c] *
                                  (stressed ? pm.stress_noise_factor[c] : 1.0);
                v[c] = pm.base_mean[c] + profile.baseline_offset[c] +
                       (stressed ? pm.stress_shift[c] * profile.response_scale[c] : 0.0) +
                       drift[c] + noise_sd * gauss(rng);
            }
            s.hr = static_cast<float>(std::max(1.0, v[0]));
            s.hrv = static_cast<float>(std::max(0.0, v[1]));
            s.eda = static_cast<float>(std::max(0.0, v[2]));
            session.samples.push_back(s);
        }
    }
    return session;
}

}  // namespace stressnet
