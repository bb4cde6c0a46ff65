#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "porte/audio.hpp"

namespace porte {

enum class Gender { male, female };

std::string to_string(Gender g);
Gender gender_from_string(const std::string& s);  // accepts m/f/male/female, any case

enum class TargetRole { first, later };

std::string to_string(TargetRole r);
TargetRole target_role_from_string(const std::string& s);

// One corpus utterance, duration measured after silence trimming.
struct UtteranceRecord {
    std::string path;
    std::string speaker_id;
    Gender gender = Gender::male;
    double duration_s = 0.0;
};

constexpr std::array<double, 6> kOverlapBins = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};

constexpr double kMinSourceSeconds = 5.0;
constexpr double kMaxSourceSeconds = 10.0;
constexpr double kLufsLow = -33.0;
constexpr double kLufsHigh = -25.0;
constexpr double kSnrStdDb = 4.0;
constexpr double kSnrClampDb = 12.0;  // +-3 sigma
constexpr double kPauseLow = 0.5;
constexpr double kPauseHigh = 1.2;
constexpr double kTrimThresholdDb = -40.0;
constexpr double kClipPeak = 0.999;

// All sampled parameters for one mixture; fully determined by `seed`.
struct MixturePlan {
    UtteranceRecord first_utt;   // starts at t = 0
    UtteranceRecord second_utt;  // starts at the computed delay
    TargetRole target_role = TargetRole::first;
    double overlap_ratio = 0.0;  // one of kOverlapBins
    double snr_db = 0.0;         // target over interferer, clamped to +-12 dB
    double snr_db_raw = 0.0;     // pre-clamp draw, kept for distribution checks
    double lufs_first = -29.0;
    double lufs_second = -29.0;
    double pause_s = 0.5;  // applied only when overlap_ratio == 0
    uint64_t seed = 0;
};

struct Placement {
    double delay_s = 0.0;    // second source start relative to the first
    double overlap_s = 0.0;  // simultaneous-activity duration
    double mixture_len_s = 0.0;
};

// Overlap-controlled placement. For r > 0: overlap = r * min(L1, L2) and
// delay = L1 - overlap; for r = 0 the pause separates the sources. The delay
// is quantized to whole samples at the given rate.
Placement compute_placement(double len_first_s, double len_second_s, double overlap_ratio,
                            double pause_s, int rate_hz = kCanonicalRateHz);

struct RenderedMixture {
    AudioSignal mixture;
    AudioSignal target_aligned;      // zero-padded to mixture length
    AudioSignal interferer_aligned;  // zero-padded to mixture length
    double delay_s = 0.0;
    double overlap_s = 0.0;
    double measured_overlap_ratio = 0.0;
    double clip_gain_db = 0.0;  // shared attenuation when the sum would clip
    double snr_gain_db = 0.0;   // gain applied to the interferer to hit snr_db
    double t_start_first = 0.0;
    double t_end_first = 0.0;
    double t_start_second = 0.0;
    double t_end_second = 0.0;
    double lufs_gain_first_db = 0.0;
    double lufs_gain_second_db = 0.0;
};

// Draws a plan: two utterances of distinct speakers (uniform), target role,
// overlap bin (uniform over the six bins unless forced_bin >= 0 picks one),
// SNR ~ N(0, 4 dB) clamped to +-12, per-source LUFS ~ U[-33, -25], pause
// ~ U[0.5, 1.2]. Throws CorpusError with fewer than two distinct speakers.
MixturePlan sample_plan(const std::vector<UtteranceRecord>& corpus, uint64_t seed,
                        int forced_bin = -1);

// Full render pipeline: read, trim, truncate to 10 s, resample to 16 kHz,
// loudness-normalize, scale the interferer to the planned SNR, place, and
// sum. Stems are quantized to float32 granularity before summation so that
// mixture == target_aligned + interferer_aligned holds exactly both in
// memory and in the written files.
RenderedMixture render_mixture(const MixturePlan& plan);

}  // namespace porte
