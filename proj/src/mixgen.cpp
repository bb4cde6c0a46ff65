#include "porte/mixgen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "porte/errors.hpp"
#include "porte/loudness.hpp"
#include "porte/rng.hpp"

namespace porte {

std::string to_string(Gender g) { return g == Gender::male ? "male" : "female"; }

Gender gender_from_string(const std::string& s) {
    std::string lower;
    for (char c : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lower == "m" || lower == "male") return Gender::male;
    if (lower == "f" || lower == "female") return Gender::female;
    throw ArgumentError("unrecognized gender '" + s + "'");
}

std::string to_string(TargetRole r) { return r == TargetRole::first ? "first" : "later"; }

TargetRole target_role_from_string(const std::string& s) {
    if (s == "first") return TargetRole::first;
    if (s == "later") return TargetRole::later;
    throw ArgumentError("unrecognized target role '" + s + "'");
}

Placement compute_placement(double len_first_s, double len_second_s, double overlap_ratio,
                            double pause_s, int rate_hz) {
    const double tol = 1.5 / rate_hz;  // lengths come from sample counts
    if (len_first_s < kMinSourceSeconds - tol || len_first_s > kMaxSourceSeconds + tol ||
        len_second_s < kMinSourceSeconds - tol || len_second_s > kMaxSourceSeconds + tol) {
        throw ArgumentError("compute_placement: source lengths must lie in [5, 10] s");
    }
    if (overlap_ratio < 0.0 || overlap_ratio > 1.0) {
        throw ArgumentError("compute_placement: overlap ratio must lie in [0, 1]");
    }
    if (overlap_ratio == 0.0 && (pause_s < kPauseLow || pause_s > kPauseHigh)) {
        throw ArgumentError("compute_placement: pause must lie in [0.5, 1.2] s");
    }

    double delay_s;
    double overlap_s;
    if (overlap_ratio > 0.0) {
        overlap_s = overlap_ratio * std::min(len_first_s, len_second_s);
        delay_s = len_first_s - overlap_s;
    } else {
        overlap_s = 0.0;
        delay_s = len_first_s + pause_s;
    }

    // Quantize the delay to whole samples; the realized overlap follows.
    const long delay_samples = std::lround(delay_s * rate_hz);
    delay_s = static_cast<double>(delay_samples) / rate_hz;
    overlap_s = std::max(0.0, std::min(len_first_s, delay_s + len_second_s) - delay_s);

    Placement p;
    p.delay_s = delay_s;
    p.overlap_s = overlap_s;
    p.mixture_len_s = std::max(len_first_s, delay_s + len_second_s);
    return p;
}

MixturePlan sample_plan(const std::vector<UtteranceRecord>& corpus, uint64_t seed,
                        int forced_bin) {
    std::set<std::string> speakers;
    for (const auto& u : corpus) speakers.insert(u.speaker_id);
    if (speakers.size() < 2) {
        throw CorpusError("sample_plan: corpus must contain at least two distinct speakers");
    }
    if (forced_bin >= static_cast<int>(kOverlapBins.size())) {
        throw ArgumentError("sample_plan: forced bin index out of range");
    }

    Rng rng(seed);
    MixturePlan plan;
    plan.seed = seed;

    plan.first_utt = corpus[rng.uniform_index(corpus.size())];
    std::vector<size_t> others;
    for (size_t i = 0; i < corpus.size(); ++i) {
        if (corpus[i].speaker_id != plan.first_utt.speaker_id) others.push_back(i);
    }
    plan.second_utt = corpus[others[rng.uniform_index(others.size())]];

    plan.target_role = rng.coin() ? TargetRole::later : TargetRole::first;

    const size_t bin = forced_bin >= 0 ? static_cast<size_t>(forced_bin)
                                       : rng.uniform_index(kOverlapBins.size());
    plan.overlap_ratio = kOverlapBins[bin];

    plan.snr_db_raw = rng.normal(0.0, kSnrStdDb);
    plan.snr_db = std::clamp(plan.snr_db_raw, -kSnrClampDb, kSnrClampDb);
    plan.lufs_first = rng.uniform(kLufsLow, kLufsHigh);
    plan.lufs_second = rng.uniform(kLufsLow, kLufsHigh);
    plan.pause_s = rng.uniform(kPauseLow, kPauseHigh);
    return plan;
}

namespace {

AudioSignal prepare_source(const std::string& path) {
    AudioSignal raw = read_wav(path);
    TrimResult trimmed = trim_leading_silence(raw, kTrimThresholdDb);
    AudioSignal cut = truncate(trimmed.signal, kMaxSourceSeconds);
    AudioSignal at_rate = resample(cut, kCanonicalRateHz);
    if (at_rate.duration_s() < kMinSourceSeconds - 1e-3) {
        throw SignalError("source '" + path + "' is shorter than 5 s after trimming");
    }
    return at_rate;
}

double energy(const std::vector<double>& x) {
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return acc;
}

// Round through float32 so stems written to disk are bit-identical to the
// in-memory values; the double sum of two f32 values is exact, so the
// stem-additivity invariant survives file round trips.
void quantize_f32(std::vector<double>& x) {
    for (double& v : x) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace

RenderedMixture render_mixture(const MixturePlan& plan) {
    AudioSignal first = prepare_source(plan.first_utt.path);
    AudioSignal second = prepare_source(plan.second_utt.path);

    NormalizeResult first_norm = normalize_loudness(first, plan.lufs_first);
    NormalizeResult second_norm = normalize_loudness(second, plan.lufs_second);

    const bool target_is_first = plan.target_role == TargetRole::first;
    std::vector<double>& target_src =
        target_is_first ? first_norm.signal.samples : second_norm.signal.samples;
    std::vector<double>& interferer_src =
        target_is_first ? second_norm.signal.samples : first_norm.signal.samples;

    // Scale the interferer so the full-extent energy ratio matches the plan.
    const double e_target = energy(target_src);
    const double e_interferer = energy(interferer_src);
    if (e_target <= 0.0 || e_interferer <= 0.0) {
        throw SignalError("render_mixture: a source has zero energy");
    }
    const double current_ratio_db = 10.0 * std::log10(e_target / e_interferer);
    const double snr_gain_db = current_ratio_db - plan.snr_db;
    const double snr_gain = std::pow(10.0, snr_gain_db / 20.0);
    for (double& v : interferer_src) v *= snr_gain;

    const double len_first = first_norm.signal.duration_s();
    const double len_second = second_norm.signal.duration_s();
    const Placement placement = compute_placement(len_first, len_second, plan.overlap_ratio,
                                                  plan.pause_s, kCanonicalRateHz);

    const size_t n_first = first_norm.signal.size();
    const size_t n_second = second_norm.signal.size();
    const size_t delay_n = static_cast<size_t>(std::llround(placement.delay_s * kCanonicalRateHz));
    const size_t total_n = std::max(n_first, delay_n + n_second);

    std::vector<double> first_padded(total_n, 0.0);
    std::vector<double> second_padded(total_n, 0.0);
    std::copy(first_norm.signal.samples.begin(), first_norm.signal.samples.end(),
              first_padded.begin());
    std::copy(second_norm.signal.samples.begin(), second_norm.signal.samples.end(),
              second_padded.begin() + static_cast<long>(delay_n));

    std::vector<double>& target_padded = target_is_first ? first_padded : second_padded;
    std::vector<double>& interferer_padded = target_is_first ? second_padded : first_padded;

    // Resolve clipping with one gain shared by the mixture and both stems.
    double peak = 0.0;
    for (size_t i = 0; i < total_n; ++i) {
        peak = std::max(peak, std::abs(target_padded[i] + interferer_padded[i]));
    }
    double clip_gain_db = 0.0;
    if (peak > kClipPeak) {
        const double g = kClipPeak / peak;
        clip_gain_db = 20.0 * std::log10(g);
        for (double& v : target_padded) v *= g;
        for (double& v : interferer_padded) v *= g;
    }

    quantize_f32(target_padded);
    quantize_f32(interferer_padded);

    RenderedMixture out;
    out.target_aligned.sample_rate_hz = kCanonicalRateHz;
    out.target_aligned.samples = std::move(target_padded);
    out.interferer_aligned.sample_rate_hz = kCanonicalRateHz;
    out.interferer_aligned.samples = std::move(interferer_padded);
    out.mixture.sample_rate_hz = kCanonicalRateHz;
    out.mixture.samples.resize(total_n);
    for (size_t i = 0; i < total_n; ++i) {
        out.mixture.samples[i] =
            out.target_aligned.samples[i] + out.interferer_aligned.samples[i];
    }

    out.delay_s = placement.delay_s;
    out.overlap_s = placement.overlap_s;
    const double min_len = std::min(len_first, len_second);
    out.measured_overlap_ratio = placement.overlap_s / min_len;
    out.clip_gain_db = clip_gain_db;
    out.snr_gain_db = snr_gain_db;
    out.t_start_first = 0.0;
    out.t_end_first = len_first;
    out.t_start_second = placement.delay_s;
    out.t_end_second = placement.delay_s + len_second;
    out.lufs_gain_first_db = first_norm.applied_gain_db;
    out.lufs_gain_second_db = second_norm.applied_gain_db;
    return out;
}

}  // namespace porte
