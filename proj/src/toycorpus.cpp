#include "porte/toycorpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "porte/audio.hpp"
#include "porte/errors.hpp"
#include "porte/mixgen.hpp"
#include "porte/rng.hpp"

namespace fs = std::filesystem;

namespace porte {

namespace {

struct SpeakerVoice {
    double f0 = 120.0;
    double formant1 = 500.0;
    double formant2 = 1500.0;
    double formant3 = 2500.0;
};

double formant_weight(double freq, const SpeakerVoice& voice) {
    const auto bump = [&](double center, double width, double gain) {
        const double z = (freq - center) / width;
        return gain * std::exp(-0.5 * z * z);
    };
    return 0.15 + bump(voice.formant1, 220.0, 1.0) + bump(voice.formant2, 320.0, 0.55) +
           bump(voice.formant3, 420.0, 0.3);
}

AudioSignal synth_utterance(const SpeakerVoice& voice, double active_seconds,
                            double lead_silence_s, int rate, Rng& rng) {
    const size_t n_lead = static_cast<size_t>(lead_silence_s * rate);
    const size_t n_active = static_cast<size_t>(active_seconds * rate);

    AudioSignal out;
    out.sample_rate_hz = rate;
    out.samples.assign(n_lead + n_active, 0.0);

    // Syllable-rate envelope: raised-cosine bursts with per-syllable level.
    std::vector<double> envelope(n_active, 0.0);
    size_t pos = 0;
    while (pos < n_active) {
        const double syl_s = rng.uniform(0.15, 0.32);
        const double gap_s = rng.uniform(0.01, 0.06);
        const double level = rng.uniform(0.45, 1.0);
        const size_t n_syl = std::max<size_t>(1, static_cast<size_t>(syl_s * rate));
        for (size_t i = 0; i < n_syl && pos + i < n_active; ++i) {
            const double phase = static_cast<double>(i) / n_syl;
            envelope[pos + i] = level * std::pow(0.5 - 0.5 * std::cos(2.0 * M_PI * phase), 0.6);
        }
        pos += n_syl + static_cast<size_t>(gap_s * rate);
    }
    // The first syllable starts right after the lead silence so trimming
    // lands on a stable boundary.

    const int n_harm = std::max(3, std::min(40, static_cast<int>(0.42 * rate / voice.f0)));
    std::vector<double> amp(static_cast<size_t>(n_harm));
    std::vector<double> phase(static_cast<size_t>(n_harm));
    for (int h = 0; h < n_harm; ++h) {
        amp[static_cast<size_t>(h)] =
            formant_weight((h + 1) * voice.f0, voice) / std::pow(h + 1.0, 0.7);
        phase[static_cast<size_t>(h)] = rng.uniform(0.0, 2.0 * M_PI);
    }

    const double vibrato_rate = rng.uniform(4.5, 6.0);
    const double vibrato_depth = 0.015;
    double f0_phase = 0.0;
    double peak = 0.0;
    for (size_t i = 0; i < n_active; ++i) {
        const double t = static_cast<double>(i) / rate;
        const double f_inst = voice.f0 * (1.0 + vibrato_depth * std::sin(2.0 * M_PI * vibrato_rate * t));
        f0_phase += 2.0 * M_PI * f_inst / rate;
        double s = 0.0;
        for (int h = 0; h < n_harm; ++h) {
            s += amp[static_cast<size_t>(h)] *
                 std::sin((h + 1) * f0_phase + phase[static_cast<size_t>(h)]);
        }
        const double v = envelope[i] * s;
        out.samples[n_lead + i] = v;
        peak = std::max(peak, std::abs(v));
    }
    if (peak > 0.0) {
        const double g = 0.5 / peak;
        for (size_t i = n_lead; i < out.samples.size(); ++i) out.samples[i] *= g;
    }
    return out;
}

}  // namespace

void make_toy_corpus(const ToyCorpusConfig& config) {
    if (config.speakers < 2) throw ArgumentError("make_toy_corpus: need at least two speakers");
    fs::create_directories(config.out_dir);

    std::ofstream tsv(fs::path(config.out_dir) / "speakers.tsv", std::ios::trunc);
    if (!tsv) throw IoError("cannot write speakers.tsv under '" + config.out_dir + "'");

    for (int s = 0; s < config.speakers; ++s) {
        char name[16];
        std::snprintf(name, sizeof(name), "spk%02d", s + 1);
        const bool male = s % 2 == 0;
        tsv << name << '\t' << (male ? "male" : "female") << '\n';

        Rng speaker_rng(derive_seed(config.seed, static_cast<uint64_t>(s)));
        SpeakerVoice voice;
        voice.f0 = male ? speaker_rng.uniform(98.0, 145.0) : speaker_rng.uniform(190.0, 255.0);
        voice.formant1 = speaker_rng.uniform(420.0, 620.0);
        voice.formant2 = speaker_rng.uniform(1300.0, 1800.0);
        voice.formant3 = speaker_rng.uniform(2300.0, 2900.0);

        const fs::path speaker_dir = fs::path(config.out_dir) / name;
        fs::create_directories(speaker_dir);
        for (int u = 0; u < config.utterances_per_speaker; ++u) {
            Rng utt_rng(derive_seed(config.seed, (static_cast<uint64_t>(s) << 16) | (u + 1)));
            const double active = utt_rng.uniform(6.0, 9.5);
            const double lead = utt_rng.uniform(0.0, 0.3);
            const AudioSignal sig =
                synth_utterance(voice, active, lead, config.sample_rate_hz, utt_rng);
            char file[32];
            std::snprintf(file, sizeof(file), "%s_utt%02d.wav", name, u + 1);
            write_wav((speaker_dir / file).string(), sig, WavEncoding::float32);
        }
    }
}

}  // namespace porte
