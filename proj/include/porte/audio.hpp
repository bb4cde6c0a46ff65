#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace porte {

constexpr int kCanonicalRateHz = 16000;

// Mono waveform. Samples are doubles in nominal [-1, 1]; float64 is kept
// end to end so accumulation (RMS, resampling sums) does not drift, and
// quantization happens only at file I/O.
struct AudioSignal {
    std::vector<double> samples;
    int sample_rate_hz = kCanonicalRateHz;

    size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    double duration_s() const {
        return static_cast<double>(samples.size()) / sample_rate_hz;
    }
};

// Per-frame RMS amplitude sequence (one value per analysis frame).
struct FrameEnergies {
    std::vector<double> values;
    double win_ms = 25.0;
    double hop_ms = 10.0;
    size_t origin_sample = 0;  // start index of frame 0 in the source signal

    size_t size() const { return values.size(); }
};

enum class WavEncoding { pcm16, float32 };

// Reads a RIFF/WAVE file (PCM16 LE or IEEE float32, any rate). Multichannel
// input is averaged down to mono. Throws FormatError on malformed headers or
// unsupported codecs, IoError when the file cannot be opened.
AudioSignal read_wav(const std::string& path);

// Writes mono WAV. pcm16 quantization error is at most 1/32768 per sample;
// float32 stores the f32-rounded sample value.
void write_wav(const std::string& path, const AudioSignal& signal, WavEncoding encoding);

// Rational-rate conversion with a Kaiser-windowed sinc kernel (stopband
// attenuation well above 60 dB). Same-rate input is returned unchanged;
// output length is round(n * target / source), so duration is preserved
// within one output sample.
AudioSignal resample(const AudioSignal& signal, int target_hz);

struct TrimResult {
    AudioSignal signal;
    double trimmed_seconds = 0.0;
};

// Drops everything before the first frame whose RMS exceeds
// peak_frame_rms * 10^(threshold_db_below_peak / 20). A fully silent signal
// raises SignalError.
TrimResult trim_leading_silence(const AudioSignal& signal, double threshold_db_below_peak,
                                double win_ms = 25.0, double hop_ms = 10.0);

// Keeps at most max_seconds of audio; shorter input is returned unchanged
// (boundary inclusive).
AudioSignal truncate(const AudioSignal& signal, double max_seconds);

// Frame RMS with win/hop in milliseconds. A signal shorter than one window
// yields an empty FrameEnergies (not an error). Requires win_ms >= hop_ms > 0.
FrameEnergies frame_rms(const AudioSignal& signal, double win_ms, double hop_ms);

inline size_t ms_to_samples(double ms, int rate_hz) {
    return static_cast<size_t>(ms * rate_hz / 1000.0 + 0.5);
}

}  // namespace porte
