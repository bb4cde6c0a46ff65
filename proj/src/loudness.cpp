#include "porte/loudness.hpp"

#include <cmath>
#include <vector>

#include "porte/errors.hpp"

namespace porte {

namespace {

struct Biquad {
    double b0, b1, b2, a1, a2;

    void apply(std::vector<double>& x) const {
        double x1 = 0.0, x2 = 0.0, y1 = 0.0, y2 = 0.0;
        for (double& v : x) {
            const double y = b0 * v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
            x2 = x1;
            x1 = v;
            y2 = y1;
            y1 = y;
            v = y;
        }
    }
};

// The two K-weighting stages, redesigned for an arbitrary sample rate from
// the analog prototype parameters. At 48 kHz these reproduce the published
// coefficients to ~1e-13.
Biquad k_weighting_shelf(double fs) {
    const double gain_db = 3.999843853973347;
    const double q = 0.7071752369554196;
    const double fc = 1681.974450955533;

    const double k = std::tan(M_PI * fc / fs);
    const double vh = std::pow(10.0, gain_db / 20.0);
    const double vb = std::pow(vh, 0.499666774155);
    const double a0 = 1.0 + k / q + k * k;

    Biquad f;
    f.b0 = (vh + vb * k / q + k * k) / a0;
    f.b1 = 2.0 * (k * k - vh) / a0;
    f.b2 = (vh - vb * k / q + k * k) / a0;
    f.a1 = 2.0 * (k * k - 1.0) / a0;
    f.a2 = (1.0 - k / q + k * k) / a0;
    return f;
}

Biquad k_weighting_highpass(double fs) {
    const double q = 0.5003270373238773;
    const double fc = 38.13547087602444;

    const double k = std::tan(M_PI * fc / fs);
    const double a0 = 1.0 + k / q + k * k;

    Biquad f;
    f.b0 = 1.0;
    f.b1 = -2.0;
    f.b2 = 1.0;
    f.a1 = 2.0 * (k * k - 1.0) / a0;
    f.a2 = (1.0 - k / q + k * k) / a0;
    return f;
}

constexpr double kAbsoluteGateLufs = -70.0;
constexpr double kRelativeGateLu = 10.0;
constexpr double kBlockSeconds = 0.400;
constexpr double kBlockHopSeconds = 0.100;  // 75% overlap

double block_loudness(double mean_square) {
    return -0.691 + 10.0 * std::log10(mean_square + 1e-300);
}

}  // namespace

LoudnessResult integrated_loudness(const AudioSignal& signal) {
    const double fs = signal.sample_rate_hz;
    const size_t block = static_cast<size_t>(std::llround(kBlockSeconds * fs));
    const size_t hop = static_cast<size_t>(std::llround(kBlockHopSeconds * fs));
    if (signal.samples.size() < block) {
        throw SignalError("integrated_loudness: signal shorter than one 400 ms block");
    }

    std::vector<double> weighted = signal.samples;
    k_weighting_shelf(fs).apply(weighted);
    k_weighting_highpass(fs).apply(weighted);

    const size_t n_blocks = (weighted.size() - block) / hop + 1;
    std::vector<double> block_lufs(n_blocks);
    std::vector<double> block_ms(n_blocks);
    for (size_t j = 0; j < n_blocks; ++j) {
        double acc = 0.0;
        for (size_t i = j * hop; i < j * hop + block; ++i) acc += weighted[i] * weighted[i];
        block_ms[j] = acc / block;
        block_lufs[j] = block_loudness(block_ms[j]);
    }

    double abs_sum = 0.0;
    size_t abs_count = 0;
    for (size_t j = 0; j < n_blocks; ++j) {
        if (block_lufs[j] > kAbsoluteGateLufs) {
            abs_sum += block_ms[j];
            ++abs_count;
        }
    }
    if (abs_count == 0) {
        throw SignalError("integrated_loudness: all blocks below the absolute gate (unmeasurable)");
    }

    const double relative_gate = block_loudness(abs_sum / abs_count) - kRelativeGateLu;
    double gated_sum = 0.0;
    int gated_count = 0;
    for (size_t j = 0; j < n_blocks; ++j) {
        if (block_lufs[j] > kAbsoluteGateLufs && block_lufs[j] > relative_gate) {
            gated_sum += block_ms[j];
            ++gated_count;
        }
    }
    if (gated_count == 0) {
        throw SignalError("integrated_loudness: all blocks gated out (unmeasurable)");
    }

    LoudnessResult result;
    result.lufs = block_loudness(gated_sum / gated_count);
    result.gated_block_count = gated_count;
    return result;
}

NormalizeResult normalize_loudness(const AudioSignal& signal, double target_lufs) {
    const LoudnessResult measured = integrated_loudness(signal);
    const double gain_db = target_lufs - measured.lufs;
    const double gain = std::pow(10.0, gain_db / 20.0);

    NormalizeResult result;
    result.applied_gain_db = gain_db;
    result.signal.sample_rate_hz = signal.sample_rate_hz;
    result.signal.samples.resize(signal.samples.size());
    for (size_t i = 0; i < signal.samples.size(); ++i) {
        result.signal.samples[i] = signal.samples[i] * gain;
    }
    return result;
}

}  // namespace porte
