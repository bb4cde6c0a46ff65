#pragma once

#include "porte/audio.hpp"

namespace porte {

struct LoudnessResult {
    double lufs = 0.0;
    int gated_block_count = 0;
};

// Integrated loudness of a mono signal, BS.1770-4 style: K-weighting
// pre-filter (high shelf + high pass redesigned for the signal's sample
// rate), 400 ms blocks at 75% overlap, -70 LUFS absolute gate, then a
// relative gate 10 LU below the absolute-gated mean. Throws SignalError
// when the signal is shorter than 400 ms or every block is gated out.
LoudnessResult integrated_loudness(const AudioSignal& signal);

struct NormalizeResult {
    AudioSignal signal;
    double applied_gain_db = 0.0;
};

// Applies the single linear gain target_lufs - measured (no limiting;
// clipping is resolved once at mixture level so stems stay aligned).
NormalizeResult normalize_loudness(const AudioSignal& signal, double target_lufs);

}  // namespace porte
