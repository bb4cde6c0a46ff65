#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "porte/audio.hpp"

namespace porte {

// Scale-invariant SDR in dB. The estimate is projected onto the reference;
// the ratio of projection to residual energy is clamped to +-clamp_db so
// perfect and orthogonal estimates stay finite. zero_mean subtracts each
// signal's mean first (standard practice); switch it off for the literal
// training-loss formula.
double sisdr(const AudioSignal& est, const AudioSignal& ref, bool zero_mean = true,
             double clamp_db = 60.0);

// sisdr(est, ref) - sisdr(mixture, ref), both terms under the same flags.
double sisdr_improvement(const AudioSignal& est, const AudioSignal& mixture,
                         const AudioSignal& ref, bool zero_mean = true, double clamp_db = 60.0);

struct SuREConfig {
    double tau_rel = 0.01;  // silence threshold, relative to the peak frame RMS
    double beta = 0.1;      // suppression threshold (20 dB below the reference)
    double win_ms = 25.0;
    double hop_ms = 10.0;
};

// Suppression ratio on energy: the fraction of reference-active frames whose
// estimated RMS falls below beta times the reference RMS. Both signals are
// cropped to the reference speaker's active span first; pass `crop` (seconds)
// when timestamps are known, otherwise the span is derived from the
// reference's frame energies. Throws SignalError when no frame is active.
double sure(const AudioSignal& est, const AudioSignal& ref,
            std::optional<std::pair<double, double>> crop = std::nullopt,
            const SuREConfig& cfg = {});

// Word error rate: Levenshtein distance (unit costs) over reference length.
// May exceed 1. Empty reference raises ArgumentError.
double wer(const std::vector<std::string>& hypothesis_tokens,
           const std::vector<std::string>& reference_tokens);

// Lowercases, strips punctuation, collapses whitespace, splits on spaces.
std::vector<std::string> normalize_tokens(const std::string& text);

struct RecordScores {
    std::string id;
    double overlap_bin = 0.0;  // requested bin, in [0, 1]
    std::map<std::string, double> values;  // metric name -> score
};

struct MetricReport {
    std::string model;
    std::vector<std::string> metrics;            // row order
    std::vector<double> bins;                    // column order after Avg
    std::map<std::string, double> overall;       // metric -> mean over all records
    std::map<std::string, std::map<long, double>> per_bin;  // metric -> bin% -> mean
};

// Per-bin and overall arithmetic means, bins ordered 0..100%. Records are
// sorted by id first so aggregation order is stable. Empty input raises
// ArgumentError.
MetricReport aggregate_report(const std::vector<RecordScores>& records,
                              const std::string& model = "est");

// Columns: metric, model, avg, r0, r20, r40, r60, r80, r100.
std::string report_to_csv(const MetricReport& report);
std::string report_to_json(const MetricReport& report);

}  // namespace porte
