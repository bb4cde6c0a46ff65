#pragma once

#include <string>
#include <vector>

#include "porte/metrics.hpp"

namespace porte {

struct EvaluateConfig {
    std::string manifest_path;
    std::string estimates_dir;           // holds <id>_est.wav files
    std::vector<std::string> metrics = {"sisdr", "sisdri", "sure"};
    bool zero_mean = true;               // SISDR mean removal
    double clamp_db = 60.0;
    SuREConfig sure_cfg;
    std::string hyp_transcripts_path;    // TSV id<TAB>text; enables wer
    std::string ref_transcripts_path;
    int workers = 1;
};

struct EvaluateSummary {
    std::vector<RecordScores> scores;
    int missing_estimates = 0;
    int length_padded = 0;  // estimates zero-padded to the reference length
};

// Scores every manifest record with an estimate present. Missing estimates
// are counted, not fatal; zero estimates found raises Error.
EvaluateSummary evaluate_dataset(const EvaluateConfig& config);

// Per-record scores as JSON-Lines.
void write_scores(const std::vector<RecordScores>& scores, const std::string& path);
std::vector<RecordScores> read_scores(const std::string& path);

}  // namespace porte
