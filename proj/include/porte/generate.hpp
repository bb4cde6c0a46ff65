#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "porte/manifest.hpp"

namespace porte {

struct GenerateConfig {
    std::string corpus_dir;
    std::string speakers_tsv;  // defaults to <corpus_dir>/speakers.tsv when empty
    std::string out_dir;
    int count = 60;
    uint64_t master_seed = 0;
    std::vector<int> bins = {0, 20, 40, 60, 80, 100};  // percent
    double test_fraction = 3.0 / 39.0;
    bool speaker_disjoint_split = false;
    int workers = 1;
    int max_prompt_retries = 50;
};

struct GenerateSummary {
    std::vector<MixtureRecord> records;
    std::map<int, int> per_bin_counts;  // percent -> count
    int prompt_resamples = 0;
    int corpus_utterances = 0;
    std::string manifest_path;
};

// Renders `count` mixtures round-robin over the requested bins, resampling
// plans whose mixtures admit no prompt. Outputs land in out_dir/wav/ as
// <id>_mix.wav, <id>_tgt.wav, <id>_itf.wav with a JSONL manifest at
// out_dir/manifest.jsonl. Fully deterministic in master_seed, including
// under parallel workers (per-item derived seeds, index-ordered output).
GenerateSummary generate_dataset(const GenerateConfig& config);

}  // namespace porte
