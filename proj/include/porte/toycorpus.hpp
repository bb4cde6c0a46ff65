#pragma once

#include <cstdint>
#include <string>

namespace porte {

// Synthesizes a small deterministic demo corpus: harmonic, syllable-
// modulated utterances (speech-like enough for loudness and trimming to
// behave) under out_dir/<speaker>/,  plus a speakers.tsv gender map.
// Half the speakers are tagged male, half female.
struct ToyCorpusConfig {
    std::string out_dir;
    int speakers = 8;
    int utterances_per_speaker = 2;
    uint64_t seed = 7;
    int sample_rate_hz = 24000;
};

void make_toy_corpus(const ToyCorpusConfig& config);

}  // namespace porte
