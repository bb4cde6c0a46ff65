#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "porte/mixgen.hpp"
#include "porte/prompt.hpp"

namespace porte {

enum class Split { train, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

// One line of the dataset manifest (JSON-Lines, stable field order).
struct MixtureRecord {
    std::string id;
    std::string mixture_path;
    std::string target_path;
    std::string interferer_path;
    double overlap_ratio_requested = 0.0;
    double overlap_ratio_measured = 0.0;
    double snr_db = 0.0;
    bool snr_clamped = false;
    double snr_gain_db = 0.0;
    double lufs_first = 0.0;
    double lufs_second = 0.0;
    double clip_gain_db = 0.0;
    double pause_s = 0.0;
    double duration_s = 0.0;
    double target_t_start = 0.0;
    double target_t_end = 0.0;
    double interferer_t_start = 0.0;
    double interferer_t_end = 0.0;
    PromptType prompt_type = PromptType::gender_extract;
    std::string prompt_text;
    TargetRole target_role = TargetRole::first;
    std::string target_speaker_id;
    std::string interferer_speaker_id;
    Gender target_gender = Gender::male;
    Gender interferer_gender = Gender::male;
    uint64_t seed = 0;
    Split split = Split::train;
};

std::string record_to_json_line(const MixtureRecord& record);
MixtureRecord record_from_json_line(const std::string& line, size_t line_number);

// JSON-Lines manifest I/O; read(write(x)) == x and concatenated manifests
// stay valid. Malformed lines raise ParseError with the line number; a
// missing required field names the field.
void write_manifest(const std::vector<MixtureRecord>& records, const std::string& path);
std::vector<MixtureRecord> read_manifest(const std::string& path);

// Consistency check of one record against its audio files: equal sample
// counts, stems summing to the mixture at float32 granularity, timestamps
// inside the mixture, and the measured overlap matching a recomputation
// from the timestamps within 0.001. `base_dir` resolves relative paths.
void validate_record(const MixtureRecord& record, const std::string& base_dir);

struct CorpusBuildResult {
    std::vector<UtteranceRecord> records;
    int skipped_unknown_speaker = 0;
    int skipped_short = 0;
    int skipped_unreadable = 0;
};

// Scans root_dir recursively for audio files, attaches genders from the
// speaker metadata TSV (speaker_id<TAB>gender), measures post-trim duration
// and drops utterances shorter than 5 s. Files of speakers missing from the
// TSV are skipped and counted. Speaker ids are taken from the first path
// component under root_dir, or the file stem's prefix before '_' for flat
// layouts.
CorpusBuildResult build_corpus_manifest(const std::string& root_dir,
                                        const std::string& speaker_metadata_file);

// Stratified train/test split by requested overlap bin; each bin
// contributes round(n_bin * test_fraction) test records (+-1). With
// speaker_disjoint, a best-effort speaker subset is held out and only
// mixtures entirely inside it become test records. Deterministic in seed.
void split_dataset(std::vector<MixtureRecord>& records, double test_fraction, uint64_t seed,
                   bool speaker_disjoint = false);

}  // namespace porte
