#include "porte/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "porte/errors.hpp"
#include "porte/rng.hpp"

namespace fs = std::filesystem;

namespace porte {

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw ArgumentError("unrecognized split '" + s + "'");
}

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json record_to_json(const MixtureRecord& r) {
    ordered_json j;
    j["id"] = r.id;
    j["mixture_path"] = r.mixture_path;
    j["target_path"] = r.target_path;
    j["interferer_path"] = r.interferer_path;
    j["overlap_ratio_requested"] = r.overlap_ratio_requested;
    j["overlap_ratio_measured"] = r.overlap_ratio_measured;
    j["snr_db"] = r.snr_db;
    j["snr_clamped"] = r.snr_clamped;
    j["snr_gain_db"] = r.snr_gain_db;
    j["lufs_first"] = r.lufs_first;
    j["lufs_second"] = r.lufs_second;
    j["clip_gain_db"] = r.clip_gain_db;
    j["pause_s"] = r.pause_s;
    j["duration_s"] = r.duration_s;
    j["target_t_start"] = r.target_t_start;
    j["target_t_end"] = r.target_t_end;
    j["interferer_t_start"] = r.interferer_t_start;
    j["interferer_t_end"] = r.interferer_t_end;
    j["prompt_type"] = to_string(r.prompt_type);
    j["prompt_text"] = r.prompt_text;
    j["target_role"] = to_string(r.target_role);
    j["target_speaker_id"] = r.target_speaker_id;
    j["interferer_speaker_id"] = r.interferer_speaker_id;
    j["target_gender"] = to_string(r.target_gender);
    j["interferer_gender"] = to_string(r.interferer_gender);
    j["seed"] = r.seed;
    j["split"] = to_string(r.split);
    return j;
}

const nlohmann::json& require_field(const nlohmann::json& j, const char* name,
                                    size_t line_number) {
    auto it = j.find(name);
    if (it == j.end()) {
        throw ParseError(std::string("manifest record missing required field '") + name + "'",
                         line_number);
    }
    return *it;
}

}  // namespace

std::string record_to_json_line(const MixtureRecord& record) {
    return record_to_json(record).dump();
}

MixtureRecord record_from_json_line(const std::string& line, size_t line_number) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed manifest line: ") + e.what(), line_number);
    }
    if (!j.is_object()) throw ParseError("manifest line is not a JSON object", line_number);

    MixtureRecord r;
    try {
        r.id = require_field(j, "id", line_number).get<std::string>();
        r.mixture_path = require_field(j, "mixture_path", line_number).get<std::string>();
        r.target_path = require_field(j, "target_path", line_number).get<std::string>();
        r.interferer_path = require_field(j, "interferer_path", line_number).get<std::string>();
        r.overlap_ratio_requested =
            require_field(j, "overlap_ratio_requested", line_number).get<double>();
        r.overlap_ratio_measured =
            require_field(j, "overlap_ratio_measured", line_number).get<double>();
        r.snr_db = require_field(j, "snr_db", line_number).get<double>();
        r.snr_clamped = j.value("snr_clamped", false);
        r.snr_gain_db = j.value("snr_gain_db", 0.0);
        r.lufs_first = require_field(j, "lufs_first", line_number).get<double>();
        r.lufs_second = require_field(j, "lufs_second", line_number).get<double>();
        r.clip_gain_db = require_field(j, "clip_gain_db", line_number).get<double>();
        r.pause_s = j.value("pause_s", 0.0);
        r.duration_s = j.value("duration_s", 0.0);
        r.target_t_start = require_field(j, "target_t_start", line_number).get<double>();
        r.target_t_end = require_field(j, "target_t_end", line_number).get<double>();
        r.interferer_t_start = require_field(j, "interferer_t_start", line_number).get<double>();
        r.interferer_t_end = require_field(j, "interferer_t_end", line_number).get<double>();
        r.prompt_type =
            prompt_type_from_string(require_field(j, "prompt_type", line_number).get<std::string>());
        r.prompt_text = require_field(j, "prompt_text", line_number).get<std::string>();
        r.target_role =
            target_role_from_string(require_field(j, "target_role", line_number).get<std::string>());
        r.target_speaker_id =
            require_field(j, "target_speaker_id", line_number).get<std::string>();
        r.interferer_speaker_id =
            require_field(j, "interferer_speaker_id", line_number).get<std::string>();
        r.target_gender =
            gender_from_string(require_field(j, "target_gender", line_number).get<std::string>());
        r.interferer_gender = gender_from_string(
            require_field(j, "interferer_gender", line_number).get<std::string>());
        r.seed = require_field(j, "seed", line_number).get<uint64_t>();
        r.split = split_from_string(require_field(j, "split", line_number).get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("manifest field has wrong type: ") + e.what(), line_number);
    }
    return r;
}

void write_manifest(const std::vector<MixtureRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    for (const auto& r : records) out << record_to_json_line(r) << '\n';
    if (!out) throw IoError("write failure on '" + path + "'");
}

std::vector<MixtureRecord> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::vector<MixtureRecord> records;
    std::string line;
    size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        records.push_back(record_from_json_line(line, line_number));
    }
    return records;
}

void validate_record(const MixtureRecord& record, const std::string& base_dir) {
    const auto resolve = [&](const std::string& p) {
        fs::path q(p);
        return q.is_absolute() ? q.string() : (fs::path(base_dir) / q).string();
    };
    const AudioSignal mix = read_wav(resolve(record.mixture_path));
    const AudioSignal tgt = read_wav(resolve(record.target_path));
    const AudioSignal itf = read_wav(resolve(record.interferer_path));

    if (mix.size() != tgt.size() || mix.size() != itf.size()) {
        throw FormatError("record " + record.id + ": stem sample counts differ");
    }
    // Stems are stored at float32 granularity, so their f32 sum must
    // reproduce the stored mixture bit for bit.
    for (size_t i = 0; i < mix.size(); ++i) {
        const float s = static_cast<float>(tgt.samples[i]) + static_cast<float>(itf.samples[i]);
        if (s != static_cast<float>(mix.samples[i])) {
            throw FormatError("record " + record.id + ": stems do not sum to the mixture at sample " +
                              std::to_string(i));
        }
    }

    const double dur = mix.duration_s();
    const double tol = 1.5 / mix.sample_rate_hz;
    const auto check_span = [&](double t0, double t1, const char* which) {
        if (!(t0 < t1) || t0 < -tol || t1 > dur + tol) {
            throw FormatError(std::string("record ") + record.id + ": " + which +
                              " timestamps outside the mixture");
        }
    };
    check_span(record.target_t_start, record.target_t_end, "target");
    check_span(record.interferer_t_start, record.interferer_t_end, "interferer");

    const double lo = std::max(record.target_t_start, record.interferer_t_start);
    const double hi = std::min(record.target_t_end, record.interferer_t_end);
    const double overlap = std::max(0.0, hi - lo);
    const double min_len = std::min(record.target_t_end - record.target_t_start,
                                    record.interferer_t_end - record.interferer_t_start);
    const double recomputed = overlap / min_len;
    if (std::abs(recomputed - record.overlap_ratio_measured) > 0.001) {
        throw FormatError("record " + record.id +
                          ": measured overlap disagrees with timestamps (recomputed " +
                          std::to_string(recomputed) + ")");
    }
}

namespace {

std::map<std::string, Gender> read_speaker_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open speaker metadata '" + path + "'");
    std::map<std::string, Gender> genders;
    std::string line;
    size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty() || line[0] == '#') continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ParseError("speaker metadata line lacks a tab separator", line_number);
        }
        std::string id = line.substr(0, tab);
        std::string gender = line.substr(tab + 1);
        while (!gender.empty() && (gender.back() == '\r' || gender.back() == ' ')) gender.pop_back();
        try {
            genders[id] = gender_from_string(gender);
        } catch (const ArgumentError&) {
            throw ParseError("unrecognized gender '" + gender + "' in speaker metadata",
                             line_number);
        }
    }
    return genders;
}

std::string speaker_id_for(const fs::path& file, const fs::path& root) {
    const fs::path rel = fs::relative(file, root);
    if (rel.has_parent_path() && !rel.parent_path().empty()) {
        return rel.begin()->string();
    }
    // Flat layout: take the stem prefix before the first underscore.
    const std::string stem = file.stem().string();
    const size_t underscore = stem.find('_');
    return underscore == std::string::npos ? stem : stem.substr(0, underscore);
}

}  // namespace

CorpusBuildResult build_corpus_manifest(const std::string& root_dir,
                                        const std::string& speaker_metadata_file) {
    const auto genders = read_speaker_tsv(speaker_metadata_file);
    if (!fs::is_directory(root_dir)) {
        throw IoError("corpus root '" + root_dir + "' is not a directory");
    }

    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root_dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        if (ext == ".wav" || ext == ".flac") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    files.erase(std::unique(files.begin(), files.end()), files.end());

    CorpusBuildResult result;
    for (const auto& file : files) {
        const std::string speaker = speaker_id_for(file, root_dir);
        auto it = genders.find(speaker);
        if (it == genders.end()) {
            ++result.skipped_unknown_speaker;
            continue;
        }
        double duration = 0.0;
        try {
            const AudioSignal raw = read_wav(file.string());
            duration = trim_leading_silence(raw, kTrimThresholdDb).signal.duration_s();
        } catch (const Error&) {
            // FLAC and other undecodable content lands here.
            ++result.skipped_unreadable;
            continue;
        }
        if (duration < kMinSourceSeconds) {
            ++result.skipped_short;
            continue;
        }
        UtteranceRecord rec;
        rec.path = file.string();
        rec.speaker_id = speaker;
        rec.gender = it->second;
        rec.duration_s = duration;
        result.records.push_back(std::move(rec));
    }
    if (result.records.empty()) {
        throw CorpusError("corpus scan of '" + root_dir + "' produced no usable utterances");
    }
    return result;
}

void split_dataset(std::vector<MixtureRecord>& records, double test_fraction, uint64_t seed,
                   bool speaker_disjoint) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ArgumentError("split_dataset: test_fraction must lie in (0, 1)");
    }

    for (auto& r : records) r.split = Split::train;

    if (speaker_disjoint) {
        // Best effort: hold out speakers until mixtures fully inside the
        // held-out set reach the requested fraction.
        std::set<std::string> speakers;
        for (const auto& r : records) {
            speakers.insert(r.target_speaker_id);
            speakers.insert(r.interferer_speaker_id);
        }
        std::vector<std::string> order(speakers.begin(), speakers.end());
        Rng rng(derive_seed(seed, 0x5EED));
        for (size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.uniform_index(i)]);
        }
        std::set<std::string> held_out;
        const size_t want = static_cast<size_t>(std::llround(records.size() * test_fraction));
        for (const auto& spk : order) {
            held_out.insert(spk);
            size_t count = 0;
            for (const auto& r : records) {
                if (held_out.count(r.target_speaker_id) && held_out.count(r.interferer_speaker_id))
                    ++count;
            }
            if (count >= want) break;
        }
        for (auto& r : records) {
            if (held_out.count(r.target_speaker_id) && held_out.count(r.interferer_speaker_id)) {
                r.split = Split::test;
            }
        }
        return;
    }

    // Stratified by requested overlap bin.
    std::map<long, std::vector<size_t>> bins;
    for (size_t i = 0; i < records.size(); ++i) {
        bins[std::lround(records[i].overlap_ratio_requested * 100.0)].push_back(i);
    }
    for (auto& [bin, members] : bins) {
        if (members.size() < 2) continue;  // bin kept whole in train
        Rng rng(derive_seed(seed, static_cast<uint64_t>(bin)));
        for (size_t i = members.size(); i > 1; --i) {
            std::swap(members[i - 1], members[rng.uniform_index(i)]);
        }
        const size_t n_test = static_cast<size_t>(std::llround(members.size() * test_fraction));
        for (size_t i = 0; i < n_test && i < members.size(); ++i) {
            records[members[i]].split = Split::test;
        }
    }
}

}  // namespace porte
