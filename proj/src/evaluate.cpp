#include "porte/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "porte/errors.hpp"
#include "porte/manifest.hpp"

namespace fs = std::filesystem;

namespace porte {

namespace {

// Transcripts come either as one TSV (id<TAB>text) or as a directory of
// <id>.txt files.
std::map<std::string, std::string> read_transcripts(const std::string& path) {
    std::map<std::string, std::string> out;
    if (fs::is_directory(path)) {
        for (const auto& entry : fs::directory_iterator(path)) {
            if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
            std::ifstream in(entry.path());
            if (!in) throw IoError("cannot open transcript '" + entry.path().string() + "'");
            std::string text((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
            out[entry.path().stem().string()] = text;
        }
        return out;
    }
    std::ifstream in(path);
    if (!in) throw IoError("cannot open transcript file '" + path + "'");
    std::string line;
    size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ParseError("transcript line lacks a tab separator", line_number);
        }
        out[line.substr(0, tab)] = line.substr(tab + 1);
    }
    return out;
}

bool wants(const std::vector<std::string>& metrics, const std::string& name) {
    return std::find(metrics.begin(), metrics.end(), name) != metrics.end();
}

void pad_to(AudioSignal& sig, size_t n) {
    if (sig.size() < n) sig.samples.resize(n, 0.0);
}

}  // namespace

EvaluateSummary evaluate_dataset(const EvaluateConfig& config) {
    const std::vector<MixtureRecord> records = read_manifest(config.manifest_path);
    const std::string base_dir = fs::path(config.manifest_path).parent_path().string();

    std::map<std::string, std::string> hyp_texts;
    std::map<std::string, std::string> ref_texts;
    const bool want_wer = wants(config.metrics, "wer");
    if (want_wer) {
        if (config.hyp_transcripts_path.empty() || config.ref_transcripts_path.empty()) {
            throw ArgumentError("wer requested but transcripts are missing");
        }
        hyp_texts = read_transcripts(config.hyp_transcripts_path);
        ref_texts = read_transcripts(config.ref_transcripts_path);
    }

    const auto resolve = [&](const std::string& p) {
        fs::path q(p);
        return q.is_absolute() ? q.string() : (fs::path(base_dir) / q).string();
    };

    std::vector<RecordScores> scores(records.size());
    std::vector<char> present(records.size(), 0);
    std::atomic<size_t> next{0};
    std::atomic<int> padded{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker_loop = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= records.size()) return;
            const MixtureRecord& rec = records[i];
            const std::string est_path =
                (fs::path(config.estimates_dir) / (rec.id + "_est.wav")).string();
            if (!fs::exists(est_path)) continue;
            try {
                AudioSignal est = read_wav(est_path);
                AudioSignal ref = read_wav(resolve(rec.target_path));
                if (est.size() != ref.size()) {
                    padded.fetch_add(1);
                    const size_t n = std::max(est.size(), ref.size());
                    pad_to(est, n);
                    pad_to(ref, n);
                }

                RecordScores s;
                s.id = rec.id;
                s.overlap_bin = rec.overlap_ratio_requested;
                if (wants(config.metrics, "sisdr")) {
                    s.values["sisdr"] = sisdr(est, ref, config.zero_mean, config.clamp_db);
                }
                if (wants(config.metrics, "sisdri")) {
                    AudioSignal mix = read_wav(resolve(rec.mixture_path));
                    pad_to(mix, est.size());
                    s.values["sisdri"] =
                        sisdr_improvement(est, mix, ref, config.zero_mean, config.clamp_db);
                }
                if (wants(config.metrics, "sure")) {
                    s.values["sure"] = sure(est, ref,
                                            std::make_pair(rec.target_t_start, rec.target_t_end),
                                            config.sure_cfg);
                }
                if (want_wer) {
                    auto h = hyp_texts.find(rec.id);
                    auto r = ref_texts.find(rec.id);
                    if (h != hyp_texts.end() && r != ref_texts.end()) {
                        s.values["wer"] =
                            wer(normalize_tokens(h->second), normalize_tokens(r->second));
                    }
                }
                scores[i] = std::move(s);
                present[i] = 1;
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    const int workers = std::max(1, config.workers);
    if (workers == 1) {
        worker_loop();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker_loop);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    EvaluateSummary summary;
    summary.length_padded = padded.load();
    for (size_t i = 0; i < records.size(); ++i) {
        if (present[i]) {
            summary.scores.push_back(std::move(scores[i]));
        } else {
            ++summary.missing_estimates;
        }
    }
    if (summary.scores.empty()) {
        throw Error("no estimates found under '" + config.estimates_dir + "'");
    }
    return summary;
}

void write_scores(const std::vector<RecordScores>& scores, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    for (const auto& s : scores) {
        nlohmann::ordered_json j;
        j["id"] = s.id;
        j["overlap_bin"] = s.overlap_bin;
        for (const auto& [name, value] : s.values) j[name] = value;
        out << j.dump() << '\n';
    }
}

std::vector<RecordScores> read_scores(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::vector<RecordScores> scores;
    std::string line;
    size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("malformed scores line: ") + e.what(), line_number);
        }
        RecordScores s;
        if (!j.contains("id") || !j.contains("overlap_bin")) {
            throw ParseError("scores line missing 'id' or 'overlap_bin'", line_number);
        }
        s.id = j["id"].get<std::string>();
        s.overlap_bin = j["overlap_bin"].get<double>();
        for (const auto& [key, value] : j.items()) {
            if (key == "id" || key == "overlap_bin") continue;
            if (value.is_number()) s.values[key] = value.get<double>();
        }
        scores.push_back(std::move(s));
    }
    return scores;
}

}  // namespace porte
