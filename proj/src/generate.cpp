#include "porte/generate.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <thread>

#include "porte/errors.hpp"
#include "porte/rng.hpp"

namespace fs = std::filesystem;

namespace porte {

namespace {

int bin_index_for_percent(int percent) {
    for (size_t i = 0; i < kOverlapBins.size(); ++i) {
        if (static_cast<int>(std::lround(kOverlapBins[i] * 100.0)) == percent) {
            return static_cast<int>(i);
        }
    }
    throw ArgumentError("unknown overlap bin " + std::to_string(percent) +
                        "% (expected one of 0, 20, 40, 60, 80, 100)");
}

std::string make_id(size_t index, uint64_t item_seed) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06zu_%08llx", index,
                  static_cast<unsigned long long>(derive_seed(item_seed, 0x1D) & 0xFFFFFFFFULL));
    return buf;
}

struct ItemResult {
    MixtureRecord record;
    int retries = 0;
};

ItemResult build_item(const std::vector<UtteranceRecord>& corpus, const GenerateConfig& config,
                      size_t index, int bin_percent, const std::string& wav_dir) {
    const int bin_index = bin_index_for_percent(bin_percent);
    for (int retry = 0; retry <= config.max_prompt_retries; ++retry) {
        const uint64_t item_seed =
            derive_seed(config.master_seed, (static_cast<uint64_t>(index) << 20) |
                                                static_cast<uint64_t>(retry));
        const MixturePlan plan = sample_plan(corpus, item_seed, bin_index);
        const RenderedMixture rendered = render_mixture(plan);
        const AttributeSet attrs = derive_attributes(rendered, plan);

        PromptAnnotation prompt;
        try {
            Rng prompt_rng(derive_seed(item_seed, 0xA110));
            prompt = render_prompt(attrs, plan.target_role, prompt_rng);
        } catch (const UnpromptableError&) {
            continue;  // resample the plan with the next retry seed
        }

        const std::string id = make_id(index, item_seed);
        const bool target_is_first = plan.target_role == TargetRole::first;

        MixtureRecord rec;
        rec.id = id;
        rec.mixture_path = "wav/" + id + "_mix.wav";
        rec.target_path = "wav/" + id + "_tgt.wav";
        rec.interferer_path = "wav/" + id + "_itf.wav";
        rec.overlap_ratio_requested = plan.overlap_ratio;
        rec.overlap_ratio_measured = rendered.measured_overlap_ratio;
        rec.snr_db = plan.snr_db;
        rec.snr_clamped = plan.snr_db != plan.snr_db_raw;
        rec.snr_gain_db = rendered.snr_gain_db;
        rec.lufs_first = plan.lufs_first;
        rec.lufs_second = plan.lufs_second;
        rec.clip_gain_db = rendered.clip_gain_db;
        rec.pause_s = plan.overlap_ratio == 0.0 ? plan.pause_s : 0.0;
        rec.duration_s = rendered.mixture.duration_s();
        rec.target_t_start = target_is_first ? rendered.t_start_first : rendered.t_start_second;
        rec.target_t_end = target_is_first ? rendered.t_end_first : rendered.t_end_second;
        rec.interferer_t_start =
            target_is_first ? rendered.t_start_second : rendered.t_start_first;
        rec.interferer_t_end = target_is_first ? rendered.t_end_second : rendered.t_end_first;
        rec.prompt_type = prompt.prompt_type;
        rec.prompt_text = prompt.text;
        rec.target_role = plan.target_role;
        rec.target_speaker_id =
            target_is_first ? plan.first_utt.speaker_id : plan.second_utt.speaker_id;
        rec.interferer_speaker_id =
            target_is_first ? plan.second_utt.speaker_id : plan.first_utt.speaker_id;
        rec.target_gender = target_is_first ? plan.first_utt.gender : plan.second_utt.gender;
        rec.interferer_gender = target_is_first ? plan.second_utt.gender : plan.first_utt.gender;
        rec.seed = item_seed;
        rec.split = Split::train;

        write_wav(wav_dir + "/" + id + "_mix.wav", rendered.mixture, WavEncoding::float32);
        write_wav(wav_dir + "/" + id + "_tgt.wav", rendered.target_aligned, WavEncoding::float32);
        write_wav(wav_dir + "/" + id + "_itf.wav", rendered.interferer_aligned,
                  WavEncoding::float32);

        return ItemResult{std::move(rec), retry};
    }
    throw UnpromptableError("item " + std::to_string(index) + ": exceeded " +
                            std::to_string(config.max_prompt_retries) +
                            " prompt resampling attempts");
}

}  // namespace

GenerateSummary generate_dataset(const GenerateConfig& config) {
    if (config.count < 1) throw ArgumentError("generate_dataset: count must be at least 1");
    if (config.bins.empty()) throw ArgumentError("generate_dataset: no overlap bins requested");
    for (int percent : config.bins) bin_index_for_percent(percent);  // validate early

    const std::string speakers_tsv =
        config.speakers_tsv.empty() ? (fs::path(config.corpus_dir) / "speakers.tsv").string()
                                    : config.speakers_tsv;
    const CorpusBuildResult corpus = build_corpus_manifest(config.corpus_dir, speakers_tsv);

    const std::string wav_dir = (fs::path(config.out_dir) / "wav").string();
    fs::create_directories(wav_dir);

    const size_t count = static_cast<size_t>(config.count);
    std::vector<ItemResult> results(count);
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::atomic<size_t> next_index{0};

    const int workers = std::max(1, config.workers);
    auto worker_loop = [&]() {
        for (;;) {
            const size_t i = next_index.fetch_add(1);
            if (i >= count) return;
            const int bin_percent = config.bins[i % config.bins.size()];
            try {
                results[i] = build_item(corpus.records, config, i, bin_percent, wav_dir);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    if (workers == 1) {
        worker_loop();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker_loop);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    GenerateSummary summary;
    summary.corpus_utterances = static_cast<int>(corpus.records.size());
    summary.records.reserve(count);
    for (auto& item : results) {
        summary.prompt_resamples += item.retries;
        const int percent =
            static_cast<int>(std::lround(item.record.overlap_ratio_requested * 100.0));
        summary.per_bin_counts[percent] += 1;
        summary.records.push_back(std::move(item.record));
    }

    split_dataset(summary.records, config.test_fraction, derive_seed(config.master_seed, 0x5917),
                  config.speaker_disjoint_split);

    summary.manifest_path = (fs::path(config.out_dir) / "manifest.jsonl").string();
    write_manifest(summary.records, summary.manifest_path);
    return summary;
}

}  // namespace porte
