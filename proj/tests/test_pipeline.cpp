#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "porte/errors.hpp"
#include "porte/evaluate.hpp"
#include "porte/generate.hpp"
#include "porte/toycorpus.hpp"

using namespace porte;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const fs::path dir = fs::temp_directory_path() / "porte_test_pipeline";
    fs::create_directories(dir);
    return dir;
}

const fs::path& corpus_dir() {
    static const fs::path dir = [] {
        const fs::path d = temp_dir() / "corpus";
        if (!fs::exists(d / "speakers.tsv")) {
            ToyCorpusConfig cfg;
            cfg.out_dir = d.string();
            cfg.speakers = 4;
            cfg.utterances_per_speaker = 2;
            cfg.seed = 5;
            make_toy_corpus(cfg);
        }
        return d;
    }();
    return dir;
}

AudioSignal fixed_tone(double seconds, double f0, int rate) {
    AudioSignal sig;
    sig.sample_rate_hz = rate;
    const size_t n = static_cast<size_t>(seconds * rate);
    sig.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate;
        sig.samples[i] = 0.2 * (0.6 + 0.4 * std::sin(2.0 * M_PI * 4.0 * t)) *
                         std::sin(2.0 * M_PI * f0 * t);
    }
    return sig;
}

}  // namespace

TEST_CASE("generate_dataset produces a valid, self-consistent dataset") {
    GenerateConfig cfg;
    cfg.corpus_dir = corpus_dir().string();
    cfg.out_dir = (temp_dir() / "ds").string();
    cfg.count = 6;
    cfg.master_seed = 31;
    cfg.workers = 2;
    const GenerateSummary summary = generate_dataset(cfg);

    CHECK(summary.records.size() == 6);
    CHECK(summary.per_bin_counts.size() == 6);  // one record per bin
    CHECK(fs::exists(summary.manifest_path));

    for (const auto& record : summary.records) {
        validate_record(record, cfg.out_dir);  // throws on any inconsistency
    }

    SUBCASE("corrupting a stem fails validation") {
        MixtureRecord broken = summary.records.front();
        const fs::path tgt = fs::path(cfg.out_dir) / broken.target_path;
        AudioSignal stem = read_wav(tgt.string());
        stem.samples[100] += 0.25;
        write_wav(tgt.string(), stem, WavEncoding::float32);
        CHECK_THROWS_AS(validate_record(broken, cfg.out_dir), FormatError);
        // Restore for any later subcase.
        stem.samples[100] -= 0.25;
        write_wav(tgt.string(), stem, WavEncoding::float32);
    }

    SUBCASE("bad timestamps fail validation") {
        MixtureRecord broken = summary.records.front();
        broken.overlap_ratio_measured = 0.77;
        CHECK_THROWS_AS(validate_record(broken, cfg.out_dir), FormatError);
    }
}

TEST_CASE("generation rejects a corpus that can never be prompted") {
    // Two same-gender speakers with identical-length utterances and full
    // overlap: no gender contrast, no order, no length contrast.
    const fs::path root = temp_dir() / "unpromptable";
    fs::remove_all(root);
    fs::create_directories(root / "spkA");
    fs::create_directories(root / "spkB");
    write_wav((root / "spkA/spkA_utt.wav").string(), fixed_tone(7.0, 120.0, 16000),
              WavEncoding::float32);
    write_wav((root / "spkB/spkB_utt.wav").string(), fixed_tone(7.0, 135.0, 16000),
              WavEncoding::float32);
    {
        std::ofstream tsv(root / "speakers.tsv");
        tsv << "spkA\tmale\nspkB\tmale\n";
    }

    GenerateConfig cfg;
    cfg.corpus_dir = root.string();
    cfg.out_dir = (temp_dir() / "unpromptable_out").string();
    cfg.count = 1;
    cfg.bins = {100};
    cfg.master_seed = 1;
    cfg.max_prompt_retries = 5;
    CHECK_THROWS_AS(generate_dataset(cfg), UnpromptableError);
}

TEST_CASE("evaluate_dataset") {
    GenerateConfig gen;
    gen.corpus_dir = corpus_dir().string();
    gen.out_dir = (temp_dir() / "eval_ds").string();
    gen.count = 2;
    gen.master_seed = 77;
    const GenerateSummary summary = generate_dataset(gen);

    const fs::path est_dir = temp_dir() / "estimates";
    fs::remove_all(est_dir);
    fs::create_directories(est_dir);

    EvaluateConfig eval;
    eval.manifest_path = summary.manifest_path;
    eval.estimates_dir = est_dir.string();

    SUBCASE("no estimates at all is an error") {
        CHECK_THROWS_AS(evaluate_dataset(eval), Error);
    }

    SUBCASE("missing estimates are counted, short ones are padded") {
        // Only the first record gets an estimate, and a truncated one.
        const MixtureRecord& first = summary.records.front();
        AudioSignal target =
            read_wav((fs::path(gen.out_dir) / first.target_path).string());
        AudioSignal truncated;
        truncated.sample_rate_hz = target.sample_rate_hz;
        truncated.samples.assign(target.samples.begin(),
                                 target.samples.end() - 4000);
        write_wav((est_dir / (first.id + "_est.wav")).string(), truncated,
                  WavEncoding::float32);

        const EvaluateSummary result = evaluate_dataset(eval);
        CHECK(result.scores.size() == 1);
        CHECK(result.missing_estimates == 1);
        CHECK(result.length_padded == 1);
        CHECK(result.scores.front().values.count("sisdr") == 1);
        CHECK(result.scores.front().values.count("sisdri") == 1);
        CHECK(result.scores.front().values.count("sure") == 1);

        // Scores survive the JSONL round trip.
        const fs::path scores_path = temp_dir() / "scores.jsonl";
        write_scores(result.scores, scores_path.string());
        const std::vector<RecordScores> back = read_scores(scores_path.string());
        REQUIRE(back.size() == 1);
        CHECK(back.front().id == result.scores.front().id);
        CHECK(back.front().values.at("sisdr") ==
              doctest::Approx(result.scores.front().values.at("sisdr")));
    }

    SUBCASE("wer needs transcripts") {
        eval.metrics = {"wer"};
        CHECK_THROWS_AS(evaluate_dataset(eval), ArgumentError);
    }

    SUBCASE("wer accepts a TSV or a directory of per-id text files") {
        const MixtureRecord& first = summary.records.front();
        fs::copy_file(fs::path(gen.out_dir) / first.target_path,
                      est_dir / (first.id + "_est.wav"));

        const fs::path hyp_tsv = temp_dir() / "hyp.tsv";
        const fs::path ref_dir = temp_dir() / "ref_texts";
        fs::remove_all(ref_dir);
        fs::create_directories(ref_dir);
        {
            std::ofstream hyp(hyp_tsv);
            hyp << first.id << "\tthe quick brown fox\n";
            std::ofstream ref(ref_dir / (first.id + ".txt"));
            ref << "The quick red fox.";
        }
        eval.metrics = {"wer"};
        eval.hyp_transcripts_path = hyp_tsv.string();
        eval.ref_transcripts_path = ref_dir.string();
        const EvaluateSummary result = evaluate_dataset(eval);
        REQUIRE(result.scores.size() == 1);
        CHECK(result.scores.front().values.at("wer") == 0.25);
    }
}
