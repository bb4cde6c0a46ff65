#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "porte/errors.hpp"
#include "porte/evaluate.hpp"
#include "porte/generate.hpp"
#include "porte/manifest.hpp"
#include "porte/metrics.hpp"
#include "porte/selftest.hpp"
#include "porte/toycorpus.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;  // validation / property failure
constexpr int kExitIo = 2;       // I/O or file-format failure

uint64_t seed_or_env(uint64_t seed, bool seed_given) {
    if (seed_given) return seed;
    if (const char* env = std::getenv("PORTE_SEED")) {
        return std::strtoull(env, nullptr, 10);
    }
    return 0;
}

std::vector<int> parse_bins(const std::string& spec) {
    if (spec == "all") return {0, 20, 40, 60, 80, 100};
    std::vector<int> bins;
    std::string token;
    std::istringstream iss(spec);
    while (std::getline(iss, token, ',')) {
        if (!token.empty()) bins.push_back(std::stoi(token));
    }
    if (bins.empty()) throw porte::ArgumentError("--bins: no bins parsed from '" + spec + "'");
    return bins;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw porte::IoError("cannot open '" + path + "' for writing");
    out << text;
}

int cmd_generate(const porte::GenerateConfig& config) {
    const porte::GenerateSummary summary = porte::generate_dataset(config);

    nlohmann::ordered_json j;
    j["seed"] = config.master_seed;
    j["count"] = summary.records.size();
    j["corpus_utterances"] = summary.corpus_utterances;
    j["prompt_resamples"] = summary.prompt_resamples;
    for (const auto& [bin, n] : summary.per_bin_counts) {
        j["per_bin_counts"][std::to_string(bin)] = n;
    }
    write_text((fs::path(config.out_dir) / "summary.json").string(), j.dump(2) + "\n");

    std::printf("generated %zu mixtures (seed %llu) ->", summary.records.size(),
                static_cast<unsigned long long>(config.master_seed));
    for (const auto& [bin, n] : summary.per_bin_counts) std::printf(" %d%%:%d", bin, n);
    std::printf("  [%d prompt resamples]\n", summary.prompt_resamples);
    std::printf("manifest: %s\n", summary.manifest_path.c_str());
    return kExitOk;
}

int cmd_evaluate(const porte::EvaluateConfig& config, const std::string& out_path) {
    const porte::EvaluateSummary summary = porte::evaluate_dataset(config);
    porte::write_scores(summary.scores, out_path);
    std::printf("scored %zu records -> %s", summary.scores.size(), out_path.c_str());
    if (summary.missing_estimates > 0) {
        std::printf("  [%d estimates missing]", summary.missing_estimates);
    }
    if (summary.length_padded > 0) {
        std::printf("  [%d zero-padded to reference length]", summary.length_padded);
    }
    std::printf("\n");
    return kExitOk;
}

int cmd_report(const std::string& scores_path, const std::string& out_path,
               const std::string& format, const std::string& model) {
    const std::vector<porte::RecordScores> scores = porte::read_scores(scores_path);
    const porte::MetricReport report = porte::aggregate_report(scores, model);
    const std::string rendered =
        format == "json" ? porte::report_to_json(report) + "\n" : porte::report_to_csv(report);
    if (out_path.empty()) {
        std::fputs(rendered.c_str(), stdout);
    } else {
        write_text(out_path, rendered);
        std::printf("report (%s) -> %s\n", format.c_str(), out_path.c_str());
    }
    return kExitOk;
}

int cmd_selftest(const std::string& json_path, bool inject_wrong_gradient) {
    const porte::SelftestReport report = porte::run_selftest(inject_wrong_gradient);
    for (const auto& c : report.cases) {
        std::printf("[%s] %-42s %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
    }
    std::printf("%zu checks, %s in %.1f s\n", report.cases.size(),
                report.all_pass ? "all passed" : "FAILURES PRESENT", report.elapsed_seconds);
    if (!json_path.empty()) write_text(json_path, report.to_json() + "\n");
    return report.all_pass ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"overlap-controlled two-speaker mixture toolkit"};
    app.require_subcommand(1);

    // generate
    porte::GenerateConfig gen;
    std::string gen_bins = "all";
    uint64_t gen_seed = 0;
    auto* generate = app.add_subcommand("generate", "render mixtures, prompts, and a manifest");
    generate->add_option("--corpus", gen.corpus_dir, "corpus root directory")->required();
    generate->add_option("--speakers", gen.speakers_tsv,
                         "speaker gender TSV (default <corpus>/speakers.tsv)");
    generate->add_option("--out", gen.out_dir, "output directory")->required();
    generate->add_option("--count", gen.count, "number of mixtures")->check(CLI::PositiveNumber);
    auto* gen_seed_opt = generate->add_option("--seed", gen_seed, "master seed (env PORTE_SEED)");
    generate->add_option("--bins", gen_bins, "overlap bins, e.g. 'all' or '0,20,100'");
    generate->add_option("--workers", gen.workers, "parallel render workers");
    generate->add_option("--test-fraction", gen.test_fraction, "test split fraction");
    generate->add_flag("--speaker-disjoint", gen.speaker_disjoint_split,
                       "hold out whole speakers for the test split");

    // evaluate
    porte::EvaluateConfig eval;
    std::string eval_out = "scores.jsonl";
    std::string metrics_spec = "sisdr,sisdri,sure";
    bool no_zero_mean = false;
    auto* evaluate = app.add_subcommand("evaluate", "score estimates against a manifest");
    evaluate->add_option("--manifest", eval.manifest_path, "dataset manifest")->required();
    evaluate->add_option("--estimates", eval.estimates_dir, "directory of <id>_est.wav files")
        ->required();
    evaluate->add_option("--out", eval_out, "per-record scores JSONL");
    evaluate->add_option("--metrics", metrics_spec, "comma list of sisdr,sisdri,sure,wer");
    evaluate->add_flag("--no-zero-mean", no_zero_mean, "disable SISDR mean removal");
    evaluate->add_option("--sure-win-ms", eval.sure_cfg.win_ms, "SuRE frame length");
    evaluate->add_option("--sure-hop-ms", eval.sure_cfg.hop_ms, "SuRE frame hop");
    evaluate->add_option("--sure-beta", eval.sure_cfg.beta, "SuRE suppression threshold");
    evaluate->add_option("--sure-tau-rel", eval.sure_cfg.tau_rel, "SuRE silence threshold");
    evaluate->add_option("--transcripts", eval.hyp_transcripts_path,
                         "hypothesis transcripts TSV (id<TAB>text) for wer");
    evaluate->add_option("--ref-transcripts", eval.ref_transcripts_path,
                         "reference transcripts TSV for wer");
    evaluate->add_option("--workers", eval.workers, "parallel scoring workers");

    // report
    std::string report_scores, report_out, report_format = "csv", report_model = "est";
    auto* report = app.add_subcommand("report", "aggregate scores per overlap bin");
    report->add_option("--scores", report_scores, "scores JSONL from evaluate")->required();
    report->add_option("--out", report_out, "output path (stdout when omitted)");
    report->add_option("--format", report_format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
    report->add_option("--model", report_model, "model label for the report rows");

    // selftest
    std::string selftest_json;
    bool inject_wrong_gradient = false;
    auto* selftest = app.add_subcommand("selftest", "gradient and property verification suite");
    selftest->add_option("--json", selftest_json, "write the machine-readable report here");
    selftest->add_flag("--inject-wrong-gradient", inject_wrong_gradient)->group("");

    // toy-corpus
    porte::ToyCorpusConfig toy;
    auto* toy_cmd = app.add_subcommand("toy-corpus", "synthesize a small demo corpus");
    toy_cmd->add_option("--out", toy.out_dir, "corpus output directory")->required();
    toy_cmd->add_option("--speakers", toy.speakers, "speaker count");
    toy_cmd->add_option("--per-speaker", toy.utterances_per_speaker, "utterances per speaker");
    toy_cmd->add_option("--seed", toy.seed, "synthesis seed");
    toy_cmd->add_option("--rate", toy.sample_rate_hz, "corpus sample rate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitFailure;
    }

    try {
        if (generate->parsed()) {
            gen.master_seed = seed_or_env(gen_seed, gen_seed_opt->count() > 0);
            gen.bins = parse_bins(gen_bins);
            return cmd_generate(gen);
        }
        if (evaluate->parsed()) {
            eval.zero_mean = !no_zero_mean;
            eval.metrics.clear();
            std::istringstream iss(metrics_spec);
            std::string token;
            while (std::getline(iss, token, ',')) {
                if (!token.empty()) eval.metrics.push_back(token);
            }
            return cmd_evaluate(eval, eval_out);
        }
        if (report->parsed()) {
            return cmd_report(report_scores, report_out, report_format, report_model);
        }
        if (selftest->parsed()) {
            return cmd_selftest(selftest_json, inject_wrong_gradient);
        }
        if (toy_cmd->parsed()) {
            porte::make_toy_corpus(toy);
            std::printf("toy corpus (%d speakers x %d) -> %s\n", toy.speakers,
                        toy.utterances_per_speaker, toy.out_dir.c_str());
            return kExitOk;
        }
    } catch (const porte::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const porte::FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const porte::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const porte::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFailure;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "unexpected error: %s\n", e.what());
        return kExitFailure;
    }
    return kExitOk;
}
