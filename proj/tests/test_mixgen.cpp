#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "porte/errors.hpp"
#include "porte/manifest.hpp"
#include "porte/mixgen.hpp"
#include "porte/rng.hpp"
#include "porte/toycorpus.hpp"

using namespace porte;
namespace fs = std::filesystem;

namespace {

// Harmonic, syllable-modulated utterance long enough to survive trimming.
void write_utterance(const std::string& path, double active_seconds, double f0, int rate,
                     uint64_t seed) {
    Rng rng(seed);
    AudioSignal sig;
    sig.sample_rate_hz = rate;
    const size_t n = static_cast<size_t>(active_seconds * rate);
    sig.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate;
        double s = 0.0;
        for (int h = 1; h <= 12; ++h) {
            s += std::sin(2.0 * M_PI * h * f0 * t + 0.37 * h) / std::pow(h, 0.8);
        }
        const double env = 0.55 + 0.45 * std::sin(2.0 * M_PI * 3.9 * t + rng.uniform(0.0, 0.0));
        sig.samples[i] = 0.12 * env * s;
    }
    write_wav(path, sig, WavEncoding::float32);
}

struct Fixture {
    fs::path dir;
    std::vector<UtteranceRecord> corpus;
};

const Fixture& fixture() {
    static Fixture fx = [] {
        Fixture f;
        f.dir = fs::temp_directory_path() / "porte_test_mixgen";
        fs::create_directories(f.dir);
        ToyCorpusConfig cfg;
        cfg.out_dir = (f.dir / "corpus").string();
        cfg.speakers = 4;
        cfg.utterances_per_speaker = 1;
        cfg.seed = 99;
        make_toy_corpus(cfg);
        // Two extra 10.5 s sources so truncation pins lengths at 10 s.
        write_utterance((f.dir / "corpus/spk01/spk01_long.wav").string(), 10.5, 120.0, 24000, 1);
        write_utterance((f.dir / "corpus/spk02/spk02_long.wav").string(), 10.5, 210.0, 24000, 2);
        f.corpus =
            build_corpus_manifest((f.dir / "corpus").string(), (f.dir / "corpus/speakers.tsv").string())
                .records;
        return f;
    }();
    return fx;
}

const UtteranceRecord& find_utt(const std::string& needle) {
    for (const auto& u : fixture().corpus) {
        if (u.path.find(needle) != std::string::npos) return u;
    }
    throw std::runtime_error("fixture utterance not found: " + needle);
}

}  // namespace

TEST_CASE("compute_placement hand checks") {
    SUBCASE("r = 0.2 with equal 5 s sources") {
        const Placement p = compute_placement(5.0, 5.0, 0.2, 0.7);
        CHECK(p.delay_s == doctest::Approx(4.0).epsilon(1e-9));
        CHECK(p.overlap_s == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(p.mixture_len_s == doctest::Approx(9.0).epsilon(1e-9));
    }
    SUBCASE("full overlap of equal sources") {
        const Placement p = compute_placement(5.0, 5.0, 1.0, 0.7);
        CHECK(p.delay_s == 0.0);
        CHECK(p.overlap_s == doctest::Approx(5.0));
        CHECK(p.mixture_len_s == doctest::Approx(5.0));
    }
    SUBCASE("zero overlap inserts the pause") {
        const Placement p = compute_placement(5.0, 5.0, 0.0, 0.5);
        CHECK(p.delay_s == doctest::Approx(5.5).epsilon(1e-9));
        CHECK(p.overlap_s == 0.0);
        CHECK(p.mixture_len_s == doctest::Approx(10.5).epsilon(1e-9));
    }
    SUBCASE("full overlap keeps the shorter source inside the longer") {
        const Placement p = compute_placement(9.0, 6.0, 1.0, 0.7);
        CHECK(p.delay_s == doctest::Approx(3.0).epsilon(1e-6));
        CHECK(p.delay_s + 6.0 <= 9.0 + 1e-9);
    }
    SUBCASE("delay is quantized to whole samples") {
        const Placement p = compute_placement(5.000031, 5.0, 0.2, 0.7);
        const double samples = p.delay_s * kCanonicalRateHz;
        CHECK(samples == doctest::Approx(std::round(samples)).epsilon(1e-12));
    }
    SUBCASE("out-of-range arguments are rejected") {
        CHECK_THROWS_AS(compute_placement(3.0, 5.0, 0.2, 0.7), ArgumentError);
        CHECK_THROWS_AS(compute_placement(5.0, 5.0, 1.5, 0.7), ArgumentError);
        CHECK_THROWS_AS(compute_placement(5.0, 5.0, 0.0, 0.1), ArgumentError);
    }
}

TEST_CASE("sample_plan draws") {
    // File-less corpus: sampling never touches the audio.
    std::vector<UtteranceRecord> corpus;
    for (int s = 0; s < 6; ++s) {
        for (int u = 0; u < 2; ++u) {
            UtteranceRecord rec;
            rec.path = "spk" + std::to_string(s) + "_" + std::to_string(u) + ".wav";
            rec.speaker_id = "spk" + std::to_string(s);
            rec.gender = s % 2 == 0 ? Gender::male : Gender::female;
            rec.duration_s = 6.0 + s * 0.5;
            corpus.push_back(rec);
        }
    }

    SUBCASE("same seed reproduces the plan") {
        const MixturePlan a = sample_plan(corpus, 123456);
        const MixturePlan b = sample_plan(corpus, 123456);
        CHECK(a.first_utt.path == b.first_utt.path);
        CHECK(a.second_utt.path == b.second_utt.path);
        CHECK(a.snr_db == b.snr_db);
        CHECK(a.lufs_first == b.lufs_first);
        CHECK(a.lufs_second == b.lufs_second);
        CHECK(a.pause_s == b.pause_s);
        CHECK(a.overlap_ratio == b.overlap_ratio);
        CHECK((a.target_role == b.target_role));
    }

    SUBCASE("speakers are always distinct") {
        for (uint64_t seed = 0; seed < 500; ++seed) {
            const MixturePlan p = sample_plan(corpus, seed);
            CHECK(p.first_utt.speaker_id != p.second_utt.speaker_id);
        }
    }

    SUBCASE("snr draw is zero-mean gaussian with 4 dB std (pre-clamp)") {
        double sum = 0.0, sum_sq = 0.0;
        const int n = 10000;
        for (int i = 0; i < n; ++i) {
            const MixturePlan p = sample_plan(corpus, derive_seed(777, static_cast<uint64_t>(i)));
            sum += p.snr_db_raw;
            sum_sq += p.snr_db_raw * p.snr_db_raw;
            CHECK(std::abs(p.snr_db) <= kSnrClampDb);
        }
        const double mean = sum / n;
        const double stddev = std::sqrt(sum_sq / n - mean * mean);
        CHECK(std::abs(mean) < 0.15);
        CHECK(std::abs(stddev - 4.0) < 0.15);
    }

    SUBCASE("overlap bins are uniform over the six values") {
        std::map<double, int> counts;
        const int n = 6000;
        for (int i = 0; i < n; ++i) {
            counts[sample_plan(corpus, derive_seed(888, static_cast<uint64_t>(i))).overlap_ratio]++;
        }
        REQUIRE(counts.size() == 6);
        for (const auto& [bin, count] : counts) {
            CHECK(std::abs(count / static_cast<double>(n) - 1.0 / 6.0) < 0.02);
        }
    }

    SUBCASE("lufs targets are uniform on [-33, -25]") {
        double sum = 0.0;
        const int n = 1000;
        for (int i = 0; i < n; ++i) {
            const MixturePlan p = sample_plan(corpus, derive_seed(999, static_cast<uint64_t>(i)));
            CHECK(p.lufs_first >= -33.0);
            CHECK(p.lufs_first <= -25.0);
            sum += p.lufs_first;
        }
        CHECK(std::abs(sum / n - -29.0) < 0.3);
    }

    SUBCASE("a forced bin pins the overlap ratio") {
        for (int bin = 0; bin < 6; ++bin) {
            const MixturePlan p = sample_plan(corpus, 4321, bin);
            CHECK(p.overlap_ratio == kOverlapBins[static_cast<size_t>(bin)]);
        }
    }

    SUBCASE("a single-speaker corpus is rejected") {
        std::vector<UtteranceRecord> mono(corpus.begin(), corpus.begin() + 2);
        CHECK_THROWS_AS(sample_plan(mono, 1), CorpusError);
    }
}

TEST_CASE("render_mixture") {
    MixturePlan plan;
    plan.first_utt = find_utt("spk01_utt01");
    plan.second_utt = find_utt("spk02_utt01");
    plan.target_role = TargetRole::first;
    plan.overlap_ratio = 0.6;
    plan.snr_db = 6.0;
    plan.lufs_first = -28.0;
    plan.lufs_second = -30.0;
    plan.pause_s = 0.8;
    plan.seed = 42;

    SUBCASE("mixture equals the sum of the stems exactly") {
        const RenderedMixture r = render_mixture(plan);
        REQUIRE(r.mixture.size() == r.target_aligned.size());
        REQUIRE(r.mixture.size() == r.interferer_aligned.size());
        for (size_t i = 0; i < r.mixture.size(); ++i) {
            CHECK(r.mixture.samples[i] ==
                  r.target_aligned.samples[i] + r.interferer_aligned.samples[i]);
        }
    }

    SUBCASE("energy ratio hits the planned snr within 0.05 dB") {
        const RenderedMixture r = render_mixture(plan);
        double e_t = 0.0, e_i = 0.0;
        for (double v : r.target_aligned.samples) e_t += v * v;
        for (double v : r.interferer_aligned.samples) e_i += v * v;
        CHECK(std::abs(10.0 * std::log10(e_t / e_i) - 6.0) < 0.05);
    }

    SUBCASE("rendering the same plan twice is bit identical") {
        const RenderedMixture a = render_mixture(plan);
        const RenderedMixture b = render_mixture(plan);
        CHECK(a.mixture.samples == b.mixture.samples);
        CHECK(a.target_aligned.samples == b.target_aligned.samples);
        CHECK(a.interferer_aligned.samples == b.interferer_aligned.samples);
    }

    SUBCASE("10 s sources at r = 0.4 land within 0.001 of the requested ratio") {
        MixturePlan long_plan = plan;
        long_plan.first_utt = find_utt("spk01_long");
        long_plan.second_utt = find_utt("spk02_long");
        long_plan.overlap_ratio = 0.4;
        const RenderedMixture r = render_mixture(long_plan);
        CHECK(r.t_end_first - r.t_start_first == doctest::Approx(10.0).epsilon(1e-6));
        CHECK(std::abs(r.measured_overlap_ratio - 0.4) < 0.001);
    }

    SUBCASE("full overlap keeps the shorter source inside the longer span") {
        MixturePlan full = plan;
        full.overlap_ratio = 1.0;
        const RenderedMixture r = render_mixture(full);
        const double len_first = r.t_end_first - r.t_start_first;
        const double len_second = r.t_end_second - r.t_start_second;
        if (len_second <= len_first) {
            CHECK(r.t_start_second >= -1e-9);
            CHECK(r.t_end_second <= r.t_end_first + 1e-9);
        } else {
            CHECK(r.t_start_first >= r.t_start_second - 1e-9);
            CHECK(r.t_end_first <= r.t_end_second + 1e-9);
        }
    }

    SUBCASE("duration stays inside the documented envelope") {
        for (int bin = 0; bin < 6; ++bin) {
            MixturePlan p = sample_plan(fixture().corpus, derive_seed(31337, static_cast<uint64_t>(bin)), bin);
            const RenderedMixture r = render_mixture(p);
            CHECK(r.mixture.duration_s() >= 5.0);
            CHECK(r.mixture.duration_s() <= 21.2);
        }
    }
}
