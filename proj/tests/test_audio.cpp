#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "porte/audio.hpp"
#include "porte/errors.hpp"
#include "porte/rng.hpp"

using namespace porte;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const fs::path dir = fs::temp_directory_path() / "porte_test_audio";
    fs::create_directories(dir);
    return dir;
}

AudioSignal sine(double freq_hz, double seconds, int rate, double amplitude = 1.0) {
    AudioSignal s;
    s.sample_rate_hz = rate;
    const size_t n = static_cast<size_t>(seconds * rate);
    s.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
        s.samples[i] = amplitude * std::sin(2.0 * M_PI * freq_hz * i / rate);
    }
    return s;
}

double rms(const std::vector<double>& x) {
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return std::sqrt(acc / x.size());
}

// Minimal stereo PCM16 writer for the channel-averaging test.
void write_stereo_pcm16(const fs::path& path, const std::vector<int16_t>& left,
                        const std::vector<int16_t>& right, uint32_t rate) {
    std::vector<unsigned char> out;
    auto u32 = [&](uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF);
    };
    auto u16 = [&](uint16_t v) {
        out.push_back(v & 0xFF);
        out.push_back((v >> 8) & 0xFF);
    };
    auto tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };
    const uint32_t data_len = static_cast<uint32_t>(left.size() * 4);
    tag("RIFF");
    u32(36 + data_len);
    tag("WAVE");
    tag("fmt ");
    u32(16);
    u16(1);
    u16(2);
    u32(rate);
    u32(rate * 4);
    u16(4);
    u16(16);
    tag("data");
    u32(data_len);
    for (size_t i = 0; i < left.size(); ++i) {
        u16(static_cast<uint16_t>(left[i]));
        u16(static_cast<uint16_t>(right[i]));
    }
    std::ofstream os(path, std::ios::binary);
    os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

}  // namespace

TEST_CASE("wav roundtrip: 1 s pcm16 at 16 kHz has 16000 samples") {
    const fs::path path = temp_dir() / "one_second.wav";
    write_wav(path.string(), sine(440.0, 1.0, 16000, 0.5), WavEncoding::pcm16);
    const AudioSignal back = read_wav(path.string());
    CHECK(back.samples.size() == 16000);
    CHECK(back.sample_rate_hz == 16000);
}

TEST_CASE("stereo channels (+0.5, -0.5) average to silence") {
    const fs::path path = temp_dir() / "stereo.wav";
    std::vector<int16_t> left(800, 16384), right(800, -16384);
    write_stereo_pcm16(path, left, right, 16000);
    const AudioSignal mono = read_wav(path.string());
    REQUIRE(mono.samples.size() == 800);
    for (double v : mono.samples) CHECK(v == 0.0);
}

TEST_CASE("float32 write/read roundtrip is bit identical") {
    const fs::path path = temp_dir() / "f32.wav";
    Rng rng(3);
    AudioSignal sig;
    sig.sample_rate_hz = 16000;
    for (int i = 0; i < 5000; ++i) {
        sig.samples.push_back(static_cast<double>(static_cast<float>(rng.uniform(-1.0, 1.0))));
    }
    write_wav(path.string(), sig, WavEncoding::float32);
    const AudioSignal back = read_wav(path.string());
    REQUIRE(back.samples.size() == sig.samples.size());
    for (size_t i = 0; i < sig.samples.size(); ++i) CHECK(back.samples[i] == sig.samples[i]);
}

TEST_CASE("float32 roundtrip of arbitrary doubles stays within 2^-23") {
    const fs::path path = temp_dir() / "f32_oracle.wav";
    for (uint64_t seed = 1; seed <= 100; ++seed) {
        Rng rng(seed);
        AudioSignal sig;
        sig.sample_rate_hz = 16000;
        for (int i = 0; i < 256; ++i) sig.samples.push_back(rng.uniform(-1.0, 1.0));
        write_wav(path.string(), sig, WavEncoding::float32);
        const AudioSignal back = read_wav(path.string());
        double worst = 0.0;
        for (size_t i = 0; i < sig.samples.size(); ++i) {
            worst = std::max(worst, std::abs(back.samples[i] - sig.samples[i]));
        }
        CHECK(worst <= std::pow(2.0, -23.0));
    }
}

TEST_CASE("pcm16 quantization") {
    const fs::path path = temp_dir() / "pcm16.wav";

    SUBCASE("full-scale sample stores as 32767") {
        AudioSignal sig;
        sig.sample_rate_hz = 16000;
        sig.samples = {1.0, -1.0, 0.0};
        write_wav(path.string(), sig, WavEncoding::pcm16);
        std::ifstream in(path, std::ios::binary);
        std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
        int16_t first;
        std::memcpy(&first, bytes.data() + 44, 2);
        CHECK(first == 32767);
    }

    SUBCASE("per-sample roundtrip error at most 1/32768") {
        Rng rng(17);
        AudioSignal sig;
        sig.sample_rate_hz = 16000;
        for (int i = 0; i < 4000; ++i) sig.samples.push_back(rng.uniform(-1.0, 1.0));
        write_wav(path.string(), sig, WavEncoding::pcm16);
        const AudioSignal back = read_wav(path.string());
        for (size_t i = 0; i < sig.samples.size(); ++i) {
            CHECK(std::abs(back.samples[i] - sig.samples[i]) <= 1.0 / 32768.0);
        }
    }
}

TEST_CASE("read_wav rejects malformed input") {
    const fs::path bad = temp_dir() / "bad.wav";
    {
        std::ofstream os(bad, std::ios::binary);
        os << "this is not a riff file at all";
    }
    CHECK_THROWS_AS(read_wav(bad.string()), FormatError);
    CHECK_THROWS_AS(read_wav((temp_dir() / "does_not_exist.wav").string()), IoError);

    // 8-bit PCM is an unsupported codec.
    const fs::path pcm8 = temp_dir() / "pcm8.wav";
    {
        std::vector<unsigned char> out;
        auto u32 = [&](uint32_t v) {
            for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF);
        };
        auto u16 = [&](uint16_t v) {
            out.push_back(v & 0xFF);
            out.push_back((v >> 8) & 0xFF);
        };
        auto tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };
        tag("RIFF");
        u32(36 + 8);
        tag("WAVE");
        tag("fmt ");
        u32(16);
        u16(1);
        u16(1);
        u32(8000);
        u32(8000);
        u16(1);
        u16(8);
        tag("data");
        u32(8);
        for (int i = 0; i < 8; ++i) out.push_back(128);
        std::ofstream os(pcm8, std::ios::binary);
        os.write(reinterpret_cast<const char*>(out.data()),
                 static_cast<std::streamsize>(out.size()));
    }
    CHECK_THROWS_AS(read_wav(pcm8.string()), FormatError);
}

TEST_CASE("resample") {
    SUBCASE("same rate returns the signal unchanged") {
        const AudioSignal sig = sine(440.0, 0.5, 16000, 0.5);
        const AudioSignal out = resample(sig, 16000);
        CHECK(out.samples == sig.samples);
    }

    SUBCASE("1 kHz sine 48 -> 16 kHz preserves RMS within 0.1 dB") {
        const AudioSignal sig = sine(1000.0, 2.0, 48000, 0.5);
        const AudioSignal out = resample(sig, 16000);
        // Skip the filter edges where the kernel is truncated.
        std::vector<double> mid(out.samples.begin() + 200, out.samples.end() - 200);
        std::vector<double> mid_in(sig.samples.begin() + 600, sig.samples.end() - 600);
        const double delta_db = 20.0 * std::log10(rms(mid) / rms(mid_in));
        CHECK(std::abs(delta_db) < 0.1);
    }

    SUBCASE("length arithmetic: 2 s at 48 kHz becomes 32000 +- 1 samples") {
        AudioSignal sig = sine(100.0, 2.0, 48000);
        const AudioSignal out = resample(sig, 16000);
        CHECK(std::abs(static_cast<long>(out.samples.size()) - 32000L) <= 1);
    }

    SUBCASE("stopband: 9 kHz tone at 48 kHz is attenuated at least 60 dB at 16 kHz") {
        const AudioSignal sig = sine(9000.0, 1.0, 48000, 1.0);
        const AudioSignal out = resample(sig, 16000);
        std::vector<double> mid(out.samples.begin() + 200, out.samples.end() - 200);
        const double atten_db = 20.0 * std::log10(rms(mid) / (1.0 / std::sqrt(2.0)));
        CHECK(atten_db < -60.0);
    }

    SUBCASE("16 -> 48 -> 16 kHz reproduces band-limited content within 0.5 dB") {
        AudioSignal sig;
        sig.sample_rate_hz = 16000;
        sig.samples.assign(32000, 0.0);
        for (size_t i = 0; i < sig.samples.size(); ++i) {
            const double t = static_cast<double>(i) / 16000.0;
            sig.samples[i] = 0.3 * std::sin(2.0 * M_PI * 500.0 * t) +
                             0.2 * std::sin(2.0 * M_PI * 2100.0 * t) +
                             0.1 * std::sin(2.0 * M_PI * 6500.0 * t);
        }
        const AudioSignal back = resample(resample(sig, 48000), 16000);
        REQUIRE(back.samples.size() == sig.samples.size());
        std::vector<double> mid(sig.samples.begin() + 300, sig.samples.end() - 300);
        std::vector<double> mid_back(back.samples.begin() + 300, back.samples.end() - 300);
        const double level_db = 20.0 * std::log10(rms(mid_back) / rms(mid));
        CHECK(std::abs(level_db) < 0.5);
        std::vector<double> diff(mid.size());
        for (size_t i = 0; i < mid.size(); ++i) diff[i] = mid_back[i] - mid[i];
        CHECK(20.0 * std::log10(rms(diff) / rms(mid)) < -25.0);
    }

    SUBCASE("zero target rate is rejected") {
        CHECK_THROWS_AS(resample(sine(440.0, 0.1, 16000), 0), ArgumentError);
    }
}

TEST_CASE("trim_leading_silence") {
    SUBCASE("signal with no leading silence is unchanged") {
        const AudioSignal sig = sine(440.0, 1.0, 16000, 0.5);
        const TrimResult r = trim_leading_silence(sig, -40.0);
        CHECK(r.trimmed_seconds == 0.0);
        CHECK(r.signal.samples == sig.samples);
    }

    SUBCASE("one second of zeros then a tone trims 0.98 to 1.0 s") {
        AudioSignal sig;
        sig.sample_rate_hz = 16000;
        sig.samples.assign(16000, 0.0);
        const AudioSignal tone = sine(440.0, 1.0, 16000, 0.5);
        sig.samples.insert(sig.samples.end(), tone.samples.begin(), tone.samples.end());
        const TrimResult r = trim_leading_silence(sig, -40.0, 25.0, 10.0);
        CHECK(r.trimmed_seconds >= 0.98);
        CHECK(r.trimmed_seconds <= 1.0);
    }

    SUBCASE("all-zero signal raises") {
        AudioSignal sig;
        sig.sample_rate_hz = 16000;
        sig.samples.assign(8000, 0.0);
        CHECK_THROWS_AS(trim_leading_silence(sig, -40.0), SignalError);
    }

    SUBCASE("trimming is idempotent") {
        AudioSignal sig;
        sig.sample_rate_hz = 16000;
        sig.samples.assign(5000, 0.0);
        const AudioSignal tone = sine(300.0, 0.8, 16000, 0.4);
        sig.samples.insert(sig.samples.end(), tone.samples.begin(), tone.samples.end());
        const TrimResult once = trim_leading_silence(sig, -40.0);
        const TrimResult twice = trim_leading_silence(once.signal, -40.0);
        CHECK(twice.trimmed_seconds == 0.0);
        CHECK(twice.signal.samples == once.signal.samples);
    }
}

TEST_CASE("truncate") {
    CHECK(truncate(sine(100.0, 12.0, 16000), 10.0).duration_s() == doctest::Approx(10.0));
    const AudioSignal seven = sine(100.0, 7.0, 16000);
    CHECK(truncate(seven, 10.0).samples == seven.samples);
    const AudioSignal ten = sine(100.0, 10.0, 16000);
    CHECK(truncate(ten, 10.0).samples == ten.samples);  // boundary inclusive
    CHECK_THROWS_AS(truncate(seven, 0.0), ArgumentError);
}

TEST_CASE("frame_rms") {
    SUBCASE("constant signal gives constant frame RMS") {
        AudioSignal sig;
        sig.sample_rate_hz = 16000;
        sig.samples.assign(8000, 0.25);
        const FrameEnergies f = frame_rms(sig, 25.0, 10.0);
        REQUIRE(f.size() > 0);
        for (double v : f.values) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
    }

    SUBCASE("all-zero signal gives zero frames") {
        AudioSignal sig;
        sig.sample_rate_hz = 16000;
        sig.samples.assign(8000, 0.0);
        for (double v : frame_rms(sig, 25.0, 10.0).values) CHECK(v == 0.0);
    }

    SUBCASE("full-scale sine frames read 1/sqrt(2)") {
        const FrameEnergies f = frame_rms(sine(440.0, 1.0, 16000, 1.0), 25.0, 10.0);
        REQUIRE(f.size() > 0);
        for (double v : f.values) CHECK(std::abs(v - 1.0 / std::sqrt(2.0)) < 0.01);
    }

    SUBCASE("frame count bookkeeping and short-signal case") {
        AudioSignal sig;
        sig.sample_rate_hz = 16000;
        sig.samples.assign(399, 0.1);  // one sample short of a 25 ms window
        CHECK(frame_rms(sig, 25.0, 10.0).size() == 0);
        sig.samples.assign(400, 0.1);
        CHECK(frame_rms(sig, 25.0, 10.0).size() == 1);
        sig.samples.assign(1000, 0.1);
        CHECK(frame_rms(sig, 25.0, 10.0).size() == (1000 - 400) / 160 + 1);
    }

    SUBCASE("shift by one hop shifts frames by one index") {
        Rng rng(5);
        AudioSignal sig;
        sig.sample_rate_hz = 16000;
        for (int i = 0; i < 4000; ++i) sig.samples.push_back(rng.uniform(-0.5, 0.5));
        AudioSignal shifted;
        shifted.sample_rate_hz = 16000;
        shifted.samples.assign(160, 0.0);  // one 10 ms hop
        shifted.samples.insert(shifted.samples.end(), sig.samples.begin(), sig.samples.end());
        const FrameEnergies base = frame_rms(sig, 25.0, 10.0);
        const FrameEnergies moved = frame_rms(shifted, 25.0, 10.0);
        for (size_t i = 0; i + 1 < base.size(); ++i) {
            CHECK(moved.values[i + 1] == doctest::Approx(base.values[i]).epsilon(1e-12));
        }
    }

    SUBCASE("bad framing arguments are rejected") {
        CHECK_THROWS_AS(frame_rms(sine(100.0, 0.5, 16000), 10.0, 25.0), ArgumentError);
        CHECK_THROWS_AS(frame_rms(sine(100.0, 0.5, 16000), 25.0, 0.0), ArgumentError);
    }
}
