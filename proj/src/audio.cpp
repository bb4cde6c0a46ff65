#include "porte/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>

#include "porte/errors.hpp"

namespace porte {

namespace {

constexpr uint16_t kFormatPcm = 0x0001;
constexpr uint16_t kFormatIeeeFloat = 0x0003;
constexpr uint16_t kFormatExtensible = 0xFFFE;

uint32_t read_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16(const unsigned char* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& out, uint32_t v) {
    out.push_back(v & 0xFF);
    out.push_back((v >> 8) & 0xFF);
    out.push_back((v >> 16) & 0xFF);
    out.push_back((v >> 24) & 0xFF);
}

void put_u16(std::vector<unsigned char>& out, uint16_t v) {
    out.push_back(v & 0xFF);
    out.push_back((v >> 8) & 0xFF);
}

void put_tag(std::vector<unsigned char>& out, const char* tag) {
    out.insert(out.end(), tag, tag + 4);
}

// Modified Bessel function of the first kind, order zero (series form).
double bessel_i0(double x) {
    double sum = 1.0;
    double term = 1.0;
    const double half_x = x / 2.0;
    for (int k = 1; k < 64; ++k) {
        term *= (half_x / k) * (half_x / k);
        sum += term;
        if (term < 1e-16 * sum) break;
    }
    return sum;
}

}  // namespace

AudioSignal read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");

    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failure on '" + path + "'");

    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw FormatError("'" + path + "' is not a RIFF/WAVE file");
    }

    uint16_t format = 0;
    uint16_t channels = 0;
    uint32_t rate = 0;
    uint16_t bits = 0;
    bool have_fmt = false;
    const unsigned char* data_ptr = nullptr;
    size_t data_len = 0;

    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* tag = reinterpret_cast<const char*>(bytes.data() + pos);
        uint32_t chunk_len = read_u32(bytes.data() + pos + 4);
        pos += 8;
        if (pos + chunk_len > bytes.size()) {
            // Tolerate a truncated final data chunk but nothing else.
            if (std::memcmp(tag, "data", 4) == 0) {
                chunk_len = static_cast<uint32_t>(bytes.size() - pos);
            } else {
                throw FormatError("'" + path + "': chunk extends past end of file");
            }
        }
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            if (chunk_len < 16) throw FormatError("'" + path + "': fmt chunk too short");
            const unsigned char* f = bytes.data() + pos;
            format = read_u16(f);
            channels = read_u16(f + 2);
            rate = read_u32(f + 4);
            bits = read_u16(f + 14);
            if (format == kFormatExtensible) {
                if (chunk_len < 40) throw FormatError("'" + path + "': truncated extensible fmt");
                format = read_u16(f + 24);  // first two bytes of the subformat GUID
            }
            have_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            data_ptr = bytes.data() + pos;
            data_len = chunk_len;
        }
        pos += chunk_len + (chunk_len & 1);  // chunks are word-aligned
    }

    if (!have_fmt || data_ptr == nullptr) {
        throw FormatError("'" + path + "': missing fmt or data chunk");
    }
    if (channels == 0 || rate == 0) {
        throw FormatError("'" + path + "': invalid channel count or sample rate");
    }

    const bool is_pcm16 = (format == kFormatPcm && bits == 16);
    const bool is_f32 = (format == kFormatIeeeFloat && bits == 32);
    if (!is_pcm16 && !is_f32) {
        throw FormatError("'" + path + "': unsupported codec (format tag " +
                          std::to_string(format) + ", " + std::to_string(bits) +
                          " bits); only PCM16 and float32 are handled");
    }

    const size_t bytes_per_sample = is_pcm16 ? 2 : 4;
    const size_t total_samples = data_len / (bytes_per_sample * channels);

    AudioSignal out;
    out.sample_rate_hz = static_cast<int>(rate);
    out.samples.resize(total_samples);
    for (size_t i = 0; i < total_samples; ++i) {
        double acc = 0.0;
        for (size_t c = 0; c < channels; ++c) {
            const unsigned char* p = data_ptr + (i * channels + c) * bytes_per_sample;
            if (is_pcm16) {
                int16_t s;
                std::memcpy(&s, p, 2);
                acc += static_cast<double>(s) / 32768.0;
            } else {
                float s;
                std::memcpy(&s, p, 4);
                acc += static_cast<double>(s);
            }
        }
        out.samples[i] = acc / channels;
    }
    return out;
}

void write_wav(const std::string& path, const AudioSignal& signal, WavEncoding encoding) {
    const size_t n = signal.samples.size();
    const uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : 32;
    const uint16_t format = encoding == WavEncoding::pcm16 ? kFormatPcm : kFormatIeeeFloat;
    const uint32_t bytes_per_sample = bits / 8;
    const uint32_t data_len = static_cast<uint32_t>(n * bytes_per_sample);
    const bool with_fact = encoding == WavEncoding::float32;
    const uint32_t riff_len = 4 + (8 + 16) + (with_fact ? 12 : 0) + (8 + data_len);

    std::vector<unsigned char> out;
    out.reserve(riff_len + 8);
    put_tag(out, "RIFF");
    put_u32(out, riff_len);
    put_tag(out, "WAVE");
    put_tag(out, "fmt ");
    put_u32(out, 16);
    put_u16(out, format);
    put_u16(out, 1);  // mono
    put_u32(out, static_cast<uint32_t>(signal.sample_rate_hz));
    put_u32(out, static_cast<uint32_t>(signal.sample_rate_hz) * bytes_per_sample);
    put_u16(out, static_cast<uint16_t>(bytes_per_sample));
    put_u16(out, bits);
    if (with_fact) {
        put_tag(out, "fact");
        put_u32(out, 4);
        put_u32(out, static_cast<uint32_t>(n));
    }
    put_tag(out, "data");
    put_u32(out, data_len);

    if (encoding == WavEncoding::pcm16) {
        for (double x : signal.samples) {
            double scaled = std::round(std::clamp(x, -1.0, 1.0) * 32768.0);
            int16_t s = static_cast<int16_t>(std::clamp(scaled, -32768.0, 32767.0));
            put_u16(out, static_cast<uint16_t>(s));
        }
    } else {
        for (double x : signal.samples) {
            float f = static_cast<float>(x);
            unsigned char buf[4];
            std::memcpy(buf, &f, 4);
            out.insert(out.end(), buf, buf + 4);
        }
    }

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!os) throw IoError("write failure on '" + path + "'");
}

AudioSignal resample(const AudioSignal& signal, int target_hz) {
    if (target_hz <= 0) throw ArgumentError("resample: target rate must be positive");
    if (signal.sample_rate_hz <= 0) throw ArgumentError("resample: source rate must be positive");
    if (target_hz == signal.sample_rate_hz) return signal;

    const double ratio = static_cast<double>(target_hz) / signal.sample_rate_hz;
    const size_t n_in = signal.samples.size();
    const size_t n_out = static_cast<size_t>(std::llround(static_cast<double>(n_in) * ratio));

    AudioSignal out;
    out.sample_rate_hz = target_hz;
    out.samples.assign(n_out, 0.0);
    if (n_in == 0 || n_out == 0) return out;

    // Kaiser-windowed sinc, beta 10 (~100 dB stopband). When downsampling,
    // the kernel cutoff drops to the target Nyquist and is stretched so the
    // zero-crossing count per side stays constant. Rational rates mean only
    // L distinct fractional offsets occur, so the taps are precomputed per
    // phase.
    constexpr int kZeroCrossings = 32;
    constexpr double kBeta = 10.0;
    constexpr double kRolloff = 0.945;
    const double cutoff = kRolloff * std::min(1.0, ratio);  // relative to input Nyquist
    const double half_width = kZeroCrossings / cutoff;      // in input samples
    const double i0_beta = bessel_i0(kBeta);

    const long g = std::gcd(static_cast<long>(signal.sample_rate_hz), static_cast<long>(target_hz));
    const long up = target_hz / g;    // L
    const long down = signal.sample_rate_hz / g;  // M

    const int taps_per_side = static_cast<int>(std::ceil(half_width));
    const int n_taps = 2 * taps_per_side + 1;
    const auto kernel = [&](double t) {
        const double w_arg = t / half_width;
        if (std::abs(w_arg) >= 1.0) return 0.0;
        const double st = t * cutoff;
        const double sinc = std::abs(st) < 1e-12 ? 1.0 : std::sin(M_PI * st) / (M_PI * st);
        const double window = bessel_i0(kBeta * std::sqrt(1.0 - w_arg * w_arg)) / i0_beta;
        return cutoff * sinc * window;
    };
    std::vector<std::vector<double>> phase_taps(static_cast<size_t>(up));
    for (long p = 0; p < up; ++p) {
        const double frac = static_cast<double>(p) / up;
        auto& taps = phase_taps[static_cast<size_t>(p)];
        taps.resize(static_cast<size_t>(n_taps));
        for (int j = 0; j < n_taps; ++j) {
            taps[static_cast<size_t>(j)] = kernel(j - taps_per_side - frac);
        }
    }

    for (size_t i = 0; i < n_out; ++i) {
        const long num = static_cast<long>(i) * down;  // position = num / up input samples
        const long base = num / up;
        const long phase = num % up;
        const auto& taps = phase_taps[static_cast<size_t>(phase)];
        const long k_lo = std::max(0L, base - taps_per_side);
        const long k_hi = std::min(static_cast<long>(n_in) - 1, base + taps_per_side);
        double acc = 0.0;
        for (long k = k_lo; k <= k_hi; ++k) {
            acc += signal.samples[static_cast<size_t>(k)] *
                   taps[static_cast<size_t>(k - base + taps_per_side)];
        }
        out.samples[i] = acc;
    }
    return out;
}

TrimResult trim_leading_silence(const AudioSignal& signal, double threshold_db_below_peak,
                                double win_ms, double hop_ms) {
    if (signal.empty()) throw SignalError("trim_leading_silence: empty signal");

    const FrameEnergies frames = frame_rms(signal, win_ms, hop_ms);
    const size_t hop = ms_to_samples(hop_ms, signal.sample_rate_hz);

    double peak = 0.0;
    for (double v : frames.values) peak = std::max(peak, v);
    const double threshold = peak * std::pow(10.0, threshold_db_below_peak / 20.0);

    // A signal shorter than one analysis window has no frames; treat it as
    // silent rather than passing it through untrimmed.
    size_t first_active = frames.values.size();
    for (size_t i = 0; i < frames.values.size(); ++i) {
        if (frames.values[i] > threshold) {
            first_active = i;
            break;
        }
    }
    if (peak <= 0.0 || first_active == frames.values.size()) {
        throw SignalError("trim_leading_silence: signal is fully silent at threshold");
    }

    const size_t start = first_active * hop;
    TrimResult result;
    result.signal.sample_rate_hz = signal.sample_rate_hz;
    result.signal.samples.assign(signal.samples.begin() + static_cast<long>(start),
                                 signal.samples.end());
    result.trimmed_seconds = static_cast<double>(start) / signal.sample_rate_hz;
    return result;
}

AudioSignal truncate(const AudioSignal& signal, double max_seconds) {
    if (max_seconds <= 0.0) throw ArgumentError("truncate: max_seconds must be positive");
    const size_t max_samples =
        static_cast<size_t>(std::floor(max_seconds * signal.sample_rate_hz + 0.5));
    if (signal.samples.size() <= max_samples) return signal;
    AudioSignal out;
    out.sample_rate_hz = signal.sample_rate_hz;
    out.samples.assign(signal.samples.begin(), signal.samples.begin() + static_cast<long>(max_samples));
    return out;
}

FrameEnergies frame_rms(const AudioSignal& signal, double win_ms, double hop_ms) {
    if (hop_ms <= 0.0 || win_ms < hop_ms) {
        throw ArgumentError("frame_rms: require win_ms >= hop_ms > 0");
    }
    const size_t win = ms_to_samples(win_ms, signal.sample_rate_hz);
    const size_t hop = ms_to_samples(hop_ms, signal.sample_rate_hz);
    if (win == 0 || hop == 0) throw ArgumentError("frame_rms: window rounds to zero samples");

    FrameEnergies out;
    out.win_ms = win_ms;
    out.hop_ms = hop_ms;
    out.origin_sample = 0;
    if (signal.samples.size() < win) return out;

    const size_t n_frames = (signal.samples.size() - win) / hop + 1;
    out.values.resize(n_frames);
    for (size_t f = 0; f < n_frames; ++f) {
        const size_t start = f * hop;
        double acc = 0.0;
        for (size_t i = start; i < start + win; ++i) {
            acc += signal.samples[i] * signal.samples[i];
        }
        out.values[f] = std::sqrt(acc / win);
    }
    return out;
}

}  // namespace porte
