#include "porte/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "porte/errors.hpp"

namespace porte {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

std::vector<double> de_mean(const std::vector<double>& x) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    std::vector<double> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] - mean;
    return out;
}

}  // namespace

double sisdr(const AudioSignal& est, const AudioSignal& ref, bool zero_mean, double clamp_db) {
    if (est.size() != ref.size()) throw ArgumentError("sisdr: signal lengths differ");
    if (est.empty()) throw ArgumentError("sisdr: empty signals");

    std::vector<double> e = est.samples;
    std::vector<double> r = ref.samples;
    if (zero_mean) {
        e = de_mean(e);
        r = de_mean(r);
    }

    const double ref_energy = dot(r, r);
    if (ref_energy <= 0.0) throw ArgumentError("sisdr: reference is all zero");

    const double alpha = dot(e, r) / ref_energy;
    const double target_energy = alpha * alpha * ref_energy;
    double noise_energy = 0.0;
    for (size_t i = 0; i < e.size(); ++i) {
        const double d = alpha * r[i] - e[i];
        noise_energy += d * d;
    }

    if (noise_energy <= 0.0) return clamp_db;
    if (target_energy <= 0.0) return -clamp_db;
    const double value = 10.0 * std::log10(target_energy / noise_energy);
    return std::clamp(value, -clamp_db, clamp_db);
}

double sisdr_improvement(const AudioSignal& est, const AudioSignal& mixture,
                         const AudioSignal& ref, bool zero_mean, double clamp_db) {
    if (mixture.size() != ref.size()) throw ArgumentError("sisdr_improvement: lengths differ");
    return sisdr(est, ref, zero_mean, clamp_db) - sisdr(mixture, ref, zero_mean, clamp_db);
}

double sure(const AudioSignal& est, const AudioSignal& ref,
            std::optional<std::pair<double, double>> crop, const SuREConfig& cfg) {
    if (est.size() != ref.size()) throw ArgumentError("sure: signal lengths differ");
    if (est.sample_rate_hz != ref.sample_rate_hz) throw ArgumentError("sure: rates differ");

    size_t lo = 0;
    size_t hi = ref.size();
    if (crop.has_value()) {
        lo = static_cast<size_t>(std::max(0.0, crop->first) * ref.sample_rate_hz);
        hi = std::min<size_t>(ref.size(),
                              static_cast<size_t>(crop->second * ref.sample_rate_hz + 0.5));
        if (lo >= hi) throw ArgumentError("sure: empty crop window");
    } else {
        // Derive the active span from the reference's own frame energies.
        const FrameEnergies g_full = frame_rms(ref, cfg.win_ms, cfg.hop_ms);
        double peak = 0.0;
        for (double v : g_full.values) peak = std::max(peak, v);
        const double tau = cfg.tau_rel * peak;
        const size_t win = ms_to_samples(cfg.win_ms, ref.sample_rate_hz);
        const size_t hop = ms_to_samples(cfg.hop_ms, ref.sample_rate_hz);
        size_t first = g_full.size(), last = 0;
        for (size_t i = 0; i < g_full.size(); ++i) {
            if (g_full.values[i] > tau) {
                if (first == g_full.size()) first = i;
                last = i;
            }
        }
        if (first == g_full.size()) throw SignalError("sure: reference has no active frames");
        lo = first * hop;
        hi = std::min(ref.size(), last * hop + win);
    }

    AudioSignal ref_crop{{ref.samples.begin() + static_cast<long>(lo),
                          ref.samples.begin() + static_cast<long>(hi)},
                         ref.sample_rate_hz};
    AudioSignal est_crop{{est.samples.begin() + static_cast<long>(lo),
                          est.samples.begin() + static_cast<long>(hi)},
                         est.sample_rate_hz};

    const FrameEnergies g = frame_rms(ref_crop, cfg.win_ms, cfg.hop_ms);
    const FrameEnergies g_hat = frame_rms(est_crop, cfg.win_ms, cfg.hop_ms);

    double peak = 0.0;
    for (double v : g.values) peak = std::max(peak, v);
    const double tau = cfg.tau_rel * peak;

    size_t active = 0;
    size_t suppressed = 0;
    for (size_t i = 0; i < g.size(); ++i) {
        if (g.values[i] > tau) {
            ++active;
            if (g_hat.values[i] < cfg.beta * g.values[i]) ++suppressed;
        }
    }
    if (active == 0) throw SignalError("sure: no frame exceeds the silence threshold");
    return static_cast<double>(suppressed) / static_cast<double>(active);
}

double wer(const std::vector<std::string>& hypothesis_tokens,
           const std::vector<std::string>& reference_tokens) {
    if (reference_tokens.empty()) throw ArgumentError("wer: empty reference");

    const size_t m = reference_tokens.size();
    const size_t n = hypothesis_tokens.size();
    // Two-row Levenshtein, unit costs.
    std::vector<size_t> prev(n + 1), cur(n + 1);
    for (size_t j = 0; j <= n; ++j) prev[j] = j;
    for (size_t i = 1; i <= m; ++i) {
        cur[0] = i;
        for (size_t j = 1; j <= n; ++j) {
            const size_t sub = prev[j - 1] + (reference_tokens[i - 1] == hypothesis_tokens[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return static_cast<double>(prev[n]) / static_cast<double>(m);
}

std::vector<std::string> normalize_tokens(const std::string& text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    for (unsigned char c : text) {
        if (std::isalnum(c) || c == '\'') {
            cleaned.push_back(static_cast<char>(std::tolower(c)));
        } else {
            cleaned.push_back(' ');
        }
    }
    std::vector<std::string> tokens;
    std::istringstream iss(cleaned);
    std::string tok;
    while (iss >> tok) tokens.push_back(tok);
    return tokens;
}

MetricReport aggregate_report(const std::vector<RecordScores>& records, const std::string& model) {
    if (records.empty()) throw ArgumentError("aggregate_report: no records");

    std::vector<RecordScores> sorted = records;
    std::sort(sorted.begin(), sorted.end(),
              [](const RecordScores& a, const RecordScores& b) { return a.id < b.id; });

    MetricReport report;
    report.model = model;
    report.bins = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};

    std::set<std::string> metric_names;
    for (const auto& r : sorted) {
        for (const auto& [name, _] : r.values) metric_names.insert(name);
    }
    // Keep the familiar ordering when the usual metrics are present.
    for (const char* name : {"sisdr", "sisdri", "sure", "wer"}) {
        if (metric_names.erase(name)) report.metrics.push_back(name);
    }
    report.metrics.insert(report.metrics.end(), metric_names.begin(), metric_names.end());

    for (const auto& metric : report.metrics) {
        double total = 0.0;
        size_t count = 0;
        std::map<long, std::pair<double, size_t>> bin_acc;
        for (const auto& r : sorted) {
            auto it = r.values.find(metric);
            if (it == r.values.end()) continue;
            total += it->second;
            ++count;
            auto& [sum, n] = bin_acc[std::lround(r.overlap_bin * 100.0)];
            sum += it->second;
            ++n;
        }
        if (count == 0) continue;
        report.overall[metric] = total / static_cast<double>(count);
        for (const auto& [bin, acc] : bin_acc) {
            report.per_bin[metric][bin] = acc.first / static_cast<double>(acc.second);
        }
    }
    return report;
}

namespace {

std::string format_cell(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

std::string report_to_csv(const MetricReport& report) {
    std::ostringstream os;
    os << "metric,model,avg,r0,r20,r40,r60,r80,r100\n";
    for (const auto& metric : report.metrics) {
        os << metric << ',' << report.model << ',' << format_cell(report.overall.at(metric));
        for (double bin : report.bins) {
            const long key = std::lround(bin * 100.0);
            const auto& per_bin = report.per_bin.at(metric);
            auto it = per_bin.find(key);
            os << ',';
            if (it != per_bin.end()) os << format_cell(it->second);
        }
        os << '\n';
    }
    return os.str();
}

std::string report_to_json(const MetricReport& report) {
    nlohmann::ordered_json j;
    j["model"] = report.model;
    j["columns"] = {"avg", "r0", "r20", "r40", "r60", "r80", "r100"};
    for (const auto& metric : report.metrics) {
        nlohmann::ordered_json row;
        row["avg"] = report.overall.at(metric);
        for (double bin : report.bins) {
            const long key = std::lround(bin * 100.0);
            const auto& per_bin = report.per_bin.at(metric);
            auto it = per_bin.find(key);
            row["r" + std::to_string(key)] =
                it != per_bin.end() ? nlohmann::ordered_json(it->second)
                                    : nlohmann::ordered_json(nullptr);
        }
        j["metrics"][metric] = row;
    }
    return j.dump(2);
}

}  // namespace porte
