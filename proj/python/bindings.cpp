#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "porte/audio.hpp"
#include "porte/dam.hpp"
#include "porte/loudness.hpp"
#include "porte/metrics.hpp"
#include "porte/mixgen.hpp"
#include "porte/rng.hpp"
#include "porte/selftest.hpp"

namespace py = pybind11;

namespace {

porte::AudioSignal to_signal(const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                             int rate) {
    if (a.ndim() != 1) throw porte::ArgumentError("expected a 1-D sample array");
    porte::AudioSignal s;
    s.sample_rate_hz = rate;
    s.samples.assign(a.data(), a.data() + a.size());
    return s;
}

py::array_t<double> from_vector(const std::vector<double>& v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

porte::Tensor to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw porte::ArgumentError("expected a 2-D array");
    porte::Tensor t(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), t.data.begin());
    return t;
}

py::array_t<double> from_tensor(const porte::Tensor& t) {
    py::array_t<double> out({static_cast<py::ssize_t>(t.rows), static_cast<py::ssize_t>(t.cols)});
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

std::vector<double> to_vector(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 1) throw porte::ArgumentError("expected a 1-D array");
    return std::vector<double>(a.data(), a.data() + a.size());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "overlap-controlled mixture synthesis, suppression-aware metrics, and the "
              "verified fusion/loss reference ops";

    py::register_exception<porte::Error>(m, "PorteError");

    // --- waveform ops -----------------------------------------------------
    m.def(
        "read_wav",
        [](const std::string& path) {
            const porte::AudioSignal s = porte::read_wav(path);
            return py::make_tuple(from_vector(s.samples), s.sample_rate_hz);
        },
        py::arg("path"), "Read a WAV file; returns (samples, sample_rate_hz).");
    m.def(
        "write_wav",
        [](const std::string& path, const py::array_t<double>& samples, int rate,
           const std::string& encoding) {
            porte::write_wav(path, to_signal(samples, rate),
                             encoding == "pcm16" ? porte::WavEncoding::pcm16
                                                 : porte::WavEncoding::float32);
        },
        py::arg("path"), py::arg("samples"), py::arg("sample_rate_hz"),
        py::arg("encoding") = "float32");
    m.def(
        "resample",
        [](const py::array_t<double>& samples, int rate, int target_hz) {
            return from_vector(porte::resample(to_signal(samples, rate), target_hz).samples);
        },
        py::arg("samples"), py::arg("sample_rate_hz"), py::arg("target_hz"));
    m.def(
        "trim_leading_silence",
        [](const py::array_t<double>& samples, int rate, double threshold_db, double win_ms,
           double hop_ms) {
            const porte::TrimResult r =
                porte::trim_leading_silence(to_signal(samples, rate), threshold_db, win_ms, hop_ms);
            return py::make_tuple(from_vector(r.signal.samples), r.trimmed_seconds);
        },
        py::arg("samples"), py::arg("sample_rate_hz"), py::arg("threshold_db_below_peak") = -40.0,
        py::arg("win_ms") = 25.0, py::arg("hop_ms") = 10.0);
    m.def(
        "frame_rms",
        [](const py::array_t<double>& samples, int rate, double win_ms, double hop_ms) {
            return from_vector(porte::frame_rms(to_signal(samples, rate), win_ms, hop_ms).values);
        },
        py::arg("samples"), py::arg("sample_rate_hz"), py::arg("win_ms") = 25.0,
        py::arg("hop_ms") = 10.0);

    // --- loudness -----------------------------------------------------------
    m.def(
        "integrated_loudness",
        [](const py::array_t<double>& samples, int rate) {
            return porte::integrated_loudness(to_signal(samples, rate)).lufs;
        },
        py::arg("samples"), py::arg("sample_rate_hz"));
    m.def(
        "normalize_loudness",
        [](const py::array_t<double>& samples, int rate, double target_lufs) {
            const porte::NormalizeResult r =
                porte::normalize_loudness(to_signal(samples, rate), target_lufs);
            return py::make_tuple(from_vector(r.signal.samples), r.applied_gain_db);
        },
        py::arg("samples"), py::arg("sample_rate_hz"), py::arg("target_lufs"));

    // --- metrics -------------------------------------------------------------
    m.def(
        "sisdr",
        [](const py::array_t<double>& est, const py::array_t<double>& ref, bool zero_mean,
           double clamp_db) {
            return porte::sisdr(to_signal(est, porte::kCanonicalRateHz),
                                to_signal(ref, porte::kCanonicalRateHz), zero_mean, clamp_db);
        },
        py::arg("est"), py::arg("ref"), py::arg("zero_mean") = true, py::arg("clamp_db") = 60.0);
    m.def(
        "sisdr_improvement",
        [](const py::array_t<double>& est, const py::array_t<double>& mixture,
           const py::array_t<double>& ref, bool zero_mean, double clamp_db) {
            return porte::sisdr_improvement(to_signal(est, porte::kCanonicalRateHz),
                                            to_signal(mixture, porte::kCanonicalRateHz),
                                            to_signal(ref, porte::kCanonicalRateHz), zero_mean,
                                            clamp_db);
        },
        py::arg("est"), py::arg("mixture"), py::arg("ref"), py::arg("zero_mean") = true,
        py::arg("clamp_db") = 60.0);
    m.def(
        "sure",
        [](const py::array_t<double>& est, const py::array_t<double>& ref, int rate,
           std::optional<std::pair<double, double>> crop, double tau_rel, double beta,
           double win_ms, double hop_ms) {
            porte::SuREConfig cfg;
            cfg.tau_rel = tau_rel;
            cfg.beta = beta;
            cfg.win_ms = win_ms;
            cfg.hop_ms = hop_ms;
            return porte::sure(to_signal(est, rate), to_signal(ref, rate), crop, cfg);
        },
        py::arg("est"), py::arg("ref"), py::arg("sample_rate_hz") = porte::kCanonicalRateHz,
        py::arg("crop") = std::nullopt, py::arg("tau_rel") = 0.01, py::arg("beta") = 0.1,
        py::arg("win_ms") = 25.0, py::arg("hop_ms") = 10.0);
    m.def("wer", &porte::wer, py::arg("hypothesis_tokens"), py::arg("reference_tokens"));
    m.def("normalize_tokens", &porte::normalize_tokens, py::arg("text"));

    // --- placement -------------------------------------------------------------
    m.def(
        "compute_placement",
        [](double len_first_s, double len_second_s, double overlap_ratio, double pause_s) {
            const porte::Placement p =
                porte::compute_placement(len_first_s, len_second_s, overlap_ratio, pause_s);
            return py::make_tuple(p.delay_s, p.overlap_s, p.mixture_len_s);
        },
        py::arg("len_first_s"), py::arg("len_second_s"), py::arg("overlap_ratio"),
        py::arg("pause_s") = 0.5);

    // --- fusion / loss reference ops ----------------------------------------
    py::class_<porte::DamParams>(m, "DamParams")
        .def_static("zeros", &porte::DamParams::zeros, py::arg("dim"))
        .def_static(
            "random",
            [](int dim, uint64_t seed) {
                porte::Rng rng(seed);
                return porte::DamParams::random(dim, rng);
            },
            py::arg("dim"), py::arg("seed"))
        .def_readonly("dim", &porte::DamParams::dim)
        .def_property(
            "branch_logits",
            [](const porte::DamParams& p) { return p.branch_logits; },
            [](porte::DamParams& p, const std::vector<double>& v) {
                if (v.size() != 3) throw porte::ArgumentError("branch_logits must have length 3");
                p.branch_logits = v;
            });

    auto fusion_op = [](porte::Tensor (*fn)(const porte::FusionInputs&, const porte::DamParams&)) {
        return [fn](const py::array_t<double>& z_cross, const py::array_t<double>& z_self,
                    const porte::DamParams& params) {
            porte::FusionInputs inp{to_tensor(z_cross), to_tensor(z_self)};
            return from_tensor(fn(inp, params));
        };
    };
    m.def("multi_scale_fusion", fusion_op(porte::multi_scale_fusion), py::arg("z_cross"),
          py::arg("z_self"), py::arg("params"));
    m.def("adaptive_fusion", fusion_op(porte::adaptive_fusion), py::arg("z_cross"),
          py::arg("z_self"), py::arg("params"));
    m.def("dual_projection", fusion_op(porte::dual_projection), py::arg("z_cross"),
          py::arg("z_self"), py::arg("params"));
    m.def("dam_forward", fusion_op(porte::dam_forward), py::arg("z_cross"), py::arg("z_self"),
          py::arg("params"));

    m.def(
        "rope_apply",
        [](const py::array_t<double>& x, const std::vector<int>& positions) {
            return from_tensor(porte::rope_apply(to_tensor(x), positions));
        },
        py::arg("x"), py::arg("positions"));

    m.def(
        "sisdr_loss",
        [](const py::array_t<double>& est, const py::array_t<double>& ref, bool zero_mean) {
            const porte::ValueGrad vg = porte::sisdr_loss(to_vector(est), to_vector(ref), zero_mean);
            return py::make_tuple(vg.value, from_vector(vg.grad));
        },
        py::arg("est"), py::arg("ref"), py::arg("zero_mean") = false);
    m.def(
        "speaker_loss",
        [](const py::array_t<double>& e_ref, const py::array_t<double>& e_est) {
            const porte::ValueGrad vg = porte::speaker_loss(to_vector(e_ref), to_vector(e_est));
            return py::make_tuple(vg.value, from_vector(vg.grad));
        },
        py::arg("e_ref"), py::arg("e_est"));
    m.def(
        "commitment_loss",
        [](const py::array_t<double>& z_pre, const py::array_t<double>& z_q) {
            const porte::TensorValueGrad vg =
                porte::commitment_loss(to_tensor(z_pre), to_tensor(z_q));
            return py::make_tuple(vg.value, from_tensor(vg.grad));
        },
        py::arg("z_pre"), py::arg("z_q"));
    m.def(
        "total_loss",
        [](const py::array_t<double>& est, const py::array_t<double>& ref,
           const py::array_t<double>& e_ref, const py::array_t<double>& e_est,
           const py::array_t<double>& z_pre, const py::array_t<double>& z_q) {
            return porte::total_loss(to_vector(est), to_vector(ref), to_vector(e_ref),
                                     to_vector(e_est), to_tensor(z_pre), to_tensor(z_q));
        },
        py::arg("est"), py::arg("ref"), py::arg("e_ref"), py::arg("e_est"), py::arg("z_pre"),
        py::arg("z_q"));

    m.def(
        "rvq_quantize",
        [](const py::array_t<double>& x, const std::vector<py::array_t<double>>& stages) {
            porte::Codebook cb;
            for (const auto& s : stages) cb.stages.push_back(to_tensor(s));
            const porte::RvqResult r = porte::rvq_quantize(to_tensor(x), cb);
            return py::make_tuple(r.codes, from_tensor(r.quantized), r.residual_norms);
        },
        py::arg("x"), py::arg("stages"),
        "Returns (codes per stage, quantized, residual norms per stage).");
    m.def(
        "rotation_trick",
        [](const py::array_t<double>& e, const py::array_t<double>& q) {
            const porte::RotationResult r = porte::rotation_trick(to_vector(e), to_vector(q));
            return py::make_tuple(from_vector(r.output), from_tensor(r.frozen_jacobian));
        },
        py::arg("e"), py::arg("q"));

    m.def(
        "run_selftest",
        []() {
            const porte::SelftestReport r = porte::run_selftest(false);
            return py::make_tuple(r.all_pass, r.to_json());
        },
        "Run the gradcheck and property suite; returns (all_pass, json_report).");

    m.attr("CANONICAL_RATE_HZ") = porte::kCanonicalRateHz;
}
