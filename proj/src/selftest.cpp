#include "porte/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "porte/audio.hpp"
#include "porte/dam.hpp"
#include "porte/errors.hpp"
#include "porte/metrics.hpp"
#include "porte/rng.hpp"

namespace porte {

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr double kGradEpsilon = 1e-5;
constexpr int kGradSeeds = 20;
constexpr size_t kParamCoordCap = 250;

std::string format_err(double v) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << v;
    return os.str();
}

FusionInputs random_inputs(int t_len, int dim, Rng& rng) {
    FusionInputs inp;
    inp.z_cross = Tensor::random(t_len, dim, rng);
    inp.z_self = Tensor::random(t_len, dim, rng);
    return inp;
}

using ForwardFn = Tensor (*)(const FusionInputs&, const DamParams&);
using BackwardFn = PathwayBackward (*)(const FusionInputs&, const DamParams&, const Tensor&);

// Scalar probe <G, forward(inputs)> as a function of the flattened inputs.
ValueGradFn input_probe(ForwardFn fwd, BackwardFn bwd, DamParams params, int t_len, int dim,
                        Tensor cotangent) {
    return [=](const std::vector<double>& flat) {
        FusionInputs inp;
        inp.z_cross = Tensor(t_len, dim);
        inp.z_self = Tensor(t_len, dim);
        const size_t half = inp.z_cross.data.size();
        std::copy(flat.begin(), flat.begin() + static_cast<long>(half), inp.z_cross.data.begin());
        std::copy(flat.begin() + static_cast<long>(half), flat.end(), inp.z_self.data.begin());

        const Tensor out = fwd(inp, params);
        double value = 0.0;
        for (size_t i = 0; i < out.data.size(); ++i) value += cotangent.data[i] * out.data[i];

        const PathwayBackward back = bwd(inp, params, cotangent);
        std::vector<double> grad;
        grad.reserve(flat.size());
        grad.insert(grad.end(), back.d_cross.data.begin(), back.d_cross.data.end());
        grad.insert(grad.end(), back.d_self.data.begin(), back.d_self.data.end());
        return std::make_pair(value, grad);
    };
}

// Scalar probe <G, forward(inputs)> as a function of the flattened params.
ValueGradFn param_probe(ForwardFn fwd, BackwardFn bwd, FusionInputs inp, DamParams tmpl,
                        Tensor cotangent) {
    return [=](const std::vector<double>& flat) {
        DamParams params = tmpl;
        unflatten_params(params, flat);
        const Tensor out = fwd(inp, params);
        double value = 0.0;
        for (size_t i = 0; i < out.data.size(); ++i) value += cotangent.data[i] * out.data[i];
        const PathwayBackward back = bwd(inp, params, cotangent);
        return std::make_pair(value, flatten_params(back.d_params));
    };
}

SelftestCase grad_case_over_seeds(const std::string& name,
                                  const std::function<GradCheckReport(uint64_t)>& run) {
    SelftestCase c;
    c.name = name;
    double worst = 0.0;
    c.pass = true;
    for (uint64_t seed = 1; seed <= kGradSeeds; ++seed) {
        const GradCheckReport report = run(seed);
        worst = std::max(worst, report.max_rel_error);
        if (!report.pass) c.pass = false;
    }
    c.detail = "max rel err " + format_err(worst) + " over " + std::to_string(kGradSeeds) +
               " seeds (tol " + format_err(kGradTolerance) + ")";
    return c;
}

SelftestCase check(const std::string& name, bool pass, const std::string& detail) {
    return SelftestCase{name, pass, detail};
}

AudioSignal vec_signal(std::vector<double> v) {
    AudioSignal s;
    s.sample_rate_hz = kCanonicalRateHz;
    s.samples = std::move(v);
    return s;
}

// Independent literal evaluation of the scale-invariant ratio, kept apart
// from the metrics implementation on purpose.
double sisdr_reference_formula(const std::vector<double>& est, const std::vector<double>& ref) {
    double dot_er = 0.0, dot_rr = 0.0;
    for (size_t i = 0; i < est.size(); ++i) {
        dot_er += est[i] * ref[i];
        dot_rr += ref[i] * ref[i];
    }
    const double a = dot_er / dot_rr;
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < est.size(); ++i) {
        const double s = a * ref[i];
        num += s * s;
        den += (s - est[i]) * (s - est[i]);
    }
    return 10.0 * std::log10(num / den);
}

}  // namespace

SelftestReport run_selftest(bool inject_wrong_gradient) {
    const auto t0 = std::chrono::steady_clock::now();
    SelftestReport report;
    auto add = [&](SelftestCase c) { report.cases.push_back(std::move(c)); };

    // --- Harness sanity ------------------------------------------------
    {
        ValueGradFn quad = [](const std::vector<double>& x) {
            double v = 0.0;
            std::vector<double> g(x.size());
            for (size_t i = 0; i < x.size(); ++i) {
                v += x[i] * x[i];
                g[i] = 2.0 * x[i];
            }
            return std::make_pair(v, g);
        };
        Rng rng(11);
        const std::vector<double> point = rng.normal_vector(32);
        const GradCheckReport ok = gradcheck(quad, point, kGradEpsilon, 1e-8);
        add(check("gradcheck_quadratic", ok.pass, "max rel err " + format_err(ok.max_rel_error)));

        ValueGradFn wrong = [&](const std::vector<double>& x) {
            auto [v, g] = quad(x);
            for (double& gi : g) gi *= 1.01;
            return std::make_pair(v, g);
        };
        const GradCheckReport bad = gradcheck(wrong, point, kGradEpsilon, kGradTolerance);
        add(check("gradcheck_detects_wrong_gradient", !bad.pass,
                  "scaled gradient flagged with rel err " + format_err(bad.max_rel_error)));
    }

    // --- Loss gradients -------------------------------------------------
    add(grad_case_over_seeds("sisdr_loss_gradient", [&](uint64_t seed) {
        Rng rng(seed);
        const std::vector<double> ref = rng.normal_vector(64);
        const std::vector<double> est = rng.normal_vector(64);
        ValueGradFn fn = [&, ref](const std::vector<double>& x) {
            ValueGrad vg = sisdr_loss(x, ref);
            if (inject_wrong_gradient) {
                for (double& g : vg.grad) g *= 1.01;
            }
            return std::make_pair(vg.value, vg.grad);
        };
        return gradcheck(fn, est, kGradEpsilon, kGradTolerance);
    }));

    add(grad_case_over_seeds("speaker_loss_gradient", [](uint64_t seed) {
        Rng rng(seed ^ 0xBEEF);
        const std::vector<double> e_ref = rng.normal_vector(128);
        const std::vector<double> e_est = rng.normal_vector(128);
        ValueGradFn fn = [e_ref](const std::vector<double>& x) {
            const ValueGrad vg = speaker_loss(e_ref, x);
            return std::make_pair(vg.value, vg.grad);
        };
        return gradcheck(fn, e_est, kGradEpsilon, kGradTolerance);
    }));

    add(grad_case_over_seeds("commitment_loss_gradient", [](uint64_t seed) {
        Rng rng(seed ^ 0xC0DE);
        const Tensor z_q = Tensor::random(4, 8, rng);
        const Tensor z_pre = Tensor::random(4, 8, rng);
        ValueGradFn fn = [z_q](const std::vector<double>& flat) {
            Tensor z(4, 8);
            z.data = flat;
            const TensorValueGrad vg = commitment_loss(z, z_q);
            return std::make_pair(vg.value, vg.grad.data);
        };
        return gradcheck(fn, z_pre.data, kGradEpsilon, 1e-6);
    }));

    // --- Pathway gradients (inputs and parameters) ----------------------
    struct PathwaySpec {
        const char* name;
        ForwardFn fwd;
        BackwardFn bwd;
    };
    const PathwaySpec pathways[] = {
        {"multi_scale_fusion", multi_scale_fusion, multi_scale_fusion_backward},
        {"adaptive_fusion", adaptive_fusion, adaptive_fusion_backward},
        {"dual_projection", dual_projection, dual_projection_backward},
        {"dam_forward", dam_forward, dam_backward},
    };
    for (const auto& spec : pathways) {
        add(grad_case_over_seeds(std::string(spec.name) + "_input_gradient", [&](uint64_t seed) {
            Rng rng(seed * 977);
            const int t_len = 2 + static_cast<int>(rng.uniform_index(7));  // up to 8
            const int dim = 4 + 2 * static_cast<int>(rng.uniform_index(3));  // 4, 6, 8
            const DamParams params = DamParams::random(dim, rng);
            const FusionInputs inp = random_inputs(t_len, dim, rng);
            const Tensor cotangent = Tensor::random(t_len, dim, rng);
            std::vector<double> point;
            point.insert(point.end(), inp.z_cross.data.begin(), inp.z_cross.data.end());
            point.insert(point.end(), inp.z_self.data.begin(), inp.z_self.data.end());
            return gradcheck(input_probe(spec.fwd, spec.bwd, params, t_len, dim, cotangent),
                             point, kGradEpsilon, kGradTolerance);
        }));
        add(grad_case_over_seeds(std::string(spec.name) + "_param_gradient", [&](uint64_t seed) {
            Rng rng(seed * 1301);
            const int t_len = 2 + static_cast<int>(rng.uniform_index(5));
            const int dim = 4 + 2 * static_cast<int>(rng.uniform_index(3));
            const DamParams params = DamParams::random(dim, rng);
            const FusionInputs inp = random_inputs(t_len, dim, rng);
            const Tensor cotangent = Tensor::random(t_len, dim, rng);
            return gradcheck(param_probe(spec.fwd, spec.bwd, inp, params, cotangent),
                             flatten_params(params), kGradEpsilon, kGradTolerance, kParamCoordCap,
                             seed);
        }));
    }

    add(grad_case_over_seeds("layer_aggregate_gradient", [](uint64_t seed) {
        Rng rng(seed * 31 + 5);
        const int layers = 2 + static_cast<int>(rng.uniform_index(3));
        const int t_len = 3, dim = 4;
        std::vector<Tensor> outputs;
        for (int l = 0; l < layers; ++l) outputs.push_back(Tensor::random(t_len, dim, rng));
        const Tensor cotangent = Tensor::random(t_len, dim, rng);
        // Point = [logits, layer tensors...].
        std::vector<double> point = rng.normal_vector(static_cast<size_t>(layers));
        for (const auto& o : outputs) point.insert(point.end(), o.data.begin(), o.data.end());
        ValueGradFn fn = [=](const std::vector<double>& flat) {
            std::vector<double> logits(flat.begin(), flat.begin() + layers);
            std::vector<Tensor> outs(static_cast<size_t>(layers), Tensor(t_len, dim));
            size_t pos = static_cast<size_t>(layers);
            for (auto& o : outs) {
                std::copy(flat.begin() + static_cast<long>(pos),
                          flat.begin() + static_cast<long>(pos + o.data.size()), o.data.begin());
                pos += o.data.size();
            }
            const Tensor agg = layer_aggregate(outs, logits);
            double value = 0.0;
            for (size_t i = 0; i < agg.data.size(); ++i) value += cotangent.data[i] * agg.data[i];
            const LayerAggregateBackward back = layer_aggregate_backward(outs, logits, cotangent);
            std::vector<double> grad = back.d_logits;
            for (const auto& dl : back.d_layers) grad.insert(grad.end(), dl.data.begin(), dl.data.end());
            return std::make_pair(value, grad);
        };
        return gradcheck(fn, point, kGradEpsilon, kGradTolerance);
    }));

    // --- Positional encoding properties ---------------------------------
    {
        bool norms_ok = true, shift_ok = true;
        double worst_norm = 0.0, worst_shift = 0.0;
        for (uint64_t seed = 1; seed <= 20; ++seed) {
            Rng rng(seed + 400);
            const int t_len = 6, dim = 16;
            const Tensor x = Tensor::random(t_len, dim, rng);
            std::vector<int> positions(t_len);
            for (int t = 0; t < t_len; ++t) positions[static_cast<size_t>(t)] = static_cast<int>(rng.uniform_index(500));
            const Tensor y = rope_apply(x, positions);
            for (int t = 0; t < t_len; ++t) {
                double nx = 0.0, ny = 0.0;
                for (int j = 0; j < dim; ++j) {
                    nx += x(t, j) * x(t, j);
                    ny += y(t, j) * y(t, j);
                }
                worst_norm = std::max(worst_norm, std::abs(std::sqrt(nx) - std::sqrt(ny)));
            }

            const Tensor q = Tensor::random(1, dim, rng);
            const Tensor k = Tensor::random(1, dim, rng);
            const int m = static_cast<int>(rng.uniform_index(200));
            const int n = static_cast<int>(rng.uniform_index(200));
            const int shift = static_cast<int>(rng.uniform_index(100));
            const Tensor qm = rope_apply(q, {m});
            const Tensor kn = rope_apply(k, {n});
            const Tensor qs = rope_apply(q, {m + shift});
            const Tensor ks = rope_apply(k, {n + shift});
            double base = 0.0, shifted = 0.0;
            for (int j = 0; j < dim; ++j) {
                base += qm(0, j) * kn(0, j);
                shifted += qs(0, j) * ks(0, j);
            }
            worst_shift = std::max(worst_shift, std::abs(base - shifted));
        }
        norms_ok = worst_norm <= 1e-6;
        shift_ok = worst_shift <= 1e-5;
        add(check("rope_norm_preservation", norms_ok, "max norm drift " + format_err(worst_norm)));
        add(check("rope_relative_shift_invariance", shift_ok,
                  "max inner-product drift " + format_err(worst_shift)));
    }

    // --- Aggregate structural checks -------------------------------------
    {
        Rng rng(77);
        const int t_len = 5, dim = 8;
        DamParams params = DamParams::random(dim, rng);
        const FusionInputs inp = random_inputs(t_len, dim, rng);

        params.branch_logits = {0.0, 0.0, 0.0};
        const Tensor mf = multi_scale_fusion(inp, params);
        const Tensor af = adaptive_fusion(inp, params);
        const Tensor dp = dual_projection(inp, params);
        const Tensor uniform = dam_forward(inp, params);
        double worst_uniform = 0.0;
        for (size_t i = 0; i < uniform.data.size(); ++i) {
            worst_uniform = std::max(worst_uniform,
                                     std::abs(uniform.data[i] - (mf.data[i] + af.data[i] + dp.data[i]) / 3.0));
        }
        add(check("branch_weights_uniform_at_zero_logits", worst_uniform <= 1e-6,
                  "max deviation " + format_err(worst_uniform)));

        params.branch_logits = {0.0, 0.0, 20.0};
        const Tensor saturated = dam_forward(inp, params);
        const Tensor dp2 = dual_projection(inp, params);
        double worst_sat = 0.0;
        for (size_t i = 0; i < saturated.data.size(); ++i) {
            worst_sat = std::max(worst_sat, std::abs(saturated.data[i] - dp2.data[i]));
        }
        add(check("branch_weights_saturate", worst_sat <= 1e-6,
                  "max deviation from selected pathway " + format_err(worst_sat)));

        // Independent re-evaluation of the weighted sum with random logits.
        params.branch_logits = {0.3, -1.1, 0.7};
        const std::vector<double> w = softmax(params.branch_logits);
        const Tensor fused = dam_forward(inp, params);
        const Tensor mf3 = multi_scale_fusion(inp, params);
        const Tensor af3 = adaptive_fusion(inp, params);
        const Tensor dp3 = dual_projection(inp, params);
        double worst_sum = 0.0;
        for (size_t i = 0; i < fused.data.size(); ++i) {
            const double expect = w[0] * mf3.data[i] + w[1] * af3.data[i] + w[2] * dp3.data[i];
            worst_sum = std::max(worst_sum, std::abs(fused.data[i] - expect));
        }
        add(check("branch_weighted_sum_reevaluation", worst_sum <= 1e-9,
                  "max deviation " + format_err(worst_sum)));
    }

    // --- Quantizer properties --------------------------------------------
    {
        bool monotone = true;
        bool extra_stage_ok = true;
        for (uint64_t seed = 1; seed <= 100; ++seed) {
            Rng rng(seed + 900);
            const int dim = 6;
            Codebook cb;
            double scale = 1.0;
            for (int s = 0; s < 3; ++s) {
                Tensor stage = Tensor::random(16, dim, rng, scale);
                // A zero codeword guarantees nearest-neighbor never makes
                // the residual worse.
                Tensor with_zero(17, dim);
                std::copy(stage.data.begin(), stage.data.end(), with_zero.data.begin());
                cb.stages.push_back(with_zero);
                scale *= 0.5;
            }
            const Tensor x = Tensor::random(5, dim, rng);
            const RvqResult r = rvq_quantize(x, cb);
            for (size_t s = 1; s < r.residual_norms.size(); ++s) {
                if (r.residual_norms[s] > r.residual_norms[s - 1] + 1e-12) monotone = false;
            }
            Codebook shorter;
            shorter.stages = {cb.stages[0], cb.stages[1]};
            const RvqResult r2 = rvq_quantize(x, shorter);
            if (r.residual_norms.back() > r2.residual_norms.back() + 1e-12) extra_stage_ok = false;
        }
        add(check("rvq_residual_norms_non_increasing", monotone, "100 random inputs"));
        add(check("rvq_extra_stage_never_hurts", extra_stage_ok, "100 random inputs"));

        // Exhaustive nearest-neighbor oracle for the code assignments.
        Rng rng(4242);
        const int dim = 5;
        Codebook cb;
        cb.stages.push_back(Tensor::random(12, dim, rng));
        cb.stages.push_back(Tensor::random(12, dim, rng, 0.5));
        const Tensor x = Tensor::random(8, dim, rng);
        const RvqResult r = rvq_quantize(x, cb);
        bool codes_ok = true;
        Tensor residual = x;
        for (size_t s = 0; s < cb.stages.size(); ++s) {
            const Tensor& stage = cb.stages[s];
            for (int t = 0; t < x.rows; ++t) {
                int best = -1;
                double best_dist = 0.0;
                for (int k = 0; k < stage.rows; ++k) {
                    double dist = 0.0;
                    for (int j = 0; j < dim; ++j) {
                        const double d = residual(t, j) - stage(k, j);
                        dist += d * d;
                    }
                    if (best < 0 || dist < best_dist) {
                        best = k;
                        best_dist = dist;
                    }
                }
                if (best != r.codes[s][static_cast<size_t>(t)]) codes_ok = false;
                for (int j = 0; j < dim; ++j) residual(t, j) -= stage(best, j);
            }
        }
        add(check("rvq_codes_match_exhaustive_search", codes_ok, "2 stages x 8 frames"));
    }

    // --- Rotation pass-through -------------------------------------------
    {
        double worst_out = 0.0, worst_orth = 0.0, worst_map = 0.0;
        for (uint64_t seed = 1; seed <= 100; ++seed) {
            Rng rng(seed + 3000);
            const size_t dim = 8;
            std::vector<double> e = rng.normal_vector(dim);
            std::vector<double> q = rng.normal_vector(dim);
            const RotationResult rr = rotation_trick(e, q);
            double nq = 0.0, ne = 0.0;
            for (size_t i = 0; i < dim; ++i) {
                worst_out = std::max(worst_out, std::abs(rr.output[i] - q[i]));
                nq += q[i] * q[i];
                ne += e[i] * e[i];
            }
            const double lambda = std::sqrt(nq) / std::sqrt(ne);
            // R = jacobian / lambda must be orthogonal and map e-hat to q-hat.
            for (size_t i = 0; i < dim; ++i) {
                for (size_t j = 0; j < dim; ++j) {
                    double acc = 0.0;
                    for (size_t k = 0; k < dim; ++k) {
                        acc += rr.frozen_jacobian(static_cast<int>(k), static_cast<int>(i)) *
                               rr.frozen_jacobian(static_cast<int>(k), static_cast<int>(j)) /
                               (lambda * lambda);
                    }
                    worst_orth = std::max(worst_orth, std::abs(acc - (i == j ? 1.0 : 0.0)));
                }
            }
            for (size_t i = 0; i < dim; ++i) {
                double acc = 0.0;
                for (size_t j = 0; j < dim; ++j) {
                    acc += rr.frozen_jacobian(static_cast<int>(i), static_cast<int>(j)) / lambda *
                           (e[j] / std::sqrt(ne));
                }
                worst_map = std::max(worst_map, std::abs(acc - q[i] / std::sqrt(nq)));
            }
        }
        add(check("rotation_output_equals_quantized", worst_out <= 1e-6,
                  "max |output - q| " + format_err(worst_out)));
        add(check("rotation_matrix_orthogonal", worst_orth <= 1e-6,
                  "max |R^T R - I| " + format_err(worst_orth)));
        add(check("rotation_maps_unit_e_to_unit_q", worst_map <= 1e-6,
                  "max deviation " + format_err(worst_map)));

        // Antipodal fallback still reproduces q.
        std::vector<double> e = {1.0, 0.0, 0.0, 0.0};
        std::vector<double> q = {-2.0, 1e-9, 0.0, 0.0};
        const RotationResult rr = rotation_trick(e, q);
        double worst = 0.0;
        for (size_t i = 0; i < e.size(); ++i) worst = std::max(worst, std::abs(rr.output[i] - q[i]));
        add(check("rotation_antipodal_fallback", worst <= 1e-6, "max |output - q| " + format_err(worst)));
    }

    // --- Metric properties -------------------------------------------------
    {
        double worst_scale = 0.0, worst_match = 0.0;
        for (uint64_t seed = 1; seed <= 100; ++seed) {
            Rng rng(seed + 5000);
            const AudioSignal ref = vec_signal(rng.normal_vector(256, 0.2));
            const AudioSignal est = vec_signal(rng.normal_vector(256, 0.2));
            // Pre-clamp comparisons: the +-60 dB clamp is a reporting
            // convention, not part of the formula.
            const double base = sisdr(est, ref, false, 1e18);
            AudioSignal scaled_est = est;
            const double alpha = rng.uniform(0.2, 5.0);
            for (double& v : scaled_est.samples) v *= alpha;
            worst_scale = std::max(worst_scale, std::abs(sisdr(scaled_est, ref, false, 1e18) - base));
            const double reference = sisdr_reference_formula(est.samples, ref.samples);
            // Relative in dB with a 1 dB floor: pure relative error is
            // ill-conditioned when the true value crosses 0 dB.
            worst_match = std::max(worst_match,
                                   std::abs(base - reference) / std::max(std::abs(reference), 1.0));
        }
        add(check("sisdr_scale_invariance", worst_scale <= 1e-6,
                  "max |delta| " + format_err(worst_scale) + " dB over 100 pairs"));
        add(check("sisdr_matches_literal_formula", worst_match <= 1e-9,
                  "max rel deviation " + format_err(worst_match)));

        const AudioSignal hand_ref = vec_signal({1.0, -1.0, 0.0, 0.0});
        const AudioSignal hand_est = vec_signal({1.0, -1.0, 1.0, -1.0});
        const double hand = sisdr(hand_est, hand_ref, false);
        add(check("sisdr_hand_case_zero_db", std::abs(hand) <= 1e-12,
                  "got " + std::to_string(hand) + " dB"));
    }

    {
        // SuRE identity / silence / scaling / monotonicity.
        Rng rng(6100);
        AudioSignal ref = vec_signal(std::vector<double>(32000, 0.0));
        for (size_t i = 0; i < ref.samples.size(); ++i) {
            ref.samples[i] = 0.4 * std::sin(2.0 * M_PI * 220.0 * i / kCanonicalRateHz);
        }
        const double identity = sure(ref, ref);
        AudioSignal silent = vec_signal(std::vector<double>(32000, 0.0));
        const double suppressed = sure(silent, ref);

        AudioSignal half = ref;
        for (size_t i = half.samples.size() / 2; i < half.samples.size(); ++i) half.samples[i] = 0.0;
        const double half_val = sure(half, ref);

        AudioSignal ref_scaled = ref, half_scaled = half;
        for (double& v : ref_scaled.samples) v *= 0.3;
        for (double& v : half_scaled.samples) v *= 0.3;
        const double scaled_val = sure(half_scaled, ref_scaled);

        bool monotone = true;
        for (int trial = 0; trial < 100; ++trial) {
            AudioSignal noisy_ref = vec_signal(rng.normal_vector(8000, 0.2));
            AudioSignal est = vec_signal(rng.normal_vector(8000, 0.2));
            const double before = sure(est, noisy_ref);
            // Zero an additional contiguous chunk of the estimate.
            const size_t start = rng.uniform_index(6000);
            const size_t len = 400 + rng.uniform_index(1600);
            AudioSignal est2 = est;
            for (size_t i = start; i < std::min(est2.samples.size(), start + len); ++i) {
                est2.samples[i] = 0.0;
            }
            if (sure(est2, noisy_ref) < before - 1e-12) monotone = false;
        }

        add(check("sure_identity_zero", identity == 0.0, "got " + std::to_string(identity)));
        add(check("sure_silent_one", suppressed == 1.0, "got " + std::to_string(suppressed)));
        add(check("sure_half_suppressed", std::abs(half_val - 0.5) <= 0.02,
                  "got " + std::to_string(half_val)));
        add(check("sure_scale_invariance", scaled_val == half_val,
                  "0.3x scaling moved SuRE by " + format_err(std::abs(scaled_val - half_val))));
        add(check("sure_monotone_under_zeroing", monotone, "100 random cases"));
    }

    {
        // Edit-distance triangle inequality via wer * reference length.
        Rng rng(7200);
        bool triangle = true;
        const std::vector<std::string> vocab = {"a", "b", "c", "d", "e"};
        auto random_tokens = [&](size_t n) {
            std::vector<std::string> out;
            for (size_t i = 0; i < n; ++i) out.push_back(vocab[rng.uniform_index(vocab.size())]);
            return out;
        };
        for (int trial = 0; trial < 200; ++trial) {
            const auto a = random_tokens(3 + rng.uniform_index(8));
            const auto b = random_tokens(3 + rng.uniform_index(8));
            const auto c = random_tokens(3 + rng.uniform_index(8));
            const double ab = wer(a, b) * static_cast<double>(b.size());
            const double bc = wer(b, c) * static_cast<double>(c.size());
            const double ac = wer(a, c) * static_cast<double>(c.size());
            if (ac > ab + bc + 1e-9) triangle = false;
        }
        const double quarter = wer({"a", "b", "x", "d"}, {"a", "b", "c", "d"});
        add(check("wer_triangle_inequality", triangle, "200 random triples"));
        add(check("wer_single_substitution", quarter == 0.25, "got " + std::to_string(quarter)));
    }

    {
        // Total loss combines the three terms with the fixed coefficients.
        Rng rng(8300);
        const std::vector<double> ref = rng.normal_vector(64);
        const std::vector<double> est = rng.normal_vector(64);
        const std::vector<double> e_ref = rng.normal_vector(32);
        const std::vector<double> e_est = rng.normal_vector(32);
        const Tensor z_q = Tensor::random(3, 8, rng);
        Tensor z_pre = Tensor::random(3, 8, rng);
        const LossWeights w;
        const double total = total_loss(est, ref, e_ref, e_est, z_pre, z_q, w);
        const double expected = sisdr_loss(est, ref).value +
                                w.lambda_s * speaker_loss(e_ref, e_est, w).value +
                                w.lambda_c * commitment_loss(z_pre, z_q).value;
        add(check("total_loss_term_sum", std::abs(total - expected) <= 1e-12,
                  "deviation " + format_err(std::abs(total - expected))));

        const double commit_before = commitment_loss(z_pre, z_q).value;
        z_pre.data[5] += 0.25;
        const double total2 = total_loss(est, ref, e_ref, e_est, z_pre, z_q, w);
        const double commit_after = commitment_loss(z_pre, z_q).value;
        const double lhs = total2 - total;
        const double rhs = w.lambda_c * (commit_after - commit_before);
        add(check("total_loss_commit_linearity", std::abs(lhs - rhs) <= 1e-12,
                  "deviation " + format_err(std::abs(lhs - rhs))));
    }

    report.all_pass = std::all_of(report.cases.begin(), report.cases.end(),
                                  [](const SelftestCase& c) { return c.pass; });
    report.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

std::string SelftestReport::to_json() const {
    nlohmann::ordered_json j;
    j["all_pass"] = all_pass;
    j["elapsed_seconds"] = elapsed_seconds;
    j["cases"] = nlohmann::ordered_json::array();
    for (const auto& c : cases) {
        j["cases"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    }
    return j.dump(2);
}

}  // namespace porte
