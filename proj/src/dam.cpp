#include "porte/dam.hpp"

#include <algorithm>
#include <cmath>

#include "porte/errors.hpp"

namespace porte {

namespace {

constexpr double kLn10 = 2.302585092994046;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / M_SQRT2)); }

double gelu_derivative(double x) {
    const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return 0.5 * (1.0 + std::erf(x / M_SQRT2)) + x * phi;
}

double norm(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

void check_inputs(const FusionInputs& inp, const DamParams& params, const char* op) {
    if (!inp.z_cross.same_shape(inp.z_self)) {
        throw ArgumentError(std::string(op) + ": z_cross and z_self shapes differ");
    }
    if (inp.z_cross.cols != params.dim) {
        throw ArgumentError(std::string(op) + ": feature dim does not match params");
    }
    if (inp.z_cross.rows < 1) throw ArgumentError(std::string(op) + ": need at least one frame");
}

// [z_cross; z_self; z_cross - z_self] along the feature axis.
Tensor stacked_input(const FusionInputs& inp) {
    const int t_len = inp.z_cross.rows;
    const int d = inp.z_cross.cols;
    Tensor u(t_len, 3 * d);
    for (int t = 0; t < t_len; ++t) {
        for (int j = 0; j < d; ++j) {
            u(t, j) = inp.z_cross(t, j);
            u(t, d + j) = inp.z_self(t, j);
            u(t, 2 * d + j) = inp.z_cross(t, j) - inp.z_self(t, j);
        }
    }
    return u;
}

// Routes gradient on the stacked input back to the two streams.
void scatter_stacked_grad(const Tensor& d_u, Tensor& d_cross, Tensor& d_self) {
    const int t_len = d_u.rows;
    const int d = d_u.cols / 3;
    for (int t = 0; t < t_len; ++t) {
        for (int j = 0; j < d; ++j) {
            d_cross(t, j) += d_u(t, j) + d_u(t, 2 * d + j);
            d_self(t, j) += d_u(t, d + j) - d_u(t, 2 * d + j);
        }
    }
}

Tensor conv1d_same(const Tensor& u, const Conv1D& conv, int out_dim) {
    const int t_len = u.rows;
    const int in_dim = u.cols;
    const int offset = conv.kernel / 2;
    Tensor out(t_len, out_dim);
    for (int t = 0; t < t_len; ++t) {
        for (int o = 0; o < out_dim; ++o) {
            double acc = conv.bias[static_cast<size_t>(o)];
            for (int tap = 0; tap < conv.kernel; ++tap) {
                const int src = t + tap - offset;
                if (src < 0 || src >= t_len) continue;
                const double* w = &conv.weight(o, tap * in_dim);
                const double* x = &u(src, 0);
                for (int i = 0; i < in_dim; ++i) acc += w[i] * x[i];
            }
            out(t, o) = acc;
        }
    }
    return out;
}

void conv1d_same_backward(const Tensor& u, const Conv1D& conv, const Tensor& d_out,
                          Conv1D& d_conv, Tensor& d_u) {
    const int t_len = u.rows;
    const int in_dim = u.cols;
    const int out_dim = d_out.cols;
    const int offset = conv.kernel / 2;
    for (int t = 0; t < t_len; ++t) {
        for (int o = 0; o < out_dim; ++o) {
            const double g = d_out(t, o);
            if (g == 0.0) continue;
            d_conv.bias[static_cast<size_t>(o)] += g;
            for (int tap = 0; tap < conv.kernel; ++tap) {
                const int src = t + tap - offset;
                if (src < 0 || src >= t_len) continue;
                double* dw = &d_conv.weight(o, tap * in_dim);
                const double* w = &conv.weight(o, tap * in_dim);
                const double* x = &u(src, 0);
                double* dx = &d_u(src, 0);
                for (int i = 0; i < in_dim; ++i) {
                    dw[i] += g * x[i];
                    dx[i] += g * w[i];
                }
            }
        }
    }
}

// Time-pooled mean of |z_cross - z_self| per feature.
std::vector<double> pooled_abs_diff(const FusionInputs& inp) {
    const int t_len = inp.z_cross.rows;
    const int d = inp.z_cross.cols;
    std::vector<double> p(static_cast<size_t>(d), 0.0);
    for (int t = 0; t < t_len; ++t) {
        for (int j = 0; j < d; ++j) {
            p[static_cast<size_t>(j)] += std::abs(inp.z_cross(t, j) - inp.z_self(t, j));
        }
    }
    for (double& v : p) v /= t_len;
    return p;
}

std::vector<double> scale_logits(const DamParams& params, const std::vector<double>& pooled) {
    std::vector<double> s(3, 0.0);
    for (int k = 0; k < 3; ++k) {
        for (int j = 0; j < params.dim; ++j) {
            s[static_cast<size_t>(k)] += params.scale_map(k, j) * pooled[static_cast<size_t>(j)];
        }
    }
    return s;
}

Mlp mlp_zeros(int dim) {
    Mlp m;
    m.w1 = Tensor(dim, dim);
    m.b1.assign(static_cast<size_t>(dim), 0.0);
    m.w2 = Tensor(dim, dim);
    m.b2.assign(static_cast<size_t>(dim), 0.0);
    return m;
}

Tensor mlp_apply(const Mlp& mlp, const Tensor& x) {
    const int t_len = x.rows;
    const int d = x.cols;
    Tensor out(t_len, d);
    std::vector<double> h(static_cast<size_t>(d));
    for (int t = 0; t < t_len; ++t) {
        for (int o = 0; o < d; ++o) {
            double acc = mlp.b1[static_cast<size_t>(o)];
            for (int i = 0; i < d; ++i) acc += mlp.w1(o, i) * x(t, i);
            h[static_cast<size_t>(o)] = gelu(acc);
        }
        for (int o = 0; o < d; ++o) {
            double acc = mlp.b2[static_cast<size_t>(o)];
            for (int i = 0; i < d; ++i) acc += mlp.w2(o, i) * h[static_cast<size_t>(i)];
            out(t, o) = acc;
        }
    }
    return out;
}

void mlp_backward(const Mlp& mlp, const Tensor& x, const Tensor& d_out, Mlp& d_mlp,
                  Tensor& d_x) {
    const int t_len = x.rows;
    const int d = x.cols;
    std::vector<double> pre(static_cast<size_t>(d));
    std::vector<double> act(static_cast<size_t>(d));
    std::vector<double> d_act(static_cast<size_t>(d));
    std::vector<double> d_pre(static_cast<size_t>(d));
    for (int t = 0; t < t_len; ++t) {
        for (int o = 0; o < d; ++o) {
            double acc = mlp.b1[static_cast<size_t>(o)];
            for (int i = 0; i < d; ++i) acc += mlp.w1(o, i) * x(t, i);
            pre[static_cast<size_t>(o)] = acc;
            act[static_cast<size_t>(o)] = gelu(acc);
        }
        std::fill(d_act.begin(), d_act.end(), 0.0);
        for (int o = 0; o < d; ++o) {
            const double g = d_out(t, o);
            if (g == 0.0) continue;
            d_mlp.b2[static_cast<size_t>(o)] += g;
            for (int i = 0; i < d; ++i) {
                d_mlp.w2(o, i) += g * act[static_cast<size_t>(i)];
                d_act[static_cast<size_t>(i)] += g * mlp.w2(o, i);
            }
        }
        for (int o = 0; o < d; ++o) {
            d_pre[static_cast<size_t>(o)] =
                d_act[static_cast<size_t>(o)] * gelu_derivative(pre[static_cast<size_t>(o)]);
        }
        for (int o = 0; o < d; ++o) {
            const double g = d_pre[static_cast<size_t>(o)];
            if (g == 0.0) continue;
            d_mlp.b1[static_cast<size_t>(o)] += g;
            for (int i = 0; i < d; ++i) {
                d_mlp.w1(o, i) += g * x(t, i);
                d_x(t, i) += g * mlp.w1(o, i);
            }
        }
    }
}

double tensor_dot(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) acc += a.data[i] * b.data[i];
    return acc;
}

Tensor scaled(const Tensor& a, double s) {
    Tensor out = a;
    for (double& v : out.data) v *= s;
    return out;
}

}  // namespace

Tensor Tensor::random(int r, int c, Rng& rng, double scale) {
    Tensor t(r, c);
    for (double& v : t.data) v = rng.normal(0.0, scale);
    return t;
}

DamParams DamParams::zeros(int dim) {
    DamParams p;
    p.dim = dim;
    const int kernels[3] = {3, 5, 7};
    for (int k = 0; k < 3; ++k) {
        p.conv[static_cast<size_t>(k)].kernel = kernels[k];
        p.conv[static_cast<size_t>(k)].weight = Tensor(dim, kernels[k] * 3 * dim);
        p.conv[static_cast<size_t>(k)].bias.assign(static_cast<size_t>(dim), 0.0);
    }
    p.scale_map = Tensor(3, dim);
    p.gate_weight = Tensor(dim, 3 * dim);
    p.gate_bias.assign(static_cast<size_t>(dim), 0.0);
    p.proj_cross = mlp_zeros(dim);
    p.proj_self = mlp_zeros(dim);
    p.branch_logits.assign(3, 0.0);
    return p;
}

DamParams DamParams::random(int dim, Rng& rng) {
    DamParams p = DamParams::zeros(dim);
    for (auto& c : p.conv) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(c.kernel * 3 * dim));
        for (double& v : c.weight.data) v = rng.normal(0.0, scale);
        for (double& v : c.bias) v = rng.normal(0.0, 0.1);
    }
    for (double& v : p.scale_map.data) v = rng.normal(0.0, 1.0 / std::sqrt(dim));
    for (double& v : p.gate_weight.data) v = rng.normal(0.0, 1.0 / std::sqrt(3.0 * dim));
    for (double& v : p.gate_bias) v = rng.normal(0.0, 0.1);
    for (Mlp* m : {&p.proj_cross, &p.proj_self}) {
        for (double& v : m->w1.data) v = rng.normal(0.0, 1.0 / std::sqrt(dim));
        for (double& v : m->b1) v = rng.normal(0.0, 0.1);
        for (double& v : m->w2.data) v = rng.normal(0.0, 1.0 / std::sqrt(dim));
        for (double& v : m->b2) v = rng.normal(0.0, 0.1);
    }
    for (double& v : p.branch_logits) v = rng.normal(0.0, 1.0);
    return p;
}

void visit_param_blocks(DamParams& params,
                        const std::function<void(std::vector<double>&)>& fn) {
    for (auto& c : params.conv) {
        fn(c.weight.data);
        fn(c.bias);
    }
    fn(params.scale_map.data);
    fn(params.gate_weight.data);
    fn(params.gate_bias);
    fn(params.proj_cross.w1.data);
    fn(params.proj_cross.b1);
    fn(params.proj_cross.w2.data);
    fn(params.proj_cross.b2);
    fn(params.proj_self.w1.data);
    fn(params.proj_self.b1);
    fn(params.proj_self.w2.data);
    fn(params.proj_self.b2);
    fn(params.branch_logits);
}

std::vector<double> flatten_params(const DamParams& params) {
    DamParams copy = params;
    std::vector<double> flat;
    visit_param_blocks(copy, [&](std::vector<double>& block) {
        flat.insert(flat.end(), block.begin(), block.end());
    });
    return flat;
}

void unflatten_params(DamParams& params, const std::vector<double>& flat) {
    size_t pos = 0;
    visit_param_blocks(params, [&](std::vector<double>& block) {
        if (pos + block.size() > flat.size()) {
            throw ArgumentError("unflatten_params: flat vector too short");
        }
        std::copy(flat.begin() + static_cast<long>(pos),
                  flat.begin() + static_cast<long>(pos + block.size()), block.begin());
        pos += block.size();
    });
    if (pos != flat.size()) throw ArgumentError("unflatten_params: flat vector too long");
}

std::vector<double> softmax(const std::vector<double>& logits) {
    if (logits.empty()) throw ArgumentError("softmax: empty logits");
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - peak);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

Tensor rope_apply(const Tensor& x, const std::vector<int>& positions) {
    if (x.cols % 2 != 0) throw ArgumentError("rope_apply: feature dim must be even");
    if (static_cast<int>(positions.size()) != x.rows) {
        throw ArgumentError("rope_apply: positions length must match frame count");
    }
    Tensor out(x.rows, x.cols);
    const int pairs = x.cols / 2;
    for (int t = 0; t < x.rows; ++t) {
        for (int j = 0; j < pairs; ++j) {
            const double theta = std::pow(10000.0, -2.0 * j / x.cols);
            const double angle = positions[static_cast<size_t>(t)] * theta;
            const double c = std::cos(angle);
            const double s = std::sin(angle);
            const double a = x(t, 2 * j);
            const double b = x(t, 2 * j + 1);
            out(t, 2 * j) = a * c - b * s;
            out(t, 2 * j + 1) = a * s + b * c;
        }
    }
    return out;
}

Tensor multi_scale_fusion(const FusionInputs& inp, const DamParams& params) {
    check_inputs(inp, params, "multi_scale_fusion");
    const Tensor u = stacked_input(inp);
    const std::vector<double> alpha = softmax(scale_logits(params, pooled_abs_diff(inp)));

    Tensor out(inp.z_cross.rows, params.dim);
    for (int k = 0; k < 3; ++k) {
        const Tensor ck = conv1d_same(u, params.conv[static_cast<size_t>(k)], params.dim);
        for (size_t i = 0; i < out.data.size(); ++i) {
            out.data[i] += alpha[static_cast<size_t>(k)] * ck.data[i];
        }
    }
    return out;
}

PathwayBackward multi_scale_fusion_backward(const FusionInputs& inp, const DamParams& params,
                                            const Tensor& upstream) {
    check_inputs(inp, params, "multi_scale_fusion_backward");
    const int t_len = inp.z_cross.rows;
    const int d = params.dim;
    const Tensor u = stacked_input(inp);
    const std::vector<double> pooled = pooled_abs_diff(inp);
    const std::vector<double> alpha = softmax(scale_logits(params, pooled));

    PathwayBackward back;
    back.d_cross = Tensor(t_len, d);
    back.d_self = Tensor(t_len, d);
    back.d_params = DamParams::zeros(d);

    Tensor d_u(t_len, 3 * d);
    std::vector<double> d_alpha(3, 0.0);
    for (int k = 0; k < 3; ++k) {
        const Tensor ck = conv1d_same(u, params.conv[static_cast<size_t>(k)], d);
        d_alpha[static_cast<size_t>(k)] = tensor_dot(upstream, ck);
        const Tensor d_ck = scaled(upstream, alpha[static_cast<size_t>(k)]);
        conv1d_same_backward(u, params.conv[static_cast<size_t>(k)], d_ck,
                             back.d_params.conv[static_cast<size_t>(k)], d_u);
    }

    // Softmax backward for the scale weights.
    double weighted = 0.0;
    for (int k = 0; k < 3; ++k) weighted += alpha[static_cast<size_t>(k)] * d_alpha[static_cast<size_t>(k)];
    std::vector<double> d_logits(3);
    for (int k = 0; k < 3; ++k) {
        d_logits[static_cast<size_t>(k)] =
            alpha[static_cast<size_t>(k)] * (d_alpha[static_cast<size_t>(k)] - weighted);
    }

    std::vector<double> d_pooled(static_cast<size_t>(d), 0.0);
    for (int k = 0; k < 3; ++k) {
        for (int j = 0; j < d; ++j) {
            back.d_params.scale_map(k, j) += d_logits[static_cast<size_t>(k)] * pooled[static_cast<size_t>(j)];
            d_pooled[static_cast<size_t>(j)] += params.scale_map(k, j) * d_logits[static_cast<size_t>(k)];
        }
    }

    // Pooled |difference| backward. sign(0) contributes a zero subgradient.
    for (int t = 0; t < t_len; ++t) {
        for (int j = 0; j < d; ++j) {
            const double diff = inp.z_cross(t, j) - inp.z_self(t, j);
            const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            const double g = d_pooled[static_cast<size_t>(j)] * sgn / t_len;
            back.d_cross(t, j) += g;
            back.d_self(t, j) -= g;
        }
    }

    scatter_stacked_grad(d_u, back.d_cross, back.d_self);
    return back;
}

Tensor adaptive_fusion(const FusionInputs& inp, const DamParams& params) {
    check_inputs(inp, params, "adaptive_fusion");
    const int t_len = inp.z_cross.rows;
    const int d = params.dim;
    const Tensor u = stacked_input(inp);

    Tensor out(t_len, d);
    for (int t = 0; t < t_len; ++t) {
        for (int o = 0; o < d; ++o) {
            double a = params.gate_bias[static_cast<size_t>(o)];
            for (int i = 0; i < 3 * d; ++i) a += params.gate_weight(o, i) * u(t, i);
            const double g = sigmoid(a);
            out(t, o) = g * inp.z_cross(t, o) + (1.0 - g) * inp.z_self(t, o);
        }
    }
    return out;
}

PathwayBackward adaptive_fusion_backward(const FusionInputs& inp, const DamParams& params,
                                         const Tensor& upstream) {
    check_inputs(inp, params, "adaptive_fusion_backward");
    const int t_len = inp.z_cross.rows;
    const int d = params.dim;
    const Tensor u = stacked_input(inp);

    PathwayBackward back;
    back.d_cross = Tensor(t_len, d);
    back.d_self = Tensor(t_len, d);
    back.d_params = DamParams::zeros(d);

    Tensor d_u(t_len, 3 * d);
    for (int t = 0; t < t_len; ++t) {
        for (int o = 0; o < d; ++o) {
            double a = params.gate_bias[static_cast<size_t>(o)];
            for (int i = 0; i < 3 * d; ++i) a += params.gate_weight(o, i) * u(t, i);
            const double g = sigmoid(a);
            const double up = upstream(t, o);

            back.d_cross(t, o) += up * g;
            back.d_self(t, o) += up * (1.0 - g);

            const double d_gate = up * (inp.z_cross(t, o) - inp.z_self(t, o));
            const double d_a = d_gate * g * (1.0 - g);
            back.d_params.gate_bias[static_cast<size_t>(o)] += d_a;
            for (int i = 0; i < 3 * d; ++i) {
                back.d_params.gate_weight(o, i) += d_a * u(t, i);
                d_u(t, i) += d_a * params.gate_weight(o, i);
            }
        }
    }
    scatter_stacked_grad(d_u, back.d_cross, back.d_self);
    return back;
}

Tensor dual_projection(const FusionInputs& inp, const DamParams& params) {
    check_inputs(inp, params, "dual_projection");
    Tensor out = mlp_apply(params.proj_cross, inp.z_cross);
    const Tensor from_self = mlp_apply(params.proj_self, inp.z_self);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += from_self.data[i];
    return out;
}

PathwayBackward dual_projection_backward(const FusionInputs& inp, const DamParams& params,
                                         const Tensor& upstream) {
    check_inputs(inp, params, "dual_projection_backward");
    PathwayBackward back;
    back.d_cross = Tensor(inp.z_cross.rows, params.dim);
    back.d_self = Tensor(inp.z_cross.rows, params.dim);
    back.d_params = DamParams::zeros(params.dim);
    mlp_backward(params.proj_cross, inp.z_cross, upstream, back.d_params.proj_cross, back.d_cross);
    mlp_backward(params.proj_self, inp.z_self, upstream, back.d_params.proj_self, back.d_self);
    return back;
}

Tensor dam_forward(const FusionInputs& inp, const DamParams& params) {
    check_inputs(inp, params, "dam_forward");
    const std::vector<double> w = softmax(params.branch_logits);
    const Tensor mf = multi_scale_fusion(inp, params);
    const Tensor af = adaptive_fusion(inp, params);
    const Tensor dp = dual_projection(inp, params);

    Tensor out(inp.z_cross.rows, params.dim);
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = w[0] * mf.data[i] + w[1] * af.data[i] + w[2] * dp.data[i];
    }
    return out;
}

PathwayBackward dam_backward(const FusionInputs& inp, const DamParams& params,
                             const Tensor& upstream) {
    check_inputs(inp, params, "dam_backward");
    const std::vector<double> w = softmax(params.branch_logits);
    const Tensor outputs[3] = {multi_scale_fusion(inp, params), adaptive_fusion(inp, params),
                               dual_projection(inp, params)};

    std::vector<double> d_w(3);
    for (int b = 0; b < 3; ++b) d_w[static_cast<size_t>(b)] = tensor_dot(upstream, outputs[b]);
    double weighted = 0.0;
    for (int b = 0; b < 3; ++b) weighted += w[static_cast<size_t>(b)] * d_w[static_cast<size_t>(b)];

    PathwayBackward back;
    back.d_cross = Tensor(inp.z_cross.rows, params.dim);
    back.d_self = Tensor(inp.z_cross.rows, params.dim);
    back.d_params = DamParams::zeros(params.dim);
    for (int b = 0; b < 3; ++b) {
        back.d_params.branch_logits[static_cast<size_t>(b)] =
            w[static_cast<size_t>(b)] * (d_w[static_cast<size_t>(b)] - weighted);
    }

    using BackwardFn = PathwayBackward (*)(const FusionInputs&, const DamParams&, const Tensor&);
    const BackwardFn fns[3] = {multi_scale_fusion_backward, adaptive_fusion_backward,
                               dual_projection_backward};
    for (int b = 0; b < 3; ++b) {
        const PathwayBackward part =
            fns[b](inp, params, scaled(upstream, w[static_cast<size_t>(b)]));
        for (size_t i = 0; i < back.d_cross.data.size(); ++i) {
            back.d_cross.data[i] += part.d_cross.data[i];
            back.d_self.data[i] += part.d_self.data[i];
        }
        // Accumulate parameter gradients block by block.
        std::vector<double> acc = flatten_params(back.d_params);
        const std::vector<double> add = flatten_params(part.d_params);
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += add[i];
        // branch_logits gradient lives in `acc` already (it was set above
        // and `part` contributes zeros there).
        unflatten_params(back.d_params, acc);
    }
    return back;
}

Tensor layer_aggregate(const std::vector<Tensor>& layer_outputs,
                       const std::vector<double>& logits) {
    if (layer_outputs.empty()) throw ArgumentError("layer_aggregate: empty layer list");
    if (layer_outputs.size() != logits.size()) {
        throw ArgumentError("layer_aggregate: logits length must match layer count");
    }
    for (const auto& t : layer_outputs) {
        if (!t.same_shape(layer_outputs.front())) {
            throw ArgumentError("layer_aggregate: layer shapes differ");
        }
    }
    const std::vector<double> w = softmax(logits);
    Tensor out(layer_outputs.front().rows, layer_outputs.front().cols);
    for (size_t l = 0; l < layer_outputs.size(); ++l) {
        for (size_t i = 0; i < out.data.size(); ++i) {
            out.data[i] += w[l] * layer_outputs[l].data[i];
        }
    }
    return out;
}

LayerAggregateBackward layer_aggregate_backward(const std::vector<Tensor>& layer_outputs,
                                                const std::vector<double>& logits,
                                                const Tensor& upstream) {
    if (layer_outputs.empty()) throw ArgumentError("layer_aggregate_backward: empty layer list");
    const std::vector<double> w = softmax(logits);
    std::vector<double> d_w(layer_outputs.size());
    for (size_t l = 0; l < layer_outputs.size(); ++l) d_w[l] = tensor_dot(upstream, layer_outputs[l]);
    double weighted = 0.0;
    for (size_t l = 0; l < layer_outputs.size(); ++l) weighted += w[l] * d_w[l];

    LayerAggregateBackward back;
    back.d_logits.resize(layer_outputs.size());
    back.d_layers.reserve(layer_outputs.size());
    for (size_t l = 0; l < layer_outputs.size(); ++l) {
        back.d_logits[l] = w[l] * (d_w[l] - weighted);
        back.d_layers.push_back(scaled(upstream, w[l]));
    }
    return back;
}

ValueGrad sisdr_loss(const std::vector<double>& est, const std::vector<double>& ref,
                     bool zero_mean) {
    if (est.size() != ref.size()) throw ArgumentError("sisdr_loss: lengths differ");
    if (est.empty()) throw ArgumentError("sisdr_loss: empty signals");

    std::vector<double> x = est;
    std::vector<double> r = ref;
    if (zero_mean) {
        double mx = 0.0, mr = 0.0;
        for (size_t i = 0; i < x.size(); ++i) {
            mx += x[i];
            mr += r[i];
        }
        mx /= static_cast<double>(x.size());
        mr /= static_cast<double>(r.size());
        for (size_t i = 0; i < x.size(); ++i) {
            x[i] -= mx;
            r[i] -= mr;
        }
    }

    const double ref_energy = dot(r, r);
    if (ref_energy <= 0.0) throw ArgumentError("sisdr_loss: reference is all zero");
    const double alpha = dot(x, r) / ref_energy;
    const double target_energy = alpha * alpha * ref_energy;
    if (target_energy <= 0.0) throw SignalError("sisdr_loss: estimate is orthogonal to reference");

    std::vector<double> residual(x.size());
    double noise_energy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        residual[i] = alpha * r[i] - x[i];
        noise_energy += residual[i] * residual[i];
    }
    if (noise_energy <= 0.0) {
        throw SignalError("sisdr_loss: zero residual, gradient undefined");
    }

    ValueGrad out;
    out.value = -10.0 / kLn10 * (std::log(target_energy) - std::log(noise_energy));
    out.grad.resize(x.size());
    const double c = -10.0 / kLn10;
    for (size_t i = 0; i < x.size(); ++i) {
        // d||s||^2/dx = 2 alpha r; d||e||^2/dx = -2 e (e is orthogonal to r).
        out.grad[i] = c * (2.0 * alpha * r[i] / target_energy + 2.0 * residual[i] / noise_energy);
    }
    if (zero_mean) {
        double mg = 0.0;
        for (double g : out.grad) mg += g;
        mg /= static_cast<double>(out.grad.size());
        for (double& g : out.grad) g -= mg;
    }
    return out;
}

ValueGrad speaker_loss(const std::vector<double>& e_ref, const std::vector<double>& e_est,
                       const LossWeights& w) {
    if (e_ref.size() != e_est.size()) throw ArgumentError("speaker_loss: dims differ");
    if (e_ref.empty()) throw ArgumentError("speaker_loss: empty embeddings");
    const double ref_sq = dot(e_ref, e_ref);
    if (ref_sq <= 0.0) throw ArgumentError("speaker_loss: reference embedding is all zero");
    const double est_sq = dot(e_est, e_est);
    if (est_sq <= 0.0) throw SignalError("speaker_loss: estimated embedding is all zero (cosine undefined)");

    const size_t n = e_ref.size();
    const double delta = w.huber_delta;

    ValueGrad out;
    out.grad.assign(n, 0.0);
    double huber = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double z = e_est[i] - e_ref[i];
        if (std::abs(z) <= delta) {
            huber += 0.5 * z * z;
            out.grad[i] = z / static_cast<double>(n);
        } else {
            huber += delta * (std::abs(z) - 0.5 * delta);
            out.grad[i] = delta * (z > 0.0 ? 1.0 : -1.0) / static_cast<double>(n);
        }
    }
    huber /= static_cast<double>(n);

    // Single square root so identical embeddings give cosine 1.0 exactly.
    const double inner = dot(e_ref, e_est);
    const double p = std::sqrt(ref_sq * est_sq);
    const double cosine = inner / p;
    out.value = huber + w.cosine_coeff * (1.0 - cosine);
    for (size_t i = 0; i < n; ++i) {
        const double d_cos = e_ref[i] / p - inner * ref_sq * e_est[i] / (p * p * p);
        out.grad[i] += -w.cosine_coeff * d_cos;
    }
    return out;
}

TensorValueGrad commitment_loss(const Tensor& z_pre, const Tensor& z_q) {
    if (!z_pre.same_shape(z_q)) throw ArgumentError("commitment_loss: shapes differ");
    if (z_pre.size() == 0) throw ArgumentError("commitment_loss: empty tensors");
    const double n = static_cast<double>(z_pre.size());

    TensorValueGrad out;
    out.grad = Tensor(z_pre.rows, z_pre.cols);
    for (size_t i = 0; i < z_pre.data.size(); ++i) {
        const double d = z_pre.data[i] - z_q.data[i];
        out.value += d * d;
        out.grad.data[i] = 2.0 * d / n;
    }
    out.value /= n;
    return out;
}

double total_loss(const std::vector<double>& est, const std::vector<double>& ref,
                  const std::vector<double>& e_ref, const std::vector<double>& e_est,
                  const Tensor& z_pre, const Tensor& z_q, const LossWeights& w) {
    return sisdr_loss(est, ref).value + w.lambda_s * speaker_loss(e_ref, e_est, w).value +
           w.lambda_c * commitment_loss(z_pre, z_q).value;
}

RvqResult rvq_quantize(const Tensor& x, const Codebook& cb) {
    if (cb.stages.empty()) throw ArgumentError("rvq_quantize: empty codebook");
    for (const auto& stage : cb.stages) {
        if (stage.rows < 1) throw ArgumentError("rvq_quantize: a stage has no codewords");
        if (stage.cols != x.cols) throw ArgumentError("rvq_quantize: codeword dim mismatch");
    }

    RvqResult result;
    result.quantized = Tensor(x.rows, x.cols);
    Tensor residual = x;
    for (const auto& stage : cb.stages) {
        std::vector<int> codes(static_cast<size_t>(x.rows));
        for (int t = 0; t < x.rows; ++t) {
            int best = 0;
            double best_dist = 0.0;
            for (int k = 0; k < stage.rows; ++k) {
                double dist = 0.0;
                for (int j = 0; j < x.cols; ++j) {
                    const double d = residual(t, j) - stage(k, j);
                    dist += d * d;
                }
                if (k == 0 || dist < best_dist) {
                    best = k;
                    best_dist = dist;
                }
            }
            codes[static_cast<size_t>(t)] = best;
            for (int j = 0; j < x.cols; ++j) {
                residual(t, j) -= stage(best, j);
                result.quantized(t, j) += stage(best, j);
            }
        }
        result.codes.push_back(std::move(codes));
        double frob = 0.0;
        for (double v : residual.data) frob += v * v;
        result.residual_norms.push_back(std::sqrt(frob));
    }
    return result;
}

namespace {

Tensor identity_matrix(int d) {
    Tensor m(d, d);
    for (int i = 0; i < d; ++i) m(i, i) = 1.0;
    return m;
}

// (I - 2 b b^T)(I - 2 h h^T) with h = (a + b)/||a + b|| maps unit a to unit b
// and is the identity on the orthogonal complement of span(a, b).
Tensor householder_pair_rotation(const std::vector<double>& a, const std::vector<double>& b) {
    const int d = static_cast<int>(a.size());
    std::vector<double> h(a.size());
    for (size_t i = 0; i < a.size(); ++i) h[i] = a[i] + b[i];
    const double nh = norm(h);
    if (nh <= 0.0) throw ArgumentError("householder rotation: antipodal inputs");
    for (double& v : h) v /= nh;

    Tensor r = identity_matrix(d);
    // Apply I - 2 h h^T, then I - 2 b b^T, column by column.
    for (int col = 0; col < d; ++col) {
        std::vector<double> v(static_cast<size_t>(d), 0.0);
        v[static_cast<size_t>(col)] = 1.0;
        const double hv = dot(h, v);
        for (int i = 0; i < d; ++i) v[static_cast<size_t>(i)] -= 2.0 * hv * h[static_cast<size_t>(i)];
        const double bv = dot(b, v);
        for (int i = 0; i < d; ++i) v[static_cast<size_t>(i)] -= 2.0 * bv * b[static_cast<size_t>(i)];
        for (int i = 0; i < d; ++i) r(i, col) = v[static_cast<size_t>(i)];
    }
    return r;
}

Tensor mat_mul(const Tensor& a, const Tensor& b) {
    Tensor out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int k = 0; k < a.cols; ++k) {
            const double v = a(i, k);
            if (v == 0.0) continue;
            for (int j = 0; j < b.cols; ++j) out(i, j) += v * b(k, j);
        }
    }
    return out;
}

}  // namespace

RotationResult rotation_trick(const std::vector<double>& e, const std::vector<double>& q) {
    if (e.size() != q.size()) throw ArgumentError("rotation_trick: dims differ");
    if (e.empty()) throw ArgumentError("rotation_trick: empty vectors");
    const int d = static_cast<int>(e.size());
    const double ne = norm(e);
    const double nq = norm(q);
    if (ne <= 0.0 || nq <= 0.0) throw ArgumentError("rotation_trick: zero-norm input");

    std::vector<double> e_hat(e.size()), q_hat(q.size());
    for (size_t i = 0; i < e.size(); ++i) {
        e_hat[i] = e[i] / ne;
        q_hat[i] = q[i] / nq;
    }
    const double c = dot(e_hat, q_hat);

    Tensor rotation;
    if (c < -1.0 + 1e-6) {
        // Antipodal fallback: rotate through a pivot orthogonal to e_hat.
        size_t axis = 0;
        for (size_t i = 1; i < e_hat.size(); ++i) {
            if (std::abs(e_hat[i]) < std::abs(e_hat[axis])) axis = i;
        }
        std::vector<double> pivot(e.size(), 0.0);
        pivot[axis] = 1.0;
        const double proj = dot(pivot, e_hat);
        for (size_t i = 0; i < pivot.size(); ++i) pivot[i] -= proj * e_hat[i];
        const double np = norm(pivot);
        if (np <= 0.0) throw ArgumentError("rotation_trick: cannot build a pivot (D = 1?)");
        for (double& v : pivot) v /= np;
        rotation = mat_mul(householder_pair_rotation(pivot, q_hat),
                           householder_pair_rotation(e_hat, pivot));
    } else {
        rotation = householder_pair_rotation(e_hat, q_hat);
    }

    const double lambda = nq / ne;
    RotationResult result;
    result.frozen_jacobian = Tensor(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) result.frozen_jacobian(i, j) = lambda * rotation(i, j);
    }
    result.output.assign(e.size(), 0.0);
    for (int i = 0; i < d; ++i) {
        double acc = 0.0;
        for (int j = 0; j < d; ++j) acc += result.frozen_jacobian(i, j) * e[static_cast<size_t>(j)];
        result.output[static_cast<size_t>(i)] = acc;
    }
    return result;
}

GradCheckReport gradcheck(const ValueGradFn& fn, const std::vector<double>& point,
                          double epsilon, double tolerance, size_t max_coords,
                          uint64_t coord_seed) {
    if (!(epsilon > 0.0 && epsilon <= 1e-2)) {
        throw ArgumentError("gradcheck: epsilon must lie in (0, 1e-2]");
    }

    const auto [value, analytic] = fn(point);
    if (!std::isfinite(value)) throw Error("gradcheck: non-finite function value");
    if (analytic.size() != point.size()) {
        throw ArgumentError("gradcheck: gradient size does not match point size");
    }

    std::vector<size_t> coords(point.size());
    for (size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (max_coords > 0 && max_coords < coords.size()) {
        Rng rng(coord_seed);
        for (size_t i = coords.size(); i > 1; --i) {
            std::swap(coords[i - 1], coords[rng.uniform_index(i)]);
        }
        coords.resize(max_coords);
    }

    GradCheckReport report;
    report.checked_coords = coords.size();
    std::vector<double> probe = point;
    for (size_t i : coords) {
        const double original = probe[i];
        probe[i] = original + epsilon;
        const double up = fn(probe).first;
        probe[i] = original - epsilon;
        const double down = fn(probe).first;
        probe[i] = original;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw Error("gradcheck: non-finite function value during probing");
        }
        const double numeric = (up - down) / (2.0 * epsilon);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        const double rel = std::abs(analytic[i] - numeric) / denom;
        report.max_rel_error = std::max(report.max_rel_error, rel);
    }
    report.pass = report.max_rel_error <= tolerance;
    return report;
}

}  // namespace porte
