#pragma once

#include <array>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "porte/rng.hpp"

namespace porte {

// Dense row-major [rows, cols] tensor of doubles. Everything in this module
// is double precision so analytic gradients can be checked against central
// finite differences at tight tolerances.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    const double& operator()(int r, int c) const {
        return data[static_cast<size_t>(r) * cols + c];
    }
    size_t size() const { return data.size(); }
    bool same_shape(const Tensor& other) const {
        return rows == other.rows && cols == other.cols;
    }

    static Tensor random(int r, int c, Rng& rng, double scale = 1.0);
};

// The cross-attended signal and its self-attentive counterpart, [T, D] each.
struct FusionInputs {
    Tensor z_cross;
    Tensor z_self;
};

// Same-padded 1D convolution over time; weight is (out, kernel * in) with
// the kernel tap varying fastest along blocks of in_dim.
struct Conv1D {
    int kernel = 3;
    Tensor weight;  // [out_dim, kernel * in_dim]
    std::vector<double> bias;
};

struct Mlp {
    Tensor w1;  // [D, D]
    std::vector<double> b1;
    Tensor w2;  // [D, D]
    std::vector<double> b2;
};

// All learnable state of the fusion block. The same struct doubles as the
// gradient accumulator, since gradients share every shape.
struct DamParams {
    int dim = 0;                         // D
    std::array<Conv1D, 3> conv;          // kernel sizes 3, 5, 7; input 3D, output D
    Tensor scale_map;                    // [3, D], pooled-|difference| -> scale logits
    Tensor gate_weight;                  // [D, 3D]
    std::vector<double> gate_bias;       // [D]
    Mlp proj_cross;
    Mlp proj_self;
    std::vector<double> branch_logits;   // theta, length 3 (MF, AF, DP)

    static DamParams zeros(int dim);
    static DamParams random(int dim, Rng& rng);
};

// Applies `fn` to every parameter block in a fixed order; used for
// flattening params and gradients identically.
void visit_param_blocks(DamParams& params,
                        const std::function<void(std::vector<double>&)>& fn);
std::vector<double> flatten_params(const DamParams& params);
void unflatten_params(DamParams& params, const std::vector<double>& flat);

struct Codebook {
    std::vector<Tensor> stages;  // each [K, D]
};

struct LossWeights {
    double lambda_s = 5.0;
    double lambda_c = 0.05;
    double huber_delta = 1.0;
    double cosine_coeff = 0.5;
};

std::vector<double> softmax(const std::vector<double>& logits);

// Rotary position embedding: consecutive coordinate pairs (2j, 2j+1) of
// frame t are rotated by positions[t] * 10000^(-2j/D). Requires even D.
Tensor rope_apply(const Tensor& x, const std::vector<int>& positions);

// --- Fusion pathways (forward) -------------------------------------------

// Multi-scale pathway: convolutions of kernel 3/5/7 over
// [z_cross; z_self; z_cross - z_self], blended with softmax scale weights
// computed from the time-pooled absolute difference.
Tensor multi_scale_fusion(const FusionInputs& inp, const DamParams& params);

// Frame-wise sigmoid gate that convexly blends z_cross and z_self.
Tensor adaptive_fusion(const FusionInputs& inp, const DamParams& params);

// Independent two-layer perceptrons on each stream, summed.
Tensor dual_projection(const FusionInputs& inp, const DamParams& params);

// softmax(branch_logits)-weighted sum of the three pathways.
Tensor dam_forward(const FusionInputs& inp, const DamParams& params);

// softmax(logits)-weighted sum of equal-shape layer outputs.
Tensor layer_aggregate(const std::vector<Tensor>& layer_outputs,
                       const std::vector<double>& logits);

// --- Fusion pathways (hand-derived reverse mode) --------------------------

struct PathwayBackward {
    Tensor d_cross;
    Tensor d_self;
    DamParams d_params;
};

PathwayBackward multi_scale_fusion_backward(const FusionInputs& inp, const DamParams& params,
                                            const Tensor& upstream);
PathwayBackward adaptive_fusion_backward(const FusionInputs& inp, const DamParams& params,
                                         const Tensor& upstream);
PathwayBackward dual_projection_backward(const FusionInputs& inp, const DamParams& params,
                                         const Tensor& upstream);
PathwayBackward dam_backward(const FusionInputs& inp, const DamParams& params,
                             const Tensor& upstream);

struct LayerAggregateBackward {
    std::vector<Tensor> d_layers;
    std::vector<double> d_logits;
};

LayerAggregateBackward layer_aggregate_backward(const std::vector<Tensor>& layer_outputs,
                                                const std::vector<double>& logits,
                                                const Tensor& upstream);

// --- Losses ----------------------------------------------------------------

struct ValueGrad {
    double value = 0.0;
    std::vector<double> grad;
};

// Negative SI-SDR of est against ref, literal quotient form (no mean
// removal unless zero_mean is set), with the analytic gradient w.r.t. est.
// Unclamped; a zero-residual estimate raises SignalError.
ValueGrad sisdr_loss(const std::vector<double>& est, const std::vector<double>& ref,
                     bool zero_mean = false);

// Coordinate-averaged Huber plus cosine_coeff * (1 - cos) between the
// embeddings; gradient w.r.t. e_est.
ValueGrad speaker_loss(const std::vector<double>& e_ref, const std::vector<double>& e_est,
                       const LossWeights& w = {});

struct TensorValueGrad {
    double value = 0.0;
    Tensor grad;
};

// MSE between pre-quantization latents and (detached) quantized latents;
// gradient flows to z_pre only.
TensorValueGrad commitment_loss(const Tensor& z_pre, const Tensor& z_q);

// L_sisdr + lambda_s * L_spk + lambda_c * L_commit.
double total_loss(const std::vector<double>& est, const std::vector<double>& ref,
                  const std::vector<double>& e_ref, const std::vector<double>& e_est,
                  const Tensor& z_pre, const Tensor& z_q, const LossWeights& w = {});

// --- Quantization ------------------------------------------------------------

struct RvqResult {
    std::vector<std::vector<int>> codes;  // [stage][frame]
    Tensor quantized;                     // sum of selected codewords
    std::vector<double> residual_norms;   // Frobenius norm after each stage
};

// Residual vector quantization: each stage picks the Euclidean-nearest
// codeword to the running residual (ties broken by lowest index).
RvqResult rvq_quantize(const Tensor& x, const Codebook& cb);

struct RotationResult {
    std::vector<double> output;   // equals q up to rounding
    Tensor frozen_jacobian;       // lambda * R, treated as constant
};

// Quantizer pass-through: output = (||q||/||e||) * R e where R is the
// minimal rotation taking e-hat to q-hat (identity on the orthogonal
// complement), built from two Householder reflections. Both the scale and
// R are frozen for backward flow. Near-antipodal inputs route through an
// orthogonal pivot.
RotationResult rotation_trick(const std::vector<double>& e, const std::vector<double>& q);

// --- Verification harness ----------------------------------------------------

struct GradCheckReport {
    double max_rel_error = 0.0;
    bool pass = false;
    size_t checked_coords = 0;
};

// fn(point) returns the value and the full analytic gradient at point.
using ValueGradFn =
    std::function<std::pair<double, std::vector<double>>(const std::vector<double>&)>;

// Central finite differences per coordinate; relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8). When max_coords
// is nonzero, a seeded random subset of coordinates is checked instead of
// all of them.
GradCheckReport gradcheck(const ValueGradFn& fn, const std::vector<double>& point,
                          double epsilon = 1e-5, double tolerance = 1e-4,
                          size_t max_coords = 0, uint64_t coord_seed = 0);

}  // namespace porte
