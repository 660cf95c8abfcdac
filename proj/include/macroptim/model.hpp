#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "macroptim/manifold.hpp"
#include "macroptim/matrix.hpp"

namespace macroptim {

enum class Activation { identity, relu, swiglu, norm_gated_swiglu };
enum class PreNorm { none, parameter_free_rms, learnable_rms };

Activation activation_from_string(const std::string &name);
PreNorm pre_norm_from_string(const std::string &name);
std::string to_string(Activation a);
std::string to_string(PreNorm p);

struct LayerSpec {
    int d_in = 1;
    int d_out = 1;
    Activation activation = Activation::identity;
    PreNorm pre_norm = PreNorm::none;
    bool constrained = false;
    ManifoldKind manifold = ManifoldKind::frobenius_sphere;
    // Norm-gated SwiGLU divides the Swish branch by one global RMS scalar;
    // this switches to a per-row RMS instead (interpretation-dependent, the
    // stability property holds either way).
    bool gate_rms_per_row = false;
};

// One layer: w1 is the only weight for identity/relu; the SwiGLU variants
// gate x w2^T by Swish(x w1^T). gamma is the learnable RMS gain.
struct Layer {
    LayerSpec spec;
    Matrix w1;
    Matrix w2;
    std::vector<double> gamma;

    bool has_w2() const {
        return spec.activation == Activation::swiglu ||
               spec.activation == Activation::norm_gated_swiglu;
    }
};

struct LayerCache {
    Matrix x_raw;
    Matrix x_hat; // per-row RMS-normalized input (pre_norm only)
    Matrix x;     // layer input after pre-norm (== x_raw when pre_norm none)
    std::vector<double> row_rms;
    Matrix z1;
    Matrix z2;
    Matrix sig;    // sigmoid(z1) for the swiglu kinds
    Matrix swish;  // z1 * sig
    Matrix s_hat;  // normalized swish branch (norm-gated only)
    double gate_rms = 0.0;
    std::vector<double> gate_rms_rows;
};

struct LayerGrads {
    Matrix w1;
    Matrix w2;
    std::vector<double> gamma;
};

Matrix layer_forward(const Layer &layer, const Matrix &x, LayerCache *cache = nullptr);

// Analytic reverse-mode through one layer. dx receives the gradient with
// respect to the raw input when non-null.
LayerGrads layer_backward(const Layer &layer, const LayerCache &cache, const Matrix &dy,
                          Matrix *dx = nullptr);

struct Mlp {
    std::vector<Layer> layers;
};

Matrix mlp_forward(const Mlp &model, const Matrix &x, std::vector<LayerCache> *caches = nullptr);
std::vector<LayerGrads> mlp_backward(const Mlp &model, const std::vector<LayerCache> &caches,
                                     const Matrix &dy);

enum class TaskKind { frobenius_nearest_point, linear_regression, synthetic_classification };

TaskKind task_kind_from_string(const std::string &name);
std::string to_string(TaskKind k);

struct TaskSpec {
    TaskKind kind = TaskKind::frobenius_nearest_point;
    int d_in = 8;
    int d_out = 6;
    int batch = 32;
    std::uint64_t data_seed = 0;
    double noise = 0.0;        // regression label noise
    int clusters = 8;          // classification cluster count
    double target_scale = 1.0; // nearest point: ||A||_F
};

struct Batch {
    Matrix x;
    Matrix targets;          // regression
    std::vector<int> labels; // classification
};

// Deterministic data: the nearest-point target and regression generator
// depend only on data_seed; batches derive from (data_seed, step).
Matrix nearest_point_target(const TaskSpec &task);
Matrix regression_generator(const TaskSpec &task);
Batch make_batch(const TaskSpec &task, long step);

// L = ||w - a||_F^2 with gradient 2(w - a).
double nearest_point_loss(const Matrix &w, const Matrix &a, Matrix *grad = nullptr);

struct LossGrad {
    double loss = 0.0;
    Matrix dy;
};

LossGrad mse_loss(const Matrix &y, const Matrix &target);
LossGrad softmax_cross_entropy(const Matrix &logits, const std::vector<int> &labels);

} // namespace macroptim
