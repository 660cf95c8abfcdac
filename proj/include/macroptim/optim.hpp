#pragma once

#include <vector>

#include "macroptim/linalg.hpp"
#include "macroptim/manifold.hpp"
#include "macroptim/matrix.hpp"

namespace macroptim {

// Per-parameter optimizer state: momentum plus the step-rule hyperparameters.
// One state belongs to one parameter and must be stepped by one thread at a
// time; distinct parameters may step in parallel.
struct OptimizerState {
    Matrix momentum;
    double beta = 0.9;
    double c = 1.0;       // alignment ratio
    double epsilon = 1e-8;
    long step = 0;

    OptimizerState() = default;
    OptimizerState(int rows, int cols, double beta_, double c_, double epsilon_);

    void update_momentum(const Matrix &grad);
};

// Everything a constrained step produces beyond the new iterate, kept for the
// diagnostics module: the projected momentum, the msign direction, the
// normalized update, and the pre-retraction point.
struct StepResult {
    Matrix w_next;
    Matrix phi;            // projected momentum (raw momentum for muonh)
    Matrix direction;      // O = msign(phi)
    Matrix scaled_update;  // eta * cR * O / (||O||_M + eps)
    Matrix pre_retract;    // w - scaled_update
    bool stationary = false;   // tangent momentum vanished; w returned unchanged
    bool degenerate = false;   // spectral sphere with non-simple sigma1
    double lambda_star = 0.0;  // fso only
    double update_manifold_norm = 0.0; // ||scaled_update||_M, 0 when stationary
};

struct BisectionResult {
    double lambda_star = 0.0;
    double h_residual = 0.0;
    int iters_used = 0;
    bool capped = false; // tolerance not reached within max_iters
    Matrix direction;    // msign(m + lambda_star w)
};

// Momentum below this relative threshold is treated as a vanished tangent
// direction: msign would amplify pure rounding noise to a unit-norm update.
inline constexpr double kStationaryRelTol = 1e-12;

// Single-loop constrained step:
//   M <- beta M + (1-beta) G;  Phi = proj_T(M);  O = msign(Phi);
//   update = eta cR O/(||O||_M + eps);  w_next = retract(w - update).
StepResult macro_step(const Matrix &w, const Matrix &grad, OptimizerState &state,
                      const ManifoldSpec &spec, double eta, MsignMode mode = MsignMode::exact,
                      int ns_iters = 30, bool spectral_exact_clip = false);

// macro_step with the tangent projection skipped: O = msign(M) directly.
StepResult muonh_step(const Matrix &w, const Matrix &grad, OptimizerState &state,
                      const ManifoldSpec &spec, double eta, MsignMode mode = MsignMode::exact,
                      int ns_iters = 30, bool spectral_exact_clip = false);

// Root of h(lambda) = <w, msign(m + lambda w)> by bisection over the bracket
// [-B, B], B = 2 ||m||_* / ||w||_*. h is monotonically non-decreasing and the
// bracket provably contains a root; endpoints violating the sign condition
// beyond a small slack indicate an msign defect and raise NumericalError.
// `check_monotone` additionally samples h on a 20-point grid and verifies
// monotonicity (test mode).
BisectionResult bisect_lambda(const Matrix &w, const Matrix &m, const ManifoldSpec &spec,
                              double tol, int max_iters, MsignMode mode = MsignMode::exact,
                              int ns_iters = 30, bool check_monotone = false);

// Double-loop step: the update direction is msign(M + lambda* w) with
// lambda* from bisect_lambda; the scaling and retraction match macro_step.
StepResult fso_step(const Matrix &w, const Matrix &grad, OptimizerState &state,
                    const ManifoldSpec &spec, double eta, double inner_tol, int inner_cap,
                    MsignMode mode = MsignMode::exact, int ns_iters = 30,
                    bool spectral_exact_clip = false);

// Unconstrained baseline: w <- (1 - eta wd) w - eta scale msign(M).
// `shape_scale` enables the optional sqrt(max(d_out/d_in, 1)) multiplier;
// default is unit scale.
Matrix muon_step(const Matrix &w, const Matrix &grad, OptimizerState &state, double eta,
                 double weight_decay, MsignMode mode = MsignMode::exact, int ns_iters = 30,
                 bool shape_scale = false);

// Standard bias-corrected decoupled AdamW for 1-D parameters. `t` is the
// 1-based step count after this update.
void adamw_step(std::vector<double> &p, const std::vector<double> &grad, std::vector<double> &m,
                std::vector<double> &v, long t, double eta, double beta1, double beta2, double eps,
                double weight_decay);

} // namespace macroptim
