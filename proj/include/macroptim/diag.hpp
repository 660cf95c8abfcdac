#pragma once

#include <optional>

#include "macroptim/manifold.hpp"
#include "macroptim/matrix.hpp"

namespace macroptim {

// Per-step training-dynamics record for one constrained parameter. Optional
// fields are present only where they are defined (theta_fro on the Frobenius
// sphere; theta_u/theta_v and spectral_gap on the spectral sphere).
struct StepDiagnostics {
    long step = 0;
    double eta = 0.0;
    double rel_lr = 0.0;
    std::optional<double> theta_fro;
    std::optional<double> theta_u;
    std::optional<double> theta_v;
    std::optional<double> alpha;
    double vio = 0.0;
    std::optional<double> spectral_gap;
    double stable_rank = 0.0;
    double feasibility = 0.0;
    bool degenerate = false;
    bool stationary = false;
};

// arccos of the clamped normalized Frobenius inner product between
// consecutive iterates.
double rotation_angle_fro(const Matrix &w_t, const Matrix &w_next);

struct SpectralAngles {
    double theta_u = 0.0;
    double theta_v = 0.0;
    bool degenerate = false; // sigma1 of either iterate not simple within 1e-10
};

// Principal rotation angles of the leading singular vectors,
// theta_u = arccos|u_next . u_t| and theta_v = arccos|v_next . v_t|.
SpectralAngles rotation_angles_spec(const Matrix &w_t, const Matrix &w_next);

// |<normal(w), update_dir>| with the constraint normal: w for the Frobenius
// sphere, u1 v1^T for the spectral sphere; for the oblique kinds the per-row
// (per-column) inner products are reduced by max.
double tangent_violation(const ManifoldSpec &spec, const Matrix &w, const Matrix &update_dir);

// ||w||_F^2 / ||w||_2^2.
double stable_rank(const Matrix &w);

// manifold_norm(scaled_update) / manifold_norm(w) for the pre-retraction
// update eta * grad_tilde.
double relative_lr(const ManifoldSpec &spec, const Matrix &w, const Matrix &scaled_update);

// ||vec(y)||_2 / sqrt(rows*cols).
double activation_rms(const Matrix &y);

// Tangency cosine of the step direction: <w, o> / (R ||o||_F).
double alignment_cosine(const Matrix &w, const Matrix &direction, double radius);

// Closed-form Frobenius rotation angle for one constrained sphere step:
// arccos((1 - eta c alpha) / sqrt(1 - 2 eta c alpha + eta^2 c^2)).
double expected_rotation_fro(double eta, double c, double alpha);

} // namespace macroptim
