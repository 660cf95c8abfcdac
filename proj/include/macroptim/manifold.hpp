#pragma once

#include <string>

#include "macroptim/linalg.hpp"
#include "macroptim/matrix.hpp"

namespace macroptim {

enum class ManifoldKind { frobenius_sphere, spectral_sphere, oblique_in, oblique_out };

std::string to_string(ManifoldKind kind);
ManifoldKind manifold_kind_from_string(const std::string &name);

// A constraint set together with its radius. Owns the projection, retraction
// and norm semantics for the four supported constraints:
//   frobenius_sphere  ||W||_F = R
//   spectral_sphere   ||W||_2 = R
//   oblique_in        every column 2-norm = R
//   oblique_out       every row 2-norm = R
struct ManifoldSpec {
    ManifoldKind kind = ManifoldKind::frobenius_sphere;
    double radius = 1.0;

    ManifoldSpec() = default;
    ManifoldSpec(ManifoldKind k, double r);
};

// Per-layer radius selection: a single tunable multiplier r plus the layer
// shape fix the radius for every constraint kind.
struct RadiusRule {
    double r = 1.0;
    int d_in = 1;
    int d_out = 1;

    RadiusRule() = default;
    RadiusRule(double r_, int d_in_, int d_out_);
};

//   spectral_sphere  r sqrt(d_out / d_in)
//   frobenius_sphere r sqrt(d_out)
//   oblique_out      r
//   oblique_in       r sqrt(d_out / d_in)
double radius_for(const RadiusRule &rule, ManifoldKind kind);

// The norm in the manifold definition: Frobenius, spectral, max column
// 2-norm (1->2) or max row 2-norm (2->inf).
double manifold_norm(const ManifoldSpec &spec, const Matrix &a);

// Orthogonal projection of m onto the tangent space at w. For the spectral
// sphere the normal is u1 v1^T from the leading singular pair of w; when the
// leading singular value is not simple (sigma1 - sigma2 < 1e-10 sigma1) the
// projection still uses the svd-derived pair and *degenerate is set.
// Preconditions: w on-manifold within 1e-8 relative; oblique kinds require
// every row/column of w nonzero.
Matrix tangent_project(const ManifoldSpec &spec, const Matrix &w, const Matrix &m,
                       bool *degenerate = nullptr);

// Projectional retraction. The spectral case uses the rescaling R a/||a||_2
// by default; `spectral_exact_clip` switches to the exact nearest-point
// projection (clip singular values above R, or raise the largest to R when
// all are below).
Matrix retract(const ManifoldSpec &spec, const Matrix &a, bool spectral_exact_clip = false);

// Relative constraint violation: |(||w||_M - R)| / R for the spheres, the
// max over rows/columns for the oblique kinds.
double feasibility_gap(const ManifoldSpec &spec, const Matrix &w);

// Constraint normal at w (the gradient of the defining scalar constraint):
// w itself for the Frobenius sphere, u1 v1^T for the spectral sphere. For
// oblique kinds the constraint is per-row/column; this returns w as the
// stacked normal directions (consumers reduce per row/column).
Matrix constraint_normal(const ManifoldSpec &spec, const Matrix &w);

} // namespace macroptim
