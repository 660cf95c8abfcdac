#pragma once

#include <vector>

#include "macroptim/matrix.hpp"

namespace macroptim {

// Thin SVD A = U diag(s) Vt with U (rows x k), s length k non-increasing,
// Vt (k x cols), k = min(rows, cols). U has orthonormal columns and Vt
// orthonormal rows even when A is rank deficient.
struct SvdResult {
    Matrix u;
    std::vector<double> s;
    Matrix vt;

    Matrix reconstruct() const;
};

// One-sided Jacobi SVD. Accurate to machine precision for the desk-scale
// matrices this toolkit targets; throws NumericalError with the residual
// coupling if the sweep cap is hit.
SvdResult svd(const Matrix &a);

// Matrix sign / polar factor U Vt restricted to singular values above
// rank_tol * s_max (rank_tol = 1e-12). Undefined for the zero matrix.
Matrix msign_svd(const Matrix &a);

// Newton-Schulz polar iteration: pre-scale by 1/||a||_F, then
// X <- 1.5 X - 0.5 X X^T X for `iters` steps.
Matrix msign_ns(const Matrix &a, int iters);

enum class MsignMode { exact, newton_schulz };

Matrix msign(const Matrix &a, MsignMode mode, int ns_iters = 30);

struct LeadingTriplet {
    double sigma = 0.0;
    std::vector<double> u;
    std::vector<double> v;
    bool svd_fallback = false; // power iteration failed to certify; svd used
};

// Leading singular triplet via alternating power iteration with an SVD
// fallback on non-convergence. Sign convention: the first nonzero component
// of u is positive.
LeadingTriplet leading_triplet(const Matrix &a, double tol = 1e-10, int max_iters = 1000);

enum class NormKind { frobenius, spectral, nuclear, one_to_two, two_to_inf };

double norm(const Matrix &a, NormKind kind);

double spectral_norm(const Matrix &a);
double nuclear_norm(const Matrix &a);

} // namespace macroptim
