#include "macroptim/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "macroptim/rng.hpp"

namespace macroptim {

namespace {

constexpr double kJacobiTol = 1.0e-15; // relative column-coupling target
constexpr int kJacobiMaxSweeps = 100;
constexpr double kMsignRankTol = 1.0e-12;

// One-sided Jacobi on b (rows >= cols): rotates column pairs until all
// normalized couplings |b_p . b_q| / (|b_p||b_q|) fall below kJacobiTol.
// v accumulates the right rotations. Returns the worst coupling seen in the
// final sweep.
double jacobi_orthogonalize(Matrix &b, Matrix &v) {
    const int m = b.rows();
    const int n = b.cols();
    double worst = 0.0;
    for (int sweep = 0; sweep < kJacobiMaxSweeps; ++sweep) {
        worst = 0.0;
        // Columns this far below the dominant one carry only rounding residue
        // from earlier rotations; rotating them against a parallel partner
        // never converges in the relative criterion, so they are treated as
        // numerically zero (and rebuilt by the basis completion afterwards).
        double max_app = 0.0;
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int i = 0; i < m; ++i) s += b(i, j) * b(i, j);
            max_app = std::max(max_app, s);
        }
        const double tiny = max_app * 1e-28;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (int i = 0; i < m; ++i) {
                    const double bp = b(i, p);
                    const double bq = b(i, q);
                    app += bp * bp;
                    aqq += bq * bq;
                    apq += bp * bq;
                }
                if (app <= tiny || aqq <= tiny) continue; // numerically zero column
                // divide before multiplying: app * aqq overflows long before
                // the entries themselves do
                const double coupling = (std::abs(apq) / std::sqrt(app)) / std::sqrt(aqq);
                worst = std::max(worst, coupling);
                if (coupling <= kJacobiTol) continue;

                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (int i = 0; i < m; ++i) {
                    const double bp = b(i, p);
                    const double bq = b(i, q);
                    b(i, p) = c * bp - s * bq;
                    b(i, q) = s * bp + c * bq;
                }
                for (int i = 0; i < n; ++i) {
                    const double vp = v(i, p);
                    const double vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (worst <= kJacobiTol) return worst;
    }
    throw NumericalError("jacobi svd did not converge; residual coupling " +
                         std::to_string(worst));
}

// Fills u's column `col` with a unit vector orthogonal to columns [0, col)
// and to the columns listed in `established`. Candidates are standard basis
// vectors; the one with the largest residual after projection wins.
void complete_orthonormal_column(Matrix &u, int col, const std::vector<int> &established) {
    const int m = u.rows();
    std::vector<double> best(m, 0.0);
    double best_norm = -1.0;
    for (int cand = 0; cand < m; ++cand) {
        std::vector<double> w(m, 0.0);
        w[cand] = 1.0;
        for (int pass = 0; pass < 2; ++pass) { // twice-is-enough Gram-Schmidt
            for (int j : established) {
                double proj = 0.0;
                for (int i = 0; i < m; ++i) proj += w[i] * u(i, j);
                for (int i = 0; i < m; ++i) w[i] -= proj * u(i, j);
            }
        }
        double nrm = 0.0;
        for (double x : w) nrm += x * x;
        nrm = std::sqrt(nrm);
        if (nrm > best_norm) {
            best_norm = nrm;
            best = std::move(w);
        }
        if (best_norm > 0.5) break; // good enough, no need to scan all candidates
    }
    for (int i = 0; i < m; ++i) u(i, col) = best[i] / best_norm;
}

SvdResult svd_tall(const Matrix &a) {
    const int m = a.rows();
    const int n = a.cols();
    Matrix b = a;
    // Entries beyond ~1e100 overflow the squared column norms inside the
    // sweep; rescale such inputs and restore the scale on the singular values.
    double prescale = 1.0;
    const double amax = max_abs(a);
    if (amax > 1e70 || (amax > 0.0 && amax < 1e-70)) {
        prescale = amax;
        b *= 1.0 / prescale;
    }
    Matrix v = Matrix::identity(n);
    jacobi_orthogonalize(b, v);

    std::vector<double> sigma(n, 0.0);
    for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += b(i, j) * b(i, j);
        sigma[j] = std::sqrt(s);
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return sigma[x] > sigma[y]; });

    SvdResult out;
    out.u = Matrix(m, n);
    out.vt = Matrix(n, n);
    out.s.resize(n);
    const double smax = sigma[order[0]];
    std::vector<int> established;
    std::vector<int> needs_completion;
    for (int j = 0; j < n; ++j) {
        const int src = order[j];
        out.s[j] = sigma[src] * prescale;
        for (int i = 0; i < n; ++i) out.vt(j, i) = v(i, src);
        // Columns below the rank cutoff have directions dominated by rounding
        // residue; rebuild them as an explicit orthonormal completion instead.
        if (sigma[src] > smax * 1e-13 && sigma[src] > 0.0) {
            for (int i = 0; i < m; ++i) out.u(i, j) = b(i, src) / sigma[src];
            established.push_back(j);
        } else {
            needs_completion.push_back(j);
        }
    }
    for (int j : needs_completion) {
        complete_orthonormal_column(out.u, j, established);
        established.push_back(j);
    }
    return out;
}

// Picks the cheaper Gram side for X X^T X.
Matrix x_xt_x(const Matrix &x) {
    if (x.rows() <= x.cols()) {
        return matmul(matmul(x, transpose(x)), x);
    }
    return matmul(x, matmul(transpose(x), x));
}

} // namespace

Matrix SvdResult::reconstruct() const {
    Matrix us = u;
    for (int i = 0; i < us.rows(); ++i) {
        for (int j = 0; j < us.cols(); ++j) us(i, j) *= s[static_cast<std::size_t>(j)];
    }
    return matmul(us, vt);
}

SvdResult svd(const Matrix &a) {
    if (a.empty()) throw std::invalid_argument("svd of empty matrix");
    if (!a.all_finite()) throw std::invalid_argument("svd requires finite input");
    if (a.rows() >= a.cols()) return svd_tall(a);
    SvdResult t = svd_tall(transpose(a));
    SvdResult out;
    out.s = std::move(t.s);
    out.u = transpose(t.vt);
    out.vt = transpose(t.u);
    return out;
}

Matrix msign_svd(const Matrix &a) {
    if (frobenius_norm(a) == 0.0) {
        throw NumericalError("msign of the zero matrix is undefined");
    }
    SvdResult d = svd(a);
    const double cutoff = kMsignRankTol * d.s[0];
    int r = 0;
    while (r < static_cast<int>(d.s.size()) && d.s[static_cast<std::size_t>(r)] > cutoff) ++r;
    Matrix out(a.rows(), a.cols());
    for (int k = 0; k < r; ++k) {
        for (int i = 0; i < a.rows(); ++i) {
            const double uik = d.u(i, k);
            if (uik == 0.0) continue;
            for (int j = 0; j < a.cols(); ++j) out(i, j) += uik * d.vt(k, j);
        }
    }
    return out;
}

Matrix msign_ns(const Matrix &a, int iters) {
    if (iters < 1) throw std::invalid_argument("msign_ns requires iters >= 1");
    const double amax = max_abs(a);
    if (amax == 0.0) throw NumericalError("msign of the zero matrix is undefined");
    // msign is scale invariant; normalizing by the max entry first keeps the
    // Frobenius norm finite for extreme inputs.
    Matrix x = a;
    if (amax > 1e100 || amax < 1e-100) x *= 1.0 / amax;
    const double nrm = frobenius_norm(x);
    x *= 1.0 / nrm;
    for (int k = 0; k < iters; ++k) {
        Matrix cubic = x_xt_x(x);
        x *= 1.5;
        cubic *= 0.5;
        x -= cubic;
    }
    return x;
}

Matrix msign(const Matrix &a, MsignMode mode, int ns_iters) {
    return mode == MsignMode::exact ? msign_svd(a) : msign_ns(a, ns_iters);
}

LeadingTriplet leading_triplet(const Matrix &a, double tol, int max_iters) {
    if (frobenius_norm(a) == 0.0) {
        throw NumericalError("leading triplet of the zero matrix is undefined");
    }
    const int m = a.rows();
    const int n = a.cols();

    auto matvec = [&](const std::vector<double> &x) {
        std::vector<double> y(static_cast<std::size_t>(m), 0.0);
        for (int i = 0; i < m; ++i) {
            double s = 0.0;
            const double *row = a.row_ptr(i);
            for (int j = 0; j < n; ++j) s += row[j] * x[static_cast<std::size_t>(j)];
            y[static_cast<std::size_t>(i)] = s;
        }
        return y;
    };
    auto matvec_t = [&](const std::vector<double> &x) {
        std::vector<double> y(static_cast<std::size_t>(n), 0.0);
        for (int i = 0; i < m; ++i) {
            const double xi = x[static_cast<std::size_t>(i)];
            if (xi == 0.0) continue;
            const double *row = a.row_ptr(i);
            for (int j = 0; j < n; ++j) y[static_cast<std::size_t>(j)] += row[j] * xi;
        }
        return y;
    };
    auto norm2 = [](const std::vector<double> &x) {
        double s = 0.0;
        for (double v : x) s += v * v;
        return std::sqrt(s);
    };

    // Deterministic pseudo-random start; redrawn if it lands in the null space.
    Xoshiro256StarStar rng(0x5EEDF00Du ^ (static_cast<std::uint64_t>(m) << 32) ^
                           static_cast<std::uint64_t>(n));
    LeadingTriplet result;
    std::vector<double> v(static_cast<std::size_t>(n));
    bool converged = false;
    for (int redraw = 0; redraw < 3 && !converged; ++redraw) {
        for (double &x : v) x = rng.gaussian();
        const double vn = norm2(v);
        if (vn == 0.0) continue;
        for (double &x : v) x /= vn;

        std::vector<double> u;
        double sigma = 0.0;
        for (int it = 0; it < max_iters; ++it) {
            u = matvec(v);
            const double un = norm2(u);
            if (un == 0.0) break; // null-space start, redraw
            for (double &x : u) x /= un;
            std::vector<double> w = matvec_t(u);
            sigma = norm2(w);
            if (sigma == 0.0) break;
            for (std::size_t i = 0; i < w.size(); ++i) v[i] = w[i] / sigma;

            // Residual certificate: ||A v - sigma u|| and ||A^T u - sigma v||.
            std::vector<double> av = matvec(v);
            double r1 = 0.0;
            for (std::size_t i = 0; i < av.size(); ++i) {
                const double d = av[i] - sigma * u[i];
                r1 += d * d;
            }
            std::vector<double> atu = matvec_t(u);
            double r2 = 0.0;
            for (std::size_t i = 0; i < atu.size(); ++i) {
                const double d = atu[i] - sigma * v[i];
                r2 += d * d;
            }
            if (std::sqrt(r1) <= tol * sigma && std::sqrt(r2) <= tol * sigma) {
                result.sigma = sigma;
                result.u = u;
                result.v = v;
                converged = true;
                break;
            }
        }
    }

    if (!converged) {
        // Near-tied leading singular values stall power iteration; fall back
        // to the exact decomposition and flag it.
        SvdResult d = svd(a);
        result.sigma = d.s[0];
        result.u.assign(static_cast<std::size_t>(m), 0.0);
        result.v.assign(static_cast<std::size_t>(n), 0.0);
        for (int i = 0; i < m; ++i) result.u[static_cast<std::size_t>(i)] = d.u(i, 0);
        for (int j = 0; j < n; ++j) result.v[static_cast<std::size_t>(j)] = d.vt(0, j);
        result.svd_fallback = true;
    }

    for (double x : result.u) {
        if (x != 0.0) {
            if (x < 0.0) {
                for (double &y : result.u) y = -y;
                for (double &y : result.v) y = -y;
            }
            break;
        }
    }
    return result;
}

double spectral_norm(const Matrix &a) {
    if (frobenius_norm(a) == 0.0) return 0.0;
    return svd(a).s[0];
}

double nuclear_norm(const Matrix &a) {
    if (frobenius_norm(a) == 0.0) return 0.0;
    const SvdResult d = svd(a);
    double s = 0.0;
    for (double x : d.s) s += x;
    return s;
}

double norm(const Matrix &a, NormKind kind) {
    switch (kind) {
    case NormKind::frobenius:
        return frobenius_norm(a);
    case NormKind::spectral:
        return spectral_norm(a);
    case NormKind::nuclear:
        return nuclear_norm(a);
    case NormKind::one_to_two: {
        double best = 0.0;
        for (int j = 0; j < a.cols(); ++j) {
            double s = 0.0;
            for (int i = 0; i < a.rows(); ++i) s += a(i, j) * a(i, j);
            best = std::max(best, s);
        }
        return std::sqrt(best);
    }
    case NormKind::two_to_inf: {
        double best = 0.0;
        for (int i = 0; i < a.rows(); ++i) {
            double s = 0.0;
            for (int j = 0; j < a.cols(); ++j) s += a(i, j) * a(i, j);
            best = std::max(best, s);
        }
        return std::sqrt(best);
    }
    }
    throw std::invalid_argument("unknown norm kind");
}

} // namespace macroptim
