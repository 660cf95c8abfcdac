#include "macroptim/diag.hpp"

#include <algorithm>
#include <cmath>

namespace macroptim {

namespace {

double clamped_arccos(double x) { return std::acos(std::clamp(x, -1.0, 1.0)); }

} // namespace

double rotation_angle_fro(const Matrix &w_t, const Matrix &w_next) {
    const double n0 = frobenius_norm(w_t);
    const double n1 = frobenius_norm(w_next);
    if (n0 == 0.0 || n1 == 0.0) {
        throw std::invalid_argument("rotation_angle_fro requires nonzero iterates");
    }
    return clamped_arccos(dot(w_next, w_t) / (n0 * n1));
}

SpectralAngles rotation_angles_spec(const Matrix &w_t, const Matrix &w_next) {
    const SvdResult d0 = svd(w_t);
    const SvdResult d1 = svd(w_next);
    SpectralAngles out;
    auto simple = [](const SvdResult &d) {
        return d.s.size() < 2 || d.s[0] - d.s[1] >= 1e-10 * d.s[0];
    };
    out.degenerate = !simple(d0) || !simple(d1);

    double du = 0.0;
    for (int i = 0; i < w_t.rows(); ++i) du += d0.u(i, 0) * d1.u(i, 0);
    double dv = 0.0;
    for (int j = 0; j < w_t.cols(); ++j) dv += d0.vt(0, j) * d1.vt(0, j);
    out.theta_u = clamped_arccos(std::abs(du));
    out.theta_v = clamped_arccos(std::abs(dv));
    return out;
}

double tangent_violation(const ManifoldSpec &spec, const Matrix &w, const Matrix &update_dir) {
    if (!w.same_shape(update_dir)) throw std::invalid_argument("tangent_violation shape mismatch");
    switch (spec.kind) {
    case ManifoldKind::frobenius_sphere:
    case ManifoldKind::spectral_sphere:
        return std::abs(dot(constraint_normal(spec, w), update_dir));
    case ManifoldKind::oblique_out: {
        double worst = 0.0;
        for (int i = 0; i < w.rows(); ++i) {
            double s = 0.0;
            for (int j = 0; j < w.cols(); ++j) s += w(i, j) * update_dir(i, j);
            worst = std::max(worst, std::abs(s));
        }
        return worst;
    }
    case ManifoldKind::oblique_in: {
        double worst = 0.0;
        for (int j = 0; j < w.cols(); ++j) {
            double s = 0.0;
            for (int i = 0; i < w.rows(); ++i) s += w(i, j) * update_dir(i, j);
            worst = std::max(worst, std::abs(s));
        }
        return worst;
    }
    }
    throw std::invalid_argument("unknown manifold kind");
}

double stable_rank(const Matrix &w) {
    const double f = frobenius_norm(w);
    if (f == 0.0) throw std::invalid_argument("stable_rank of the zero matrix is undefined");
    const double s = spectral_norm(w);
    return (f * f) / (s * s);
}

double relative_lr(const ManifoldSpec &spec, const Matrix &w, const Matrix &scaled_update) {
    const double wn = manifold_norm(spec, w);
    if (wn == 0.0) throw std::invalid_argument("relative_lr requires nonzero w");
    return manifold_norm(spec, scaled_update) / wn;
}

double activation_rms(const Matrix &y) {
    return frobenius_norm(y) / std::sqrt(static_cast<double>(y.size()));
}

double alignment_cosine(const Matrix &w, const Matrix &direction, double radius) {
    const double dn = frobenius_norm(direction);
    if (dn == 0.0) return 0.0;
    return dot(w, direction) / (radius * dn);
}

double expected_rotation_fro(double eta, double c, double alpha) {
    const double ec = eta * c;
    const double denom = std::sqrt(1.0 - 2.0 * ec * alpha + ec * ec);
    return clamped_arccos((1.0 - ec * alpha) / denom);
}

} // namespace macroptim
