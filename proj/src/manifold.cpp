#include "macroptim/manifold.hpp"

#include <cmath>

namespace macroptim {

namespace {

constexpr double kOnManifoldTol = 1.0e-8;   // feasibility precondition for projections
constexpr double kDegenerateTol = 1.0e-10;  // sigma1 simplicity threshold

void require_on_manifold(const ManifoldSpec &spec, const Matrix &w, const char *op) {
    const double gap = feasibility_gap(spec, w);
    if (gap > kOnManifoldTol) {
        throw std::invalid_argument(std::string(op) + ": point is off-manifold (gap " +
                                    std::to_string(gap) + ", kind " + to_string(spec.kind) + ")");
    }
}

double row_norm(const Matrix &a, int i) {
    double s = 0.0;
    for (int j = 0; j < a.cols(); ++j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

double col_norm(const Matrix &a, int j) {
    double s = 0.0;
    for (int i = 0; i < a.rows(); ++i) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

} // namespace

std::string to_string(ManifoldKind kind) {
    switch (kind) {
    case ManifoldKind::frobenius_sphere: return "frobenius_sphere";
    case ManifoldKind::spectral_sphere: return "spectral_sphere";
    case ManifoldKind::oblique_in: return "oblique_in";
    case ManifoldKind::oblique_out: return "oblique_out";
    }
    return "?";
}

ManifoldKind manifold_kind_from_string(const std::string &name) {
    if (name == "frobenius_sphere" || name == "fro") return ManifoldKind::frobenius_sphere;
    if (name == "spectral_sphere" || name == "spec") return ManifoldKind::spectral_sphere;
    if (name == "oblique_in" || name == "oin") return ManifoldKind::oblique_in;
    if (name == "oblique_out" || name == "oout") return ManifoldKind::oblique_out;
    throw std::invalid_argument("unknown manifold kind '" + name + "'");
}

ManifoldSpec::ManifoldSpec(ManifoldKind k, double r) : kind(k), radius(r) {
    if (!(r > 0.0) || !std::isfinite(r)) {
        throw std::invalid_argument("manifold radius must be positive and finite");
    }
}

RadiusRule::RadiusRule(double r_, int d_in_, int d_out_) : r(r_), d_in(d_in_), d_out(d_out_) {
    if (!(r > 0.0)) throw std::invalid_argument("radius multiplier r must be positive");
    if (d_in < 1 || d_out < 1) throw std::invalid_argument("radius rule requires dims >= 1");
}

double radius_for(const RadiusRule &rule, ManifoldKind kind) {
    const double ratio = std::sqrt(static_cast<double>(rule.d_out) / rule.d_in);
    switch (kind) {
    case ManifoldKind::spectral_sphere: return rule.r * ratio;
    case ManifoldKind::frobenius_sphere: return rule.r * std::sqrt(static_cast<double>(rule.d_out));
    case ManifoldKind::oblique_out: return rule.r;
    case ManifoldKind::oblique_in: return rule.r * ratio;
    }
    throw std::invalid_argument("unknown manifold kind");
}

double manifold_norm(const ManifoldSpec &spec, const Matrix &a) {
    switch (spec.kind) {
    case ManifoldKind::frobenius_sphere: return frobenius_norm(a);
    case ManifoldKind::spectral_sphere: return spectral_norm(a);
    case ManifoldKind::oblique_in: return norm(a, NormKind::one_to_two);
    case ManifoldKind::oblique_out: return norm(a, NormKind::two_to_inf);
    }
    throw std::invalid_argument("unknown manifold kind");
}

Matrix tangent_project(const ManifoldSpec &spec, const Matrix &w, const Matrix &m,
                       bool *degenerate) {
    if (!w.same_shape(m)) throw std::invalid_argument("tangent_project: shape mismatch");
    if (degenerate) *degenerate = false;
    require_on_manifold(spec, w, "tangent_project");

    switch (spec.kind) {
    case ManifoldKind::frobenius_sphere: {
        const double ww = dot(w, w);
        if (ww == 0.0) throw NumericalError("tangent_project: zero normal vector");
        Matrix phi = m;
        const double coeff = dot(m, w) / ww;
        Matrix scaled = w;
        scaled *= coeff;
        phi -= scaled;
        return phi;
    }
    case ManifoldKind::spectral_sphere: {
        const SvdResult d = svd(w);
        if (d.s.size() > 1 && d.s[0] - d.s[1] < kDegenerateTol * d.s[0]) {
            if (degenerate) *degenerate = true;
        }
        // Normal u1 v1^T has unit Frobenius norm, so the coefficient is
        // u1^T m v1 directly.
        double coeff = 0.0;
        for (int i = 0; i < m.rows(); ++i) {
            double mi_v = 0.0;
            for (int j = 0; j < m.cols(); ++j) mi_v += m(i, j) * d.vt(0, j);
            coeff += d.u(i, 0) * mi_v;
        }
        Matrix phi = m;
        for (int i = 0; i < m.rows(); ++i) {
            for (int j = 0; j < m.cols(); ++j) phi(i, j) -= coeff * d.u(i, 0) * d.vt(0, j);
        }
        return phi;
    }
    case ManifoldKind::oblique_out: {
        Matrix phi = m;
        for (int i = 0; i < w.rows(); ++i) {
            double ww = 0.0, mw = 0.0;
            for (int j = 0; j < w.cols(); ++j) {
                ww += w(i, j) * w(i, j);
                mw += m(i, j) * w(i, j);
            }
            if (ww == 0.0) {
                throw NumericalError("tangent_project: zero row " + std::to_string(i) +
                                     " has no defined normal");
            }
            const double coeff = mw / ww;
            for (int j = 0; j < w.cols(); ++j) phi(i, j) -= coeff * w(i, j);
        }
        return phi;
    }
    case ManifoldKind::oblique_in: {
        Matrix phi = m;
        for (int j = 0; j < w.cols(); ++j) {
            double ww = 0.0, mw = 0.0;
            for (int i = 0; i < w.rows(); ++i) {
                ww += w(i, j) * w(i, j);
                mw += m(i, j) * w(i, j);
            }
            if (ww == 0.0) {
                throw NumericalError("tangent_project: zero column " + std::to_string(j) +
                                     " has no defined normal");
            }
            const double coeff = mw / ww;
            for (int i = 0; i < w.rows(); ++i) phi(i, j) -= coeff * w(i, j);
        }
        return phi;
    }
    }
    throw std::invalid_argument("unknown manifold kind");
}

Matrix retract(const ManifoldSpec &spec, const Matrix &a, bool spectral_exact_clip) {
    const double R = spec.radius;
    switch (spec.kind) {
    case ManifoldKind::frobenius_sphere: {
        const double n = frobenius_norm(a);
        if (n == 0.0) throw NumericalError("retract: cannot project the zero matrix");
        return (R / n) * a;
    }
    case ManifoldKind::spectral_sphere: {
        if (frobenius_norm(a) == 0.0) {
            throw NumericalError("retract: cannot project the zero matrix");
        }
        if (!spectral_exact_clip) {
            const double n = spectral_norm(a);
            return (R / n) * a;
        }
        // Exact nearest point: clip singular values above R; if all fall
        // below, raise the largest to R.
        SvdResult d = svd(a);
        bool any_above = false;
        for (double &s : d.s) {
            if (s > R) {
                s = R;
                any_above = true;
            }
        }
        if (!any_above) d.s[0] = R;
        return d.reconstruct();
    }
    case ManifoldKind::oblique_out: {
        Matrix out = a;
        for (int i = 0; i < a.rows(); ++i) {
            const double n = row_norm(a, i);
            if (n == 0.0) {
                throw NumericalError("retract: zero row " + std::to_string(i));
            }
            const double scale = R / n;
            for (int j = 0; j < a.cols(); ++j) out(i, j) *= scale;
        }
        return out;
    }
    case ManifoldKind::oblique_in: {
        Matrix out = a;
        for (int j = 0; j < a.cols(); ++j) {
            const double n = col_norm(a, j);
            if (n == 0.0) {
                throw NumericalError("retract: zero column " + std::to_string(j));
            }
            const double scale = R / n;
            for (int i = 0; i < a.rows(); ++i) out(i, j) *= scale;
        }
        return out;
    }
    }
    throw std::invalid_argument("unknown manifold kind");
}

double feasibility_gap(const ManifoldSpec &spec, const Matrix &w) {
    const double R = spec.radius;
    switch (spec.kind) {
    case ManifoldKind::frobenius_sphere:
        return std::abs(frobenius_norm(w) - R) / R;
    case ManifoldKind::spectral_sphere:
        return std::abs(spectral_norm(w) - R) / R;
    case ManifoldKind::oblique_out: {
        double worst = 0.0;
        for (int i = 0; i < w.rows(); ++i) worst = std::max(worst, std::abs(row_norm(w, i) - R));
        return worst / R;
    }
    case ManifoldKind::oblique_in: {
        double worst = 0.0;
        for (int j = 0; j < w.cols(); ++j) worst = std::max(worst, std::abs(col_norm(w, j) - R));
        return worst / R;
    }
    }
    throw std::invalid_argument("unknown manifold kind");
}

Matrix constraint_normal(const ManifoldSpec &spec, const Matrix &w) {
    switch (spec.kind) {
    case ManifoldKind::frobenius_sphere:
    case ManifoldKind::oblique_in:
    case ManifoldKind::oblique_out:
        return w;
    case ManifoldKind::spectral_sphere: {
        const SvdResult d = svd(w);
        Matrix n(w.rows(), w.cols());
        for (int i = 0; i < w.rows(); ++i) {
            for (int j = 0; j < w.cols(); ++j) n(i, j) = d.u(i, 0) * d.vt(0, j);
        }
        return n;
    }
    }
    throw std::invalid_argument("unknown manifold kind");
}

} // namespace macroptim
