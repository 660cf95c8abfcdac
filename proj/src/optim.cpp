#include "macroptim/optim.hpp"

#include <cmath>

namespace macroptim {

namespace {

constexpr double kBracketSlack = 1e-9;

// Shared tail of the constrained steps: normalize, scale, descend, retract.
StepResult finish_step(const Matrix &w, Matrix phi, OptimizerState &state,
                       const ManifoldSpec &spec, double eta, MsignMode mode, int ns_iters,
                       bool spectral_exact_clip, bool degenerate) {
    StepResult res;
    res.phi = std::move(phi);
    res.degenerate = degenerate;

    const double phi_norm = frobenius_norm(res.phi);
    const double mom_norm = frobenius_norm(state.momentum);
    if (phi_norm == 0.0 || phi_norm <= kStationaryRelTol * mom_norm) {
        res.w_next = w;
        res.stationary = true;
        return res;
    }

    res.direction = msign(res.phi, mode, ns_iters);
    const double dir_norm = manifold_norm(spec, res.direction);
    const double scale = eta * state.c * spec.radius / (dir_norm + state.epsilon);
    res.scaled_update = scale * res.direction;
    res.update_manifold_norm = dir_norm == 0.0 ? 0.0 : scale * dir_norm;
    res.pre_retract = w - res.scaled_update;
    res.w_next = retract(spec, res.pre_retract, spectral_exact_clip);
    return res;
}

} // namespace

OptimizerState::OptimizerState(int rows, int cols, double beta_, double c_, double epsilon_)
    : momentum(rows, cols), beta(beta_), c(c_), epsilon(epsilon_) {
    if (beta < 0.0 || beta >= 1.0) throw std::invalid_argument("beta must lie in [0, 1)");
    if (!(c > 0.0)) throw std::invalid_argument("alignment ratio c must be positive");
    if (epsilon < 0.0) throw std::invalid_argument("epsilon must be non-negative");
}

void OptimizerState::update_momentum(const Matrix &grad) {
    if (!momentum.same_shape(grad)) {
        throw std::invalid_argument("gradient shape does not match optimizer state");
    }
    momentum *= beta;
    Matrix g = grad;
    g *= (1.0 - beta);
    momentum += g;
    ++step;
}

StepResult macro_step(const Matrix &w, const Matrix &grad, OptimizerState &state,
                      const ManifoldSpec &spec, double eta, MsignMode mode, int ns_iters,
                      bool spectral_exact_clip) {
    if (!(eta > 0.0)) throw std::invalid_argument("macro_step requires eta > 0");
    state.update_momentum(grad);
    bool degenerate = false;
    Matrix phi = tangent_project(spec, w, state.momentum, &degenerate);
    return finish_step(w, std::move(phi), state, spec, eta, mode, ns_iters, spectral_exact_clip,
                       degenerate);
}

StepResult muonh_step(const Matrix &w, const Matrix &grad, OptimizerState &state,
                      const ManifoldSpec &spec, double eta, MsignMode mode, int ns_iters,
                      bool spectral_exact_clip) {
    if (!(eta > 0.0)) throw std::invalid_argument("muonh_step requires eta > 0");
    state.update_momentum(grad);
    return finish_step(w, state.momentum, state, spec, eta, mode, ns_iters, spectral_exact_clip,
                       false);
}

BisectionResult bisect_lambda(const Matrix &w, const Matrix &m, const ManifoldSpec &spec,
                              double tol, int max_iters, MsignMode mode, int ns_iters,
                              bool check_monotone) {
    if (spec.kind != ManifoldKind::frobenius_sphere &&
        spec.kind != ManifoldKind::spectral_sphere) {
        throw std::invalid_argument("bisect_lambda supports sphere constraints only");
    }
    if (frobenius_norm(w) == 0.0) throw std::invalid_argument("bisect_lambda: w must be nonzero");

    // Evaluates h(lambda) = <w, msign(m + lambda w)>. If m + lambda w vanishes
    // exactly (m anti-parallel to w) the natural monotone completion is 0.
    auto h = [&](double lambda) {
        Matrix x = m + lambda * w;
        if (frobenius_norm(x) == 0.0) return 0.0;
        return dot(w, msign(x, mode, ns_iters));
    };

    // Bracket from exact nuclear norms, independent of the msign mode used
    // for the h evaluations.
    const double bracket = 2.0 * nuclear_norm(m) / nuclear_norm(w);

    const double h_lo = h(-bracket);
    const double h_hi = h(bracket);
    if (h_lo > kBracketSlack || h_hi < -kBracketSlack) {
        throw NumericalError("bisect_lambda: bracket endpoints violate the sign condition "
                             "(h(-B)=" + std::to_string(h_lo) + ", h(B)=" + std::to_string(h_hi) +
                             "); msign is suspect");
    }
    if (check_monotone) {
        double prev = h_lo;
        for (int i = 1; i < 20; ++i) {
            const double lam = -bracket + 2.0 * bracket * i / 19.0;
            const double v = h(lam);
            if (v < prev - 1e-9) {
                throw NumericalError("bisect_lambda: h(lambda) is not monotone on the bracket");
            }
            prev = v;
        }
    }

    BisectionResult res;
    double lo = -bracket, hi = bracket;
    double lambda = 0.0, value = h(0.0);
    res.iters_used = 1;
    while (std::abs(value) > tol && res.iters_used < max_iters) {
        if (value > 0.0) {
            hi = lambda;
        } else {
            lo = lambda;
        }
        lambda = 0.5 * (lo + hi);
        value = h(lambda);
        ++res.iters_used;
    }
    res.lambda_star = lambda;
    res.h_residual = value;
    res.capped = std::abs(value) > tol;
    Matrix x = m + lambda * w;
    res.direction = frobenius_norm(x) == 0.0 ? Matrix(w.rows(), w.cols())
                                             : msign(x, mode, ns_iters);
    return res;
}

StepResult fso_step(const Matrix &w, const Matrix &grad, OptimizerState &state,
                    const ManifoldSpec &spec, double eta, double inner_tol, int inner_cap,
                    MsignMode mode, int ns_iters, bool spectral_exact_clip) {
    if (!(eta > 0.0)) throw std::invalid_argument("fso_step requires eta > 0");
    state.update_momentum(grad);

    StepResult res;
    const double mom_norm = frobenius_norm(state.momentum);
    if (mom_norm == 0.0) {
        res.w_next = w;
        res.phi = state.momentum;
        res.stationary = true;
        return res;
    }

    BisectionResult bisect =
        bisect_lambda(w, state.momentum, spec, inner_tol, inner_cap, mode, ns_iters);
    res.lambda_star = bisect.lambda_star;
    res.phi = state.momentum + bisect.lambda_star * w;
    if (frobenius_norm(res.phi) <= kStationaryRelTol * mom_norm) {
        res.w_next = w;
        res.stationary = true;
        return res;
    }
    res.direction = std::move(bisect.direction);
    const double dir_norm = manifold_norm(spec, res.direction);
    const double scale = eta * state.c * spec.radius / (dir_norm + state.epsilon);
    res.scaled_update = scale * res.direction;
    res.update_manifold_norm = dir_norm == 0.0 ? 0.0 : scale * dir_norm;
    res.pre_retract = w - res.scaled_update;
    res.w_next = retract(spec, res.pre_retract, spectral_exact_clip);
    return res;
}

Matrix muon_step(const Matrix &w, const Matrix &grad, OptimizerState &state, double eta,
                 double weight_decay, MsignMode mode, int ns_iters, bool shape_scale) {
    state.update_momentum(grad);
    Matrix next = w;
    next *= (1.0 - eta * weight_decay);
    if (frobenius_norm(state.momentum) == 0.0) return next;

    double scale = 1.0;
    if (shape_scale) {
        scale = std::sqrt(std::max(1.0, static_cast<double>(w.rows()) / w.cols()));
    }
    Matrix update = msign(state.momentum, mode, ns_iters);
    update *= eta * scale;
    next -= update;
    return next;
}

void adamw_step(std::vector<double> &p, const std::vector<double> &grad, std::vector<double> &m,
                std::vector<double> &v, long t, double eta, double beta1, double beta2, double eps,
                double weight_decay) {
    if (p.size() != grad.size() || p.size() != m.size() || p.size() != v.size()) {
        throw std::invalid_argument("adamw_step: size mismatch");
    }
    if (t < 1) throw std::invalid_argument("adamw_step: t must be >= 1");
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] = (1.0 - eta * weight_decay) * p[i] - eta * mhat / (std::sqrt(vhat) + eps);
    }
}

} // namespace macroptim
