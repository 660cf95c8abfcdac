#include "selftest.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "macroptim/diag.hpp"
#include "macroptim/harness.hpp"
#include "macroptim/linalg.hpp"
#include "macroptim/manifold.hpp"
#include "macroptim/model.hpp"
#include "macroptim/optim.hpp"
#include "macroptim/rng.hpp"

namespace macroptim {

namespace {

Matrix random_matrix(int rows, int cols, std::uint64_t seed, double scale = 1.0) {
    Xoshiro256StarStar rng(seed);
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.gaussian();
    }
    return m;
}

const ManifoldKind kAllKinds[] = {ManifoldKind::frobenius_sphere, ManifoldKind::spectral_sphere,
                                  ManifoldKind::oblique_in, ManifoldKind::oblique_out};

bool check_msign() {
    for (int s = 0; s < 20; ++s) {
        Matrix a = random_matrix(24, 16, 100 + s);
        if (frobenius_norm(msign_ns(a, 30) - msign_svd(a)) > 1e-6) return false;
        const Matrix o = msign_svd(a);
        if (std::abs(spectral_norm(o) - 1.0) > 1e-10) return false;
        if (std::abs(dot(a, o) - nuclear_norm(a)) > 1e-8 * nuclear_norm(a)) return false;
    }
    return true;
}

bool check_tangent_battery() {
    for (ManifoldKind kind : kAllKinds) {
        for (int s = 0; s < 40; ++s) {
            const ManifoldSpec spec(kind, 1.5);
            const Matrix w = retract(spec, random_matrix(10, 7, 500 + s));
            const Matrix m = random_matrix(10, 7, 900 + s);
            const Matrix phi = tangent_project(spec, w, m);
            const Matrix normal = constraint_normal(spec, w);
            if (tangent_violation(spec, w, phi) >
                1e-10 * frobenius_norm(m) * frobenius_norm(normal)) {
                return false;
            }
            const Matrix phi2 = tangent_project(spec, w, phi);
            if (frobenius_norm(phi2 - phi) > 1e-10 * std::max(1.0, frobenius_norm(m))) return false;
            if (frobenius_norm(phi) > frobenius_norm(m) + 1e-12) return false;
            if (feasibility_gap(spec, retract(spec, m)) > 1e-12) return false;
        }
    }
    return true;
}

bool check_feasibility_steps() {
    for (ManifoldKind kind : kAllKinds) {
        const ManifoldSpec spec(kind, 2.0);
        Matrix w = retract(spec, random_matrix(8, 6, 7));
        const Matrix target = random_matrix(8, 6, 8);
        OptimizerState macro_state(8, 6, 0.9, 1.0, 0.0);
        OptimizerState muonh_state(8, 6, 0.9, 1.0, 0.0);
        Matrix w2 = w;
        for (int t = 0; t < 100; ++t) {
            Matrix grad = w - target;
            grad *= 2.0;
            w = macro_step(w, grad, macro_state, spec, 0.01).w_next;
            Matrix grad2 = w2 - target;
            grad2 *= 2.0;
            w2 = muonh_step(w2, grad2, muonh_state, spec, 0.01).w_next;
            if (feasibility_gap(spec, w) > 1e-12 || feasibility_gap(spec, w2) > 1e-12) return false;
        }
    }
    return true;
}

bool check_bisection() {
    const ManifoldSpec spec(ManifoldKind::frobenius_sphere, 1.0);
    for (int s = 0; s < 10; ++s) {
        const Matrix w = retract(spec, random_matrix(8, 5, 40 + s));
        const Matrix m = random_matrix(8, 5, 80 + s);
        const BisectionResult res =
            bisect_lambda(w, m, spec, 1e-6, 200, MsignMode::exact, 30, /*check_monotone=*/true);
        const double bound = 2.0 * nuclear_norm(m) / nuclear_norm(w) + 1e-9;
        if (std::abs(res.lambda_star) > bound || std::abs(res.h_residual) > 1e-4) return false;
    }
    return true;
}

bool check_rel_lr_lock() {
    const ManifoldSpec spec(ManifoldKind::frobenius_sphere, 1.0);
    Matrix w = retract(spec, random_matrix(8, 6, 11));
    const Matrix target = random_matrix(8, 6, 12);
    OptimizerState state(8, 6, 0.9, 0.7, 0.0);
    const double eta = 0.02;
    for (int t = 0; t < 50; ++t) {
        Matrix grad = w - target;
        grad *= 2.0;
        const StepResult res = macro_step(w, grad, state, spec, eta);
        if (res.stationary) continue;
        if (std::abs(relative_lr(spec, w, res.scaled_update) - state.c * eta) > 1e-12) return false;
        w = res.w_next;
    }
    return true;
}

bool check_rotation_identity() {
    const ManifoldSpec spec(ManifoldKind::frobenius_sphere, 1.0);
    Matrix w = retract(spec, random_matrix(8, 6, 21));
    Matrix target = random_matrix(8, 6, 22);
    target = (2.0 / frobenius_norm(target)) * target;
    OptimizerState state(8, 6, 0.9, 1.0, 0.0);
    const double eta = 0.01;
    for (int t = 0; t < 50; ++t) {
        Matrix grad = w - target;
        grad *= 2.0;
        const StepResult res = macro_step(w, grad, state, spec, eta);
        if (res.stationary) continue;
        const double alpha = alignment_cosine(w, res.direction, spec.radius);
        const double measured = rotation_angle_fro(w, res.w_next);
        if (std::abs(measured - expected_rotation_fro(eta, state.c, alpha)) > 1e-9) return false;
        w = res.w_next;
    }
    return true;
}

bool finite_difference_layer(Activation act, PreNorm pre, std::uint64_t seed) {
    Layer layer;
    layer.spec = LayerSpec{5, 4, act, pre, false, ManifoldKind::frobenius_sphere, false};
    layer.w1 = random_matrix(4, 5, seed, 0.5);
    if (layer.has_w2()) layer.w2 = random_matrix(4, 5, seed + 1, 0.5);
    if (pre == PreNorm::learnable_rms) {
        layer.gamma.assign(5, 1.0);
        layer.gamma[2] = 1.3;
    }
    const Matrix x = random_matrix(3, 5, seed + 2);
    const Matrix dy = random_matrix(3, 4, seed + 3);

    LayerCache cache;
    layer_forward(layer, x, &cache);
    const LayerGrads grads = layer_backward(layer, cache, dy);

    const double h = 1e-5;
    auto loss_at = [&](Layer &probe) { return dot(layer_forward(probe, x), dy); };
    for (int i = 0; i < layer.w1.rows(); ++i) {
        for (int j = 0; j < layer.w1.cols(); ++j) {
            Layer probe = layer;
            probe.w1(i, j) += h;
            const double up = loss_at(probe);
            probe.w1(i, j) -= 2 * h;
            const double dn = loss_at(probe);
            const double fd = (up - dn) / (2 * h);
            if (std::abs(fd - grads.w1(i, j)) > 1e-5 * std::max(1.0, std::abs(fd))) return false;
        }
    }
    return true;
}

bool check_gradients() {
    for (std::uint64_t s = 0; s < 2; ++s) {
        if (!finite_difference_layer(Activation::identity, PreNorm::none, 200 + s)) return false;
        if (!finite_difference_layer(Activation::swiglu, PreNorm::none, 300 + s)) return false;
        if (!finite_difference_layer(Activation::norm_gated_swiglu, PreNorm::parameter_free_rms,
                                     400 + s)) {
            return false;
        }
    }
    return true;
}

bool check_determinism() {
    toml::Table cfg = toml::parse(R"(
[task]
kind = "frobenius_nearest_point"
d_in = 5
d_out = 4
[optimizer]
kind = "macro"
[schedule]
kind = "constant"
base_lr = 0.01
[run]
steps = 20
seed = 9
)");
    const RunConfig rc = run_config_from_toml(cfg);
    const RunResult a = run(rc);
    const RunResult b = run(rc);
    if (a.metrics.rows.size() != b.metrics.rows.size()) return false;
    for (std::size_t i = 0; i < a.metrics.rows.size(); ++i) {
        if (a.metrics.rows[i].train_loss != b.metrics.rows[i].train_loss) return false;
    }
    return a.summary.final_train_loss == b.summary.final_train_loss;
}

} // namespace

int run_selftest() {
    const std::vector<std::pair<std::string, std::function<bool()>>> checks = {
        {"linalg.msign", check_msign},
        {"manifold.tangent_battery", check_tangent_battery},
        {"optim.feasibility", check_feasibility_steps},
        {"optim.bisection", check_bisection},
        {"optim.rel_lr_lock", check_rel_lr_lock},
        {"diag.rotation_identity", check_rotation_identity},
        {"model.gradients", check_gradients},
        {"harness.determinism", check_determinism},
    };
    int failures = 0;
    for (const auto &[name, fn] : checks) {
        bool ok = false;
        try {
            ok = fn();
        } catch (const std::exception &e) {
            std::printf("[FAIL] %s (exception: %s)\n", name.c_str(), e.what());
            ++failures;
            continue;
        }
        std::printf("[%s] %s\n", ok ? "ok" : "FAIL", name.c_str());
        if (!ok) ++failures;
    }
    return failures == 0 ? 0 : 2;
}

} // namespace macroptim
