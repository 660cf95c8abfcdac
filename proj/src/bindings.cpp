#include <filesystem>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "macroptim/diag.hpp"
#include "macroptim/harness.hpp"
#include "macroptim/linalg.hpp"
#include "macroptim/manifold.hpp"
#include "macroptim/model.hpp"
#include "macroptim/schedule.hpp"

namespace py = pybind11;
using namespace macroptim;

namespace {

using NpArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const NpArray &arr) {
    if (arr.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
    const auto rows = static_cast<int>(arr.shape(0));
    const auto cols = static_cast<int>(arr.shape(1));
    std::vector<double> data(arr.data(), arr.data() + static_cast<std::size_t>(rows) * cols);
    return Matrix(rows, cols, std::move(data));
}

NpArray from_matrix(const Matrix &m) {
    NpArray arr({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), arr.mutable_data());
    return arr;
}

MsignMode mode_from_string(const std::string &mode) {
    if (mode == "exact") return MsignMode::exact;
    if (mode == "ns" || mode == "newton_schulz") return MsignMode::newton_schulz;
    throw std::invalid_argument("msign mode must be 'exact' or 'newton_schulz'");
}

NormKind norm_kind_from_string(const std::string &kind) {
    if (kind == "frobenius") return NormKind::frobenius;
    if (kind == "spectral") return NormKind::spectral;
    if (kind == "nuclear") return NormKind::nuclear;
    if (kind == "one_to_two") return NormKind::one_to_two;
    if (kind == "two_to_inf") return NormKind::two_to_inf;
    throw std::invalid_argument("unknown norm kind '" + kind + "'");
}

// Stateful step driver matching the harness per-parameter update.
class ConstrainedOptimizer {
  public:
    ConstrainedOptimizer(const std::string &algorithm, const std::string &manifold, double radius,
                         int rows, int cols, double beta, double c, double epsilon,
                         const std::string &msign_mode, int ns_iters, double inner_tol,
                         int inner_cap, double weight_decay, bool spectral_exact_clip)
        : kind_(optimizer_kind_from_string(algorithm)),
          spec_(manifold_kind_from_string(manifold), radius),
          state_(rows, cols, beta, c, epsilon), mode_(mode_from_string(msign_mode)),
          ns_iters_(ns_iters), inner_tol_(inner_tol), inner_cap_(inner_cap),
          weight_decay_(weight_decay), exact_clip_(spectral_exact_clip) {}

    py::tuple step(const NpArray &w_arr, const NpArray &grad_arr, double eta) {
        const Matrix w = to_matrix(w_arr);
        const Matrix grad = to_matrix(grad_arr);
        py::dict info;
        Matrix next;
        if (kind_ == OptimizerKind::muon) {
            next = muon_step(w, grad, state_, eta, weight_decay_, mode_, ns_iters_);
            info["stationary"] = false;
        } else {
            StepResult res;
            switch (kind_) {
            case OptimizerKind::macro:
                res = macro_step(w, grad, state_, spec_, eta, mode_, ns_iters_, exact_clip_);
                break;
            case OptimizerKind::muonh:
                res = muonh_step(w, grad, state_, spec_, eta, mode_, ns_iters_, exact_clip_);
                break;
            case OptimizerKind::fso:
                res = fso_step(w, grad, state_, spec_, eta, inner_tol_, inner_cap_, mode_,
                               ns_iters_, exact_clip_);
                break;
            default:
                break;
            }
            next = res.w_next;
            info["stationary"] = res.stationary;
            info["degenerate"] = res.degenerate;
            if (!res.stationary) {
                info["direction"] = from_matrix(res.direction);
                info["scaled_update"] = from_matrix(res.scaled_update);
                info["rel_lr"] = relative_lr(spec_, w, res.scaled_update);
                info["vio"] = tangent_violation(spec_, w, (1.0 / eta) * res.scaled_update);
                info["alpha"] = alignment_cosine(w, res.direction, spec_.radius);
            }
            if (kind_ == OptimizerKind::fso) info["lambda_star"] = res.lambda_star;
        }
        return py::make_tuple(from_matrix(next), info);
    }

    py::dict state() const {
        py::dict d;
        d["momentum"] = from_matrix(state_.momentum);
        d["step"] = state_.step;
        return d;
    }

  private:
    OptimizerKind kind_;
    ManifoldSpec spec_;
    OptimizerState state_;
    MsignMode mode_;
    int ns_iters_;
    double inner_tol_;
    int inner_cap_;
    double weight_decay_;
    bool exact_clip_;
};

py::dict summary_to_dict(const RunSummary &summary) {
    py::dict d;
    d["status"] = summary.status;
    d["steps_run"] = summary.steps_run;
    d["initial_train_loss"] = summary.initial_train_loss;
    d["final_train_loss"] = summary.final_train_loss;
    if (summary.final_eval_loss) d["final_eval_loss"] = *summary.final_eval_loss;
    if (summary.final_dist) d["final_dist"] = *summary.final_dist;
    d["wall_time_seconds"] = summary.wall_time_seconds;
    py::list params;
    for (const ParamSummary &p : summary.params) {
        py::dict pd;
        pd["name"] = p.name;
        pd["manifold"] = to_string(p.manifold);
        pd["radius"] = p.radius;
        pd["mean_vio"] = p.mean_vio;
        pd["degenerate_fraction"] = p.degenerate_fraction;
        pd["min_stable_rank"] = p.min_stable_rank;
        pd["max_feasibility_gap"] = p.max_feasibility_gap;
        params.append(pd);
    }
    d["params"] = params;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Manifold-constrained matrix optimizers: kernels, steps, diagnostics";

    py::register_exception<NumericalError>(m, "NumericalError");

    m.def(
        "svd",
        [](const NpArray &a) {
            const SvdResult d = svd(to_matrix(a));
            py::array_t<double> s(std::vector<py::ssize_t>{static_cast<py::ssize_t>(d.s.size())});
            std::copy(d.s.begin(), d.s.end(), s.mutable_data());
            return py::make_tuple(from_matrix(d.u), s, from_matrix(d.vt));
        },
        py::arg("a"), "Thin SVD (u, s, vt) with s non-increasing");

    m.def(
        "msign",
        [](const NpArray &a, const std::string &mode, int iters) {
            return from_matrix(msign(to_matrix(a), mode_from_string(mode), iters));
        },
        py::arg("a"), py::arg("mode") = "exact", py::arg("iters") = 30,
        "Matrix sign (polar factor), exact or Newton-Schulz");

    m.def(
        "leading_triplet",
        [](const NpArray &a, double tol, int max_iters) {
            const LeadingTriplet t = leading_triplet(to_matrix(a), tol, max_iters);
            py::array_t<double> u(std::vector<py::ssize_t>{static_cast<py::ssize_t>(t.u.size())});
            std::copy(t.u.begin(), t.u.end(), u.mutable_data());
            py::array_t<double> v(std::vector<py::ssize_t>{static_cast<py::ssize_t>(t.v.size())});
            std::copy(t.v.begin(), t.v.end(), v.mutable_data());
            return py::make_tuple(t.sigma, u, v, t.svd_fallback);
        },
        py::arg("a"), py::arg("tol") = 1e-10, py::arg("max_iters") = 1000,
        "Leading singular triplet (sigma, u, v, used_svd_fallback)");

    m.def(
        "norm",
        [](const NpArray &a, const std::string &kind) {
            return norm(to_matrix(a), norm_kind_from_string(kind));
        },
        py::arg("a"), py::arg("kind") = "frobenius",
        "Matrix norm: frobenius|spectral|nuclear|one_to_two|two_to_inf");

    m.def(
        "radius_for",
        [](double r, int d_in, int d_out, const std::string &kind) {
            return radius_for(RadiusRule(r, d_in, d_out), manifold_kind_from_string(kind));
        },
        py::arg("r"), py::arg("d_in"), py::arg("d_out"), py::arg("kind"),
        "Practical constraint radius for a layer shape");

    m.def(
        "manifold_norm",
        [](const std::string &kind, double radius, const NpArray &a) {
            return manifold_norm(ManifoldSpec(manifold_kind_from_string(kind), radius),
                                 to_matrix(a));
        },
        py::arg("kind"), py::arg("radius"), py::arg("a"));

    m.def(
        "tangent_project",
        [](const std::string &kind, double radius, const NpArray &w, const NpArray &mat) {
            bool degenerate = false;
            Matrix phi = tangent_project(ManifoldSpec(manifold_kind_from_string(kind), radius),
                                         to_matrix(w), to_matrix(mat), &degenerate);
            return py::make_tuple(from_matrix(phi), degenerate);
        },
        py::arg("kind"), py::arg("radius"), py::arg("w"), py::arg("m"),
        "Tangent-space projection (phi, degenerate_flag)");

    m.def(
        "retract",
        [](const std::string &kind, double radius, const NpArray &a, bool exact_clip) {
            return from_matrix(retract(ManifoldSpec(manifold_kind_from_string(kind), radius),
                                       to_matrix(a), exact_clip));
        },
        py::arg("kind"), py::arg("radius"), py::arg("a"), py::arg("spectral_exact_clip") = false,
        "Projectional retraction onto the manifold");

    m.def(
        "feasibility_gap",
        [](const std::string &kind, double radius, const NpArray &w) {
            return feasibility_gap(ManifoldSpec(manifold_kind_from_string(kind), radius),
                                   to_matrix(w));
        },
        py::arg("kind"), py::arg("radius"), py::arg("w"));

    m.def(
        "bisect_lambda",
        [](const NpArray &w, const NpArray &mom, const std::string &kind, double tol,
           int max_iters, const std::string &mode, int ns_iters) {
            const BisectionResult res =
                bisect_lambda(to_matrix(w), to_matrix(mom),
                              ManifoldSpec(manifold_kind_from_string(kind), 1.0), tol, max_iters,
                              mode_from_string(mode), ns_iters);
            py::dict d;
            d["lambda_star"] = res.lambda_star;
            d["h_residual"] = res.h_residual;
            d["iters_used"] = res.iters_used;
            d["capped"] = res.capped;
            d["direction"] = from_matrix(res.direction);
            return d;
        },
        py::arg("w"), py::arg("m"), py::arg("kind") = "frobenius_sphere", py::arg("tol") = 1e-4,
        py::arg("max_iters") = 10, py::arg("mode") = "exact", py::arg("ns_iters") = 30,
        "Bisection for the tangency multiplier lambda*");

    py::class_<ConstrainedOptimizer>(m, "ConstrainedOptimizer",
                                     "Stateful per-parameter optimizer (macro|muonh|fso|muon)")
        .def(py::init<const std::string &, const std::string &, double, int, int, double, double,
                      double, const std::string &, int, double, int, double, bool>(),
             py::arg("algorithm"), py::arg("manifold") = "frobenius_sphere",
             py::arg("radius") = 1.0, py::arg("rows") = 1, py::arg("cols") = 1,
             py::arg("beta") = 0.9, py::arg("c") = 1.0, py::arg("epsilon") = 1e-8,
             py::arg("msign_mode") = "exact", py::arg("ns_iters") = 30,
             py::arg("inner_tol") = 1e-4, py::arg("inner_cap") = 10,
             py::arg("weight_decay") = 0.0, py::arg("spectral_exact_clip") = false)
        .def("step", &ConstrainedOptimizer::step, py::arg("w"), py::arg("grad"), py::arg("eta"),
             "One update; returns (w_next, info)")
        .def("state", &ConstrainedOptimizer::state);

    m.def("rotation_angle_fro",
          [](const NpArray &a, const NpArray &b) {
              return rotation_angle_fro(to_matrix(a), to_matrix(b));
          });
    m.def("rotation_angles_spec", [](const NpArray &a, const NpArray &b) {
        const SpectralAngles s = rotation_angles_spec(to_matrix(a), to_matrix(b));
        return py::make_tuple(s.theta_u, s.theta_v, s.degenerate);
    });
    m.def("tangent_violation",
          [](const std::string &kind, double radius, const NpArray &w, const NpArray &dir) {
              return tangent_violation(ManifoldSpec(manifold_kind_from_string(kind), radius),
                                       to_matrix(w), to_matrix(dir));
          });
    m.def("stable_rank", [](const NpArray &w) { return stable_rank(to_matrix(w)); });
    m.def("relative_lr",
          [](const std::string &kind, double radius, const NpArray &w, const NpArray &upd) {
              return relative_lr(ManifoldSpec(manifold_kind_from_string(kind), radius),
                                 to_matrix(w), to_matrix(upd));
          });
    m.def("activation_rms", [](const NpArray &y) { return activation_rms(to_matrix(y)); });

    m.def(
        "lr_at",
        [](const std::string &kind, double base_lr, long warmup, long total, double final_ratio,
           long t) {
            LrSchedule s;
            s.kind = schedule_kind_from_string(kind);
            s.base_lr = base_lr;
            s.warmup_steps = warmup;
            s.total_steps = total;
            s.final_lr_ratio = final_ratio;
            s.validate();
            return lr_at(s, t);
        },
        py::arg("kind"), py::arg("base_lr"), py::arg("warmup_steps"), py::arg("total_steps"),
        py::arg("final_lr_ratio"), py::arg("t"));

    m.def(
        "run_toml",
        [](const std::string &config_path, const std::string &out_dir) {
            const toml::Table table = toml::parse_file(config_path);
            const RunConfig config = run_config_from_toml(table);
            const RunResult result = run(config);
            if (!out_dir.empty()) {
                namespace fs = std::filesystem;
                fs::create_directories(out_dir);
                write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), result.metrics);
                write_metrics_jsonl((fs::path(out_dir) / "metrics.jsonl").string(), result.metrics);
                write_summary_json((fs::path(out_dir) / "summary.json").string(), result.summary,
                                   table);
            }
            return summary_to_dict(result.summary);
        },
        py::arg("config_path"), py::arg("out_dir") = "",
        "Run a training experiment from a TOML config; returns the summary");
}
