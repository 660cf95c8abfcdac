#include "macroptim/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "macroptim/rng.hpp"

namespace macroptim {

namespace {

constexpr double kDivergenceEntryCap = 1e12;

Matrix gaussian_init(int rows, int cols, Xoshiro256StarStar &rng) {
    // mu-P compatible scheme: sigma = min{sqrt(d_out/d_in), 1} / sqrt(d_in).
    const double sigma =
        std::min(std::sqrt(static_cast<double>(rows) / cols), 1.0) / std::sqrt(static_cast<double>(cols));
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = sigma * rng.gaussian();
    }
    return m;
}

struct MatrixSlot {
    std::string name;
    Matrix *weight = nullptr;
    bool constrained = false;
    ManifoldSpec spec;
    OptimizerState state;
};

struct GammaSlot {
    std::string name;
    std::vector<double> *gamma = nullptr;
    std::vector<double> m;
    std::vector<double> v;
    long t = 0;
};

// Column block per constrained parameter, in a fixed order.
const char *kDiagColumns[] = {"eta",     "rel_lr",       "alpha",      "vio",
                              "theta_fro", "theta_u",    "theta_v",    "spectral_gap",
                              "stable_rank", "feasibility", "degenerate", "stationary"};

void append_diag(MetricRow &row, double eta, const ManifoldSpec &spec, const Matrix &w_prev,
                 const StepResult &res) {
    std::optional<double> rel_lr, alpha, vio, theta_fro, theta_u, theta_v, gap;
    bool degenerate = res.degenerate;
    if (!res.stationary) {
        rel_lr = relative_lr(spec, w_prev, res.scaled_update);
        alpha = alignment_cosine(w_prev, res.direction, spec.radius);
        Matrix nd = (1.0 / eta) * res.scaled_update;
        vio = tangent_violation(spec, w_prev, nd);
        if (spec.kind == ManifoldKind::frobenius_sphere) {
            theta_fro = rotation_angle_fro(w_prev, res.w_next);
        } else if (spec.kind == ManifoldKind::spectral_sphere) {
            const SpectralAngles angles = rotation_angles_spec(w_prev, res.w_next);
            theta_u = angles.theta_u;
            theta_v = angles.theta_v;
            degenerate = degenerate || angles.degenerate;
            const SvdResult d = svd(res.w_next);
            gap = spec.radius - (d.s.size() > 1 ? d.s[1] : 0.0);
        }
    } else {
        rel_lr = 0.0;
        vio = 0.0;
    }
    row.values.push_back(eta);
    row.values.push_back(rel_lr);
    row.values.push_back(alpha);
    row.values.push_back(vio);
    row.values.push_back(theta_fro);
    row.values.push_back(theta_u);
    row.values.push_back(theta_v);
    row.values.push_back(gap);
    row.values.push_back(stable_rank(res.w_next));
    row.values.push_back(feasibility_gap(spec, res.w_next));
    row.values.push_back(degenerate ? 1.0 : 0.0);
    row.values.push_back(res.stationary ? 1.0 : 0.0);
}

std::string csv_quote(const std::string &field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') out += "\"\"";
        else out.push_back(ch);
    }
    out += "\"";
    return out;
}

std::string json_escape(const std::string &s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        case '\r': out += "\\r"; break;
        default:
            if (static_cast<unsigned char>(ch) < 0x20) {
                char buf[8];
                std::snprintf(buf, sizeof(buf), "\\u%04x", ch);
                out += buf;
            } else {
                out.push_back(ch);
            }
        }
    }
    return out;
}

std::string json_number(double v) {
    if (!std::isfinite(v)) return "null";
    return format_double(v);
}

void dump_toml_as_json(const toml::Value &v, std::string &out);

void dump_table_as_json(const toml::Table &t, std::string &out) {
    out += "{";
    bool first = true;
    for (const auto &[key, value] : t) {
        if (!first) out += ",";
        first = false;
        out += "\"" + json_escape(key) + "\":";
        dump_toml_as_json(value, out);
    }
    out += "}";
}

void dump_toml_as_json(const toml::Value &v, std::string &out) {
    if (v.is_string()) {
        out += "\"" + json_escape(v.as_string()) + "\"";
    } else if (v.is_int()) {
        out += std::to_string(v.as_int());
    } else if (v.is_float()) {
        out += json_number(v.as_number());
    } else if (v.is_bool()) {
        out += v.as_bool() ? "true" : "false";
    } else if (v.is_array()) {
        out += "[";
        bool first = true;
        for (const auto &e : v.as_array()) {
            if (!first) out += ",";
            first = false;
            dump_toml_as_json(e, out);
        }
        out += "]";
    } else if (v.is_table()) {
        dump_table_as_json(v.as_table(), out);
    } else {
        out += "[";
        bool first = true;
        for (const auto &t : v.as_table_array()) {
            if (!first) out += ",";
            first = false;
            dump_table_as_json(t, out);
        }
        out += "]";
    }
}

} // namespace

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

OptimizerKind optimizer_kind_from_string(const std::string &name) {
    if (name == "macro") return OptimizerKind::macro;
    if (name == "muonh") return OptimizerKind::muonh;
    if (name == "fso") return OptimizerKind::fso;
    if (name == "muon") return OptimizerKind::muon;
    throw std::invalid_argument("unknown optimizer kind '" + name + "'");
}

std::string to_string(OptimizerKind k) {
    switch (k) {
    case OptimizerKind::macro: return "macro";
    case OptimizerKind::muonh: return "muonh";
    case OptimizerKind::fso: return "fso";
    case OptimizerKind::muon: return "muon";
    }
    return "?";
}

void RunConfig::validate() const {
    if (steps < 0) throw std::invalid_argument("steps must be >= 0");
    if (diag_every < 1) throw std::invalid_argument("diag_every must be >= 1");
    schedule.validate();
    if (schedule.kind != ScheduleKind::constant && steps > schedule.total_steps) {
        throw std::invalid_argument("steps exceed schedule total_steps");
    }
    if (optimizer.kind == OptimizerKind::fso) {
        const auto check = [](ManifoldKind k) {
            if (k != ManifoldKind::frobenius_sphere && k != ManifoldKind::spectral_sphere) {
                throw std::invalid_argument("fso requires a frobenius or spectral sphere");
            }
        };
        if (task.kind == TaskKind::frobenius_nearest_point) {
            check(task_manifold);
        } else {
            for (const auto &layer : layers) {
                if (layer.spec.constrained) check(layer.spec.manifold);
            }
        }
    }
    if (task.kind == TaskKind::frobenius_nearest_point) {
        if (!layers.empty()) {
            throw std::invalid_argument("nearest-point task optimizes a single matrix; drop [model]");
        }
        return;
    }
    if (layers.empty()) throw std::invalid_argument("model tasks require at least one layer");
    int width = task.d_in;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].spec.d_in != width) {
            throw std::invalid_argument("layer " + std::to_string(i) + " d_in " +
                                        std::to_string(layers[i].spec.d_in) +
                                        " does not chain from width " + std::to_string(width));
        }
        width = layers[i].spec.d_out;
    }
    const int expected =
        task.kind == TaskKind::synthetic_classification ? task.clusters : task.d_out;
    if (width != expected) {
        throw std::invalid_argument("final layer width " + std::to_string(width) +
                                    " does not match task output " + std::to_string(expected));
    }
}

RunConfig run_config_from_toml(const toml::Table &table) {
    RunConfig cfg;
    cfg.task.kind = task_kind_from_string(get_string(table, "task.kind", "frobenius_nearest_point"));
    cfg.task.d_in = static_cast<int>(toml::get_int(table, "task.d_in", 8));
    cfg.task.d_out = static_cast<int>(toml::get_int(table, "task.d_out", 6));
    cfg.task.batch = static_cast<int>(toml::get_int(table, "task.batch", 32));
    cfg.task.data_seed = static_cast<std::uint64_t>(toml::get_int(table, "task.data_seed", 0));
    cfg.task.noise = toml::get_number(table, "task.noise", 0.0);
    cfg.task.clusters = static_cast<int>(toml::get_int(table, "task.clusters", 8));
    cfg.task.target_scale = toml::get_number(table, "task.target_scale", 1.0);
    cfg.task_manifold =
        manifold_kind_from_string(toml::get_string(table, "task.manifold", "frobenius_sphere"));
    cfg.task_radius_override = toml::get_number(table, "task.radius", 0.0);

    if (const toml::Value *layers = toml::find(table, "model.layers")) {
        for (const toml::Table &lt : layers->as_table_array()) {
            LayerConfig lc;
            lc.spec.d_in = static_cast<int>(toml::get_int(lt, "d_in", 0));
            lc.spec.d_out = static_cast<int>(toml::get_int(lt, "d_out", 0));
            lc.spec.activation = activation_from_string(toml::get_string(lt, "activation", "identity"));
            lc.spec.pre_norm = pre_norm_from_string(toml::get_string(lt, "pre_norm", "none"));
            lc.spec.constrained = toml::get_bool(lt, "constrained", false);
            lc.spec.manifold =
                manifold_kind_from_string(toml::get_string(lt, "manifold", "frobenius_sphere"));
            lc.spec.gate_rms_per_row = toml::get_bool(lt, "gate_rms_per_row", false);
            lc.radius_override = toml::get_number(lt, "radius", 0.0);
            cfg.layers.push_back(std::move(lc));
        }
    }

    cfg.optimizer.kind = optimizer_kind_from_string(toml::get_string(table, "optimizer.kind", "macro"));
    cfg.optimizer.beta = toml::get_number(table, "optimizer.beta", 0.9);
    cfg.optimizer.c = toml::get_number(table, "optimizer.c", 1.0);
    cfg.optimizer.epsilon = toml::get_number(table, "optimizer.epsilon", 1e-8);
    cfg.optimizer.r = toml::get_number(table, "optimizer.r", 1.0);
    const std::string mode = toml::get_string(table, "optimizer.msign_mode", "exact");
    if (mode == "exact") {
        cfg.optimizer.msign_mode = MsignMode::exact;
    } else if (mode == "newton_schulz" || mode == "ns") {
        cfg.optimizer.msign_mode = MsignMode::newton_schulz;
    } else {
        throw std::invalid_argument("unknown msign_mode '" + mode + "'");
    }
    cfg.optimizer.msign_iters = static_cast<int>(toml::get_int(table, "optimizer.msign_iters", 30));
    cfg.optimizer.weight_decay = toml::get_number(table, "optimizer.weight_decay", 0.0);
    cfg.optimizer.inner_tol = toml::get_number(table, "optimizer.inner_tol", 1e-4);
    cfg.optimizer.inner_cap = static_cast<int>(toml::get_int(table, "optimizer.inner_cap", 10));
    cfg.optimizer.shape_scale = toml::get_bool(table, "optimizer.shape_scale", false);
    cfg.optimizer.spectral_exact_clip =
        toml::get_bool(table, "optimizer.spectral_exact_clip", false);
    cfg.optimizer.adamw_lr = toml::get_number(table, "optimizer.adamw_lr", 5e-3);
    cfg.optimizer.adamw_beta1 = toml::get_number(table, "optimizer.adamw_beta1", 0.9);
    cfg.optimizer.adamw_beta2 = toml::get_number(table, "optimizer.adamw_beta2", 0.95);
    cfg.optimizer.adamw_eps = toml::get_number(table, "optimizer.adamw_eps", 1e-8);
    cfg.optimizer.adamw_weight_decay = toml::get_number(table, "optimizer.adamw_weight_decay", 0.0);

    cfg.schedule.kind = schedule_kind_from_string(toml::get_string(table, "schedule.kind", "constant"));
    cfg.schedule.base_lr = toml::get_number(table, "schedule.base_lr", 0.01);
    cfg.schedule.warmup_steps = toml::get_int(table, "schedule.warmup_steps", 0);
    cfg.schedule.total_steps = toml::get_int(table, "schedule.total_steps", 1);
    cfg.schedule.final_lr_ratio = toml::get_number(table, "schedule.final_lr_ratio", 1.0);

    cfg.steps = toml::get_int(table, "run.steps", 100);
    cfg.seed = static_cast<std::uint64_t>(toml::get_int(table, "run.seed", 0));
    cfg.diag_every = toml::get_int(table, "run.diag_every", 1);

    cfg.validate();
    return cfg;
}

RunConfig run_config_from_file(const std::string &path) {
    return run_config_from_toml(toml::parse_file(path));
}

RunResult run(const RunConfig &config) {
    config.validate();
    RunResult result;
    const auto wall_start = std::chrono::steady_clock::now();

    Xoshiro256StarStar init_rng(derive_seed(config.seed, 11));

    const bool nearest = config.task.kind == TaskKind::frobenius_nearest_point;
    Matrix target;
    Matrix w; // nearest-point parameter
    Mlp model;
    std::vector<MatrixSlot> slots;
    std::vector<GammaSlot> gammas;

    auto make_spec = [&](ManifoldKind kind, int d_in, int d_out, double override_r) {
        const double radius = override_r > 0.0
                                  ? override_r
                                  : radius_for(RadiusRule(config.optimizer.r, d_in, d_out), kind);
        return ManifoldSpec(kind, radius);
    };
    auto make_state = [&](int rows, int cols) {
        return OptimizerState(rows, cols, config.optimizer.beta, config.optimizer.c,
                              config.optimizer.epsilon);
    };

    if (nearest) {
        target = nearest_point_target(config.task);
        w = gaussian_init(config.task.d_out, config.task.d_in, init_rng);
        MatrixSlot slot;
        slot.name = "w";
        slot.constrained = config.optimizer.kind != OptimizerKind::muon;
        slot.spec = make_spec(config.task_manifold, config.task.d_in, config.task.d_out,
                              config.task_radius_override);
        if (slot.constrained) w = retract(slot.spec, w);
        slot.weight = &w;
        slot.state = make_state(config.task.d_out, config.task.d_in);
        slots.push_back(std::move(slot));
    } else {
        for (std::size_t i = 0; i < config.layers.size(); ++i) {
            const LayerConfig &lc = config.layers[i];
            Layer layer;
            layer.spec = lc.spec;
            layer.w1 = gaussian_init(lc.spec.d_out, lc.spec.d_in, init_rng);
            if (layer.has_w2()) layer.w2 = gaussian_init(lc.spec.d_out, lc.spec.d_in, init_rng);
            if (lc.spec.pre_norm == PreNorm::learnable_rms) {
                layer.gamma.assign(static_cast<std::size_t>(lc.spec.d_in), 1.0);
            }
            model.layers.push_back(std::move(layer));
        }
        for (std::size_t i = 0; i < model.layers.size(); ++i) {
            Layer &layer = model.layers[i];
            const LayerConfig &lc = config.layers[i];
            const bool constrained =
                lc.spec.constrained && config.optimizer.kind != OptimizerKind::muon;
            const ManifoldSpec spec =
                make_spec(lc.spec.manifold, lc.spec.d_in, lc.spec.d_out, lc.radius_override);
            auto add = [&](Matrix *mat, const std::string &suffix) {
                MatrixSlot slot;
                slot.name = "layer" + std::to_string(i) + "." + suffix;
                slot.weight = mat;
                slot.constrained = constrained;
                slot.spec = spec;
                if (constrained) *mat = retract(spec, *mat);
                slot.state = make_state(mat->rows(), mat->cols());
                slots.push_back(std::move(slot));
            };
            add(&layer.w1, "w1");
            if (layer.has_w2()) add(&layer.w2, "w2");
            if (!layer.gamma.empty()) {
                GammaSlot g;
                g.name = "layer" + std::to_string(i) + ".gamma";
                g.gamma = &layer.gamma;
                g.m.assign(layer.gamma.size(), 0.0);
                g.v.assign(layer.gamma.size(), 0.0);
                gammas.push_back(std::move(g));
            }
        }
    }

    // Metric columns: one diagnostics block per constrained parameter.
    std::vector<const MatrixSlot *> diag_slots;
    for (const MatrixSlot &slot : slots) {
        if (slot.constrained) diag_slots.push_back(&slot);
    }
    for (const MatrixSlot *slot : diag_slots) {
        for (const char *col : kDiagColumns) {
            result.metrics.columns.push_back(slot->name + "." + col);
        }
    }
    // learnable RMS gains: log the l2 norm trajectory
    for (const GammaSlot &g : gammas) {
        result.metrics.columns.push_back(g.name + ".l2");
    }

    auto compute_loss = [&](long step, std::vector<LayerGrads> *grads, Matrix *w_grad,
                            Batch *batch_out) -> double {
        if (nearest) return nearest_point_loss(w, target, w_grad);
        Batch batch = make_batch(config.task, step);
        std::vector<LayerCache> caches;
        Matrix y = mlp_forward(model, batch.x, grads ? &caches : nullptr);
        LossGrad lg = config.task.kind == TaskKind::linear_regression
                          ? mse_loss(y, batch.targets)
                          : softmax_cross_entropy(y, batch.labels);
        if (grads) *grads = mlp_backward(model, caches, lg.dy);
        if (batch_out) *batch_out = std::move(batch);
        return lg.loss;
    };
    auto eval_loss = [&]() -> std::optional<double> {
        if (nearest) return std::nullopt;
        Batch batch = make_batch(config.task, -1); // dedicated held-out stream
        Matrix y = mlp_forward(model, batch.x);
        return config.task.kind == TaskKind::linear_regression
                   ? mse_loss(y, batch.targets).loss
                   : softmax_cross_entropy(y, batch.labels).loss;
    };

    // Aggregates per constrained parameter.
    struct Agg {
        double vio_sum = 0.0;
        long vio_count = 0;
        long degenerate = 0;
        long angle_steps = 0;
        double min_srk = std::numeric_limits<double>::infinity();
        double max_gap = 0.0;
    };
    std::vector<Agg> aggs(diag_slots.size());

    result.summary.initial_train_loss = compute_loss(0, nullptr, nullptr, nullptr);
    result.summary.final_train_loss = result.summary.initial_train_loss;

    bool diverged = false;
    long t = 0;
    for (; t < config.steps; ++t) {
        const double eta = lr_at(config.schedule, t);
        std::vector<LayerGrads> grads;
        Matrix w_grad;
        const double loss = compute_loss(t, &grads, &w_grad, nullptr);
        result.summary.final_train_loss = loss;

        const bool log_now = (t % config.diag_every) == 0;
        MetricRow row;
        row.step = t;
        row.train_loss = loss;

        bool grads_finite = true;
        if (nearest) {
            grads_finite = w_grad.all_finite();
        } else {
            for (const LayerGrads &g : grads) {
                if (!g.w1.empty() && !g.w1.all_finite()) grads_finite = false;
                if (!g.w2.empty() && !g.w2.all_finite()) grads_finite = false;
                for (double x : g.gamma) {
                    if (!std::isfinite(x)) grads_finite = false;
                }
            }
        }
        if (!std::isfinite(loss) || !grads_finite) {
            row.status = "diverged";
            row.values.resize(result.metrics.columns.size());
            result.metrics.rows.push_back(std::move(row));
            diverged = true;
            break;
        }

        // One optimizer step per parameter.
        std::size_t diag_idx = 0;
        bool entry_blowup = false;
        for (MatrixSlot &slot : slots) {
            const Matrix &grad = nearest ? w_grad
                                         : [&]() -> const Matrix & {
                // slot names are layerI.w1 / layerI.w2 in construction order
                return slot.name.back() == '1'
                           ? grads[std::stoul(slot.name.substr(5))].w1
                           : grads[std::stoul(slot.name.substr(5))].w2;
            }();
            Matrix w_prev = *slot.weight;
            StepResult res;
            switch (config.optimizer.kind) {
            case OptimizerKind::macro:
                res = macro_step(w_prev, grad, slot.state, slot.spec, eta,
                                 config.optimizer.msign_mode, config.optimizer.msign_iters,
                                 config.optimizer.spectral_exact_clip);
                break;
            case OptimizerKind::muonh:
                res = muonh_step(w_prev, grad, slot.state, slot.spec, eta,
                                 config.optimizer.msign_mode, config.optimizer.msign_iters,
                                 config.optimizer.spectral_exact_clip);
                break;
            case OptimizerKind::fso:
                res = fso_step(w_prev, grad, slot.state, slot.spec, eta,
                               config.optimizer.inner_tol, config.optimizer.inner_cap,
                               config.optimizer.msign_mode, config.optimizer.msign_iters,
                               config.optimizer.spectral_exact_clip);
                break;
            case OptimizerKind::muon:
                res.w_next = muon_step(w_prev, grad, slot.state, eta,
                                       config.optimizer.weight_decay, config.optimizer.msign_mode,
                                       config.optimizer.msign_iters, config.optimizer.shape_scale);
                break;
            }
            *slot.weight = res.w_next;
            if (max_abs(*slot.weight) > kDivergenceEntryCap) entry_blowup = true;

            if (slot.constrained) {
                if (log_now) append_diag(row, eta, slot.spec, w_prev, res);
                Agg &agg = aggs[diag_idx];
                if (!res.stationary) {
                    Matrix nd = (1.0 / eta) * res.scaled_update;
                    agg.vio_sum += tangent_violation(slot.spec, w_prev, nd);
                    ++agg.vio_count;
                }
                if (res.degenerate) ++agg.degenerate;
                ++agg.angle_steps;
                agg.min_srk = std::min(agg.min_srk, stable_rank(*slot.weight));
                agg.max_gap = std::max(agg.max_gap, feasibility_gap(slot.spec, *slot.weight));
                ++diag_idx;
            }
        }
        for (GammaSlot &g : gammas) {
            // Gains always train with the fixed AdamW recurrence.
            ++g.t;
            adamw_step(*g.gamma, grads[std::stoul(g.name.substr(5))].gamma, g.m, g.v, g.t,
                       config.optimizer.adamw_lr, config.optimizer.adamw_beta1,
                       config.optimizer.adamw_beta2, config.optimizer.adamw_eps,
                       config.optimizer.adamw_weight_decay);
            if (log_now) {
                double l2 = 0.0;
                for (double x : *g.gamma) l2 += x * x;
                row.values.push_back(std::sqrt(l2));
            }
        }

        if (log_now) {
            row.eval_loss = eval_loss();
            if (row.eval_loss && !std::isfinite(*row.eval_loss)) {
                entry_blowup = true;
                row.eval_loss = std::nullopt;
                row.status = "diverged";
            }
            result.metrics.rows.push_back(std::move(row));
        }
        if (entry_blowup) {
            if (!log_now) {
                MetricRow divrow;
                divrow.step = t;
                divrow.train_loss = loss;
                divrow.status = "diverged";
                divrow.values.resize(result.metrics.columns.size());
                result.metrics.rows.push_back(std::move(divrow));
            } else if (!result.metrics.rows.empty()) {
                result.metrics.rows.back().status = "diverged";
            }
            diverged = true;
            ++t;
            break;
        }
    }

    result.summary.status = diverged ? "diverged" : "ok";
    result.summary.steps_run = t;
    if (!diverged && config.steps > 0) {
        result.summary.final_train_loss = compute_loss(config.steps, nullptr, nullptr, nullptr);
    }
    if (!diverged) result.summary.final_eval_loss = eval_loss();

    if (nearest) {
        const MatrixSlot &slot = slots.front();
        const Matrix w_star =
            slot.constrained ? retract(slot.spec, target, /*spectral_exact_clip=*/true) : target;
        result.summary.final_dist = frobenius_norm(w - w_star);
    }
    result.summary.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    for (std::size_t i = 0; i < diag_slots.size(); ++i) {
        ParamSummary ps;
        ps.name = diag_slots[i]->name;
        ps.manifold = diag_slots[i]->spec.kind;
        ps.constrained = true;
        ps.radius = diag_slots[i]->spec.radius;
        ps.mean_vio = aggs[i].vio_count ? aggs[i].vio_sum / aggs[i].vio_count : 0.0;
        ps.degenerate_fraction =
            aggs[i].angle_steps ? static_cast<double>(aggs[i].degenerate) / aggs[i].angle_steps : 0.0;
        ps.min_stable_rank = std::isfinite(aggs[i].min_srk) ? aggs[i].min_srk : 0.0;
        ps.max_feasibility_gap = aggs[i].max_gap;
        result.summary.params.push_back(std::move(ps));
    }
    return result;
}

void write_metrics_csv(const std::string &path, const MetricTable &table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "step,train_loss,eval_loss,status";
    for (const std::string &col : table.columns) out << "," << csv_quote(col);
    out << "\n";
    for (const MetricRow &row : table.rows) {
        out << row.step << "," << format_double(row.train_loss) << ",";
        if (row.eval_loss) out << format_double(*row.eval_loss);
        out << "," << csv_quote(row.status);
        for (std::size_t i = 0; i < table.columns.size(); ++i) {
            out << ",";
            if (i < row.values.size() && row.values[i]) out << format_double(*row.values[i]);
        }
        out << "\n";
    }
}

void write_metrics_jsonl(const std::string &path, const MetricTable &table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const MetricRow &row : table.rows) {
        out << "{\"step\":" << row.step << ",\"train_loss\":" << json_number(row.train_loss);
        if (row.eval_loss) out << ",\"eval_loss\":" << json_number(*row.eval_loss);
        out << ",\"status\":\"" << json_escape(row.status) << "\"";
        for (std::size_t i = 0; i < table.columns.size(); ++i) {
            if (i < row.values.size() && row.values[i]) {
                out << ",\"" << json_escape(table.columns[i])
                    << "\":" << json_number(*row.values[i]);
            }
        }
        out << "}\n";
    }
}

void write_summary_json(const std::string &path, const RunSummary &summary,
                        const toml::Table &config_echo) {
    std::string out = "{";
    out += "\"status\":\"" + json_escape(summary.status) + "\"";
    out += ",\"steps_run\":" + std::to_string(summary.steps_run);
    out += ",\"initial_train_loss\":" + json_number(summary.initial_train_loss);
    out += ",\"final_train_loss\":" + json_number(summary.final_train_loss);
    if (summary.final_eval_loss) {
        out += ",\"final_eval_loss\":" + json_number(*summary.final_eval_loss);
    }
    if (summary.final_dist) out += ",\"final_dist\":" + json_number(*summary.final_dist);
    out += ",\"wall_time_seconds\":" + json_number(summary.wall_time_seconds);
    out += ",\"params\":[";
    for (std::size_t i = 0; i < summary.params.size(); ++i) {
        const ParamSummary &p = summary.params[i];
        if (i) out += ",";
        out += "{\"name\":\"" + json_escape(p.name) + "\"";
        out += ",\"manifold\":\"" + to_string(p.manifold) + "\"";
        out += ",\"radius\":" + json_number(p.radius);
        out += ",\"mean_vio\":" + json_number(p.mean_vio);
        out += ",\"degenerate_fraction\":" + json_number(p.degenerate_fraction);
        out += ",\"min_stable_rank\":" + json_number(p.min_stable_rank);
        out += ",\"max_feasibility_gap\":" + json_number(p.max_feasibility_gap);
        out += "}";
    }
    out += "],\"config\":";
    dump_table_as_json(config_echo, out);
    out += "}\n";

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << out;
}

std::vector<SweepRow> sweep(const toml::Table &base, const std::string &out_dir) {
    const toml::Value *grid_value = toml::find(base, "sweep.grid");
    std::vector<std::pair<std::string, toml::Array>> grid;
    if (grid_value) {
        for (const auto &[key, value] : grid_value->as_table()) {
            grid.emplace_back(key, value.as_array());
            if (value.as_array().empty()) {
                throw std::invalid_argument("sweep grid entry '" + key + "' is empty");
            }
        }
    }
    std::size_t total = 1;
    for (const auto &[key, values] : grid) total *= values.size();

    const std::uint64_t base_seed = static_cast<std::uint64_t>(toml::get_int(base, "run.seed", 0));
    std::vector<SweepRow> rows(total);

    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    auto run_point = [&](std::size_t index) {
        SweepRow &row = rows[index];
        row.index = static_cast<int>(index);
        row.seed = derive_seed(base_seed, index);
        toml::Table point = base;
        std::size_t rest = index;
        std::string overrides;
        for (const auto &[key, values] : grid) {
            const toml::Value &v = values[rest % values.size()];
            rest /= values.size();
            toml::set_scalar(point, key, v);
            if (!overrides.empty()) overrides += " ";
            std::string rendered;
            dump_toml_as_json(v, rendered);
            overrides += key + "=" + rendered;
        }
        row.overrides = overrides;
        toml::set_scalar(point, "run.seed",
                         toml::Value(toml::Value::Storage(static_cast<std::int64_t>(row.seed))));
        try {
            RunConfig cfg = run_config_from_toml(point);
            RunResult res = run(cfg);
            row.status = res.summary.status;
            row.final_train_loss = res.summary.final_train_loss;
            row.final_eval_loss = res.summary.final_eval_loss;
            if (!out_dir.empty()) {
                char name[32];
                std::snprintf(name, sizeof(name), "run_%03zu", index);
                const std::filesystem::path dir = std::filesystem::path(out_dir) / name;
                std::filesystem::create_directories(dir);
                write_metrics_csv((dir / "metrics.csv").string(), res.metrics);
                write_metrics_jsonl((dir / "metrics.jsonl").string(), res.metrics);
                write_summary_json((dir / "summary.json").string(), res.summary, point);
            }
        } catch (const std::exception &e) {
            row.status = std::string("error: ") + e.what();
            row.final_train_loss = std::numeric_limits<double>::quiet_NaN();
        }
    };

    std::size_t workers = std::thread::hardware_concurrency();
    if (workers == 0) workers = 1;
    if (const char *cap = std::getenv("MACRO_OPT_THREADS")) {
        const long parsed = std::strtol(cap, nullptr, 10);
        if (parsed >= 1) workers = static_cast<std::size_t>(parsed);
    }
    workers = std::min(workers, total);
    if (workers <= 1) {
        for (std::size_t i = 0; i < total; ++i) run_point(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t k = 0; k < workers; ++k) {
            pool.emplace_back([&]() {
                while (true) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= total) return;
                    run_point(i);
                }
            });
        }
        for (std::thread &th : pool) th.join();
    }

    std::vector<SweepRow> sorted = rows;
    std::stable_sort(sorted.begin(), sorted.end(), [](const SweepRow &a, const SweepRow &b) {
        const bool a_ok = a.status == "ok";
        const bool b_ok = b.status == "ok";
        if (a_ok != b_ok) return a_ok;
        if (!a_ok) return a.index < b.index;
        const double av = a.final_eval_loss.value_or(a.final_train_loss);
        const double bv = b.final_eval_loss.value_or(b.final_train_loss);
        if (std::isnan(av) != std::isnan(bv)) return !std::isnan(av);
        if (av != bv) return av < bv;
        return a.index < b.index;
    });

    if (!out_dir.empty()) {
        std::ofstream out(std::filesystem::path(out_dir) / "sweep_results.csv", std::ios::binary);
        out << "rank,index,seed,status,final_train_loss,final_eval_loss,overrides\n";
        for (std::size_t rank = 0; rank < sorted.size(); ++rank) {
            const SweepRow &row = sorted[rank];
            out << rank << "," << row.index << "," << row.seed << "," << csv_quote(row.status)
                << "," << format_double(row.final_train_loss) << ",";
            if (row.final_eval_loss) out << format_double(*row.final_eval_loss);
            out << "," << csv_quote(row.overrides) << "\n";
        }
    }
    return sorted;
}

} // namespace macroptim
