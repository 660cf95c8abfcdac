#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "macroptim/harness.hpp"
#include "macroptim/linalg.hpp"
#include "macroptim/manifold.hpp"
#include "macroptim/matrix_io.hpp"
#include "selftest.hpp"

namespace {

using namespace macroptim;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitDiverged = 3;

int cmd_msign(const std::string &in, const std::string &mode, int iters, const std::string &out) {
    const Matrix a = read_matrix_file(in);
    Matrix result;
    if (mode == "exact") {
        result = msign_svd(a);
    } else if (mode == "ns") {
        result = msign_ns(a, iters);
    } else {
        throw std::invalid_argument("--mode must be 'exact' or 'ns'");
    }
    write_matrix_file(out, result);
    std::cerr << "spectral_norm=" << format_double(spectral_norm(result))
              << " nuclear_norm=" << format_double(nuclear_norm(result)) << "\n";
    return kExitOk;
}

int cmd_project(const std::string &w_path, const std::string &m_path, const std::string &kind,
                double radius, const std::string &out) {
    const Matrix w = read_matrix_file(w_path);
    const Matrix m = read_matrix_file(m_path);
    ManifoldSpec spec(manifold_kind_from_string(kind), 1.0);
    spec.radius = radius > 0.0 ? radius : manifold_norm(spec, w);
    if (!(spec.radius > 0.0)) throw NumericalError("cannot infer a positive radius from w");
    bool degenerate = false;
    const Matrix phi = tangent_project(spec, w, m, &degenerate);
    write_matrix_file(out, phi);
    if (degenerate) std::cerr << "warning: leading singular value of w is not simple\n";
    return kExitOk;
}

int cmd_retract(const std::string &in, const std::string &kind, double radius, bool exact_clip,
                const std::string &out) {
    const Matrix a = read_matrix_file(in);
    const ManifoldSpec spec(manifold_kind_from_string(kind), radius);
    const Matrix r = retract(spec, a, exact_clip);
    write_matrix_file(out, r);
    std::cerr << "feasibility_gap=" << format_double(feasibility_gap(spec, r)) << "\n";
    return kExitOk;
}

int cmd_radius(double r, int d_in, int d_out, const std::string &kind) {
    const RadiusRule rule(r, d_in, d_out);
    if (kind == "all") {
        for (ManifoldKind k : {ManifoldKind::spectral_sphere, ManifoldKind::frobenius_sphere,
                               ManifoldKind::oblique_out, ManifoldKind::oblique_in}) {
            std::cout << to_string(k) << " " << format_double(radius_for(rule, k)) << "\n";
        }
    } else {
        std::cout << format_double(radius_for(rule, manifold_kind_from_string(kind))) << "\n";
    }
    return kExitOk;
}

int cmd_train(const std::string &config_path, const std::string &out_dir) {
    const toml::Table table = toml::parse_file(config_path);
    const RunConfig config = run_config_from_toml(table);
    const RunResult result = run(config);
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    write_metrics_csv((dir / "metrics.csv").string(), result.metrics);
    write_metrics_jsonl((dir / "metrics.jsonl").string(), result.metrics);
    write_summary_json((dir / "summary.json").string(), result.summary, table);
    std::cerr << "status=" << result.summary.status
              << " final_train_loss=" << format_double(result.summary.final_train_loss) << "\n";
    return result.summary.status == "diverged" ? kExitDiverged : kExitOk;
}

int cmd_sweep(const std::string &config_path, const std::string &out_dir) {
    const toml::Table table = toml::parse_file(config_path);
    if (!toml::has(table, "sweep.grid")) {
        throw std::invalid_argument("config has no [sweep.grid] section");
    }
    const std::vector<SweepRow> rows = sweep(table, out_dir);
    for (const SweepRow &row : rows) {
        std::cout << "run_" << row.index << " status=" << row.status
                  << " final_train_loss=" << format_double(row.final_train_loss);
        if (row.final_eval_loss) {
            std::cout << " final_eval_loss=" << format_double(*row.final_eval_loss);
        }
        if (!row.overrides.empty()) std::cout << " " << row.overrides;
        std::cout << "\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------- diag replay

struct RunArtifacts {
    std::vector<json> rows;
    json summary;
};

RunArtifacts load_run(const std::string &run_dir) {
    RunArtifacts art;
    const std::filesystem::path dir(run_dir);
    std::ifstream in(dir / "metrics.jsonl");
    if (!in) throw std::invalid_argument("missing metrics.jsonl in '" + run_dir + "'");
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json row = json::parse(line, nullptr, false);
        if (row.is_discarded() || !row.is_object()) {
            throw std::invalid_argument("metrics.jsonl line " + std::to_string(line_no) +
                                        " is not a JSON object");
        }
        art.rows.push_back(std::move(row));
    }
    std::ifstream sin(dir / "summary.json");
    if (sin) {
        art.summary = json::parse(sin, nullptr, false);
        if (art.summary.is_discarded()) {
            throw std::invalid_argument("summary.json is corrupt");
        }
    }
    return art;
}

std::vector<std::string> constrained_params(const RunArtifacts &art, const std::string &kind) {
    std::vector<std::string> names;
    if (!art.summary.is_object() || !art.summary.contains("params")) return names;
    for (const auto &p : art.summary["params"]) {
        if (kind.empty() || p.value("manifold", "") == kind) {
            names.push_back(p.value("name", ""));
        }
    }
    return names;
}

double require_field(const json &row, const std::string &field) {
    if (!row.contains(field) || !row[field].is_number()) {
        throw std::invalid_argument("metric row " + std::to_string(row.value("step", -1)) +
                                    " is missing field '" + field + "'");
    }
    return row[field].get<double>();
}

bool check_rotation(const RunArtifacts &art) {
    const double c = art.summary["config"]["optimizer"].value("c", 1.0);
    const auto params = constrained_params(art, "frobenius_sphere");
    if (params.empty()) {
        std::cout << "rotation: no frobenius-sphere parameters, nothing to check\n";
        return true;
    }
    long checked = 0;
    double worst = 0.0;
    for (const json &row : art.rows) {
        if (row.value("status", "ok") != "ok") continue;
        for (const std::string &p : params) {
            if (row.value(p + ".stationary", 0.0) > 0.0) continue;
            if (!row.contains(p + ".theta_fro")) {
                throw std::invalid_argument("row is missing field '" + p + ".theta_fro'");
            }
            const double measured = require_field(row, p + ".theta_fro");
            const double alpha = require_field(row, p + ".alpha");
            const double eta = require_field(row, p + ".eta");
            worst = std::max(worst, std::abs(measured - expected_rotation_fro(eta, c, alpha)));
            ++checked;
        }
    }
    std::cout << "rotation: " << checked << " steps, worst closed-form error "
              << format_double(worst) << "\n";
    return worst <= 1e-9;
}

bool check_wedin(const RunArtifacts &art) {
    const double c = art.summary["config"]["optimizer"].value("c", 1.0);
    const auto params = constrained_params(art, "spectral_sphere");
    if (params.empty()) {
        std::cout << "wedin: no spectral-sphere parameters, nothing to check\n";
        return true;
    }
    std::map<std::string, double> radii;
    for (const auto &p : art.summary["params"]) {
        radii[p.value("name", "")] = p.value("radius", 0.0);
    }
    long checked = 0, degenerate = 0, violations = 0;
    for (const json &row : art.rows) {
        if (row.value("status", "ok") != "ok") continue;
        for (const std::string &p : params) {
            if (row.value(p + ".stationary", 0.0) > 0.0) continue;
            if (row.value(p + ".degenerate", 0.0) > 0.0) {
                ++degenerate;
                continue;
            }
            const double theta_u = require_field(row, p + ".theta_u");
            const double theta_v = require_field(row, p + ".theta_v");
            const double gap = require_field(row, p + ".spectral_gap");
            const double eta = require_field(row, p + ".eta");
            const double radius = radii[p];
            const double bound = eta * c * radius / gap;
            if (std::max(std::sin(theta_u), std::sin(theta_v)) > bound + 1e-9) ++violations;
            ++checked;
        }
    }
    std::cout << "wedin: " << checked << " steps, " << violations << " violations, "
              << degenerate << " degenerate-flagged steps excluded\n";
    return violations == 0;
}

bool check_vio(const RunArtifacts &art) {
    const auto params = constrained_params(art, "");
    if (params.empty()) {
        std::cout << "vio: no constrained parameters, nothing to check\n";
        return true;
    }
    bool all_present = true;
    for (const std::string &p : params) {
        double sum = 0.0, worst = 0.0;
        long n = 0;
        for (const json &row : art.rows) {
            if (!row.contains(p + ".vio")) continue;
            const double v = require_field(row, p + ".vio");
            sum += v;
            worst = std::max(worst, v);
            ++n;
        }
        if (n == 0) {
            all_present = false;
            continue;
        }
        std::cout << "vio: " << p << " mean " << format_double(sum / n) << " max "
                  << format_double(worst) << " over " << n << " steps\n";
    }
    return all_present;
}

bool check_rel_lr(const RunArtifacts &art) {
    const json &opt = art.summary["config"]["optimizer"];
    const double c = opt.value("c", 1.0);
    const double epsilon = opt.value("epsilon", 1e-8);
    const std::string kind = opt.value("kind", "macro");
    const bool locked = (kind == "macro" || kind == "fso") && epsilon == 0.0;
    const auto params = constrained_params(art, "");
    double worst = 0.0;
    long checked = 0;
    for (const json &row : art.rows) {
        if (row.value("status", "ok") != "ok") continue;
        for (const std::string &p : params) {
            if (row.value(p + ".stationary", 0.0) > 0.0) continue;
            if (!row.contains(p + ".rel_lr")) continue;
            const double rel = require_field(row, p + ".rel_lr");
            const double eta = require_field(row, p + ".eta");
            worst = std::max(worst, std::abs(rel - c * eta));
            ++checked;
        }
    }
    if (locked) {
        std::cout << "rel_lr: locked mode, " << checked << " steps, worst |rel_lr - c*eta| "
                  << format_double(worst) << "\n";
        return worst <= 1e-12;
    }
    std::cout << "rel_lr: unlocked mode (" << kind << ", epsilon=" << format_double(epsilon)
              << "), worst deviation from c*eta " << format_double(worst) << " over " << checked
              << " steps (reported, not asserted)\n";
    return true;
}

int cmd_diag(const std::string &run_dir, const std::string &check) {
    const RunArtifacts art = load_run(run_dir);
    if (!art.summary.is_object()) {
        throw std::invalid_argument("missing or corrupt summary.json in '" + run_dir + "'");
    }
    std::map<std::string, bool (*)(const RunArtifacts &)> checks = {
        {"rotation", check_rotation},
        {"wedin", check_wedin},
        {"vio", check_vio},
        {"rel_lr", check_rel_lr},
    };
    bool ok = true;
    if (check == "all") {
        for (const auto &[name, fn] : checks) {
            const bool pass = fn(art);
            std::cout << (pass ? "[pass] " : "[fail] ") << name << "\n";
            ok = ok && pass;
        }
    } else {
        auto it = checks.find(check);
        if (it == checks.end()) {
            throw std::invalid_argument("unknown check '" + check + "'");
        }
        ok = it->second(art);
        std::cout << (ok ? "[pass] " : "[fail] ") << check << "\n";
    }
    return ok ? kExitOk : kExitNumerical;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Manifold-constrained matrix optimizer toolkit"};
    app.require_subcommand(1);

    // msign
    std::string msign_in, msign_out, msign_mode = "exact";
    int msign_iters = 30;
    CLI::App *msign_cmd = app.add_subcommand("msign", "Matrix sign (polar factor) of a matrix file");
    msign_cmd->add_option("--in", msign_in, "Input matrix file")->required();
    msign_cmd->add_option("--mode", msign_mode, "Algorithm: exact (svd) or ns (Newton-Schulz)");
    msign_cmd->add_option("--iters", msign_iters, "Newton-Schulz iteration count");
    msign_cmd->add_option("--out", msign_out, "Output matrix file")->required();

    // project
    std::string proj_w, proj_m, proj_out, proj_kind = "frobenius_sphere";
    double proj_radius = 0.0;
    CLI::App *proj_cmd =
        app.add_subcommand("project", "Tangent-space projection of a matrix at a manifold point");
    proj_cmd->add_option("--w", proj_w, "On-manifold point matrix file")->required();
    proj_cmd->add_option("--m", proj_m, "Matrix to project")->required();
    proj_cmd->add_option("--kind", proj_kind,
                         "Manifold kind: frobenius_sphere|spectral_sphere|oblique_in|oblique_out");
    proj_cmd->add_option("--radius", proj_radius,
                         "Constraint radius (default: measured manifold norm of --w)");
    proj_cmd->add_option("--out", proj_out, "Output matrix file")->required();

    // retract
    std::string retr_in, retr_out, retr_kind = "frobenius_sphere";
    double retr_radius = 1.0;
    bool retr_exact = false;
    CLI::App *retr_cmd = app.add_subcommand("retract", "Project a matrix onto a constraint manifold");
    retr_cmd->add_option("--in", retr_in, "Input matrix file")->required();
    retr_cmd->add_option("--kind", retr_kind,
                         "Manifold kind: frobenius_sphere|spectral_sphere|oblique_in|oblique_out");
    retr_cmd->add_option("--radius", retr_radius, "Constraint radius")->required();
    retr_cmd->add_flag("--exact-clip", retr_exact,
                       "Spectral sphere: exact singular-value clip instead of rescaling");
    retr_cmd->add_option("--out", retr_out, "Output matrix file")->required();

    // radius
    double rad_r = 1.0;
    int rad_din = 1, rad_dout = 1;
    std::string rad_kind = "all";
    CLI::App *rad_cmd = app.add_subcommand("radius", "Print the practical constraint radius rule");
    rad_cmd->add_option("--r", rad_r, "Tunable radius multiplier")->required();
    rad_cmd->add_option("--din", rad_din, "Input dimension")->required();
    rad_cmd->add_option("--dout", rad_dout, "Output dimension")->required();
    rad_cmd->add_option("--kind", rad_kind, "Manifold kind or 'all'");

    // train
    std::string train_config, train_out;
    CLI::App *train_cmd = app.add_subcommand("train", "Run one training experiment from a TOML config");
    train_cmd->add_option("--config", train_config, "TOML run config")->required();
    train_cmd->add_option("--out", train_out, "Output directory for metrics and summary")->required();

    // sweep
    std::string sweep_config, sweep_out;
    CLI::App *sweep_cmd =
        app.add_subcommand("sweep", "Run the Cartesian grid in [sweep.grid] over a base config");
    sweep_cmd->add_option("--config", sweep_config, "TOML base config with [sweep.grid]")->required();
    sweep_cmd->add_option("--out", sweep_out, "Output directory for per-run artifacts")->required();

    // diag
    std::string diag_run, diag_check = "all";
    CLI::App *diag_cmd =
        app.add_subcommand("diag", "Replay a run directory through the dynamics invariants");
    diag_cmd->add_option("--run", diag_run, "Run directory containing metrics.jsonl")->required();
    diag_cmd->add_option("--check", diag_check, "all|rotation|wedin|vio|rel_lr");

    // selftest
    CLI::App *selftest_cmd =
        app.add_subcommand("selftest", "Run the reduced invariant battery across all modules");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (msign_cmd->parsed()) return cmd_msign(msign_in, msign_mode, msign_iters, msign_out);
        if (proj_cmd->parsed()) return cmd_project(proj_w, proj_m, proj_kind, proj_radius, proj_out);
        if (retr_cmd->parsed()) return cmd_retract(retr_in, retr_kind, retr_radius, retr_exact, retr_out);
        if (rad_cmd->parsed()) return cmd_radius(rad_r, rad_din, rad_dout, rad_kind);
        if (train_cmd->parsed()) return cmd_train(train_config, train_out);
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_config, sweep_out);
        if (diag_cmd->parsed()) return cmd_diag(diag_run, diag_check);
        if (selftest_cmd->parsed()) return macroptim::run_selftest();
    } catch (const macroptim::NumericalError &e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::invalid_argument &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitUsage;
}
