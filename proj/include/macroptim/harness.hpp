#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "macroptim/diag.hpp"
#include "macroptim/model.hpp"
#include "macroptim/optim.hpp"
#include "macroptim/schedule.hpp"
#include "macroptim/toml.hpp"

namespace macroptim {

enum class OptimizerKind { macro, muonh, fso, muon };

OptimizerKind optimizer_kind_from_string(const std::string &name);
std::string to_string(OptimizerKind k);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::macro;
    double beta = 0.9;
    double c = 1.0;
    double epsilon = 1e-8;
    double r = 1.0; // radius-rule multiplier
    MsignMode msign_mode = MsignMode::exact;
    int msign_iters = 30;
    double weight_decay = 0.0; // muon only
    double inner_tol = 1e-4;   // fso
    int inner_cap = 10;        // fso
    bool shape_scale = false;  // muon
    bool spectral_exact_clip = false;
    // 1-D parameters (RMS gains) always train with AdamW.
    double adamw_lr = 5e-3;
    double adamw_beta1 = 0.9;
    double adamw_beta2 = 0.95;
    double adamw_eps = 1e-8;
    double adamw_weight_decay = 0.0;
};

struct LayerConfig {
    LayerSpec spec;
    double radius_override = 0.0; // 0 = use the radius rule
};

struct RunConfig {
    TaskSpec task;
    // nearest-point runs optimize a single matrix; its constraint lives here.
    ManifoldKind task_manifold = ManifoldKind::frobenius_sphere;
    double task_radius_override = 0.0;
    std::vector<LayerConfig> layers; // model tasks
    OptimizerConfig optimizer;
    LrSchedule schedule;
    long steps = 100;
    std::uint64_t seed = 0;
    long diag_every = 1;

    void validate() const;
};

RunConfig run_config_from_toml(const toml::Table &table);
RunConfig run_config_from_file(const std::string &path);

// Flattened metric stream: fixed column set per run, one row per diag_every
// steps, a terminal row carrying status "diverged" when the run blows up.
struct MetricRow {
    long step = 0;
    double train_loss = 0.0;
    std::optional<double> eval_loss;
    std::string status = "ok";
    std::vector<std::optional<double>> values;
};

struct MetricTable {
    std::vector<std::string> columns; // names after step,train_loss,eval_loss,status
    std::vector<MetricRow> rows;
};

struct ParamSummary {
    std::string name;
    ManifoldKind manifold = ManifoldKind::frobenius_sphere;
    bool constrained = false;
    double radius = 0.0;
    double mean_vio = 0.0;
    double degenerate_fraction = 0.0;
    double min_stable_rank = 0.0;
    double max_feasibility_gap = 0.0;
};

struct RunSummary {
    std::string status = "ok"; // ok | diverged
    long steps_run = 0;
    double initial_train_loss = 0.0;
    double final_train_loss = 0.0;
    std::optional<double> final_eval_loss;
    std::optional<double> final_dist; // nearest-point distance to the closed-form optimum
    double wall_time_seconds = 0.0;   // informational only, never asserted
    std::vector<ParamSummary> params;
};

struct RunResult {
    RunSummary summary;
    MetricTable metrics;
};

RunResult run(const RunConfig &config);

void write_metrics_csv(const std::string &path, const MetricTable &table);
void write_metrics_jsonl(const std::string &path, const MetricTable &table);
void write_summary_json(const std::string &path, const RunSummary &summary,
                        const toml::Table &config_echo);

// Runs every config in the Cartesian product of [sweep.grid]; each point is
// independently seeded from (seed, point index). Per-point failures are
// captured in the row, never aborting the sweep. Rows come back sorted by
// final eval loss (train loss when no eval), errors last. When out_dir is
// non-empty, per-point artifacts land in out_dir/run_NNN and a
// sweep_results.csv is written.
struct SweepRow {
    int index = 0;
    std::string overrides;
    std::string status; // ok | diverged | error: ...
    double final_train_loss = 0.0;
    std::optional<double> final_eval_loss;
    std::uint64_t seed = 0;
};

std::vector<SweepRow> sweep(const toml::Table &base, const std::string &out_dir);

// 17-significant-digit float formatting shared by every metric sink.
std::string format_double(double v);

} // namespace macroptim
