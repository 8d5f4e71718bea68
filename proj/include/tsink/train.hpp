// Optimizer, metrics and the multi-seed experiment runner behind `tsink train`.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tsink/bounds.hpp"
#include "tsink/data.hpp"
#include "tsink/model.hpp"

namespace tsink {

/// The five compared configurations.
enum class Variant { NoResidual, NoReg, Mask, Dropout, Penalty };

std::string to_string(Variant v);
/// Accepts "no_residual", "no_reg", "mask", "dropout", "penalty".
Variant parse_variant(const std::string& s);
std::vector<Variant> all_variants();

struct TrainConfig {
    double lr0 = 1e-3;
    std::size_t epochs = 150;
    std::size_t warmup_epochs = 5;
    std::size_t batch_size = 16;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t root_seed = 0;  // each run seeds from derive_seed(root_seed, "train") and its label
    std::vector<std::uint64_t> seeds{0, 1, 2, 3};
    std::vector<std::size_t> horizons_report{3, 6, 12};  // 1-based horizon steps
    Regularizer reg;
    bool residual = true;
    double penalty_lambda = -0.1;  // used by Variant::Penalty
    double dropout_p = 0.2;        // used by Variant::Dropout
    std::size_t train_stride = 1;
    std::size_t probe_windows = 8;  // validation windows averaged for diag-mass logging
    ModelConfig model;  // dimensions; sizes and target scaling are filled from the dataset

    /// epochs = 0 is allowed (evaluates the untrained model).
    void validate() const;
};

/// `cfg` with residual and regularizer set for `v`.
TrainConfig with_variant(TrainConfig cfg, Variant v);

/// Linear warm-up from 0 to lr0 over `warmup_steps`, then
/// lr0·½(1 + cos(π·progress)) down to 0 at `total_steps`.
double lr_schedule(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double lr0);

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// One AdamW update on a flat parameter block. `step` is the 1-based count
/// after this update. Decay is decoupled: p ← p·(1 − lr·wd) − lr·m̂/(√v̂ + eps).
void adamw_update(std::span<double> p, std::span<const double> g, std::span<double> m, std::span<double> v,
                  std::size_t step, double lr, const AdamWConfig& cfg);

struct AdamWState {
    GradientSet m, v;
    std::size_t step = 0;

    static AdamWState for_params(const ModelParams& p);
};

void adamw_step(ModelParams& params, const GradientSet& grads, AdamWState& state, double lr, const AdamWConfig& cfg);

struct HorizonMetrics {
    double mae = 0.0;
    double rmse = 0.0;
    double mape = 0.0;  // percent
    std::size_t count = 0;
    std::size_t mape_count = 0;
};

/// Per horizon step over all samples and nodes where mask ≠ 0. MAPE also skips
/// |target| < 1e-8. A horizon with nothing to average yields NaN and a warning.
std::vector<HorizonMetrics> metrics(const std::vector<Matrix>& pred, const std::vector<Matrix>& target,
                                    const std::vector<Matrix>& mask);

/// Forward every window in eval mode; predictions in original units.
std::vector<HorizonMetrics> evaluate(const TnSModel& model, const std::vector<WindowSample>& windows);

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double lr = 0.0;        // at the epoch's last update
    double train_loss = 0.0;
    double val_mae = 0.0;
    DiagMass diag;
};

struct SeedRun {
    std::uint64_t seed = 0;
    bool failed = false;
    std::string failure;
    std::vector<EpochLog> epochs;
    std::size_t best_epoch = 0;  // 0 means the untrained model
    double best_val_mae = 0.0;
    std::vector<HorizonMetrics> test;  // best-validation model, every horizon step
    std::vector<Matrix> final_attention;  // per head, final-epoch model on the probe windows
    DiagMass final_diag;
    TnSModel final_model;
    TnSModel best_model;
    std::vector<Matrix> probe;  // first probe window, per node
};

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;  // sample std; 0 for a single run
    std::size_t runs = 0;
};

struct HorizonSummary {
    std::size_t horizon = 0;  // 1-based
    MetricSummary mae, rmse, mape;
};

struct ExperimentResult {
    Variant variant = Variant::NoReg;
    TrainConfig cfg;
    std::vector<SeedRun> runs;
    std::vector<HorizonSummary> table;  // one row per reported horizon
    MetricSummary final_diag_ratio;
    MetricSummary final_train_loss;

    std::size_t failed_runs() const;
};

/// Mean and sample standard deviation, skipping NaN entries.
MetricSummary summarize(std::span<const double> values);

/// Trains one model per seed (seeds run on separate OpenMP threads), keeps
/// the checkpoint with the best validation MAE for test metrics, and records
/// per-epoch diag-mass on fixed validation probe windows.
ExperimentResult run_experiment(Variant variant, const TrainConfig& cfg, const SeriesDataset& ds);

/// Writes results.csv and, per seed, epochs.csv, metrics.csv, attention
/// CSV/PGM files and checkpoints under `dir`.
void write_experiment(const std::filesystem::path& dir, const ExperimentResult& r);

std::vector<std::string> results_csv_header();

}  // namespace tsink
