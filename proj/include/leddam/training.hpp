#pragma once

#include "leddam/data.hpp"
#include "leddam/model.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace leddam {

struct TrainConfig {
    double lr = 1e-4;
    double dropout = 0.0;
    std::size_t dim = 512;
    std::size_t layers = 1;
    std::size_t max_epochs = 100;
    std::size_t patience = 6;
    std::size_t batch_size = 32;
    std::uint64_t seed = kDefaultSeed;

    void validate() const;
};

/// Optional progress sink; receives one line per event.
using LogFn = std::function<void(const std::string&)>;

struct EpochRecord {
    std::size_t epoch = 0; // 1-based
    double train_loss = 0.0;
    double val_mse = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val_mse = 0.0;
    std::size_t epochs_run = 0;
    bool stopped_early = false;
    std::vector<Matrix> best_params;
};

/// Minibatch ADAM on the MSE loss with validation-based early stopping. On
/// return the model holds the snapshot with the lowest validation MSE.
/// Throws DivergenceError on a non-finite batch loss.
TrainResult train(Forecaster& model, const WindowSet& train_windows, const WindowSet& val_windows,
                  const TrainConfig& config, const LogFn& log = {});

/// Early-stopping bookkeeping, separated so the counting rule is testable.
class EarlyStopper {
public:
    explicit EarlyStopper(std::size_t patience);
    /// Records one epoch's validation score; true when it is a new best.
    bool observe(double val_mse);
    bool should_stop() const noexcept { return bad_epochs_ >= patience_; }
    std::size_t best_epoch() const noexcept { return best_epoch_; }
    double best() const noexcept { return best_; }

private:
    std::size_t patience_;
    std::size_t epoch_ = 0;
    std::size_t best_epoch_ = 0;
    std::size_t bad_epochs_ = 0;
    double best_;
};

struct Metrics {
    double mse = 0.0;
    double mae = 0.0;
    std::size_t windows = 0;
};

/// Averages over every window, channel and horizon step. With `denorm` set,
/// predictions and targets are mapped back to raw units first.
Metrics evaluate(const Forecaster& model, const WindowSet& windows, std::size_t batch_size = 64,
                 const NormStats* denorm = nullptr);

/// Metric accumulation over (prediction, target) pairs of equal shape.
Metrics compute_metrics(const std::vector<Matrix>& predictions, const std::vector<Matrix>& targets);

struct MetricsReport {
    std::string dataset;
    std::string label; // variant / mode / grid cell name
    std::size_t horizon = 0;
    double mse = 0.0;
    double mae = 0.0;
    double val_mse = 0.0;
    std::size_t epochs = 0;
    std::size_t best_epoch = 0;
    double seconds = 0.0;
    std::uint64_t seed = kDefaultSeed;
    std::map<std::string, std::string> config;
};

struct RunOutcome {
    MetricsReport report;
    TrainResult result;
    std::unique_ptr<Forecaster> model;
};

using ModelFactory = std::function<std::unique_ptr<Forecaster>(const TrainConfig&)>;

/// Builds, trains and tests one model.
RunOutcome run_experiment(const PreparedData& data, const ModelFactory& factory, const TrainConfig& config,
                          const std::string& label, const LogFn& log = {});

struct GridSpec {
    std::vector<double> lrs{1e-3, 1e-4, 5e-4};
    std::vector<double> dropouts{0.0, 0.2, 0.5};
    std::vector<std::size_t> dims{256, 512};
    std::vector<std::size_t> layers{1, 2, 3};
};

/// Cartesian product of the grid applied on top of `base` (seed, epochs,
/// patience and batch size come from `base`).
std::vector<TrainConfig> expand_grid(const GridSpec& grid, const TrainConfig& base);

struct GridCell {
    TrainConfig config;
    std::optional<MetricsReport> report; // empty when the cell diverged
    std::string error;
};

struct GridResult {
    std::vector<GridCell> cells;
    std::size_t best = 0;
};

/// Trains one model per cell and picks the lowest validation MSE. Diverged
/// cells are recorded; a grid without any successful cell is an error.
GridResult grid_search(const PreparedData& data, const std::vector<TrainConfig>& cells, const ModelFactory& factory,
                       std::size_t threads = 1, const LogFn& log = {});

struct SuiteRow {
    std::string label;
    MetricsReport report;
    std::size_t trainable_scalars = 0;
    Matrix kernel_initial;
    Matrix kernel_final;
};

/// Trains full, wo_auto, wo_channel and wo_all with identical data, seed and
/// hyperparameters.
std::vector<SuiteRow> run_ablation_suite(const PreparedData& data, const LeddamConfig& base, const TrainConfig& config,
                                         std::size_t threads = 1, const LogFn& log = {});

/// Trains the linear host with MOV, LD_UTL and LD_TL kernels.
std::vector<SuiteRow> run_decomposition_comparison(const PreparedData& data, const LinearHostConfig& base,
                                                   const TrainConfig& config, std::size_t threads = 1,
                                                   const LogFn& log = {});

/// JSON object for one run (no wall-clock field, so identical runs produce
/// identical text).
std::string report_to_json(const MetricsReport& report);
/// "<label_header>,mse,mae" plus one line per row.
std::string suite_to_csv(const std::vector<SuiteRow>& rows, const std::string& label_header);
std::string suite_to_table(const std::vector<SuiteRow>& rows, const std::string& label_header);

/// Thread cap from LEDDAM_THREADS (default 1).
std::size_t threads_from_env();

} // namespace leddam
