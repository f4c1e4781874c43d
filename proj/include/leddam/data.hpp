#pragma once

// Dataset ingestion, chronological splits, train-only standardization and
// sliding-window samples.

#include "leddam/matrix.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace leddam {

struct RawDataset {
    std::string name;
    std::vector<std::string> channel_names;
    Matrix values; // total_steps x N
    std::vector<std::string> timestamps;
    std::string granularity; // e.g. "1 hour"; empty if unknown

    std::size_t steps() const noexcept { return values.rows(); }
    std::size_t channels() const noexcept { return values.cols(); }
};

/// Header "date,<ch1>,...,<chN>", then one row per time step. Timestamps must
/// be strictly increasing ("YYYY-MM-DD[ HH:MM[:SS]]" or plain numbers).
RawDataset load_csv(const std::string& path);
RawDataset parse_csv(std::string_view text, const std::string& name = "dataset");

/// Half-open index range [begin, end).
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - begin; }
    friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

struct SplitRatios {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;
};

/// Ratio preset by dataset name: ETTh1/ETTh2/ETTm1/ETTm2 -> 6:2:2; Electricity,
/// Traffic, Weather, Solar and anything else -> 7:1:2.
SplitRatios preset_ratios(std::string_view preset);
/// Names known to the preset registry.
const std::vector<std::string>& known_presets();

struct DataSplits {
    IndexRange train;
    IndexRange val;
    IndexRange test;
};

/// Target ranges with borders at floor(total · cumulative ratio). Every segment
/// must hold at least T + F steps.
DataSplits chronological_split(std::size_t total_steps, const SplitRatios& ratios, std::size_t lookback,
                               std::size_t horizon);

struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev; // population (biased) standard deviation
};

/// Per-channel mean/std over the rows of `train` only.
NormStats fit_norm_stats(const Matrix& values, const IndexRange& train, const std::vector<std::string>& names = {});
Matrix apply_norm(const Matrix& values, const NormStats& stats);
Matrix invert_norm(const Matrix& values, const NormStats& stats);

struct Standardized {
    Matrix values;
    NormStats stats;
};
Standardized standardize(const RawDataset& ds, const IndexRange& train);

struct WindowSample {
    Matrix x; // N x T
    Matrix y; // N x F
    std::size_t origin = 0;
};

enum class WindowMode {
    confined,  // lookback and target both inside the range (training)
    spillover, // lookback may reach left of the range (validation / test)
};

/// Lazily materialized sliding windows over a shared time-major series.
class WindowSet {
public:
    WindowSet() = default;
    WindowSet(std::shared_ptr<const Matrix> series, std::vector<std::size_t> origins, std::size_t lookback,
              std::size_t horizon);

    std::size_t size() const noexcept { return origins_.size(); }
    bool empty() const noexcept { return origins_.empty(); }
    std::size_t lookback() const noexcept { return lookback_; }
    std::size_t horizon() const noexcept { return horizon_; }
    std::size_t channels() const noexcept { return series_ ? series_->cols() : 0; }
    const std::vector<std::size_t>& origins() const noexcept { return origins_; }

    WindowSample sample(std::size_t i) const;

    /// Stacks the chosen windows channel-major: X is (B·N) x T, Y is (B·N) x F.
    void assemble(std::span<const std::size_t> indices, Matrix& x, Matrix& y) const;

private:
    std::shared_ptr<const Matrix> series_;
    std::vector<std::size_t> origins_;
    std::size_t lookback_ = 0;
    std::size_t horizon_ = 0;
};

/// One window per origin o (every `stride` steps) with x = [o, o+T) and
/// y = [o+T, o+T+F). Confined: range.size() - T - F + 1 origins. Spillover:
/// range.size() - F + 1 origins (fewer if the range starts before T).
/// An empty result is not an error; a warning is written to stderr.
WindowSet make_windows(std::shared_ptr<const Matrix> values, const IndexRange& range, std::size_t lookback,
                       std::size_t horizon, WindowMode mode, std::size_t stride = 1);

struct PreparedData {
    RawDataset raw;
    NormStats stats;
    DataSplits splits;
    std::shared_ptr<const Matrix> normalized;
    WindowSet train;
    WindowSet val;
    WindowSet test;
};

/// Split, standardize on the train segment, and window all three segments.
PreparedData prepare_data(RawDataset raw, const SplitRatios& ratios, std::size_t lookback, std::size_t horizon);

/// Deterministic ETT-shaped series (hourly timestamps from 2016-07-01): daily
/// and weekly cycles, slow drifts, cross-channel coupling, AR(1) noise.
RawDataset make_synthetic_dataset(std::size_t steps, std::size_t channels, std::uint64_t seed,
                                  const std::string& name = "synthetic");
std::string to_csv(const RawDataset& ds);

} // namespace leddam
