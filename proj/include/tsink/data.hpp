// Per-node time series from the synthetic generator or a wide CSV, scaled
// with statistics of the training split and cut into (input, horizon) windows.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tsink/linalg.hpp"

namespace tsink {

/// Samples per simulated day (5-minute readings).
inline constexpr std::size_t kStepsPerDay = 288;

struct Scaler {
    std::vector<double> mean;
    std::vector<double> std;

    double normalize(double x, std::size_t feature) const { return (x - mean[feature]) / std[feature]; }
    double denormalize(double z, std::size_t feature) const { return z * std[feature] + mean[feature]; }
};

struct SplitRange {
    std::size_t begin = 0;
    std::size_t end = 0;  // exclusive
    std::size_t length() const { return end - begin; }
};

enum class Split { Train, Val, Test };

struct SeriesDataset {
    std::size_t nodes = 0;
    std::size_t steps = 0;     // L
    std::size_t features = 1;  // d_x: reading, plus time of day when enabled
    std::vector<double> values;   // [node][step][feature]
    std::vector<std::uint8_t> observed;  // [node][step]; 0 marks a missing reading
    std::vector<std::string> timestamps;  // optional, one per step
    Scaler scaler;
    SplitRange train, val, test;

    double value(std::size_t n, std::size_t t, std::size_t f = 0) const {
        return values[(n * steps + t) * features + f];
    }
    double& value(std::size_t n, std::size_t t, std::size_t f = 0) {
        return values[(n * steps + t) * features + f];
    }
    bool is_observed(std::size_t n, std::size_t t) const { return observed[n * steps + t] != 0; }
    const SplitRange& range(Split s) const;
};

struct SyntheticConfig {
    std::size_t nodes = 20;
    std::size_t steps = 2016;  // one simulated week
    std::uint64_t seed = 0;
    double graph_density = 0.2;
    double noise_std = 0.1;
    bool time_of_day = false;
};

/// Per node: offset + amplitude · sin(2πt/288 + phase), plus 0.5 × the
/// row-normalized adjacency-weighted sum of neighbors' centered signals
/// lagged by 3 steps, plus Gaussian noise. Splits 70/10/20, scaler fitted.
SeriesDataset gen_synthetic(const SyntheticConfig& cfg, std::size_t min_steps = 2);

/// Wide layout: first column timestamp, then one column per sensor. A first
/// line whose sensor cells are all non-numeric is taken as a header. Zero
/// readings are marked missing.
SeriesDataset read_wide_csv(std::istream& is, bool time_of_day = false);
SeriesDataset ingest_csv(const std::filesystem::path& path, bool time_of_day = false);
void export_csv(std::ostream& os, const SeriesDataset& ds);

/// Chronological 70/10/20 splits and a train-only scaler.
void assign_default_splits(SeriesDataset& ds);
void fit_scaler(SeriesDataset& ds);

struct WindowSample {
    std::size_t start = 0;      // first input step
    std::vector<Matrix> inputs; // one W_in × d_x matrix per node, normalized
    Matrix target;              // N × H_out, original units
    Matrix target_mask;         // N × H_out, 1 where observed
};

/// Random-access view over the windows that fit entirely inside one split.
class WindowSet {
public:
    WindowSet(const SeriesDataset& ds, Split split, std::size_t w_in, std::size_t h_out,
              std::size_t stride = 1);

    std::size_t size() const { return starts_.size(); }
    std::size_t window() const { return w_in_; }
    std::size_t horizon() const { return h_out_; }
    WindowSample operator[](std::size_t k) const;

private:
    const SeriesDataset* ds_;
    std::size_t w_in_, h_out_;
    std::vector<std::size_t> starts_;
};

/// floor((L − W − H) / stride) + 1, or 0 when L < W + H.
std::size_t window_count(std::size_t length, std::size_t w_in, std::size_t h_out, std::size_t stride);

}  // namespace tsink
