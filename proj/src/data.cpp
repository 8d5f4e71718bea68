#include "tsink/data.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "tsink/format.hpp"
#include "tsink/rng.hpp"

namespace tsink {

namespace {

constexpr double kDiffusionGain = 0.5;
constexpr std::size_t kDiffusionLag = 3;

void add_time_of_day(SeriesDataset& ds) {
    const std::size_t old_f = ds.features;
    std::vector<double> v(ds.nodes * ds.steps * (old_f + 1));
    for (std::size_t n = 0; n < ds.nodes; ++n)
        for (std::size_t t = 0; t < ds.steps; ++t) {
            const std::size_t src = (n * ds.steps + t) * old_f;
            const std::size_t dst = (n * ds.steps + t) * (old_f + 1);
            for (std::size_t f = 0; f < old_f; ++f) v[dst + f] = ds.values[src + f];
            v[dst + old_f] = static_cast<double>(t % kStepsPerDay) / static_cast<double>(kStepsPerDay);
        }
    ds.values = std::move(v);
    ds.features = old_f + 1;
}

}  // namespace

const SplitRange& SeriesDataset::range(Split s) const {
    switch (s) {
        case Split::Train: return train;
        case Split::Val: return val;
        case Split::Test: return test;
    }
    return train;
}

void assign_default_splits(SeriesDataset& ds) {
    const std::size_t a = ds.steps * 7 / 10;
    const std::size_t b = ds.steps * 8 / 10;
    ds.train = {0, a};
    ds.val = {a, b};
    ds.test = {b, ds.steps};
}

void fit_scaler(SeriesDataset& ds) {
    ds.scaler.mean.assign(ds.features, 0.0);
    ds.scaler.std.assign(ds.features, 1.0);
    for (std::size_t f = 0; f < ds.features; ++f) {
        double sum = 0.0, sq = 0.0, n = 0.0;
        for (std::size_t node = 0; node < ds.nodes; ++node)
            for (std::size_t t = ds.train.begin; t < ds.train.end; ++t) {
                if (f == 0 && !ds.is_observed(node, t)) continue;
                const double x = ds.value(node, t, f);
                sum += x;
                sq += x * x;
                n += 1.0;
            }
        if (n == 0.0) continue;
        const double mean = sum / n;
        const double var = std::max(0.0, sq / n - mean * mean);
        ds.scaler.mean[f] = mean;
        ds.scaler.std[f] = std::sqrt(var) > 1e-12 ? std::sqrt(var) : 1.0;
    }
}

SeriesDataset gen_synthetic(const SyntheticConfig& cfg, std::size_t min_steps) {
    if (cfg.nodes < 1) throw std::invalid_argument("synthetic: need at least one node");
    if (cfg.steps < min_steps || cfg.steps < 2) {
        throw std::invalid_argument("synthetic: L = " + std::to_string(cfg.steps) + " is shorter than one window (" +
                                    std::to_string(min_steps) + ")");
    }
    if (cfg.graph_density < 0.0 || cfg.graph_density > 1.0) throw std::invalid_argument("synthetic: density outside [0, 1]");
    if (cfg.noise_std < 0.0) throw std::invalid_argument("synthetic: negative noise");

    const std::size_t n = cfg.nodes, l = cfg.steps;
    SplitMix64 graph_rng(derive_seed(cfg.seed, "synthetic.graph"));
    SplitMix64 node_rng(derive_seed(cfg.seed, "synthetic.nodes"));
    SplitMix64 noise_rng(derive_seed(cfg.seed, "synthetic.noise"));

    Matrix adj(n, n);
    for (std::size_t r = 0; r < n; ++r) {
        double deg = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            if (r == c) continue;
            if (graph_rng.uniform01() < cfg.graph_density) {
                adj(r, c) = 1.0;
                deg += 1.0;
            }
        }
        if (deg > 0.0)
            for (std::size_t c = 0; c < n; ++c) adj(r, c) /= deg;
    }

    std::vector<double> offset(n), amp(n), phase(n);
    for (std::size_t k = 0; k < n; ++k) {
        offset[k] = node_rng.uniform(4.0, 8.0);
        amp[k] = node_rng.uniform(1.0, 3.0);
        phase[k] = node_rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    const double omega = 2.0 * std::numbers::pi / static_cast<double>(kStepsPerDay);
    auto centered = [&](std::size_t k, double t) { return amp[k] * std::sin(omega * t + phase[k]); };

    SeriesDataset ds;
    ds.nodes = n;
    ds.steps = l;
    ds.features = 1;
    ds.values.assign(n * l, 0.0);
    ds.observed.assign(n * l, 1);
    ds.timestamps.reserve(l);
    for (std::size_t t = 0; t < l; ++t) ds.timestamps.push_back(std::to_string(t));

    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t t = 0; t < l; ++t) {
            const double tt = static_cast<double>(t);
            double y = offset[k] + centered(k, tt);
            for (std::size_t m = 0; m < n; ++m) {
                if (adj(k, m) != 0.0) y += kDiffusionGain * adj(k, m) * centered(m, tt - static_cast<double>(kDiffusionLag));
            }
            ds.value(k, t) = y;
        }
    }
    if (cfg.noise_std > 0.0) {
        for (double& v : ds.values) v += cfg.noise_std * noise_rng.normal();
    }

    if (cfg.time_of_day) add_time_of_day(ds);
    assign_default_splits(ds);
    fit_scaler(ds);
    return ds;
}

SeriesDataset read_wide_csv(std::istream& is, bool time_of_day) {
    std::vector<std::vector<double>> rows;
    std::vector<std::string> stamps;
    std::size_t sensors = 0;
    std::string line;
    std::size_t lineno = 0;
    bool first = true;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() < 2) throw ParseError("expected a timestamp and at least one sensor column", lineno);
        if (first) {
            sensors = cells.size() - 1;
            first = false;
            bool all_text = true;
            for (std::size_t c = 1; c < cells.size(); ++c) {
                try {
                    parse_double(cells[c]);
                    all_text = false;
                } catch (const std::invalid_argument&) {
                }
            }
            if (all_text) continue;  // header
        }
        if (cells.size() - 1 != sensors) {
            throw ParseError("row has " + std::to_string(cells.size() - 1) + " sensor cells, expected " +
                                 std::to_string(sensors),
                             lineno);
        }
        std::vector<double> vals(sensors);
        for (std::size_t c = 0; c < sensors; ++c) {
            try {
                vals[c] = parse_double(cells[c + 1]);
            } catch (const std::invalid_argument&) {
                throw ParseError("non-numeric cell '" + cells[c + 1] + "' in column " + std::to_string(c + 2), lineno);
            }
            if (!std::isfinite(vals[c])) throw ParseError("non-finite cell in column " + std::to_string(c + 2), lineno);
        }
        stamps.push_back(cells[0]);
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw ParseError("no data rows", lineno == 0 ? 1 : lineno);

    SeriesDataset ds;
    ds.nodes = sensors;
    ds.steps = rows.size();
    ds.features = 1;
    ds.values.assign(ds.nodes * ds.steps, 0.0);
    ds.observed.assign(ds.nodes * ds.steps, 1);
    ds.timestamps = std::move(stamps);
    for (std::size_t t = 0; t < ds.steps; ++t)
        for (std::size_t n = 0; n < ds.nodes; ++n) {
            ds.value(n, t) = rows[t][n];
            ds.observed[n * ds.steps + t] = rows[t][n] != 0.0 ? 1 : 0;
        }
    if (time_of_day) add_time_of_day(ds);
    assign_default_splits(ds);
    fit_scaler(ds);
    return ds;
}

SeriesDataset ingest_csv(const std::filesystem::path& path, bool time_of_day) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    return read_wide_csv(is, time_of_day);
}

void export_csv(std::ostream& os, const SeriesDataset& ds) {
    std::vector<std::string> cells(ds.nodes + 1);
    cells[0] = "timestamp";
    for (std::size_t n = 0; n < ds.nodes; ++n) cells[n + 1] = "node" + std::to_string(n);
    write_csv_row(os, cells);
    for (std::size_t t = 0; t < ds.steps; ++t) {
        cells[0] = t < ds.timestamps.size() ? ds.timestamps[t] : std::to_string(t);
        for (std::size_t n = 0; n < ds.nodes; ++n) cells[n + 1] = fmt_double(ds.value(n, t));
        write_csv_row(os, cells);
    }
}

std::size_t window_count(std::size_t length, std::size_t w_in, std::size_t h_out, std::size_t stride) {
    if (length < w_in + h_out) return 0;
    return (length - w_in - h_out) / stride + 1;
}

WindowSet::WindowSet(const SeriesDataset& ds, Split split, std::size_t w_in, std::size_t h_out,
                     std::size_t stride)
    : ds_(&ds), w_in_(w_in), h_out_(h_out) {
    if (w_in < 1 || h_out < 1) throw std::invalid_argument("window and horizon must be >= 1");
    if (stride < 1) throw std::invalid_argument("stride must be >= 1");
    const SplitRange& r = ds.range(split);
    const std::size_t count = window_count(r.length(), w_in, h_out, stride);
    if (count == 0) {
        std::cerr << "warning: split of length " << r.length() << " is shorter than W_in + H_out = "
                  << (w_in + h_out) << "; no windows\n";
    }
    starts_.reserve(count);
    for (std::size_t k = 0; k < count; ++k) starts_.push_back(r.begin + k * stride);
}

WindowSample WindowSet::operator[](std::size_t k) const {
    const SeriesDataset& ds = *ds_;
    WindowSample s;
    s.start = starts_.at(k);
    s.inputs.reserve(ds.nodes);
    s.target = Matrix(ds.nodes, h_out_);
    s.target_mask = Matrix(ds.nodes, h_out_);
    for (std::size_t n = 0; n < ds.nodes; ++n) {
        Matrix in(w_in_, ds.features);
        for (std::size_t t = 0; t < w_in_; ++t)
            for (std::size_t f = 0; f < ds.features; ++f) in(t, f) = ds.scaler.normalize(ds.value(n, s.start + t, f), f);
        s.inputs.push_back(std::move(in));
        for (std::size_t h = 0; h < h_out_; ++h) {
            const std::size_t t = s.start + w_in_ + h;
            s.target(n, h) = ds.value(n, t);
            s.target_mask(n, h) = ds.is_observed(n, t) ? 1.0 : 0.0;
        }
    }
    return s;
}

}  // namespace tsink
