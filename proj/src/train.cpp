#include "tsink/train.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "tsink/format.hpp"
#include "tsink/rng.hpp"

namespace tsink {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<WindowSample> collect(const WindowSet& set, std::size_t count_limit = 0) {
    std::vector<WindowSample> out;
    const std::size_t n = count_limit == 0 ? set.size() : std::min(count_limit, set.size());
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) out.push_back(set[k]);
    return out;
}

std::vector<WindowSample> probe_set(const WindowSet& val, std::size_t count) {
    std::vector<WindowSample> out;
    if (val.size() == 0 || count == 0) return out;
    const std::size_t n = std::min(count, val.size());
    for (std::size_t k = 0; k < n; ++k) out.push_back(val[k * val.size() / n]);
    return out;
}

// Per-head attention averaged over nodes and probe windows, eval mode.
std::vector<Matrix> probe_attention(const TnSModel& model, const std::vector<WindowSample>& probes) {
    std::vector<Matrix> acc;
    if (probes.empty()) return acc;
    const Adjacency adj = learned_adjacency(model.params.e1, model.params.e2);
    for (const auto& s : probes) {
        const SampleTrace tr = forward_sample(model, adj, s.inputs, false, 0);
        const auto heads = mean_attention(tr);
        if (acc.empty()) {
            acc = heads;
        } else {
            for (std::size_t h = 0; h < heads.size(); ++h) acc[h] += heads[h];
        }
    }
    for (auto& m : acc) m *= 1.0 / static_cast<double>(probes.size());
    return acc;
}

DiagMass pooled_diag(const std::vector<Matrix>& heads) {
    DiagMass d;
    if (heads.empty()) {
        d.ratio = kNaN;
        return d;
    }
    for (const auto& a : heads) {
        const DiagMass h = diag_mass(a);
        d.mean_diag += h.mean_diag;
        d.mean_offdiag += h.mean_offdiag;
    }
    d.mean_diag /= static_cast<double>(heads.size());
    d.mean_offdiag /= static_cast<double>(heads.size());
    d.ratio = d.mean_offdiag < 1e-15 ? kNaN : d.mean_diag / d.mean_offdiag;
    return d;
}

double mean_mae(const std::vector<HorizonMetrics>& m) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& h : m) {
        if (std::isnan(h.mae)) continue;
        s += h.mae;
        ++n;
    }
    return n == 0 ? kNaN : s / static_cast<double>(n);
}

bool params_finite(const ModelParams& p) {
    bool ok = true;
    p.visit([&](const std::string&, const Matrix& m) { ok = ok && all_finite(m); });
    return ok;
}

struct Prepared {
    ModelConfig model;
    std::vector<WindowSample> train, val, test, probes;
};

SeedRun train_one(const TrainConfig& cfg, const Prepared& data, std::uint64_t seed) {
    SeedRun run;
    run.seed = seed;
    const std::uint64_t base = derive_seed(derive_seed(cfg.root_seed, "train"), seed);
    TnSModel model = make_model(data.model, derive_seed(base, "init"));
    SplitMix64 shuffle_rng(derive_seed(base, "shuffle"));
    const std::uint64_t dropout_root = derive_seed(base, "dropout");

    const std::size_t n_train = data.train.size();
    const std::size_t per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total = per_epoch * cfg.epochs;
    const std::size_t warm = per_epoch * cfg.warmup_epochs;
    const AdamWConfig opt{cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay};
    AdamWState state = AdamWState::for_params(model.params);

    run.best_model = model;
    run.best_val_mae = mean_mae(evaluate(model, data.val));
    std::vector<std::size_t> order(n_train);
    for (std::size_t k = 0; k < n_train; ++k) order[k] = k;

    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs && !run.failed; ++epoch) {
        for (std::size_t k = n_train; k > 1; --k) std::swap(order[k - 1], order[shuffle_rng.below(k)]);
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        double lr = 0.0;
        for (std::size_t b0 = 0; b0 < n_train; b0 += cfg.batch_size) {
            std::vector<WindowSample> picked;
            for (std::size_t k = b0; k < std::min(n_train, b0 + cfg.batch_size); ++k) picked.push_back(data.train[order[k]]);
            const Batch batch = make_batch(picked, derive_seed(dropout_root, step));
            const LossAndGrad lg = model_backward(batch, model, true);
            ++step;
            lr = lr_schedule(step, total, warm, cfg.lr0);
            if (!std::isfinite(lg.loss)) {
                run.failed = true;
                run.failure = "non-finite training loss at epoch " + std::to_string(epoch);
                break;
            }
            adamw_step(model.params, lg.grads, state, lr, opt);
            loss_sum += lg.loss * static_cast<double>(lg.count);
            loss_count += lg.count;
        }
        if (run.failed) break;
        if (!params_finite(model.params)) {
            run.failed = true;
            run.failure = "non-finite parameters at epoch " + std::to_string(epoch);
            break;
        }
        EpochLog log;
        log.epoch = epoch;
        log.lr = lr;
        log.train_loss = loss_count == 0 ? kNaN : loss_sum / static_cast<double>(loss_count);
        log.val_mae = mean_mae(evaluate(model, data.val));
        log.diag = pooled_diag(probe_attention(model, data.probes));
        if (log.val_mae < run.best_val_mae || std::isnan(run.best_val_mae)) {
            run.best_val_mae = log.val_mae;
            run.best_epoch = epoch;
            run.best_model = model;
        }
        run.epochs.push_back(log);
    }

    run.final_model = model;
    run.test = evaluate(run.best_model, data.test);
    run.final_attention = probe_attention(model, data.probes);
    run.final_diag = pooled_diag(run.final_attention);
    if (!data.probes.empty()) run.probe = data.probes.front().inputs;
    return run;
}

}  // namespace

std::string to_string(Variant v) {
    switch (v) {
        case Variant::NoResidual: return "no_residual";
        case Variant::NoReg: return "no_reg";
        case Variant::Mask: return "mask";
        case Variant::Dropout: return "dropout";
        case Variant::Penalty: return "penalty";
    }
    return "?";
}

Variant parse_variant(const std::string& s) {
    for (Variant v : all_variants())
        if (to_string(v) == s) return v;
    throw std::invalid_argument("unknown variant '" + s + "' (expected no_residual, no_reg, mask, dropout, penalty)");
}

std::vector<Variant> all_variants() {
    return {Variant::NoResidual, Variant::NoReg, Variant::Mask, Variant::Dropout, Variant::Penalty};
}

void TrainConfig::validate() const {
    if (!(lr0 > 0.0)) throw std::invalid_argument("train: lr0 must be positive");
    if (epochs > 0 && warmup_epochs >= epochs) throw std::invalid_argument("train: warmup_epochs must be < epochs");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (weight_decay < 0.0) throw std::invalid_argument("train: weight_decay must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("train: betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw std::invalid_argument("train: eps must be positive");
    if (seeds.empty()) throw std::invalid_argument("train: at least one seed is required");
    if (train_stride < 1) throw std::invalid_argument("train: train_stride must be >= 1");
    for (std::size_t h : horizons_report) {
        if (h < 1 || h > model.horizon) {
            throw std::invalid_argument("train: reported horizon " + std::to_string(h) + " outside 1.." +
                                        std::to_string(model.horizon));
        }
    }
    reg.validate();
    ModelConfig sized = model;  // nodes and features come from the dataset later
    sized.nodes = std::max<std::size_t>(sized.nodes, 1);
    sized.features = std::max<std::size_t>(sized.features, 1);
    sized.validate();
}

TrainConfig with_variant(TrainConfig cfg, Variant v) {
    cfg.residual = v != Variant::NoResidual;
    switch (v) {
        case Variant::NoResidual:
        case Variant::NoReg: cfg.reg = Regularizer::none(); break;
        case Variant::Mask: cfg.reg = Regularizer::mask(); break;
        case Variant::Dropout: cfg.reg = Regularizer::dropout(cfg.dropout_p, 0); break;
        case Variant::Penalty: cfg.reg = Regularizer::penalty(cfg.penalty_lambda); break;
    }
    return cfg;
}

double lr_schedule(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double lr0) {
    if (step >= total_steps) return 0.0;
    if (step < warmup_steps) return lr0 * static_cast<double>(step) / static_cast<double>(warmup_steps);
    const double span = static_cast<double>(total_steps - warmup_steps);
    const double progress = static_cast<double>(step - warmup_steps) / span;
    return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void adamw_update(std::span<double> p, std::span<const double> g, std::span<double> m, std::span<double> v,
                  std::size_t step, double lr, const AdamWConfig& cfg) {
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
        throw ShapeError("adamw: parameter, gradient and moment sizes differ");
    }
    const double t = static_cast<double>(step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    const double shrink = 1.0 - lr * cfg.weight_decay;
    for (std::size_t k = 0; k < p.size(); ++k) {
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
        const double mhat = m[k] / c1;
        const double vhat = v[k] / c2;
        p[k] = p[k] * shrink - lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

AdamWState AdamWState::for_params(const ModelParams& p) {
    AdamWState s;
    s.m = p.zeros_like();
    s.v = p.zeros_like();
    return s;
}

void adamw_step(ModelParams& params, const GradientSet& grads, AdamWState& state, double lr, const AdamWConfig& cfg) {
    ++state.step;
    std::vector<const Matrix*> g;
    std::vector<Matrix*> m, v;
    grads.visit([&](const std::string&, const Matrix& x) { g.push_back(&x); });
    state.m.visit([&](const std::string&, Matrix& x) { m.push_back(&x); });
    state.v.visit([&](const std::string&, Matrix& x) { v.push_back(&x); });
    std::size_t k = 0;
    params.visit([&](const std::string& name, Matrix& p) {
        if (k >= g.size() || g[k]->size() != p.size()) throw ShapeError("adamw: gradient layout mismatch at " + name);
        adamw_update(p.data(), g[k]->data(), m[k]->data(), v[k]->data(), state.step, lr, cfg);
        ++k;
    });
}

std::vector<HorizonMetrics> metrics(const std::vector<Matrix>& pred, const std::vector<Matrix>& target,
                                    const std::vector<Matrix>& mask) {
    if (pred.size() != target.size() || pred.size() != mask.size()) throw ShapeError("metrics: sample counts differ");
    if (pred.empty()) return {};
    const std::size_t nodes = pred.front().rows(), hz = pred.front().cols();
    for (std::size_t s = 0; s < pred.size(); ++s) {
        for (const Matrix* m : {&pred[s], &target[s], &mask[s]}) {
            if (m->rows() != nodes || m->cols() != hz) throw ShapeError("metrics: sample " + std::to_string(s) + " is " + shape_str(*m));
        }
    }
    std::vector<HorizonMetrics> out(hz);
    std::vector<double> abs_sum(hz, 0.0), sq_sum(hz, 0.0), pct_sum(hz, 0.0);
    for (std::size_t s = 0; s < pred.size(); ++s)
        for (std::size_t n = 0; n < nodes; ++n)
            for (std::size_t h = 0; h < hz; ++h) {
                if (mask[s](n, h) == 0.0) continue;
                const double y = target[s](n, h);
                const double e = pred[s](n, h) - y;
                abs_sum[h] += std::abs(e);
                sq_sum[h] += e * e;
                ++out[h].count;
                if (std::abs(y) >= 1e-8) {
                    pct_sum[h] += std::abs(e / y);
                    ++out[h].mape_count;
                }
            }
    for (std::size_t h = 0; h < hz; ++h) {
        HorizonMetrics& m = out[h];
        if (m.count == 0) {
            std::cerr << "warning: horizon step " << (h + 1) << " has no observed targets; metrics are NaN\n";
            m.mae = m.rmse = m.mape = kNaN;
            continue;
        }
        const double c = static_cast<double>(m.count);
        m.mae = abs_sum[h] / c;
        m.rmse = std::sqrt(sq_sum[h] / c);
        if (m.mape_count == 0) {
            std::cerr << "warning: horizon step " << (h + 1) << " has no nonzero targets; MAPE is NaN\n";
            m.mape = kNaN;
        } else {
            m.mape = 100.0 * pct_sum[h] / static_cast<double>(m.mape_count);
        }
    }
    return out;
}

std::vector<HorizonMetrics> evaluate(const TnSModel& model, const std::vector<WindowSample>& windows) {
    if (windows.empty()) return std::vector<HorizonMetrics>(model.cfg.horizon, HorizonMetrics{kNaN, kNaN, kNaN, 0, 0});
    const Batch batch = make_batch(windows);
    ForwardResult fr = model_forward(batch, model, false);
    for (Matrix& p : fr.predictions)
        for (double& v : p.data()) v = model.cfg.target_std * v + model.cfg.target_mean;
    return metrics(fr.predictions, batch.targets, batch.masks);
}

std::size_t ExperimentResult::failed_runs() const {
    return static_cast<std::size_t>(std::count_if(runs.begin(), runs.end(), [](const SeedRun& r) { return r.failed; }));
}

MetricSummary summarize(std::span<const double> values) {
    MetricSummary s;
    double sum = 0.0;
    for (double v : values) {
        if (std::isnan(v)) continue;
        sum += v;
        ++s.runs;
    }
    if (s.runs == 0) return {kNaN, kNaN, 0};
    s.mean = sum / static_cast<double>(s.runs);
    if (s.runs > 1) {
        double ss = 0.0;
        for (double v : values)
            if (!std::isnan(v)) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(s.runs - 1));
    }
    return s;
}

ExperimentResult run_experiment(Variant variant, const TrainConfig& base, const SeriesDataset& ds) {
    ExperimentResult r;
    r.variant = variant;
    r.cfg = with_variant(base, variant);
    const TrainConfig& cfg = r.cfg;

    Prepared data;
    data.model = cfg.model;
    data.model.nodes = ds.nodes;
    data.model.features = ds.features;
    data.model.residual = cfg.residual;
    data.model.reg = cfg.reg;
    data.model.target_mean = ds.scaler.mean.at(0);
    data.model.target_std = ds.scaler.std.at(0);
    r.cfg.model = data.model;
    cfg.validate();
    data.model.validate();

    const std::size_t w = data.model.window, h = data.model.horizon;
    data.train = collect(WindowSet(ds, Split::Train, w, h, cfg.train_stride));
    data.val = collect(WindowSet(ds, Split::Val, w, h));
    data.test = collect(WindowSet(ds, Split::Test, w, h));
    data.probes = probe_set(WindowSet(ds, Split::Val, w, h), cfg.probe_windows);
    if (data.train.empty() && cfg.epochs > 0) throw std::invalid_argument("train: training split has no windows");

    r.runs.resize(cfg.seeds.size());
    const auto n_seeds = static_cast<std::ptrdiff_t>(cfg.seeds.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t k = 0; k < n_seeds; ++k) {
        const auto idx = static_cast<std::size_t>(k);
        try {
            r.runs[idx] = train_one(cfg, data, cfg.seeds[idx]);
        } catch (const std::exception& e) {
            r.runs[idx].seed = cfg.seeds[idx];
            r.runs[idx].failed = true;
            r.runs[idx].failure = e.what();
        }
    }

    for (const SeedRun& run : r.runs) {
        if (run.failed) std::cerr << "warning: " << to_string(variant) << " seed " << run.seed << " failed: " << run.failure << '\n';
    }

    auto collect_metric = [&](std::size_t hz, double HorizonMetrics::*field) {
        std::vector<double> v;
        for (const SeedRun& run : r.runs) v.push_back(run.failed || run.test.size() < hz ? kNaN : run.test[hz - 1].*field);
        return summarize(v);
    };
    for (std::size_t hz : cfg.horizons_report) {
        HorizonSummary row;
        row.horizon = hz;
        row.mae = collect_metric(hz, &HorizonMetrics::mae);
        row.rmse = collect_metric(hz, &HorizonMetrics::rmse);
        row.mape = collect_metric(hz, &HorizonMetrics::mape);
        r.table.push_back(row);
    }
    std::vector<double> ratios, losses;
    for (const SeedRun& run : r.runs) {
        ratios.push_back(run.failed ? kNaN : run.final_diag.ratio);
        losses.push_back(run.failed || run.epochs.empty() ? kNaN : run.epochs.back().train_loss);
    }
    r.final_diag_ratio = summarize(ratios);
    r.final_train_loss = summarize(losses);
    return r;
}

std::vector<std::string> results_csv_header() {
    return {"horizon", "mae_mean", "mae_std", "rmse_mean", "rmse_std", "mape_mean", "mape_std", "runs"};
}

void write_experiment(const std::filesystem::path& dir, const ExperimentResult& r) {
    write_file_atomic(dir / "results.csv", [&](std::ostream& os) {
        write_csv_row(os, results_csv_header());
        for (const auto& row : r.table) {
            write_csv_row(os, {std::to_string(row.horizon), fmt_double(row.mae.mean), fmt_double(row.mae.std),
                               fmt_double(row.rmse.mean), fmt_double(row.rmse.std), fmt_double(row.mape.mean),
                               fmt_double(row.mape.std), std::to_string(row.mae.runs)});
        }
    });
    for (const SeedRun& run : r.runs) {
        const auto sd = dir / ("seed" + std::to_string(run.seed));
        write_file_atomic(sd / "status.txt", [&](std::ostream& os) {
            os << "seed = " << run.seed << '\n';
            os << "failed = " << (run.failed ? "true" : "false") << '\n';
            if (run.failed) os << "failure = " << run.failure << '\n';
            os << "best_epoch = " << run.best_epoch << '\n';
            os << "best_val_mae = " << fmt_double(run.best_val_mae) << '\n';
            os << "final_diag_mean = " << fmt_double(run.final_diag.mean_diag) << '\n';
            os << "final_offdiag_mean = " << fmt_double(run.final_diag.mean_offdiag) << '\n';
            os << "final_diag_ratio = " << fmt_double(run.final_diag.ratio) << '\n';
        });
        if (run.failed) continue;
        write_file_atomic(sd / "epochs.csv", [&](std::ostream& os) {
            write_csv_row(os, {"epoch", "lr", "train_loss", "val_mae", "diag_mean", "offdiag_mean", "diag_ratio"});
            for (const auto& e : run.epochs) {
                write_csv_row(os, {std::to_string(e.epoch), fmt_double(e.lr), fmt_double(e.train_loss), fmt_double(e.val_mae),
                                   fmt_double(e.diag.mean_diag), fmt_double(e.diag.mean_offdiag), fmt_double(e.diag.ratio)});
            }
        });
        write_file_atomic(sd / "metrics.csv", [&](std::ostream& os) {
            write_csv_row(os, {"horizon", "mae", "rmse", "mape", "count"});
            for (std::size_t h = 0; h < run.test.size(); ++h) {
                const auto& m = run.test[h];
                write_csv_row(os, {std::to_string(h + 1), fmt_double(m.mae), fmt_double(m.rmse), fmt_double(m.mape),
                                   std::to_string(m.count)});
            }
        });
        for (std::size_t h = 0; h < run.final_attention.size(); ++h) {
            const auto stem = sd / "attention" / ("head" + std::to_string(h));
            write_file_atomic(stem.string() + ".csv", [&](std::ostream& os) { write_matrix_csv(os, run.final_attention[h]); });
            write_file_atomic(stem.string() + ".pgm", [&](std::ostream& os) { write_pgm(os, run.final_attention[h]); });
        }
        const std::vector<std::pair<std::string, std::string>> meta{
            {"variant", to_string(r.variant)}, {"seed", std::to_string(run.seed)}};
        auto save = [&](const std::string& name, const TnSModel& m, std::size_t epoch) {
            Checkpoint ck{m, run.probe, meta};
            ck.meta.emplace_back("epoch", std::to_string(epoch));
            write_file_atomic(sd / name, [&](std::ostream& os) { save_checkpoint(os, ck); });
        };
        save("final.ckpt", run.final_model, run.epochs.size());
        save("best.ckpt", run.best_model, run.best_epoch);
    }
}

}  // namespace tsink
