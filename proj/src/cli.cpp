#include "tsink/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "tsink/format.hpp"
#include "tsink/rng.hpp"

#ifndef TSINK_CODE_VERSION
#define TSINK_CODE_VERSION "unknown"
#endif

namespace tsink {

namespace {

void write_snapshot(const CliContext& ctx) {
    write_file_atomic(ctx.out_dir / "config.txt", [&](std::ostream& os) { write_config(os, ctx.cfg); });
}

void print_suite(std::ostream& os, const SuiteReport& r) {
    os << r.name << ": max_rel_err = " << std::setprecision(6) << r.max_err;
    if (r.max_abs_diff > 0.0) os << ", max_abs_diff = " << r.max_abs_diff;
    os << " (tolerance " << r.tolerance << ", " << r.cases << " cases) " << (r.pass() ? "PASS" : "FAIL") << '\n';
}

SeriesDataset load_dataset(const RunConfig& cfg) {
    const std::size_t need = cfg.train.model.window + cfg.train.model.horizon;
    if (cfg.data.source == "csv") return ingest_csv(cfg.data.path, cfg.data.synthetic.time_of_day);
    SyntheticConfig sc = cfg.data.synthetic;
    sc.seed = derive_seed(cfg.seed, "data");
    return gen_synthetic(sc, need);
}

std::string dat_line(std::size_t t, double v) { return std::to_string(t) + ' ' + fmt_double(v) + '\n'; }

}  // namespace

const char* code_version() { return TSINK_CODE_VERSION; }

int cmd_gradcheck(const CliContext& ctx) {
    const RunConfig& cfg = ctx.cfg;
    write_snapshot(ctx);
    const std::vector<SuiteReport> suites{check_attention_jacobian(cfg.gradcheck, cfg.seed),
                                          check_softmax_jacobian(cfg.gradcheck, cfg.seed),
                                          check_model_gradients(cfg.gradcheck, cfg.seed)};
    bool ok = true;
    std::ostringstream report;
    for (const auto& s : suites) {
        print_suite(report, s);
        if (!s.pass()) {
            ok = false;
            report << "  worst case " << s.worst << '\n';
        }
    }
    ctx.out << report.str();
    write_file_atomic(ctx.out_dir / "gradcheck.txt", [&](std::ostream& os) { os << report.str(); });
    return ok ? kExitOk : kExitFailure;
}

int cmd_bounds_sweep(const CliContext& ctx) {
    SweepConfig sc = ctx.cfg.sweep;
    sc.seed = derive_seed(ctx.cfg.seed, "bounds-sweep");
    write_snapshot(ctx);
    const SweepResult res = sweep_T(sc);

    write_file_atomic(ctx.out_dir / "bounds.csv", [&](std::ostream& os) { write_bounds_csv(os, res.aggregates); });
    write_file_atomic(ctx.out_dir / "bound_vs_T.dat", [&](std::ostream& os) {
        os << "# T offdiag_bound\n";
        for (const auto& r : res.aggregates) os << dat_line(r.steps, r.offdiag_bound);
    });
    write_file_atomic(ctx.out_dir / "measured_vs_T.dat", [&](std::ostream& os) {
        os << "# T measured_offdiag_mean\n";
        for (const auto& r : res.aggregates) os << dat_line(r.steps, r.measured_offdiag_mean);
    });

    ctx.out << "T, offdiag_bound, measured_offdiag_mean, measured_diag\n";
    for (const auto& r : res.aggregates) {
        ctx.out << r.steps << ", " << fmt_double(r.offdiag_bound) << ", " << fmt_double(r.measured_offdiag_mean) << ", "
                << fmt_double(r.measured_diag) << '\n';
    }
    if (res.aggregates.size() > 1) {
        ctx.out << "ratio of consecutive offdiag_bound means:";
        for (std::size_t k = 1; k < res.aggregates.size(); ++k) {
            ctx.out << ' ' << std::setprecision(4) << res.aggregates[k].offdiag_bound / res.aggregates[k - 1].offdiag_bound;
        }
        ctx.out << '\n';
    }

    if (!res.violations.empty()) {
        write_file_atomic(ctx.out_dir / "violations.csv", [&](std::ostream& os) {
            write_csv_row(os, {"T", "sample", "i", "check", "lhs", "rhs", "seed_path"});
            for (const auto& v : res.violations) {
                write_csv_row(os, {std::to_string(v.steps), std::to_string(v.sample), std::to_string(v.i), v.check,
                                   fmt_double(v.lhs), fmt_double(v.rhs), v.seed_path});
            }
        });
        ctx.err << res.violations.size() << " bound violation(s):\n";
        for (const auto& v : res.violations) {
            ctx.err << "  " << v.check << " at i=" << v.i << ": " << fmt_double(v.lhs) << " > " << fmt_double(v.rhs)
                    << "  [" << v.seed_path << "]\n";
        }
        return kExitFailure;
    }
    ctx.out << "0 bound violations\n";
    return kExitOk;
}

int cmd_train(const CliContext& ctx) {
    const RunConfig& cfg = ctx.cfg;
    const auto start = std::chrono::steady_clock::now();
    write_snapshot(ctx);
    const SeriesDataset ds = load_dataset(cfg);

    std::vector<Variant> variants;
    if (cfg.variant == "all") {
        variants = all_variants();
    } else {
        variants.push_back(parse_variant(cfg.variant));
    }
    TrainConfig tc = cfg.train;
    tc.root_seed = cfg.seed;
    {
        ModelConfig probe = tc.model;
        probe.nodes = ds.nodes;
        probe.features = ds.features;
        const std::string warning = param_ratio_warning(make_model(probe, 0));
        if (!warning.empty()) ctx.err << "warning: " << warning << '\n';
    }

    bool any_variant_failed = false;
    std::ostringstream manifest;
    manifest << "tool = tsink\ncommand = train\ncode_version = " << code_version() << '\n';
    manifest << "dataset.nodes = " << ds.nodes << "\ndataset.steps = " << ds.steps << "\ndataset.features = " << ds.features
             << '\n';
    for (const auto& [k, v] : cfg.entries()) manifest << "config." << k << " = " << v << '\n';

    for (Variant v : variants) {
        const ExperimentResult r = run_experiment(v, tc, ds);
        write_experiment(ctx.out_dir / to_string(v), r);
        const std::size_t failed = r.failed_runs();
        if (failed == r.runs.size()) any_variant_failed = true;
        manifest << "variant." << to_string(v) << ".runs = " << r.runs.size() << '\n';
        manifest << "variant." << to_string(v) << ".failed_runs = " << failed << '\n';
        for (const auto& run : r.runs) {
            if (run.failed) manifest << "variant." << to_string(v) << ".failed_seed = " << run.seed << '\n';
        }

        ctx.out << to_string(v) << " (" << (r.runs.size() - failed) << "/" << r.runs.size() << " runs)\n";
        for (const auto& row : r.table) {
            ctx.out << "  horizon " << row.horizon << ": MAE " << std::fixed << std::setprecision(4) << row.mae.mean
                    << " +/- " << row.mae.std << "  RMSE " << row.rmse.mean << " +/- " << row.rmse.std << "  MAPE "
                    << row.mape.mean << " +/- " << row.mape.std << '\n'
                    << std::defaultfloat;
        }
        ctx.out << "  final diag ratio " << std::setprecision(6) << r.final_diag_ratio.mean << " +/- "
                << r.final_diag_ratio.std << '\n';
    }
    if (cfg.record_wall_time) {
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
        manifest << "wall_time_s = " << fmt_double(dt.count()) << '\n';
    }
    write_file_atomic(ctx.out_dir / "manifest.txt", [&](std::ostream& os) { os << manifest.str(); });
    return any_variant_failed ? kExitFailure : kExitOk;
}

int cmd_attn_export(const CliContext& ctx, const std::filesystem::path& checkpoint) {
    Checkpoint ck;
    try {
        ck = load_checkpoint(checkpoint);
    } catch (const std::exception& e) {
        ctx.err << "error: cannot load checkpoint " << checkpoint.string() << ": " << e.what() << '\n';
        return kExitFailure;
    }
    if (ck.probe.size() != ck.model.cfg.nodes || ck.probe.front().empty()) {
        ctx.err << "error: checkpoint " << checkpoint.string() << " has no probe window\n";
        return kExitFailure;
    }
    write_snapshot(ctx);
    const Adjacency adj = learned_adjacency(ck.model.params.e1, ck.model.params.e2);
    const SampleTrace tr = forward_sample(ck.model, adj, ck.probe, false, 0);
    const std::vector<Matrix> heads = mean_attention(tr);

    std::ostringstream summary;
    for (std::size_t h = 0; h < heads.size(); ++h) {
        const auto stem = (ctx.out_dir / ("head" + std::to_string(h))).string();
        write_file_atomic(stem + ".csv", [&](std::ostream& os) { write_matrix_csv(os, heads[h]); });
        write_file_atomic(stem + ".pgm", [&](std::ostream& os) { write_pgm(os, heads[h]); });
        const DiagMass d = diag_mass(heads[h]);
        summary << "head " << h << ": mean_diag = " << fmt_double(d.mean_diag) << ", mean_offdiag = " << fmt_double(d.mean_offdiag)
                << ", ratio = " << fmt_double(d.ratio) << '\n';
    }
    write_file_atomic(ctx.out_dir / "diag_mass.txt", [&](std::ostream& os) { os << summary.str(); });
    ctx.out << summary.str();
    return kExitOk;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Temporal attention sink analysis: Jacobian checks, bound sweeps, training and export"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    std::string config_path, out_dir;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    app.add_option("-c,--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
    app.add_option("--set", overrides, "Override one key, e.g. --set train.epochs=5")->take_all();
    app.add_option("--seed", seed, "Root seed for every random component");
    app.add_option("-o,--out", out_dir, "Output directory (default out/<subcommand>)");

    // Dedicated flags are stored as key/value pairs applied after --set.
    std::vector<std::pair<std::string, std::string>> flags;
    auto flag = [&](CLI::App* sub, const std::string& name, const std::string& key, const std::string& help) {
        sub->add_option_function<std::string>(name, [&flags, key](const std::string& v) { flags.emplace_back(key, v); }, help);
    };

    auto* grad = app.add_subcommand("gradcheck", "Analytic vs finite-difference Jacobian and gradient suites");
    flag(grad, "--tolerance", "gradcheck.tolerance", "Maximum relative error for the attention suites");
    flag(grad, "--model-tolerance", "gradcheck.model_tolerance", "Maximum relative error for model gradients");
    flag(grad, "--T", "gradcheck.T", "Fix the sequence length");
    flag(grad, "--dim", "gradcheck.dim", "Fix d_model = d_k = d_v");
    flag(grad, "--configs", "gradcheck.configs", "Number of random attention instances");
    flag(grad, "--coords", "gradcheck.model_coords", "Number of model parameter coordinates");

    auto* sweep = app.add_subcommand("bounds-sweep", "Sensitivity bounds across sequence lengths");
    flag(sweep, "--T", "sweep.steps", "Comma-separated sequence lengths");
    flag(sweep, "--samples", "sweep.samples", "Random instances per length");
    flag(sweep, "--norm", "sweep.norm", "spectral or frobenius");

    auto* train = app.add_subcommand("train", "Train and evaluate one or all variants");
    flag(train, "--variant", "train.variant", "no_residual, no_reg, mask, dropout, penalty or all");
    flag(train, "--epochs", "train.epochs", "Training epochs");
    flag(train, "--seeds", "train.seeds", "Comma-separated run seeds");
    std::string csv_path;
    train->add_option("--data", csv_path, "Wide CSV file instead of the synthetic dataset");

    auto* exp = app.add_subcommand("attn-export", "Export per-head attention from a checkpoint");
    std::string checkpoint;
    exp->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();

    try {
        std::vector<std::string> args;
        for (int k = argc - 1; k > 0; --k) args.emplace_back(argv[k]);
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << "run with --help for usage\n";
        return kExitUsage;
    }

    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    RunConfig cfg;
    try {
        if (!config_path.empty()) read_config_file(config_path, cfg);
        for (const auto& kv : overrides) apply_override(kv, cfg);
        if (seed) cfg.seed = *seed;
        for (const auto& [k, v] : flags) cfg.set(k, v);
        if (!csv_path.empty()) {
            cfg.set("data.source", "csv");
            cfg.set("data.path", csv_path);
        }
        cfg.validate();
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    CliContext ctx{cfg, out_dir.empty() ? std::filesystem::path("out") / name : std::filesystem::path(out_dir), out, err};
    try {
        if (name == "gradcheck") return cmd_gradcheck(ctx);
        if (name == "bounds-sweep") return cmd_bounds_sweep(ctx);
        if (name == "train") return cmd_train(ctx);
        return cmd_attn_export(ctx, checkpoint);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace tsink
