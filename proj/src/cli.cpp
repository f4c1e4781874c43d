#include "leddam/cli.hpp"

#include "leddam/data.hpp"
#include "leddam/errors.hpp"
#include "leddam/init.hpp"
#include "leddam/io.hpp"
#include "leddam/model.hpp"
#include "leddam/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>

namespace leddam::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

/// Everything a command can be configured with. Defaults live here.
struct RunConfig {
    std::string config_file;
    std::string dataset;
    std::string preset;
    std::string out = "runs";
    std::string checkpoint;

    std::size_t lookback = 96;
    std::size_t horizon = 96;
    std::size_t dim = 512;
    std::size_t layers = 1;
    int kernel_size = 25;
    double sigma = 1.0;
    std::size_t ar_step = 0;
    std::size_t heads = 8;
    std::size_t ff_dim = 0;
    double dropout = 0.0;
    std::string variant = "full";
    std::string kernel = "gaussian";
    std::string centering = "paper";

    double lr = 1e-4;
    std::size_t batch = 32;
    std::uint64_t seed = kDefaultSeed;
    std::size_t max_epochs = 100;
    std::size_t patience = 6;
    bool denorm = false;
    bool grid = false;

    std::size_t start = 0;
    std::size_t length = 0;

    std::size_t steps = 17420;
    std::size_t channels = 7;
    std::string name = "synthetic";
};

struct Commands {
    CLI::App* train = nullptr;
    CLI::App* evaluate = nullptr;
    CLI::App* ablate = nullptr;
    CLI::App* decomp_bench = nullptr;
    CLI::App* decompose = nullptr;
    CLI::App* export_weights = nullptr;
    CLI::App* gradcheck = nullptr;
    CLI::App* synth = nullptr;
};

void add_config_flag(CLI::App* app, RunConfig& c) {
    app->add_option("--config", c.config_file, "key=value file; flags given on the command line take precedence")
        ->default_str("none");
}

void add_dataset_flags(CLI::App* app, RunConfig& c) {
    app->add_option("--dataset", c.dataset, "CSV file: header date,<ch1>,...,<chN>")->required();
    app->add_option("--preset", c.preset,
                    "split preset (ETTh1, ETTh2, ETTm1, ETTm2 -> 6:2:2; others -> 7:1:2)")
        ->default_str("file stem");
}

void add_kernel_flags(CLI::App* app, RunConfig& c) {
    app->add_option("--K", c.kernel_size, "decomposition kernel size")->check(CLI::PositiveNumber);
    app->add_option("--sigma", c.sigma, "Gaussian kernel width");
    app->add_option("--kernel", c.kernel, "decomposition kernel: gaussian | mov")
        ->check(CLI::IsMember({"gaussian", "mov"}));
    app->add_option("--centering", c.centering, "Gaussian centering: paper (taps 1..K, centre K/2) | zero (taps 0..K-1, centre (K-1)/2)")
        ->check(CLI::IsMember({"paper", "zero"}));
}

void add_model_flags(CLI::App* app, RunConfig& c) {
    app->add_option("--T", c.lookback, "lookback length")->check(CLI::PositiveNumber);
    app->add_option("--F", c.horizon, "forecast horizon")->check(CLI::PositiveNumber);
    app->add_option("--D", c.dim, "layer dimension (Leddam)")->check(CLI::PositiveNumber);
    app->add_option("--nl", c.layers, "encoder blocks per attention branch")->check(CLI::PositiveNumber);
    add_kernel_flags(app, c);
    app->add_option("--L", c.ar_step, "auto-regressive rotation step; 0 = D/8");
    app->add_option("--heads", c.heads, "attention heads")->check(CLI::PositiveNumber);
    app->add_option("--dff", c.ff_dim, "feed-forward width; 0 = 2*D");
    app->add_option("--dropout", c.dropout, "dropout rate in [0, 1)");
    app->add_option("--variant", c.variant, "full | wo_auto | wo_channel | wo_all")
        ->check(CLI::IsMember({"full", "wo_auto", "wo_channel", "wo_all"}));
}

void add_training_flags(CLI::App* app, RunConfig& c) {
    app->add_option("--lr", c.lr, "ADAM learning rate");
    app->add_option("--batch", c.batch, "minibatch size")->check(CLI::PositiveNumber);
    app->add_option("--seed", c.seed, "random seed");
    app->add_option("--max-epochs", c.max_epochs, "epoch cap")->check(CLI::PositiveNumber);
    app->add_option("--patience", c.patience, "early-stopping patience in epochs")->check(CLI::PositiveNumber);
}

void add_out_flag(CLI::App* app, RunConfig& c) {
    app->add_option("--out", c.out, "output directory");
}

Commands build_app(CLI::App& app, RunConfig& c) {
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.set_help_all_flag("--help-all", "help for every subcommand");
    Commands cmd;

    cmd.train = app.add_subcommand("train", "train a Leddam model, evaluate it on the test split, save a checkpoint");
    add_config_flag(cmd.train, c);
    add_dataset_flags(cmd.train, c);
    add_model_flags(cmd.train, c);
    add_training_flags(cmd.train, c);
    cmd.train->add_flag("--denorm", c.denorm, "report test metrics in raw (de-standardized) units")
        ->default_str("off");
    cmd.train->add_flag("--grid", c.grid, "search lr x dropout x D x nl over the standard grid (54 cells)")
        ->default_str("off");
    add_out_flag(cmd.train, c);

    cmd.evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on the test split");
    add_config_flag(cmd.evaluate, c);
    add_dataset_flags(cmd.evaluate, c);
    cmd.evaluate->add_option("--checkpoint", c.checkpoint, "model checkpoint")->required();
    cmd.evaluate->add_option("--batch", c.batch, "evaluation batch size")->check(CLI::PositiveNumber);
    cmd.evaluate->add_flag("--denorm", c.denorm, "report metrics in raw (de-standardized) units")
        ->default_str("off");
    add_out_flag(cmd.evaluate, c);

    cmd.ablate = app.add_subcommand("ablate", "train full, wo_auto, wo_channel and wo_all with shared settings");
    add_config_flag(cmd.ablate, c);
    add_dataset_flags(cmd.ablate, c);
    add_model_flags(cmd.ablate, c);
    add_training_flags(cmd.ablate, c);
    add_out_flag(cmd.ablate, c);

    cmd.decomp_bench =
        app.add_subcommand("decomp-bench", "train the linear host with MOV, LD_UTL and LD_TL decomposition kernels");
    add_config_flag(cmd.decomp_bench, c);
    add_dataset_flags(cmd.decomp_bench, c);
    cmd.decomp_bench->add_option("--T", c.lookback, "lookback length")->check(CLI::PositiveNumber);
    cmd.decomp_bench->add_option("--F", c.horizon, "forecast horizon")->check(CLI::PositiveNumber);
    cmd.decomp_bench->add_option("--K", c.kernel_size, "decomposition kernel size")->check(CLI::PositiveNumber);
    cmd.decomp_bench->add_option("--sigma", c.sigma, "Gaussian kernel width");
    cmd.decomp_bench->add_option("--centering", c.centering, "Gaussian centering: paper (taps 1..K, centre K/2) | zero (taps 0..K-1, centre (K-1)/2)")
        ->check(CLI::IsMember({"paper", "zero"}));
    add_training_flags(cmd.decomp_bench, c);
    add_out_flag(cmd.decomp_bench, c);

    cmd.decompose = app.add_subcommand("decompose", "write raw, trend and seasonal series as CSV");
    add_config_flag(cmd.decompose, c);
    add_dataset_flags(cmd.decompose, c);
    add_kernel_flags(cmd.decompose, c);
    cmd.decompose->add_option("--checkpoint", c.checkpoint, "take the (trained) kernel from this checkpoint")
        ->default_str("none: initial kernel");
    cmd.decompose->add_option("--start", c.start, "first time step");
    cmd.decompose->add_option("--length", c.length, "number of time steps; 0 = to the end");
    add_out_flag(cmd.decompose, c);

    cmd.export_weights = app.add_subcommand("export-weights", "write decomposition kernel weights as CSV");
    add_config_flag(cmd.export_weights, c);
    add_kernel_flags(cmd.export_weights, c);
    cmd.export_weights->add_option("--checkpoint", c.checkpoint, "take the kernel from this checkpoint")
        ->default_str("none: initial kernel");
    add_out_flag(cmd.export_weights, c);

    cmd.gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every backward rule and model tensor");
    add_config_flag(cmd.gradcheck, c);
    cmd.gradcheck->add_option("--seed", c.seed, "seed for the random test instances");

    cmd.synth = app.add_subcommand("synth", "write a deterministic synthetic ETT-shaped CSV");
    add_config_flag(cmd.synth, c);
    cmd.synth->add_option("--steps", c.steps, "time steps")->check(CLI::PositiveNumber);
    cmd.synth->add_option("--channels", c.channels, "channels (the last is named OT)")->check(CLI::PositiveNumber);
    cmd.synth->add_option("--seed", c.seed, "random seed");
    cmd.synth->add_option("--name", c.name, "dataset name; the file is <out>/<name>.csv");
    add_out_flag(cmd.synth, c);
    return cmd;
}

// --- helpers -------------------------------------------------------------

std::string resolve_preset(const RunConfig& c) {
    if (!c.preset.empty()) return c.preset;
    return fs::path(c.dataset).stem().string();
}

PreparedData load_prepared(const RunConfig& c, std::size_t lookback, std::size_t horizon) {
    RawDataset raw = load_csv(c.dataset);
    raw.name = resolve_preset(c);
    return prepare_data(std::move(raw), preset_ratios(raw.name), lookback, horizon);
}

LeddamConfig leddam_config(const RunConfig& c, std::size_t channels) {
    LeddamConfig m;
    m.channels = channels;
    m.lookback = c.lookback;
    m.horizon = c.horizon;
    m.dim = c.dim;
    m.layers = c.layers;
    m.kernel_size = c.kernel_size;
    m.sigma = c.sigma;
    m.centering = parse_centering(c.centering);
    m.kernel = parse_kernel_kind(c.kernel);
    m.ar_step = c.ar_step;
    m.n_heads = c.heads;
    m.ff_dim = c.ff_dim;
    m.dropout = c.dropout;
    m.variant = parse_variant(c.variant);
    m.validate();
    return m;
}

TrainConfig train_config(const RunConfig& c) {
    TrainConfig t;
    t.lr = c.lr;
    t.dropout = c.dropout;
    t.dim = c.dim;
    t.layers = c.layers;
    t.max_epochs = c.max_epochs;
    t.patience = c.patience;
    t.batch_size = c.batch;
    t.seed = c.seed;
    t.validate();
    return t;
}

std::string out_path(const RunConfig& c, const std::string& file) { return (fs::path(c.out) / file).string(); }

Json parse_json(const std::string& text) { return Json::parse(text); }

std::string kernel_csv(const Matrix& w) {
    std::ostringstream s;
    s << "tap_index,weight\n";
    for (std::size_t i = 0; i < w.size(); ++i) s << i << "," << io::format_double(w[i]) << "\n";
    return s.str();
}

LogFn stderr_log(std::ostream& err) {
    return [&err](const std::string& line) { err << line << "\n" << std::flush; };
}

void write_report(const RunConfig& c, const MetricsReport& r, const TrainResult* result) {
    io::write_file_atomic(out_path(c, "metrics.json"), report_to_json(r) + "\n");
    Json timing;
    timing["seconds"] = r.seconds;
    if (result != nullptr) {
        Json epochs = Json::array();
        for (const auto& e : result->history) epochs.push_back(e.seconds);
        timing["epoch_seconds"] = epochs;
    }
    io::write_file_atomic(out_path(c, "timing.json"), timing.dump() + "\n");
}

std::string history_csv(const TrainResult& r) {
    std::ostringstream s;
    s << "epoch,train_loss,val_mse\n";
    for (const auto& e : r.history)
        s << e.epoch << "," << io::format_double(e.train_loss) << "," << io::format_double(e.val_mse) << "\n";
    return s.str();
}

void print_metrics(std::ostream& out, const MetricsReport& r) {
    out << r.dataset << " F=" << r.horizon << " mse " << io::format_double(r.mse) << " mae "
        << io::format_double(r.mae) << " (best epoch " << r.best_epoch << " of " << r.epochs << ")\n";
}

// --- commands ------------------------------------------------------------

int cmd_train(const RunConfig& c, std::ostream& out, std::ostream& err) {
    PreparedData data = load_prepared(c, c.lookback, c.horizon);
    const LeddamConfig base = leddam_config(c, data.raw.channels());
    const TrainConfig tc = train_config(c);
    ModelFactory factory = [base](const TrainConfig& t) {
        LeddamConfig m = base;
        m.dim = t.dim;
        m.layers = t.layers;
        m.dropout = t.dropout;
        return std::make_unique<LeddamModel>(m, t.seed);
    };
    const LogFn log = stderr_log(err);

    if (c.grid) {
        const GridResult g = grid_search(data, expand_grid(GridSpec{}, tc), factory, threads_from_env(), log);
        std::ostringstream csv;
        csv << "lr,dropout,D,nl,val_mse,mse,mae,status\n";
        Json cells = Json::array();
        for (const auto& cell : g.cells) {
            csv << io::format_double(cell.config.lr) << "," << io::format_double(cell.config.dropout) << ","
                << cell.config.dim << "," << cell.config.layers << ",";
            if (cell.report) {
                csv << io::format_double(cell.report->val_mse) << "," << io::format_double(cell.report->mse) << ","
                    << io::format_double(cell.report->mae) << ",ok\n";
                cells.push_back(parse_json(report_to_json(*cell.report)));
            } else {
                csv << ",,,diverged\n";
                cells.push_back(Json{{"error", cell.error}});
            }
        }
        io::write_file_atomic(out_path(c, "grid.csv"), csv.str());
        io::write_file_atomic(out_path(c, "grid.json"), cells.dump(2) + "\n");
        const MetricsReport& best = *g.cells[g.best].report;
        write_report(c, best, nullptr);
        out << "best cell: " << best.label << "\n";
        print_metrics(out, best);
        return kExitOk;
    }

    RunOutcome run = run_experiment(data, factory, tc, to_string(base.variant).data(), log);
    run.report.config["metric_scale"] = "standardized";
    if (c.denorm) {
        const Metrics m = evaluate(*run.model, data.test, std::max<std::size_t>(c.batch, 64), &data.stats);
        run.report.mse = m.mse;
        run.report.mae = m.mae;
        run.report.config["metric_scale"] = "raw";
    }
    write_report(c, run.report, &run.result);
    io::write_file_atomic(out_path(c, "history.csv"), history_csv(run.result));
    save_checkpoint(out_path(c, "model.ckpt"), *run.model);
    print_metrics(out, run.report);
    return kExitOk;
}

int cmd_evaluate(const RunConfig& c, std::ostream& out) {
    const auto model = load_checkpoint(c.checkpoint);
    PreparedData data = load_prepared(c, model->lookback(), model->horizon());
    if (data.raw.channels() != model->channels()) {
        throw DimensionError("checkpoint expects " + std::to_string(model->channels()) + " channels, dataset has " +
                             std::to_string(data.raw.channels()));
    }
    const Metrics m = evaluate(*model, data.test, c.batch, c.denorm ? &data.stats : nullptr);
    MetricsReport r;
    r.dataset = data.raw.name;
    r.label = model->kind();
    r.horizon = model->horizon();
    r.mse = m.mse;
    r.mae = m.mae;
    r.config = model->config_entries();
    r.config["metric_scale"] = c.denorm ? "raw" : "standardized";
    io::write_file_atomic(out_path(c, "metrics.json"), report_to_json(r) + "\n");
    print_metrics(out, r);
    return kExitOk;
}

void write_suite(const RunConfig& c, const std::vector<SuiteRow>& rows, const std::string& stem,
                 const std::string& label_header, std::ostream& out) {
    io::write_file_atomic(out_path(c, stem + ".csv"), suite_to_csv(rows, label_header));
    Json arr = Json::array();
    for (const auto& row : rows) {
        Json j = parse_json(report_to_json(row.report));
        j["trainable_scalars"] = row.trainable_scalars;
        arr.push_back(j);
    }
    io::write_file_atomic(out_path(c, stem + ".json"), arr.dump(2) + "\n");
    out << suite_to_table(rows, label_header);
}

int cmd_ablate(const RunConfig& c, std::ostream& out, std::ostream& err) {
    PreparedData data = load_prepared(c, c.lookback, c.horizon);
    const LeddamConfig base = leddam_config(c, data.raw.channels());
    const auto rows = run_ablation_suite(data, base, train_config(c), threads_from_env(), stderr_log(err));
    write_suite(c, rows, "ablation", "variant", out);
    return kExitOk;
}

int cmd_decomp_bench(const RunConfig& c, std::ostream& out, std::ostream& err) {
    PreparedData data = load_prepared(c, c.lookback, c.horizon);
    LinearHostConfig host;
    host.channels = data.raw.channels();
    host.lookback = c.lookback;
    host.horizon = c.horizon;
    host.kernel_size = c.kernel_size;
    host.sigma = c.sigma;
    host.centering = parse_centering(c.centering);
    host.validate();
    const auto rows = run_decomposition_comparison(data, host, train_config(c), threads_from_env(), stderr_log(err));
    write_suite(c, rows, "decomp_bench", "mode", out);
    for (const auto& row : rows) {
        if (row.label != to_string(HostMode::ld_tl)) continue;
        io::write_file_atomic(out_path(c, "ld_tl_kernel.csv"), kernel_csv(row.kernel_final));
        io::write_file_atomic(out_path(c, "ld_tl_kernel_init.csv"), kernel_csv(row.kernel_initial));
    }
    return kExitOk;
}

Matrix kernel_from(const RunConfig& c) {
    if (!c.checkpoint.empty()) return load_checkpoint(c.checkpoint)->kernel_weights();
    const DecompKernel k = parse_kernel_kind(c.kernel) == KernelKind::gaussian
                               ? init_gaussian_kernel(c.kernel_size, c.sigma, parse_centering(c.centering))
                               : init_moving_average_kernel(c.kernel_size);
    return k.weights;
}

std::string series_csv(const RawDataset& ds, std::size_t start, const Matrix& values_nt) {
    std::ostringstream s;
    s << "date";
    for (const auto& name : ds.channel_names) s << "," << name;
    s << "\n";
    for (std::size_t t = 0; t < values_nt.cols(); ++t) {
        s << ds.timestamps[start + t];
        for (std::size_t n = 0; n < values_nt.rows(); ++n) s << "," << io::format_double(values_nt(n, t));
        s << "\n";
    }
    return s.str();
}

int cmd_decompose(const RunConfig& c, std::ostream& out) {
    const RawDataset ds = load_csv(c.dataset);
    if (c.start >= ds.steps()) throw ConfigError("--start is past the end of the series");
    const std::size_t len = c.length == 0 ? ds.steps() - c.start : std::min(c.length, ds.steps() - c.start);
    Matrix x(ds.channels(), len); // channel-major: one row per channel
    for (std::size_t t = 0; t < len; ++t)
        for (std::size_t n = 0; n < ds.channels(); ++n) x(n, t) = ds.values(c.start + t, n);
    const Decomposition d = decompose(x, kernel_from(c));
    io::write_file_atomic(out_path(c, "raw.csv"), series_csv(ds, c.start, x));
    io::write_file_atomic(out_path(c, "trend.csv"), series_csv(ds, c.start, d.trend));
    io::write_file_atomic(out_path(c, "seasonal.csv"), series_csv(ds, c.start, d.seasonal));
    out << "wrote raw.csv, trend.csv, seasonal.csv (" << len << " steps x " << ds.channels() << " channels) to "
        << c.out << "\n";
    return kExitOk;
}

int cmd_export_weights(const RunConfig& c, std::ostream& out) {
    const Matrix w = kernel_from(c);
    io::write_file_atomic(out_path(c, "kernel_weights.csv"), kernel_csv(w));
    out << "wrote " << w.size() << " taps to " << out_path(c, "kernel_weights.csv") << "\n";
    return kExitOk;
}

int cmd_gradcheck(const RunConfig& c, std::ostream& out) {
    return run_gradcheck_battery(default_gradcheck_battery(c.seed), out) ? kExitOk : kExitFailure;
}

int cmd_synth(const RunConfig& c, std::ostream& out) {
    const RawDataset ds = make_synthetic_dataset(c.steps, c.channels, c.seed, c.name);
    const std::string path = out_path(c, c.name + ".csv");
    io::write_file_atomic(path, to_csv(ds));
    out << "wrote " << path << "\n";
    return kExitOk;
}

/// Position of the --config value among user args, if any.
std::string find_config_path(const std::vector<std::string>& args) {
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    return path;
}

// --- gradient battery ------------------------------------------------------

Matrix uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = dist(rng);
    return m;
}

/// Random values bounded away from zero, so relu kinks stay outside ±h.
Matrix away_from_zero(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    Matrix m = uniform(rows, cols, rng, 0.05, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (auto& v : m.data())
        if (sign(rng)) v = -v;
    return m;
}

GradcheckGroup op_group(std::string name, std::uint64_t seed,
                        std::function<ad::Var(ad::Tape&, ParamStore&, const Matrix&)> build,
                        std::function<void(ParamStore&, std::mt19937_64&)> setup, std::size_t out_rows,
                        std::size_t out_cols) {
    return {name, [=] {
                std::mt19937_64 rng(seed);
                ParamStore store;
                setup(store, rng);
                const Matrix target = uniform(out_rows, out_cols, rng);
                return check_param_gradients(store,
                                             [&](ad::Tape& t) { return build(t, store, target); });
            }};
}

} // namespace

std::vector<GradcheckGroup> default_gradcheck_battery(std::uint64_t seed) {
    std::vector<GradcheckGroup> battery;
    const ad::Context eval{false, nullptr};

    battery.push_back(op_group(
        "matmul", seed + 1,
        [](ad::Tape& t, ParamStore& s, const Matrix& y) {
            return ad::mse_loss(ad::matmul(t.param(s.at("a")), t.param(s.at("b"))), y);
        },
        [](ParamStore& s, std::mt19937_64& rng) {
            s.add("a", uniform(3, 4, rng));
            s.add("b", uniform(4, 5, rng));
        },
        3, 5));
    battery.push_back(op_group(
        "softmax_rows", seed + 2,
        [](ad::Tape& t, ParamStore& s, const Matrix& y) { return ad::mse_loss(ad::softmax_rows(t.param(s.at("x"))), y); },
        [](ParamStore& s, std::mt19937_64& rng) { s.add("x", uniform(3, 4, rng)); }, 3, 4));
    battery.push_back(op_group(
        "layer_norm", seed + 3,
        [](ad::Tape& t, ParamStore& s, const Matrix& y) {
            return ad::mse_loss(ad::layer_norm(t.param(s.at("x")), t.param(s.at("gamma")), t.param(s.at("beta"))), y);
        },
        [](ParamStore& s, std::mt19937_64& rng) {
            s.add("x", uniform(3, 4, rng));
            s.add("gamma", uniform(1, 4, rng));
            s.add("beta", uniform(1, 4, rng));
        },
        3, 4));
    battery.push_back(op_group(
        "relu", seed + 4,
        [](ad::Tape& t, ParamStore& s, const Matrix& y) { return ad::mse_loss(ad::relu(t.param(s.at("x"))), y); },
        [](ParamStore& s, std::mt19937_64& rng) { s.add("x", away_from_zero(3, 4, rng)); }, 3, 4));
    battery.push_back(op_group(
        "add_rows", seed + 5,
        [](ad::Tape& t, ParamStore& s, const Matrix& y) {
            return ad::mse_loss(ad::add_rows(t.param(s.at("x")), t.param(s.at("b"))), y);
        },
        [](ParamStore& s, std::mt19937_64& rng) {
            s.add("x", uniform(4, 3, rng));
            s.add("b", uniform(2, 3, rng));
        },
        4, 3));
    battery.push_back(op_group(
        "decompose", seed + 6,
        [](ad::Tape& t, ParamStore& s, const Matrix& y) {
            const auto ts = ad::decompose(t.param(s.at("x")), t.param(s.at("weights")));
            return ad::add(ad::mse_loss(ts.trend, y), ad::mse_loss(ts.seasonal, y));
        },
        [](ParamStore& s, std::mt19937_64& rng) {
            s.add("x", uniform(2, 8, rng));
            s.add("weights", uniform(1, 5, rng, 0.0, 1.0));
        },
        2, 8));
    battery.push_back(op_group(
        "multiscale_decompose", seed + 7,
        [](ad::Tape& t, ParamStore& s, const Matrix& y) {
            const auto ts = ad::multiscale_decompose(t.param(s.at("x")), {t.param(s.at("w3")), t.param(s.at("w5"))});
            return ad::mse_loss(ts.seasonal, y);
        },
        [](ParamStore& s, std::mt19937_64& rng) {
            s.add("x", uniform(2, 8, rng));
            s.add("w3", uniform(1, 3, rng, 0.0, 1.0));
            s.add("w5", uniform(1, 5, rng, 0.0, 1.0));
        },
        2, 8));
    battery.push_back(op_group(
        "grouped_attention", seed + 8,
        [](ad::Tape& t, ParamStore& s, const Matrix& y) {
            return ad::mse_loss(
                ad::grouped_attention(t.param(s.at("q")), t.param(s.at("k")), t.param(s.at("v")), AttentionLayout{1, 3, 2}),
                y);
        },
        [](ParamStore& s, std::mt19937_64& rng) {
            s.add("q", uniform(2, 4, rng));
            s.add("k", uniform(6, 4, rng));
            s.add("v", uniform(6, 4, rng));
        },
        2, 4));
    battery.push_back({"channel_attention", [seed, eval] {
                           std::mt19937_64 rng(seed + 9);
                           ParamStore store;
                           const auto p = register_encoder_block(store, "channel.", 8, 16, 2, 0.0, rng);
                           store.add("input", uniform(6, 8, rng));
                           const Matrix y = uniform(6, 8, rng);
                           return check_param_gradients(store, [&](ad::Tape& t) {
                               return ad::mse_loss(ad::channel_attention_block(t.param(store.at("input")), 3, p, eval), y);
                           });
                       }});
    battery.push_back({"autoreg_attention", [seed, eval] {
                           std::mt19937_64 rng(seed + 10);
                           ParamStore store;
                           const auto p = register_encoder_block(store, "autoreg.", 8, 16, 2, 0.0, rng);
                           store.add("input", uniform(2, 8, rng));
                           const Matrix y = uniform(2, 8, rng);
                           return check_param_gradients(store, [&](ad::Tape& t) {
                               return ad::mse_loss(
                                   ad::intra_series_forward(t.param(store.at("input")), p, AutoRegConfig{3}, eval), y);
                           });
                       }});
    battery.push_back({"leddam", [seed, eval] {
                           LeddamConfig cfg;
                           cfg.channels = 2;
                           cfg.lookback = 8;
                           cfg.horizon = 4;
                           cfg.dim = 8;
                           cfg.layers = 1;
                           cfg.n_heads = 1;
                           cfg.ar_step = 4;
                           cfg.kernel_size = 3;
                           LeddamModel model(cfg, seed);
                           std::mt19937_64 rng(seed + 11);
                           const Matrix x = uniform(4, 8, rng); // two samples
                           const Matrix y = uniform(4, 4, rng);
                           return check_param_gradients(model.params(), [&](ad::Tape& t) {
                               return ad::mse_loss(model.forward(t.constant(x), eval), y);
                           });
                       }});
    battery.push_back({"linear_host", [seed, eval] {
                           LinearHostConfig cfg;
                           cfg.channels = 2;
                           cfg.lookback = 8;
                           cfg.horizon = 4;
                           cfg.kernel_size = 5;
                           cfg.mode = HostMode::ld_tl;
                           LinearHost model(cfg, seed);
                           std::mt19937_64 rng(seed + 12);
                           const Matrix x = uniform(4, 8, rng);
                           const Matrix y = uniform(4, 4, rng);
                           return check_param_gradients(model.params(), [&](ad::Tape& t) {
                               return ad::mse_loss(model.forward(t.constant(x), eval), y);
                           });
                       }});
    return battery;
}

bool run_gradcheck_battery(const std::vector<GradcheckGroup>& battery, std::ostream& out) {
    bool all = true;
    std::size_t tensors = 0;
    for (const auto& group : battery) {
        for (const auto& check : group.run()) {
            ++tensors;
            all = all && check.passed;
            out << std::left << std::setw(22) << group.name << std::setw(24) << check.name << std::right
                << std::setw(6) << check.count << "  " << std::scientific << std::setprecision(3)
                << check.relative_error << std::defaultfloat << "  " << (check.passed ? "PASS" : "FAIL") << "\n";
        }
    }
    out << (all ? "all " : "FAILED: not all ") << tensors << " tensors within relative error 1e-4\n";
    return all;
}

std::vector<std::string> config_file_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
        }
        std::string key = trim(line.substr(0, eq));
        while (!key.empty() && key.front() == '-') key.erase(0, 1);
        if (key.empty() || key == "config") {
            throw ConfigError("config line " + std::to_string(lineno) + ": invalid key");
        }
        tokens.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
    }
    return tokens;
}

std::vector<std::string> command_names() {
    RunConfig c;
    CLI::App app("leddam");
    build_app(app, c);
    std::vector<std::string> names;
    for (const auto* sub : app.get_subcommands({})) names.push_back(sub->get_name());
    return names;
}

std::vector<FlagInfo> flag_registry(const std::string& command) {
    RunConfig c;
    CLI::App app("leddam");
    build_app(app, c);
    std::vector<FlagInfo> flags;
    const CLI::App* sub = app.get_subcommand(command);
    for (const CLI::Option* opt : sub->get_options()) {
        if (opt->get_name() == "--help") continue;
        flags.push_back({opt->get_name(), opt->get_default_str(), opt->get_description()});
    }
    return flags;
}

std::string help_text(const std::string& command) {
    RunConfig c;
    CLI::App app("Leddam forecasting toolkit", "leddam");
    build_app(app, c);
    if (command.empty()) return app.help();
    return app.get_subcommand(command)->help();
}

int run(const std::vector<std::string>& user_args, std::ostream& out, std::ostream& err) {
    RunConfig c;
    CLI::App app("Leddam forecasting toolkit", "leddam");
    const Commands cmd = build_app(app, c);
    try {
        std::vector<std::string> args = user_args;
        if (const std::string path = find_config_path(user_args); !path.empty() && !args.empty()) {
            // File values go right after the subcommand so later flags win.
            const auto file_tokens = config_file_tokens(io::read_file(path));
            args.insert(args.begin() + 1, file_tokens.begin(), file_tokens.end());
        }
        std::reverse(args.begin(), args.end()); // CLI11 consumes the vector from the back
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    } catch (const Error& e) {
        err << "error [" << e.kind() << "]: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (cmd.train->parsed()) return cmd_train(c, out, err);
        if (cmd.evaluate->parsed()) return cmd_evaluate(c, out);
        if (cmd.ablate->parsed()) return cmd_ablate(c, out, err);
        if (cmd.decomp_bench->parsed()) return cmd_decomp_bench(c, out, err);
        if (cmd.decompose->parsed()) return cmd_decompose(c, out);
        if (cmd.export_weights->parsed()) return cmd_export_weights(c, out);
        if (cmd.gradcheck->parsed()) return cmd_gradcheck(c, out);
        if (cmd.synth->parsed()) return cmd_synth(c, out);
    } catch (const ParseError& e) {
        err << "error [" << e.kind() << "]: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "error [" << e.kind() << "]: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        err << "error [" << e.kind() << "]: " << e.what() << "\n";
        return kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, out, err);
}

} // namespace leddam::cli
