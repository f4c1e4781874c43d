#include "leddam/training.hpp"

#include "leddam/adam.hpp"
#include "leddam/errors.hpp"
#include "leddam/io.hpp"
#include "leddam/ops.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace leddam {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void emit(const LogFn& log, const std::string& line) {
    if (log) log(line);
}

// Mean squared error of the model over a subset of windows (inference mode).
double subset_mse(const Forecaster& model, const WindowSet& windows, std::span<const std::size_t> idx,
                  std::size_t batch) {
    Matrix x, y;
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < idx.size(); start += batch) {
        const auto chunk = idx.subspan(start, std::min(batch, idx.size() - start));
        windows.assemble(chunk, x, y);
        const Matrix pred = model.predict(x);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = pred[i] - y[i];
            sum += d * d;
        }
        count += pred.size();
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

LogFn synchronized(const LogFn& log) {
    if (!log) return {};
    auto mtx = std::make_shared<std::mutex>();
    return [log, mtx](const std::string& line) {
        std::lock_guard lock(*mtx);
        log(line);
    };
}

} // namespace

void TrainConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be a finite non-negative number");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
    if (patience < 1) throw ConfigError("patience must be at least 1");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (max_epochs < 1) throw ConfigError("max epochs must be at least 1");
    if (dim < 1 || layers < 1) throw ConfigError("D and nl must be at least 1");
}

EarlyStopper::EarlyStopper(std::size_t patience)
    : patience_(patience), best_(std::numeric_limits<double>::infinity()) {
    if (patience < 1) throw ConfigError("patience must be at least 1");
}

bool EarlyStopper::observe(double val_mse) {
    ++epoch_;
    if (val_mse < best_) {
        best_ = val_mse;
        best_epoch_ = epoch_;
        bad_epochs_ = 0;
        return true;
    }
    ++bad_epochs_;
    return false;
}

TrainResult train(Forecaster& model, const WindowSet& train_windows, const WindowSet& val_windows,
                  const TrainConfig& config, const LogFn& log) {
    config.validate();
    if (train_windows.empty()) throw PreconditionError("train: no training windows");
    if (val_windows.empty()) throw PreconditionError("train: no validation windows");

    ParamStore& store = model.params();
    store.zero_grad();
    AdamState adam(store, AdamConfig{config.lr});
    std::mt19937_64 shuffle_rng(config.seed);
    std::mt19937_64 dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    const ad::Context ctx{true, &dropout_rng};

    std::vector<std::size_t> order(train_windows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    // Fixed probe subset for the "first epoch improves on init" warning.
    std::vector<std::size_t> probe(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(256, order.size())));
    const double probe_before = subset_mse(model, train_windows, probe, config.batch_size);

    TrainResult result;
    EarlyStopper stopper(config.patience);
    Matrix x, y;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const auto t0 = Clock::now();
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::span<const std::size_t> chunk(order.data() + start,
                                                     std::min(config.batch_size, order.size() - start));
            train_windows.assemble(chunk, x, y);
            ad::Tape tape;
            ad::Var loss = ad::mse_loss(model.forward(tape.constant(x), ctx), y);
            const double lv = loss.value()[0];
            if (!std::isfinite(lv)) {
                throw DivergenceError(epoch, batches + 1,
                                      "training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                          ", batch " + std::to_string(batches + 1));
            }
            tape.backward(loss);
            adam_step(store, adam);
            loss_sum += lv;
            ++batches;
        }
        const double train_loss = loss_sum / static_cast<double>(batches);
        const double val_mse = evaluate(model, val_windows, std::max<std::size_t>(config.batch_size, 64)).mse;
        if (!std::isfinite(val_mse)) {
            throw DivergenceError(epoch, batches, "training diverged: non-finite validation MSE at epoch " +
                                                      std::to_string(epoch));
        }
        const bool improved = stopper.observe(val_mse);
        if (improved) result.best_params = store.snapshot();
        result.history.push_back({epoch, train_loss, val_mse, seconds_since(t0)});
        result.epochs_run = epoch;

        std::ostringstream line;
        line << "epoch " << epoch << " train_loss " << std::setprecision(6) << train_loss << " val_mse " << val_mse
             << (improved ? " *" : "") << " (" << std::setprecision(3) << result.history.back().seconds << "s)";
        emit(log, line.str());

        if (epoch == 1 && config.lr > 0.0) {
            const double probe_after = subset_mse(model, train_windows, probe, config.batch_size);
            if (!(probe_after < probe_before)) {
                emit(log, "warning: train loss after epoch 1 (" + io::format_double(probe_after) +
                              ") is not below its value at initialization (" + io::format_double(probe_before) + ")");
            }
        }
        if (stopper.should_stop()) {
            result.stopped_early = true;
            emit(log, "early stop: no validation improvement for " + std::to_string(config.patience) + " epochs");
            break;
        }
    }
    result.best_epoch = stopper.best_epoch();
    result.best_val_mse = stopper.best();
    store.restore(result.best_params);
    return result;
}

Metrics evaluate(const Forecaster& model, const WindowSet& windows, std::size_t batch_size, const NormStats* denorm) {
    if (windows.empty()) throw PreconditionError("evaluate: empty window list");
    if (batch_size == 0) throw ConfigError("evaluate: batch size must be at least 1");
    const std::size_t n = windows.channels();
    Matrix x, y;
    double se = 0.0;
    double ae = 0.0;
    std::size_t count = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < windows.size(); start += batch_size) {
        idx.clear();
        for (std::size_t i = start; i < std::min(windows.size(), start + batch_size); ++i) idx.push_back(i);
        windows.assemble(idx, x, y);
        const Matrix pred = model.predict(x);
        for (std::size_t r = 0; r < pred.rows(); ++r) {
            const std::size_t c = r % n;
            for (std::size_t t = 0; t < pred.cols(); ++t) {
                double p = pred(r, t);
                double target = y(r, t);
                if (denorm != nullptr) {
                    p = p * denorm->stddev[c] + denorm->mean[c];
                    target = target * denorm->stddev[c] + denorm->mean[c];
                }
                const double d = p - target;
                se += d * d;
                ae += std::abs(d);
            }
        }
        count += pred.size();
    }
    return {se / static_cast<double>(count), ae / static_cast<double>(count), windows.size()};
}

Metrics compute_metrics(const std::vector<Matrix>& predictions, const std::vector<Matrix>& targets) {
    if (predictions.empty()) throw PreconditionError("compute_metrics: empty window list");
    if (predictions.size() != targets.size()) throw DimensionError("compute_metrics: prediction/target count mismatch");
    double se = 0.0;
    double ae = 0.0;
    std::size_t count = 0;
    for (std::size_t w = 0; w < predictions.size(); ++w) {
        require_same_shape(predictions[w], targets[w], "compute_metrics");
        for (std::size_t i = 0; i < predictions[w].size(); ++i) {
            const double d = predictions[w][i] - targets[w][i];
            se += d * d;
            ae += std::abs(d);
        }
        count += predictions[w].size();
    }
    return {se / static_cast<double>(count), ae / static_cast<double>(count), predictions.size()};
}

RunOutcome run_experiment(const PreparedData& data, const ModelFactory& factory, const TrainConfig& config,
                          const std::string& label, const LogFn& log) {
    const auto t0 = Clock::now();
    RunOutcome out;
    out.model = factory(config);
    LogFn prefixed;
    if (log) prefixed = [&log, &label](const std::string& line) { log("[" + label + "] " + line); };
    out.result = train(*out.model, data.train, data.val, config, prefixed);
    const Metrics m = evaluate(*out.model, data.test, std::max<std::size_t>(config.batch_size, 64));
    MetricsReport& r = out.report;
    r.dataset = data.raw.name;
    r.label = label;
    r.horizon = out.model->horizon();
    r.mse = m.mse;
    r.mae = m.mae;
    r.val_mse = out.result.best_val_mse;
    r.epochs = out.result.epochs_run;
    r.best_epoch = out.result.best_epoch;
    r.seed = config.seed;
    r.config = out.model->config_entries();
    r.config["lr"] = io::format_double(config.lr);
    r.config["batch_size"] = std::to_string(config.batch_size);
    r.config["max_epochs"] = std::to_string(config.max_epochs);
    r.config["patience"] = std::to_string(config.patience);
    r.seconds = seconds_since(t0);
    return out;
}

std::vector<TrainConfig> expand_grid(const GridSpec& grid, const TrainConfig& base) {
    std::vector<TrainConfig> cells;
    for (double lr : grid.lrs)
        for (double dr : grid.dropouts)
            for (std::size_t d : grid.dims)
                for (std::size_t nl : grid.layers) {
                    TrainConfig c = base;
                    c.lr = lr;
                    c.dropout = dr;
                    c.dim = d;
                    c.layers = nl;
                    cells.push_back(c);
                }
    return cells;
}

GridResult grid_search(const PreparedData& data, const std::vector<TrainConfig>& cells, const ModelFactory& factory,
                       std::size_t threads, const LogFn& log) {
    if (cells.empty()) throw ConfigError("grid search needs at least one cell");
    GridResult g;
    g.cells.resize(cells.size());
    const LogFn safe_log = synchronized(log);
    parallel_for(cells.size(), threads, [&](std::size_t i) {
        GridCell& cell = g.cells[i];
        cell.config = cells[i];
        std::ostringstream label;
        label << "lr=" << cells[i].lr << ",dropout=" << cells[i].dropout << ",D=" << cells[i].dim
              << ",nl=" << cells[i].layers;
        try {
            cell.report = run_experiment(data, factory, cells[i], label.str(), safe_log).report;
        } catch (const DivergenceError& e) {
            cell.error = e.what();
        }
    });
    bool found = false;
    for (std::size_t i = 0; i < g.cells.size(); ++i) {
        if (!g.cells[i].report) continue;
        if (!found || g.cells[i].report->val_mse < g.cells[g.best].report->val_mse) {
            g.best = i;
            found = true;
        }
    }
    if (!found) throw EvaluationError("grid search: every cell diverged");
    return g;
}

std::vector<SuiteRow> run_ablation_suite(const PreparedData& data, const LeddamConfig& base, const TrainConfig& config,
                                         std::size_t threads, const LogFn& log) {
    const std::vector<Variant> variants{Variant::full, Variant::wo_auto, Variant::wo_channel, Variant::wo_all};
    std::vector<SuiteRow> rows(variants.size());
    const LogFn safe_log = synchronized(log);
    parallel_for(variants.size(), threads, [&](std::size_t i) {
        LeddamConfig cfg = base;
        cfg.variant = variants[i];
        cfg.dim = config.dim;
        cfg.layers = config.layers;
        cfg.dropout = config.dropout;
        auto factory = [&cfg](const TrainConfig& tc) { return std::make_unique<LeddamModel>(cfg, tc.seed); };
        RunOutcome out = run_experiment(data, factory, config, std::string(to_string(variants[i])), safe_log);
        rows[i].label = std::string(to_string(variants[i]));
        rows[i].report = out.report;
        rows[i].trainable_scalars = out.model->params().trainable_scalar_count();
        rows[i].kernel_initial = LeddamModel(cfg, config.seed).kernel_weights();
        rows[i].kernel_final = out.model->kernel_weights();
    });
    return rows;
}

std::vector<SuiteRow> run_decomposition_comparison(const PreparedData& data, const LinearHostConfig& base,
                                                   const TrainConfig& config, std::size_t threads, const LogFn& log) {
    const std::vector<HostMode> modes{HostMode::mov, HostMode::ld_utl, HostMode::ld_tl};
    std::vector<SuiteRow> rows(modes.size());
    const LogFn safe_log = synchronized(log);
    parallel_for(modes.size(), threads, [&](std::size_t i) {
        LinearHostConfig cfg = base;
        cfg.mode = modes[i];
        auto factory = [&cfg](const TrainConfig& tc) { return std::make_unique<LinearHost>(cfg, tc.seed); };
        RunOutcome out = run_experiment(data, factory, config, std::string(to_string(modes[i])), safe_log);
        rows[i].label = std::string(to_string(modes[i]));
        rows[i].report = out.report;
        rows[i].trainable_scalars = out.model->params().trainable_scalar_count();
        rows[i].kernel_initial = LinearHost(cfg, config.seed).kernel_weights();
        rows[i].kernel_final = out.model->kernel_weights();
    });
    return rows;
}

std::string report_to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["dataset"] = r.dataset;
    j["label"] = r.label;
    j["horizon"] = r.horizon;
    j["mse"] = r.mse;
    j["mae"] = r.mae;
    j["val_mse"] = r.val_mse;
    j["epochs"] = r.epochs;
    j["best_epoch"] = r.best_epoch;
    j["seed"] = r.seed;
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.config) cfg[k] = v;
    j["config"] = cfg;
    return j.dump();
}

std::string suite_to_csv(const std::vector<SuiteRow>& rows, const std::string& label_header) {
    std::ostringstream out;
    out << label_header << ",mse,mae\n";
    for (const auto& r : rows) out << r.label << "," << io::format_double(r.report.mse) << "," << io::format_double(r.report.mae) << "\n";
    return out.str();
}

std::string suite_to_table(const std::vector<SuiteRow>& rows, const std::string& label_header) {
    std::ostringstream out;
    out << std::left << std::setw(12) << label_header << std::right << std::setw(10) << "MSE" << std::setw(10) << "MAE"
        << std::setw(8) << "epochs" << "\n";
    out << std::fixed << std::setprecision(3);
    for (const auto& r : rows) {
        out << std::left << std::setw(12) << r.label << std::right << std::setw(10) << r.report.mse << std::setw(10)
            << r.report.mae << std::setw(8) << r.report.epochs << "\n";
    }
    return out.str();
}

std::size_t threads_from_env() {
    const char* v = std::getenv("LEDDAM_THREADS");
    if (v == nullptr || *v == '\0') return 1;
    const long n = std::strtol(v, nullptr, 10);
    return n >= 1 ? static_cast<std::size_t>(n) : 1;
}

} // namespace leddam
