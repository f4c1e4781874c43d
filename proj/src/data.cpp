#include "leddam/data.hpp"

#include "leddam/errors.hpp"
#include "leddam/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

namespace leddam {
namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

// Howard Hinnant's days_from_civil.
long long days_from_civil(long long y, unsigned m, unsigned d) {
    y -= m <= 2;
    const long long era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long long>(doe) - 719468;
}

bool parse_timestamp(std::string_view text, double& out) {
    const std::string s(text);
    int y = 0, mo = 0, d = 0, h = 0, mi = 0;
    double sec = 0.0;
    char sep = 0;
    const int n = std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%lf", &y, &mo, &d, &sep, &h, &mi, &sec);
    if (n >= 3 && mo >= 1 && mo <= 12 && d >= 1 && d <= 31) {
        if (n > 3 && n < 6) return false;
        out = static_cast<double>(days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d))) * 86400.0 +
              h * 3600.0 + mi * 60.0 + sec;
        return true;
    }
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec == std::errc() && res.ptr == s.data() + s.size()) {
        out = v;
        return true;
    }
    return false;
}

std::string describe_step(double seconds) {
    auto plural = [](long long n, const char* unit) {
        return std::to_string(n) + " " + unit + (n == 1 ? "" : "s");
    };
    const auto s = static_cast<long long>(std::llround(seconds));
    if (s > 0 && s % 86400 == 0) return plural(s / 86400, "day");
    if (s > 0 && s % 3600 == 0) return plural(s / 3600, "hour");
    if (s > 0 && s % 60 == 0) return plural(s / 60, "minute");
    return plural(s, "second");
}

std::string format_timestamp(long long epoch_seconds) {
    long long days = epoch_seconds / 86400;
    long long rem = epoch_seconds % 86400;
    // civil_from_days
    days += 719468;
    const long long era = (days >= 0 ? days : days - 146096) / 146097;
    const auto doe = static_cast<unsigned>(days - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    long long y = static_cast<long long>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    y += m <= 2;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02u %02lld:%02lld:%02lld", y, m, d, rem / 3600, (rem % 3600) / 60,
                  rem % 60);
    return buf;
}

std::size_t floor_border(std::size_t total, double cumulative) {
    // The small offset keeps exact products such as 17420 * 0.8 from landing
    // one step short through representation error.
    return static_cast<std::size_t>(std::floor(static_cast<double>(total) * cumulative + 1e-9));
}

} // namespace

RawDataset parse_csv(std::string_view text, const std::string& name) {
    RawDataset ds;
    ds.name = name;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    auto next_line = [&](std::string_view& line) {
        while (pos < text.size()) {
            std::size_t end = text.find('\n', pos);
            if (end == std::string_view::npos) end = text.size();
            line = text.substr(pos, end - pos);
            pos = end + 1;
            ++line_no;
            if (!trim(line).empty()) return true;
        }
        return false;
    };

    std::string_view line;
    if (!next_line(line)) throw ParseError("bad_header", name + ": file is empty", 1, 0);
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.remove_prefix(3); // UTF-8 BOM
    const auto header = split_fields(line);
    if (header.size() < 2) {
        throw ParseError("bad_header", name + ": header needs a timestamp column and at least one channel", line_no, 0);
    }
    for (std::size_t c = 1; c < header.size(); ++c) ds.channel_names.emplace_back(trim(header[c]));
    const std::size_t n = header.size() - 1;

    std::vector<double> values;
    std::vector<double> times;
    while (next_line(line)) {
        const auto fields = split_fields(line);
        if (fields.size() != header.size()) {
            throw ParseError("ragged_row",
                             name + ": row " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                                 " fields, header has " + std::to_string(header.size()),
                             line_no, fields.size());
        }
        const std::string_view ts = trim(fields[0]);
        double t = 0.0;
        if (!parse_timestamp(ts, t)) {
            throw ParseError("non_numeric", name + ": row " + std::to_string(line_no) + " column 1: unreadable timestamp '" +
                                                std::string(ts) + "'",
                             line_no, 1);
        }
        if (!times.empty() && !(t > times.back())) {
            throw ParseError("non_monotone_timestamp",
                             name + ": row " + std::to_string(line_no) + ": timestamp '" + std::string(ts) +
                                 "' does not increase",
                             line_no, 1);
        }
        times.push_back(t);
        ds.timestamps.emplace_back(ts);
        for (std::size_t c = 1; c < fields.size(); ++c) {
            const std::string_view cell = trim(fields[c]);
            double v = 0.0;
            auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v)) {
                throw ParseError("non_numeric",
                                 name + ": row " + std::to_string(line_no) + " column " + std::to_string(c + 1) + " ('" +
                                     std::string(trim(header[c])) + "'): not a finite number: '" + std::string(cell) +
                                     "'",
                                 line_no, c + 1);
            }
            values.push_back(v);
        }
    }
    ds.values = Matrix(times.size(), n, std::move(values));
    if (times.size() >= 2) ds.granularity = describe_step(times[1] - times[0]);
    return ds;
}

RawDataset load_csv(const std::string& path) {
    const std::string text = io::read_file(path);
    std::string name = path;
    if (auto slash = name.find_last_of('/'); slash != std::string::npos) name = name.substr(slash + 1);
    if (auto dot = name.rfind('.'); dot != std::string::npos) name = name.substr(0, dot);
    return parse_csv(text, name);
}

const std::vector<std::string>& known_presets() {
    static const std::vector<std::string> names{"ETTh1",   "ETTh2",   "ETTm1",   "ETTm2",
                                                "Electricity", "Traffic", "Weather", "Solar"};
    return names;
}

SplitRatios preset_ratios(std::string_view preset) {
    if (preset.substr(0, 3) == "ETT") return {0.6, 0.2, 0.2};
    return {0.7, 0.1, 0.2};
}

DataSplits chronological_split(std::size_t total, const SplitRatios& r, std::size_t lookback, std::size_t horizon) {
    if (!(r.train > 0.0 && r.val > 0.0 && r.test > 0.0)) throw ConfigError("split ratios must all be positive");
    if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
        throw ConfigError("split ratios must sum to 1, got " + io::format_double(r.train + r.val + r.test));
    }
    DataSplits s;
    const std::size_t b1 = floor_border(total, r.train);
    const std::size_t b2 = floor_border(total, r.train + r.val);
    s.train = {0, b1};
    s.val = {b1, b2};
    s.test = {b2, total};
    const std::size_t need = lookback + horizon;
    for (const auto& [label, range] : {std::pair{"train", s.train}, {"val", s.val}, {"test", s.test}}) {
        if (range.size() < need) {
            throw ConfigError(std::string(label) + " segment holds " + std::to_string(range.size()) +
                              " steps, fewer than T+F=" + std::to_string(need));
        }
    }
    return s;
}

NormStats fit_norm_stats(const Matrix& values, const IndexRange& train, const std::vector<std::string>& names) {
    if (train.size() == 0 || train.end > values.rows()) throw PreconditionError("standardize: empty or invalid train range");
    const std::size_t n = values.cols();
    NormStats st{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    const auto count = static_cast<double>(train.size());
    for (std::size_t c = 0; c < n; ++c) {
        double mean = 0.0;
        for (std::size_t r = train.begin; r < train.end; ++r) mean += values(r, c);
        mean /= count;
        double var = 0.0;
        for (std::size_t r = train.begin; r < train.end; ++r) var += (values(r, c) - mean) * (values(r, c) - mean);
        var /= count;
        const double sd = std::sqrt(var);
        if (!(sd > 0.0)) {
            const std::string label = c < names.size() ? "'" + names[c] + "'" : "#" + std::to_string(c);
            throw PreconditionError("standardize: channel " + label + " is constant on the train segment");
        }
        st.mean[c] = mean;
        st.stddev[c] = sd;
    }
    return st;
}

Matrix apply_norm(const Matrix& values, const NormStats& stats) {
    if (stats.mean.size() != values.cols()) throw DimensionError("apply_norm: channel count mismatch");
    Matrix out(values.rows(), values.cols());
    for (std::size_t r = 0; r < values.rows(); ++r)
        for (std::size_t c = 0; c < values.cols(); ++c) out(r, c) = (values(r, c) - stats.mean[c]) / stats.stddev[c];
    return out;
}

Matrix invert_norm(const Matrix& values, const NormStats& stats) {
    if (stats.mean.size() != values.cols()) throw DimensionError("invert_norm: channel count mismatch");
    Matrix out(values.rows(), values.cols());
    for (std::size_t r = 0; r < values.rows(); ++r)
        for (std::size_t c = 0; c < values.cols(); ++c) out(r, c) = values(r, c) * stats.stddev[c] + stats.mean[c];
    return out;
}

Standardized standardize(const RawDataset& ds, const IndexRange& train) {
    NormStats st = fit_norm_stats(ds.values, train, ds.channel_names);
    return {apply_norm(ds.values, st), std::move(st)};
}

WindowSet::WindowSet(std::shared_ptr<const Matrix> series, std::vector<std::size_t> origins, std::size_t lookback,
                     std::size_t horizon)
    : series_(std::move(series)), origins_(std::move(origins)), lookback_(lookback), horizon_(horizon) {}

WindowSample WindowSet::sample(std::size_t i) const {
    const std::size_t o = origins_.at(i);
    const std::size_t n = channels();
    WindowSample s{Matrix(n, lookback_), Matrix(n, horizon_), o};
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t t = 0; t < lookback_; ++t) s.x(c, t) = (*series_)(o + t, c);
        for (std::size_t t = 0; t < horizon_; ++t) s.y(c, t) = (*series_)(o + lookback_ + t, c);
    }
    return s;
}

void WindowSet::assemble(std::span<const std::size_t> indices, Matrix& x, Matrix& y) const {
    const std::size_t n = channels();
    const std::size_t rows = indices.size() * n;
    if (x.rows() != rows || x.cols() != lookback_) x = Matrix(rows, lookback_);
    if (y.rows() != rows || y.cols() != horizon_) y = Matrix(rows, horizon_);
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const std::size_t o = origins_.at(indices[b]);
        for (std::size_t c = 0; c < n; ++c) {
            double* xr = &x(b * n + c, 0);
            double* yr = &y(b * n + c, 0);
            for (std::size_t t = 0; t < lookback_; ++t) xr[t] = (*series_)(o + t, c);
            for (std::size_t t = 0; t < horizon_; ++t) yr[t] = (*series_)(o + lookback_ + t, c);
        }
    }
}

WindowSet make_windows(std::shared_ptr<const Matrix> values, const IndexRange& range, std::size_t lookback,
                       std::size_t horizon, WindowMode mode, std::size_t stride) {
    if (stride == 0) throw ConfigError("window stride must be at least 1");
    if (lookback == 0 || horizon == 0) throw ConfigError("lookback and horizon must be at least 1");
    if (range.end > values->rows() || range.begin > range.end) throw PreconditionError("window range outside the series");
    std::vector<std::size_t> origins;
    // Targets [o+T, o+T+F) must end at or before range.end.
    if (range.end >= lookback + horizon) {
        const std::size_t last = range.end - lookback - horizon;
        std::size_t first = range.begin;
        if (mode == WindowMode::spillover) first = range.begin >= lookback ? range.begin - lookback : 0;
        for (std::size_t o = first; o <= last; o += stride) origins.push_back(o);
    }
    if (origins.empty()) {
        std::cerr << "warning: no valid window origin in [" << range.begin << ", " << range.end << ") for T=" << lookback
                  << ", F=" << horizon << "\n";
    }
    return WindowSet(std::move(values), std::move(origins), lookback, horizon);
}

PreparedData prepare_data(RawDataset raw, const SplitRatios& ratios, std::size_t lookback, std::size_t horizon) {
    PreparedData p;
    p.splits = chronological_split(raw.steps(), ratios, lookback, horizon);
    auto st = standardize(raw, p.splits.train);
    p.stats = std::move(st.stats);
    p.normalized = std::make_shared<const Matrix>(std::move(st.values));
    p.train = make_windows(p.normalized, p.splits.train, lookback, horizon, WindowMode::confined);
    p.val = make_windows(p.normalized, p.splits.val, lookback, horizon, WindowMode::spillover);
    p.test = make_windows(p.normalized, p.splits.test, lookback, horizon, WindowMode::spillover);
    p.raw = std::move(raw);
    return p;
}

RawDataset make_synthetic_dataset(std::size_t steps, std::size_t channels, std::uint64_t seed, const std::string& name) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    constexpr double two_pi = 2.0 * std::numbers::pi;

    struct ChannelShape {
        double daily, weekly, phase, level, drift, noise, coupling;
    };
    std::vector<ChannelShape> shape(channels);
    for (auto& s : shape) {
        s = {0.5 + 2.0 * unif(rng), 0.2 + 1.0 * unif(rng), two_pi * unif(rng), 5.0 + 10.0 * unif(rng),
             0.002 * (unif(rng) - 0.5), 0.1 + 0.3 * unif(rng), unif(rng)};
    }

    RawDataset ds;
    ds.name = name;
    ds.granularity = "1 hour";
    for (std::size_t c = 0; c + 1 < channels; ++c) ds.channel_names.push_back("ch" + std::to_string(c + 1));
    if (channels > 0) ds.channel_names.push_back("OT");
    ds.values = Matrix(steps, channels);
    ds.timestamps.reserve(steps);

    const long long start = days_from_civil(2016, 7, 1) * 86400;
    double common = 0.0;
    double slow = 0.0;
    std::vector<double> ar(channels, 0.0);
    for (std::size_t t = 0; t < steps; ++t) {
        ds.timestamps.push_back(format_timestamp(start + static_cast<long long>(t) * 3600));
        common = 0.95 * common + 0.3 * gauss(rng);
        slow = 0.999 * slow + 0.05 * gauss(rng);
        const double td = static_cast<double>(t);
        for (std::size_t c = 0; c < channels; ++c) {
            const auto& s = shape[c];
            ar[c] = 0.8 * ar[c] + s.noise * gauss(rng);
            ds.values(t, c) = s.level + s.drift * td + 3.0 * slow + s.daily * std::sin(two_pi * td / 24.0 + s.phase) +
                              s.weekly * std::sin(two_pi * td / 168.0 + 0.5 * s.phase) + s.coupling * common + ar[c];
        }
    }
    return ds;
}

std::string to_csv(const RawDataset& ds) {
    std::ostringstream out;
    out << "date";
    for (const auto& n : ds.channel_names) out << "," << n;
    out << "\n";
    for (std::size_t r = 0; r < ds.steps(); ++r) {
        out << (r < ds.timestamps.size() ? ds.timestamps[r] : std::to_string(r));
        for (std::size_t c = 0; c < ds.channels(); ++c) out << "," << io::format_double(ds.values(r, c));
        out << "\n";
    }
    return out.str();
}

} // namespace leddam
