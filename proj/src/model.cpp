#include "leddam/model.hpp"

#include "leddam/errors.hpp"
#include "leddam/init.hpp"
#include "leddam/io.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

namespace leddam {
namespace {

ad::Var affine(ad::Var x, ad::Var w, ad::Var b) { return ad::add_rows(ad::matmul(x, w), b); }

void require_positive(std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be at least 1");
}

void require_input(const Matrix& x, std::size_t channels, std::size_t lookback) {
    if (x.cols() != lookback || x.rows() == 0 || x.rows() % channels != 0) {
        throw DimensionError("forecaster input must be (B*" + std::to_string(channels) + ")x" +
                             std::to_string(lookback) + ", got " + x.shape_string());
    }
}

DecompKernel make_kernel(KernelKind kind, int size, double sigma, Centering centering, bool trainable) {
    return kind == KernelKind::gaussian ? init_gaussian_kernel(size, sigma, centering, trainable)
                                        : init_moving_average_kernel(size);
}

const std::string& entry(const std::map<std::string, std::string>& m, const std::string& key) {
    auto it = m.find(key);
    if (it == m.end()) throw ConfigError("checkpoint/config is missing key '" + key + "'");
    return it->second;
}

std::size_t entry_count(const std::map<std::string, std::string>& m, const std::string& key) {
    const std::string& s = entry(m, key);
    std::size_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ConfigError("key '" + key + "' expects a non-negative integer, got '" + s + "'");
    }
    return v;
}

double entry_double(const std::map<std::string, std::string>& m, const std::string& key) {
    const std::string& s = entry(m, key);
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ConfigError("key '" + key + "' expects a number, got '" + s + "'");
    }
    return v;
}

std::string hex(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

} // namespace

std::string_view to_string(Variant v) {
    switch (v) {
    case Variant::full: return "full";
    case Variant::wo_auto: return "wo_auto";
    case Variant::wo_channel: return "wo_channel";
    case Variant::wo_all: return "wo_all";
    }
    return "full";
}

Variant parse_variant(std::string_view text) {
    if (text == "full") return Variant::full;
    if (text == "wo_auto") return Variant::wo_auto;
    if (text == "wo_channel") return Variant::wo_channel;
    if (text == "wo_all") return Variant::wo_all;
    throw ConfigError("unknown variant '" + std::string(text) + "' (expected full|wo_auto|wo_channel|wo_all)");
}

std::string_view to_string(KernelKind k) { return k == KernelKind::gaussian ? "gaussian" : "mov"; }

KernelKind parse_kernel_kind(std::string_view text) {
    if (text == "gaussian") return KernelKind::gaussian;
    if (text == "mov") return KernelKind::moving_average;
    throw ConfigError("unknown kernel '" + std::string(text) + "' (expected gaussian|mov)");
}

std::string_view to_string(HostMode m) {
    switch (m) {
    case HostMode::mov: return "MOV";
    case HostMode::ld_utl: return "LD_UTL";
    case HostMode::ld_tl: return "LD_TL";
    }
    return "MOV";
}

HostMode parse_host_mode(std::string_view text) {
    if (text == "MOV" || text == "mov") return HostMode::mov;
    if (text == "LD_UTL" || text == "ld_utl") return HostMode::ld_utl;
    if (text == "LD_TL" || text == "ld_tl") return HostMode::ld_tl;
    throw ConfigError("unknown host mode '" + std::string(text) + "' (expected MOV|LD_UTL|LD_TL)");
}

std::size_t LeddamConfig::resolved_ar_step() const { return ar_step != 0 ? ar_step : std::max<std::size_t>(1, dim / 8); }

std::size_t LeddamConfig::resolved_ff_dim() const { return ff_dim != 0 ? ff_dim : 2 * dim; }

void LeddamConfig::validate() const {
    require_positive(channels, "channel count N");
    require_positive(lookback, "lookback T");
    require_positive(horizon, "horizon F");
    require_positive(dim, "layer dimension D");
    require_positive(layers, "encoder depth nl");
    require_positive(n_heads, "head count");
    if (kernel_size < 1) throw ConfigError("kernel size K must be at least 1");
    if (!(sigma > 0.0)) throw ConfigError("kernel sigma must be positive");
    if (dim % n_heads != 0) {
        throw ConfigError("D=" + std::to_string(dim) + " is not divisible by " + std::to_string(n_heads) + " heads");
    }
    if (resolved_ff_dim() < dim) throw ConfigError("feed-forward width must be at least D");
    AutoRegConfig{resolved_ar_step()}.token_count(dim);
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

Matrix Forecaster::predict(const Matrix& x) const {
    ad::Tape tape;
    return forward(tape.constant(x), ad::Context{}).value();
}

LeddamModel::LeddamModel(const LeddamConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    const std::size_t n = config_.channels;
    const std::size_t t = config_.lookback;
    const std::size_t f = config_.horizon;
    const std::size_t d = config_.dim;
    const std::size_t ff = config_.resolved_ff_dim();
    std::mt19937_64 rng(seed);

    // Every tensor is drawn in a fixed order regardless of variant; the ones a
    // variant does not use go to a scratch store.
    ParamStore unused;
    const Variant v = config_.variant;
    const bool use_channel = v == Variant::full || v == Variant::wo_auto;
    const bool use_autoreg = v == Variant::full || v == Variant::wo_channel;

    embed_w_ = &store_.add("embed.w", init::uniform_fan_in(t, d, rng));
    embed_b_ = &store_.add("embed.b", Matrix(1, d));
    pos_ = &store_.add("embed.pos", init::normal(n, d, 0.02, rng));
    const DecompKernel k =
        make_kernel(config_.kernel, config_.kernel_size, config_.sigma, config_.centering, true);
    kernel_ = &store_.add("decomp.weights", k.weights, k.trainable);

    for (std::size_t i = 0; i < config_.layers; ++i) {
        auto p = register_encoder_block(use_channel ? store_ : unused, "channel." + std::to_string(i) + ".", d, ff,
                                        config_.n_heads, config_.dropout, rng);
        if (use_channel) channel_blocks_.push_back(p);
    }
    for (std::size_t i = 0; i < config_.layers; ++i) {
        auto p = register_encoder_block(use_autoreg ? store_ : unused, "autoreg." + std::to_string(i) + ".", d, ff,
                                        config_.n_heads, config_.dropout, rng);
        if (use_autoreg) autoreg_blocks_.push_back(p);
    }
    {
        ParamStore& target = v == Variant::wo_all ? store_ : unused;
        linear_w_ = &target.add("linear.w", init::uniform_fan_in(d, d, rng));
        linear_b_ = &target.add("linear.b", Matrix(1, d));
        if (v != Variant::wo_all) linear_w_ = linear_b_ = nullptr;
    }
    trend_w_ = &store_.add("trend_head.w", init::uniform_fan_in(d, f, rng));
    trend_b_ = &store_.add("trend_head.b", Matrix(1, f));
    seasonal_w_ = &store_.add("seasonal_head.w", init::uniform_fan_in(d, f, rng));
    seasonal_b_ = &store_.add("seasonal_head.b", Matrix(1, f));
}

LeddamStages LeddamModel::forward_stages(ad::Var x, const ad::Context& ctx) const {
    require_input(x.value(), config_.channels, config_.lookback);
    ad::Tape& t = *x.tape;
    LeddamStages s;
    s.embed = ad::add_rows(affine(x, t.param(*embed_w_), t.param(*embed_b_)), t.param(*pos_));
    auto parts = ad::decompose(s.embed, t.param(*kernel_));
    s.trend = parts.trend;
    s.seasonal = parts.seasonal;
    s.trend_out = affine(s.trend, t.param(*trend_w_), t.param(*trend_b_));

    if (!channel_blocks_.empty()) {
        ad::Var h = s.seasonal;
        for (const auto& p : channel_blocks_) h = ad::channel_attention_block(h, config_.channels, p, ctx);
        s.inter = h;
    }
    if (!autoreg_blocks_.empty()) {
        const AutoRegConfig ar{config_.resolved_ar_step()};
        ad::Var h = s.seasonal;
        for (const auto& p : autoreg_blocks_) h = ad::intra_series_forward(h, p, ar, ctx);
        s.intra = h;
    }
    switch (config_.variant) {
    case Variant::full: s.branch = ad::add(*s.inter, *s.intra); break;
    case Variant::wo_auto: s.branch = *s.inter; break;
    case Variant::wo_channel: s.branch = *s.intra; break;
    case Variant::wo_all: s.branch = affine(s.seasonal, t.param(*linear_w_), t.param(*linear_b_)); break;
    }
    s.seasonal_out = affine(s.branch, t.param(*seasonal_w_), t.param(*seasonal_b_));
    s.output = ad::add(s.seasonal_out, s.trend_out);
    return s;
}

ad::Var LeddamModel::forward(ad::Var x, const ad::Context& ctx) const { return forward_stages(x, ctx).output; }

Matrix LeddamModel::embed(const Matrix& x) const {
    if (x.rows() != config_.channels || x.cols() != config_.lookback) {
        throw DimensionError("embed expects " + std::to_string(config_.channels) + "x" +
                             std::to_string(config_.lookback) + ", got " + x.shape_string());
    }
    ad::Tape t;
    return ad::add_rows(affine(t.constant(x), t.param(*embed_w_), t.param(*embed_b_)), t.param(*pos_)).value();
}

std::map<std::string, std::string> LeddamModel::config_entries() const {
    const auto& c = config_;
    return {{"channels", std::to_string(c.channels)},
            {"lookback", std::to_string(c.lookback)},
            {"horizon", std::to_string(c.horizon)},
            {"dim", std::to_string(c.dim)},
            {"layers", std::to_string(c.layers)},
            {"kernel_size", std::to_string(c.kernel_size)},
            {"sigma", io::format_double(c.sigma)},
            {"centering", std::string(to_string(c.centering))},
            {"kernel", std::string(to_string(c.kernel))},
            {"ar_step", std::to_string(c.resolved_ar_step())},
            {"n_heads", std::to_string(c.n_heads)},
            {"ff_dim", std::to_string(c.resolved_ff_dim())},
            {"dropout", io::format_double(c.dropout)},
            {"variant", std::string(to_string(c.variant))}};
}

LeddamConfig leddam_config_from_entries(const std::map<std::string, std::string>& e) {
    LeddamConfig c;
    c.channels = entry_count(e, "channels");
    c.lookback = entry_count(e, "lookback");
    c.horizon = entry_count(e, "horizon");
    c.dim = entry_count(e, "dim");
    c.layers = entry_count(e, "layers");
    c.kernel_size = static_cast<int>(entry_count(e, "kernel_size"));
    c.sigma = entry_double(e, "sigma");
    c.centering = parse_centering(entry(e, "centering"));
    c.kernel = parse_kernel_kind(entry(e, "kernel"));
    c.ar_step = entry_count(e, "ar_step");
    c.n_heads = entry_count(e, "n_heads");
    c.ff_dim = entry_count(e, "ff_dim");
    c.dropout = entry_double(e, "dropout");
    c.variant = parse_variant(entry(e, "variant"));
    return c;
}

void LinearHostConfig::validate() const {
    require_positive(channels, "channel count N");
    require_positive(lookback, "lookback T");
    require_positive(horizon, "horizon F");
    if (kernel_size < 1) throw ConfigError("kernel size K must be at least 1");
    if (static_cast<std::size_t>(kernel_size) > 2 * lookback - 1) {
        throw ConfigError("kernel size K=" + std::to_string(kernel_size) + " exceeds 2T-1=" +
                          std::to_string(2 * lookback - 1));
    }
    if (!(sigma > 0.0)) throw ConfigError("kernel sigma must be positive");
}

LinearHost::LinearHost(const LinearHostConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const DecompKernel k = config_.mode == HostMode::mov
                               ? init_moving_average_kernel(config_.kernel_size)
                               : init_gaussian_kernel(config_.kernel_size, config_.sigma, config_.centering,
                                                      config_.mode == HostMode::ld_tl);
    kernel_ = &store_.add("decomp.weights", k.weights, k.trainable);
    trend_w_ = &store_.add("trend.w", init::uniform_fan_in(config_.lookback, config_.horizon, rng));
    trend_b_ = &store_.add("trend.b", Matrix(1, config_.horizon));
    seasonal_w_ = &store_.add("seasonal.w", init::uniform_fan_in(config_.lookback, config_.horizon, rng));
    seasonal_b_ = &store_.add("seasonal.b", Matrix(1, config_.horizon));
}

ad::Var LinearHost::forward(ad::Var x, const ad::Context&) const {
    require_input(x.value(), config_.channels, config_.lookback);
    ad::Tape& t = *x.tape;
    auto parts = ad::decompose(x, t.param(*kernel_));
    ad::Var trend = affine(parts.trend, t.param(*trend_w_), t.param(*trend_b_));
    ad::Var seasonal = affine(parts.seasonal, t.param(*seasonal_w_), t.param(*seasonal_b_));
    return ad::add(trend, seasonal);
}

std::map<std::string, std::string> LinearHost::config_entries() const {
    const auto& c = config_;
    return {{"channels", std::to_string(c.channels)},
            {"lookback", std::to_string(c.lookback)},
            {"horizon", std::to_string(c.horizon)},
            {"kernel_size", std::to_string(c.kernel_size)},
            {"sigma", io::format_double(c.sigma)},
            {"centering", std::string(to_string(c.centering))},
            {"mode", std::string(to_string(c.mode))}};
}

LinearHostConfig host_config_from_entries(const std::map<std::string, std::string>& e) {
    LinearHostConfig c;
    c.channels = entry_count(e, "channels");
    c.lookback = entry_count(e, "lookback");
    c.horizon = entry_count(e, "horizon");
    c.kernel_size = static_cast<int>(entry_count(e, "kernel_size"));
    c.sigma = entry_double(e, "sigma");
    c.centering = parse_centering(entry(e, "centering"));
    c.mode = parse_host_mode(entry(e, "mode"));
    return c;
}

std::string serialize_checkpoint(const Forecaster& model) {
    std::ostringstream out;
    out << "leddam-checkpoint 1\n";
    out << "model " << model.kind() << "\n";
    for (const auto& [k, v] : model.config_entries()) out << "config " << k << " " << v << "\n";
    const ParamStore& store = model.params();
    for (std::size_t i = 0; i < store.size(); ++i) {
        const ParamTensor& p = store[i];
        out << "tensor " << p.name << " " << p.value.rows() << " " << p.value.cols() << " "
            << (p.trainable ? 1 : 0) << "\n";
        for (std::size_t r = 0; r < p.value.rows(); ++r) {
            auto row = p.value.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) out << (c == 0 ? "" : " ") << hex(row[c]);
            out << "\n";
        }
    }
    out << "end\n";
    return out.str();
}

std::unique_ptr<Forecaster> deserialize_checkpoint(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string word;
    int version = 0;
    if (!(in >> word >> version) || word != "leddam-checkpoint" || version != 1) {
        throw ParseError("bad_header", "not a leddam checkpoint (version 1)");
    }
    std::string kind;
    if (!(in >> word >> kind) || word != "model") throw ParseError("bad_header", "checkpoint lacks a model line");

    std::map<std::string, std::string> entries;
    std::unique_ptr<Forecaster> model;
    std::size_t restored = 0;
    auto build = [&]() {
        if (model) return;
        if (kind == "leddam") {
            model = std::make_unique<LeddamModel>(leddam_config_from_entries(entries));
        } else if (kind == "linear_host") {
            model = std::make_unique<LinearHost>(host_config_from_entries(entries));
        } else {
            throw ParseError("bad_header", "unknown model kind '" + kind + "'");
        }
    };
    while (in >> word) {
        if (word == "config") {
            std::string key, value;
            in >> key >> value;
            entries[key] = value;
        } else if (word == "tensor") {
            build();
            std::string name;
            std::size_t rows = 0, cols = 0;
            int trainable = 0;
            if (!(in >> name >> rows >> cols >> trainable)) throw ParseError("non_numeric", "bad tensor header");
            ParamTensor* p = model->params().find(name);
            if (p == nullptr) throw ParseError("bad_header", "checkpoint tensor '" + name + "' is not part of the model");
            if (p->value.rows() != rows || p->value.cols() != cols) {
                throw DimensionError("checkpoint tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                                     std::to_string(cols) + ", model expects " + p->value.shape_string());
            }
            for (std::size_t i = 0; i < rows * cols; ++i) {
                std::string tok;
                if (!(in >> tok)) throw ParseError("non_numeric", "truncated values for tensor '" + name + "'");
                char* endp = nullptr;
                p->value[i] = std::strtod(tok.c_str(), &endp);
                if (endp == tok.c_str() || *endp != '\0') {
                    throw ParseError("non_numeric", "bad value '" + tok + "' in tensor '" + name + "'");
                }
            }
            p->trainable = trainable != 0;
            ++restored;
        } else if (word == "end") {
            build();
            if (restored != model->params().size()) {
                throw ParseError("bad_header", "checkpoint holds " + std::to_string(restored) + " of " +
                                                   std::to_string(model->params().size()) + " model tensors");
            }
            return model;
        } else {
            throw ParseError("bad_header", "unexpected token '" + word + "' in checkpoint");
        }
    }
    throw ParseError("bad_header", "checkpoint is truncated (no end marker)");
}

void save_checkpoint(const std::string& path, const Forecaster& model) {
    io::write_file_atomic(path, serialize_checkpoint(model));
}

std::unique_ptr<Forecaster> load_checkpoint(const std::string& path) {
    return deserialize_checkpoint(io::read_file(path));
}

} // namespace leddam
