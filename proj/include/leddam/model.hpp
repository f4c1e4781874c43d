#pragma once

// The Leddam forecaster and the two-linear-layer host used to compare
// decomposition kernels.
//
// Inputs are batched channel-major: a batch of B samples with N channels is a
// (B·N) x T matrix whose row b·N + n holds channel n of sample b. Outputs follow
// the same layout with F columns.

#include "leddam/attention.hpp"
#include "leddam/autodiff.hpp"
#include "leddam/decomposition.hpp"
#include "leddam/params.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace leddam {

enum class Variant { full, wo_auto, wo_channel, wo_all };
std::string_view to_string(Variant v);
Variant parse_variant(std::string_view text);

enum class KernelKind { gaussian, moving_average };
std::string_view to_string(KernelKind k);
KernelKind parse_kernel_kind(std::string_view text);

inline constexpr std::uint64_t kDefaultSeed = 2021;

struct LeddamConfig {
    std::size_t channels = 7;    // N
    std::size_t lookback = 96;   // T
    std::size_t horizon = 96;    // F
    std::size_t dim = 512;       // D
    std::size_t layers = 1;      // nl, blocks per attention branch
    int kernel_size = 25;        // K
    double sigma = 1.0;
    Centering centering = Centering::one_based;
    KernelKind kernel = KernelKind::gaussian;
    std::size_t ar_step = 0;     // L; 0 selects D/8
    std::size_t n_heads = 8;
    std::size_t ff_dim = 0;      // 0 selects 2·D
    double dropout = 0.0;
    Variant variant = Variant::full;

    std::size_t resolved_ar_step() const;
    std::size_t resolved_ff_dim() const;
    /// Throws ConfigError describing the first violated constraint.
    void validate() const;
};

/// Common surface of trainable forecasters.
class Forecaster {
public:
    virtual ~Forecaster() = default;

    virtual std::string kind() const = 0;
    virtual std::size_t channels() const = 0;
    virtual std::size_t lookback() const = 0;
    virtual std::size_t horizon() const = 0;

    virtual ParamStore& params() = 0;
    virtual const ParamStore& params() const = 0;

    /// (B·N) x T -> (B·N) x F.
    virtual ad::Var forward(ad::Var x, const ad::Context& ctx) const = 0;

    /// Flat key/value description sufficient to rebuild the architecture.
    virtual std::map<std::string, std::string> config_entries() const = 0;

    /// Current decomposition kernel weights (1 x K).
    virtual const Matrix& kernel_weights() const = 0;

    /// Inference-mode forward on a throwaway tape.
    Matrix predict(const Matrix& x) const;
};

/// Tape handles of the intermediate stages of one forward pass.
struct LeddamStages {
    ad::Var embed;
    ad::Var trend;
    ad::Var seasonal;
    ad::Var trend_out;                 // X_Trend·W_t + b_t
    std::optional<ad::Var> inter;      // channel-wise branch
    std::optional<ad::Var> intra;      // auto-regressive branch
    ad::Var branch;                    // input of the seasonal head
    ad::Var seasonal_out;
    ad::Var output;
};

class LeddamModel final : public Forecaster {
public:
    /// Builds and initializes every tensor from a seeded generator: weights
    /// uniform in ±1/sqrt(fan_in), biases zero, positional table N(0, 0.02²),
    /// decomposition kernel from its Gaussian (or uniform) rule. Tensors
    /// shared by all variants receive identical values for a given seed.
    LeddamModel(const LeddamConfig& config, std::uint64_t seed = kDefaultSeed);

    const LeddamConfig& config() const noexcept { return config_; }

    std::string kind() const override { return "leddam"; }
    std::size_t channels() const override { return config_.channels; }
    std::size_t lookback() const override { return config_.lookback; }
    std::size_t horizon() const override { return config_.horizon; }
    ParamStore& params() override { return store_; }
    const ParamStore& params() const override { return store_; }
    ad::Var forward(ad::Var x, const ad::Context& ctx) const override;
    std::map<std::string, std::string> config_entries() const override;
    const Matrix& kernel_weights() const override { return kernel_->value; }

    LeddamStages forward_stages(ad::Var x, const ad::Context& ctx) const;

    /// (X·W_e + b_e) + Pos on plain matrices; X is N x T (one sample).
    Matrix embed(const Matrix& x) const;

    const EncoderBlockParams& channel_block(std::size_t i) const { return channel_blocks_.at(i); }
    const EncoderBlockParams& autoreg_block(std::size_t i) const { return autoreg_blocks_.at(i); }

private:
    LeddamConfig config_;
    ParamStore store_;
    ParamTensor* embed_w_ = nullptr;
    ParamTensor* embed_b_ = nullptr;
    ParamTensor* pos_ = nullptr;
    ParamTensor* kernel_ = nullptr;
    std::vector<EncoderBlockParams> channel_blocks_;
    std::vector<EncoderBlockParams> autoreg_blocks_;
    ParamTensor* linear_w_ = nullptr; // wo_all substitute
    ParamTensor* linear_b_ = nullptr;
    ParamTensor* trend_w_ = nullptr;
    ParamTensor* trend_b_ = nullptr;
    ParamTensor* seasonal_w_ = nullptr;
    ParamTensor* seasonal_b_ = nullptr;
};

enum class HostMode { mov, ld_utl, ld_tl };
std::string_view to_string(HostMode m);
HostMode parse_host_mode(std::string_view text);

struct LinearHostConfig {
    std::size_t channels = 7;
    std::size_t lookback = 96;
    std::size_t horizon = 720;
    int kernel_size = 25;
    double sigma = 1.0;
    Centering centering = Centering::one_based;
    HostMode mode = HostMode::ld_tl;

    void validate() const;
};

/// Decomposes the raw lookback and maps trend and seasonal parts through two
/// independent affine layers (T -> F), summing the results. Every channel
/// shares the layers.
class LinearHost final : public Forecaster {
public:
    LinearHost(const LinearHostConfig& config, std::uint64_t seed = kDefaultSeed);

    const LinearHostConfig& config() const noexcept { return config_; }

    std::string kind() const override { return "linear_host"; }
    std::size_t channels() const override { return config_.channels; }
    std::size_t lookback() const override { return config_.lookback; }
    std::size_t horizon() const override { return config_.horizon; }
    ParamStore& params() override { return store_; }
    const ParamStore& params() const override { return store_; }
    ad::Var forward(ad::Var x, const ad::Context& ctx) const override;
    std::map<std::string, std::string> config_entries() const override;
    const Matrix& kernel_weights() const override { return kernel_->value; }

private:
    LinearHostConfig config_;
    ParamStore store_;
    ParamTensor* kernel_ = nullptr;
    ParamTensor* trend_w_ = nullptr;
    ParamTensor* trend_b_ = nullptr;
    ParamTensor* seasonal_w_ = nullptr;
    ParamTensor* seasonal_b_ = nullptr;
};

LeddamConfig leddam_config_from_entries(const std::map<std::string, std::string>& entries);
LinearHostConfig host_config_from_entries(const std::map<std::string, std::string>& entries);

/// Text checkpoint: header, architecture entries, then every tensor with
/// hex-float values so that save -> load -> save is byte-identical.
std::string serialize_checkpoint(const Forecaster& model);
std::unique_ptr<Forecaster> deserialize_checkpoint(std::string_view text);
void save_checkpoint(const std::string& path, const Forecaster& model);
std::unique_ptr<Forecaster> load_checkpoint(const std::string& path);

} // namespace leddam
