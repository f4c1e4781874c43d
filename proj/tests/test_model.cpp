#include "leddam/errors.hpp"
#include "leddam/gradcheck.hpp"
#include "leddam/model.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace leddam;
using testutil::bitwise_equal;
using testutil::uniform;

namespace {

LeddamConfig toy_config(Variant v = Variant::full) {
    LeddamConfig c;
    c.channels = 2;
    c.lookback = 8;
    c.horizon = 4;
    c.dim = 8;
    c.layers = 1;
    c.n_heads = 1;
    c.ar_step = 4;
    c.kernel_size = 3;
    c.variant = v;
    return c;
}

/// Gives biases, positional table and layer-norm parameters non-trivial values.
void randomize(ParamStore& store, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < store.size(); ++i) {
        ParamTensor& t = store[i];
        if (t.name == "decomp.weights") continue;
        if (t.name.find("gamma") != std::string::npos) t.value = uniform(1, t.value.cols(), rng, 0.5, 1.5);
        else if (t.value.rows() == 1 || t.name == "embed.pos") t.value = uniform(t.value.rows(), t.value.cols(), rng);
    }
}

const ad::Context kEval{false, nullptr};

} // namespace

TEST(Embed, ZeroInputZeroBiasZeroPosGivesZero) {
    LeddamModel m(toy_config());
    m.params().at("embed.pos").value.fill(0.0);
    EXPECT_EQ(m.embed(Matrix(2, 8)), Matrix(2, 8));
}

TEST(Embed, ShapeForDefaultBenchmarkSize) {
    LeddamConfig c;
    c.n_heads = 8;
    LeddamModel m(c);
    const Matrix e = m.embed(Matrix(7, 96, 0.5));
    EXPECT_EQ(e.rows(), 7u);
    EXPECT_EQ(e.cols(), 512u);
}

TEST(Embed, MatchesAffinePlusPositionalTable) {
    std::mt19937_64 rng(60);
    LeddamModel m(toy_config());
    randomize(m.params(), rng);
    const Matrix x = uniform(2, 8, rng);
    const auto& s = m.params();
    const auto ref = oracle::plus(
        oracle::affine(oracle::to_mat(x), oracle::to_mat(s.at("embed.w").value), oracle::to_vec(s.at("embed.b").value)),
        oracle::to_mat(s.at("embed.pos").value));
    EXPECT_LE(oracle::max_abs_diff(ref, m.embed(x)), 1e-12);
}

TEST(Embed, WrongInputShapeIsDimensionError) {
    LeddamModel m(toy_config());
    EXPECT_THROW(m.embed(Matrix(2, 7)), DimensionError);
    EXPECT_THROW(m.predict(Matrix(3, 8)), DimensionError);
}

TEST(Forward, BenchmarkShape) {
    LeddamConfig c;
    c.dim = 64;
    LeddamModel m(c);
    const Matrix y = m.predict(Matrix(7, 96, 0.1));
    EXPECT_EQ(y.rows(), 7u);
    EXPECT_EQ(y.cols(), 96u);
}

TEST(Forward, AllZeroParametersGiveZeroOutput) {
    std::mt19937_64 rng(61);
    for (Variant v : {Variant::full, Variant::wo_auto, Variant::wo_channel, Variant::wo_all}) {
        LeddamModel m(toy_config(v));
        for (std::size_t i = 0; i < m.params().size(); ++i) m.params()[i].value.fill(0.0);
        EXPECT_EQ(m.predict(uniform(2, 8, rng)), Matrix(2, 4));
    }
}

TEST(Forward, MatchesBruteForceCompositionForEveryVariant) {
    std::mt19937_64 rng(62);
    for (Variant v : {Variant::full, Variant::wo_auto, Variant::wo_channel, Variant::wo_all})
        for (int trial = 0; trial < 5; ++trial) {
            LeddamModel m(toy_config(v), 100 + trial);
            randomize(m.params(), rng);
            const Matrix x = uniform(2, 8, rng, -2.0, 2.0);
            EXPECT_LE(oracle::max_abs_diff(oracle::leddam_forward(m, oracle::to_mat(x)), m.predict(x)), 1e-12)
                << to_string(v);
        }
}

TEST(Forward, MatchesBruteForceWithDepthHeadsAndWideKernel) {
    std::mt19937_64 rng(63);
    LeddamConfig c = toy_config();
    c.channels = 3;
    c.lookback = 12;
    c.dim = 16;
    c.layers = 2;
    c.n_heads = 4;
    c.ar_step = 0; // D/8
    c.kernel_size = 25;
    LeddamModel m(c);
    randomize(m.params(), rng);
    const Matrix x = uniform(3, 12, rng);
    EXPECT_LE(oracle::max_abs_diff(oracle::leddam_forward(m, oracle::to_mat(x)), m.predict(x)), 1e-12);
}

TEST(Forward, BatchedRowsEqualPerSampleForward) {
    std::mt19937_64 rng(64);
    LeddamModel m(toy_config());
    randomize(m.params(), rng);
    const Matrix a = uniform(2, 8, rng), b = uniform(2, 8, rng);
    Matrix both(4, 8);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 8; ++c) {
            both(r, c) = a(r, c);
            both(2 + r, c) = b(r, c);
        }
    const Matrix y = m.predict(both), ya = m.predict(a), yb = m.predict(b);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 4; ++c) {
            EXPECT_NEAR(y(r, c), ya(r, c), 1e-13);
            EXPECT_NEAR(y(2 + r, c), yb(r, c), 1e-13);
        }
}

TEST(Forward, TrendPathIsIdenticalAcrossVariants) {
    std::mt19937_64 rng(65);
    const Matrix x = uniform(2, 8, rng);
    std::optional<Matrix> reference;
    for (Variant v : {Variant::full, Variant::wo_auto, Variant::wo_channel, Variant::wo_all}) {
        LeddamModel m(toy_config(v), 7);
        ad::Tape t;
        const auto stages = m.forward_stages(t.constant(x), kEval);
        EXPECT_EQ(stages.output.value().rows(), 2u);
        EXPECT_EQ(stages.output.value().cols(), 4u);
        if (!reference) reference = stages.trend_out.value();
        else EXPECT_TRUE(bitwise_equal(*reference, stages.trend_out.value())) << to_string(v);
    }
}

TEST(Forward, BranchesReadTheSameSeasonalInput) {
    std::mt19937_64 rng(66);
    LeddamModel m(toy_config());
    randomize(m.params(), rng);
    ad::Tape t;
    const Matrix x = uniform(2, 8, rng);
    const auto s = m.forward_stages(t.constant(x), kEval);
    ASSERT_TRUE(s.inter && s.intra);
    const AutoRegConfig cfg{4};
    EXPECT_TRUE(bitwise_equal(s.inter->value(), channel_attention_block(s.seasonal.value(), m.channel_block(0))));
    EXPECT_TRUE(bitwise_equal(s.intra->value(), intra_series_forward(s.seasonal.value(), m.autoreg_block(0), cfg)));
}

TEST(Forward, EndToEndGradientCheckOnToyConfig) {
    std::mt19937_64 rng(67);
    LeddamConfig c = toy_config();
    c.kernel_size = 25;
    LeddamModel m(c);
    randomize(m.params(), rng);
    const Matrix x = uniform(2, 8, rng);
    const Matrix y = uniform(2, 4, rng);
    const auto checks = check_param_gradients(
        m.params(), [&](ad::Tape& t) { return ad::mse_loss(m.forward(t.constant(x), kEval), y); });
    EXPECT_EQ(checks.size(), m.params().size());
    for (const auto& ch : checks) EXPECT_LT(ch.relative_error, 1e-4) << ch.name;
}

TEST(Forward, DeterministicAndIndependentOfTrainingFlagWithoutDropout) {
    std::mt19937_64 rng(68);
    LeddamModel m(toy_config());
    const Matrix x = uniform(2, 8, rng);
    std::mt19937_64 drop(3);
    ad::Tape t1, t2;
    const Matrix train = m.forward(t1.constant(x), ad::Context{true, &drop}).value();
    const Matrix eval = m.forward(t2.constant(x), kEval).value();
    EXPECT_TRUE(bitwise_equal(train, eval));
    EXPECT_TRUE(bitwise_equal(m.predict(x), m.predict(x)));
}

TEST(Forward, ContinuousInInput) {
    std::mt19937_64 rng(69);
    LeddamModel m(toy_config());
    randomize(m.params(), rng);
    const Matrix x = uniform(2, 8, rng);
    const Matrix y0 = m.predict(x);
    for (double eps : {1e-4, 1e-6, 1e-8}) {
        Matrix xp = x;
        xp(1, 3) += eps;
        const double change = max_abs_diff(m.predict(xp), y0);
        EXPECT_LT(change, 1e3 * eps);
    }
}

TEST(Init, SameSeedGivesBitwiseIdenticalStores) {
    LeddamModel a(toy_config(), 2021), b(toy_config(), 2021), c(toy_config(), 2022);
    ASSERT_EQ(a.params().size(), b.params().size());
    bool any_diff = false;
    for (std::size_t i = 0; i < a.params().size(); ++i) {
        EXPECT_EQ(a.params()[i].name, b.params()[i].name);
        EXPECT_TRUE(bitwise_equal(a.params()[i].value, b.params()[i].value)) << a.params()[i].name;
        any_diff = any_diff || !bitwise_equal(a.params()[i].value, c.params()[i].value);
    }
    EXPECT_TRUE(any_diff);
}

TEST(Init, DefaultSeedAndKernelSlot) {
    EXPECT_EQ(kDefaultSeed, 2021u);
    LeddamModel m(toy_config());
    double s = 0.0;
    for (double w : m.kernel_weights().data()) s += w;
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_TRUE(m.params().at("decomp.weights").trainable);
}

TEST(Init, WeightsBoundedBiasesZeroPositionalSmall) {
    LeddamConfig c = toy_config();
    c.dim = 32;
    c.lookback = 24;
    LeddamModel m(c);
    const auto& s = m.params();
    for (std::size_t i = 0; i < s.size(); ++i) {
        const ParamTensor& t = s[i];
        if (t.name.ends_with(".b") || t.name.ends_with("bq") || t.name.ends_with("bk") || t.name.ends_with("bv") ||
            t.name.ends_with("b1") || t.name.ends_with("b2") || t.name.ends_with("beta")) {
            for (double v : t.value.data()) EXPECT_EQ(v, 0.0) << t.name;
        } else if (t.name.ends_with("gamma")) {
            for (double v : t.value.data()) EXPECT_EQ(v, 1.0) << t.name;
        } else if (t.name == "embed.pos") {
            double ss = 0.0;
            for (double v : t.value.data()) ss += v * v;
            EXPECT_NEAR(std::sqrt(ss / static_cast<double>(t.value.size())), 0.02, 0.006);
        } else if (t.name != "decomp.weights") {
            const double bound = 1.0 / std::sqrt(static_cast<double>(t.value.rows()));
            for (double v : t.value.data()) EXPECT_LE(std::abs(v), bound) << t.name;
        }
    }
}

TEST(Init, EveryTensorRegisteredOnceWithConsistentShapes) {
    LeddamConfig c = toy_config();
    c.layers = 2;
    LeddamModel m(c);
    std::set<std::string> names;
    for (std::size_t i = 0; i < m.params().size(); ++i) {
        EXPECT_TRUE(names.insert(m.params()[i].name).second);
        EXPECT_TRUE(m.params()[i].grad.same_shape(m.params()[i].value));
    }
    // embed 3 + kernel 1 + 2 branches x 2 layers x 14 + 2 heads x 2.
    EXPECT_EQ(m.params().size(), 3u + 1u + 56u + 4u);
    EXPECT_EQ(m.params().at("embed.w").value.rows(), 8u);
    EXPECT_EQ(m.params().at("embed.pos").value.rows(), 2u);
    EXPECT_EQ(m.params().at("trend_head.w").value.cols(), 4u);
    EXPECT_EQ(LeddamModel(toy_config(Variant::wo_all)).params().size(), 3u + 1u + 2u + 4u);
    EXPECT_EQ(LeddamModel(toy_config(Variant::wo_auto)).params().size(), 3u + 1u + 14u + 4u);
}

TEST(Init, SharedTensorsMatchAcrossVariants) {
    LeddamModel full(toy_config(Variant::full)), wo(toy_config(Variant::wo_channel));
    for (const char* name : {"embed.w", "embed.pos", "decomp.weights", "trend_head.w", "seasonal_head.w",
                             "autoreg.0.wq"})
        EXPECT_TRUE(bitwise_equal(full.params().at(name).value, wo.params().at(name).value)) << name;
}

TEST(Init, MovingAverageKernelIsFrozen) {
    LeddamConfig c = toy_config();
    c.kernel = KernelKind::moving_average;
    LeddamModel m(c);
    EXPECT_FALSE(m.params().at("decomp.weights").trainable);
    EXPECT_EQ(m.kernel_weights(), Matrix(1, 3, 1.0 / 3.0));
}

TEST(Config, ValidationErrors) {
    LeddamConfig c = toy_config();
    c.n_heads = 3;
    EXPECT_THROW(LeddamModel{c}, ConfigError);
    c = toy_config();
    c.ar_step = 9;
    EXPECT_THROW(LeddamModel{c}, ConfigError);
    c = toy_config();
    c.channels = 0;
    EXPECT_THROW(LeddamModel{c}, ConfigError);
    c = toy_config();
    c.dropout = 1.0;
    EXPECT_THROW(LeddamModel{c}, ConfigError);
    c = toy_config();
    c.ff_dim = 4;
    EXPECT_THROW(LeddamModel{c}, ConfigError);
    EXPECT_THROW(parse_variant("partial"), ConfigError);
    EXPECT_EQ(parse_variant("wo_all"), Variant::wo_all);
}

TEST(Config, DefaultsResolve) {
    LeddamConfig c;
    EXPECT_EQ(c.kernel_size, 25);
    EXPECT_EQ(c.lookback, 96u);
    EXPECT_EQ(c.resolved_ar_step(), 64u);
    EXPECT_EQ(c.resolved_ff_dim(), 1024u);
}

namespace {

LinearHostConfig host_config(HostMode mode, int k = 5) {
    LinearHostConfig c;
    c.channels = 3;
    c.lookback = 12;
    c.horizon = 6;
    c.kernel_size = k;
    c.mode = mode;
    return c;
}

} // namespace

TEST(LinearHost, ConstantInputUsesTrendMapOnly) {
    LinearHost h(host_config(HostMode::ld_tl));
    std::mt19937_64 rng(70);
    h.params().at("trend.b").value = uniform(1, 6, rng);
    h.params().at("seasonal.b").value.fill(0.0);
    const Matrix x(3, 12, 2.5);
    const Matrix y = h.predict(x);
    const auto& w = h.params().at("trend.w").value;
    for (std::size_t f = 0; f < 6; ++f) {
        double s = h.params().at("trend.b").value(0, f);
        for (std::size_t t = 0; t < 12; ++t) s += 2.5 * w(t, f);
        for (std::size_t n = 0; n < 3; ++n) EXPECT_NEAR(y(n, f), s, 1e-12);
    }
}

TEST(LinearHost, MovWithSingleTapIsOneLinearMap) {
    std::mt19937_64 rng(71);
    LinearHost h(host_config(HostMode::mov, 1));
    const Matrix x = uniform(3, 12, rng);
    const auto ref = oracle::affine(oracle::to_mat(x), oracle::to_mat(h.params().at("trend.w").value),
                                    oracle::to_vec(h.params().at("trend.b").value));
    EXPECT_LE(oracle::max_abs_diff(ref, h.predict(x)), 1e-12);
}

TEST(LinearHost, MatchesBruteForceInEveryMode) {
    std::mt19937_64 rng(72);
    for (HostMode mode : {HostMode::mov, HostMode::ld_utl, HostMode::ld_tl}) {
        LinearHost h(host_config(mode, 7));
        h.params().at("trend.b").value = uniform(1, 6, rng);
        h.params().at("seasonal.b").value = uniform(1, 6, rng);
        const Matrix x = uniform(3, 12, rng);
        EXPECT_LE(oracle::max_abs_diff(oracle::linear_host_forward(h, oracle::to_mat(x)), h.predict(x)), 1e-12);
    }
}

TEST(LinearHost, KernelModes) {
    LinearHost mov(host_config(HostMode::mov)), utl(host_config(HostMode::ld_utl)), tl(host_config(HostMode::ld_tl));
    EXPECT_EQ(mov.kernel_weights(), Matrix(1, 5, 0.2));
    EXPECT_FALSE(mov.params().at("decomp.weights").trainable);
    EXPECT_FALSE(utl.params().at("decomp.weights").trainable);
    EXPECT_TRUE(tl.params().at("decomp.weights").trainable);
    EXPECT_EQ(utl.kernel_weights(), init_gaussian_kernel(5, 1.0).weights);
    EXPECT_EQ(tl.kernel_weights(), utl.kernel_weights());
    EXPECT_EQ(mov.params().trainable_scalar_count(), utl.params().trainable_scalar_count());
    EXPECT_EQ(tl.params().trainable_scalar_count(), utl.params().trainable_scalar_count() + 5);
}

TEST(LinearHost, KernelLongerThanPaddingAllowsIsConfigError) {
    LinearHostConfig c = host_config(HostMode::ld_tl);
    c.kernel_size = 2 * 12;
    EXPECT_THROW(LinearHost{c}, ConfigError);
    c.kernel_size = 2 * 12 - 1;
    EXPECT_NO_THROW(LinearHost{c});
    EXPECT_THROW(parse_host_mode("LD"), ConfigError);
    EXPECT_EQ(parse_host_mode("LD_UTL"), HostMode::ld_utl);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
    std::mt19937_64 rng(73);
    LeddamConfig c = toy_config(Variant::wo_channel);
    c.centering = Centering::zero_based;
    c.sigma = 0.7;
    LeddamModel m(c);
    randomize(m.params(), rng);
    const std::string text = serialize_checkpoint(m);
    const auto loaded = deserialize_checkpoint(text);
    EXPECT_EQ(serialize_checkpoint(*loaded), text);
    const Matrix x = uniform(2, 8, rng);
    EXPECT_TRUE(bitwise_equal(loaded->predict(x), m.predict(x)));
    EXPECT_EQ(loaded->config_entries(), m.config_entries());
}

TEST(Checkpoint, LinearHostRoundTripThroughFile) {
    const auto dir = std::filesystem::temp_directory_path() / "leddam_ckpt_test";
    LinearHost h(host_config(HostMode::ld_utl));
    const std::string path = (dir / "host.ckpt").string();
    save_checkpoint(path, h);
    const auto loaded = load_checkpoint(path);
    EXPECT_EQ(loaded->kind(), "linear_host");
    EXPECT_FALSE(loaded->params().at("decomp.weights").trainable);
    EXPECT_EQ(serialize_checkpoint(*loaded), serialize_checkpoint(h));
    std::filesystem::remove_all(dir);
}

TEST(Checkpoint, MalformedTextIsParseError) {
    EXPECT_THROW(deserialize_checkpoint("not a checkpoint"), ParseError);
    LeddamModel m(toy_config());
    std::string text = serialize_checkpoint(m);
    text.resize(text.size() / 2);
    EXPECT_THROW(deserialize_checkpoint(text), ParseError);
    EXPECT_THROW(load_checkpoint("/nonexistent/dir/model.ckpt"), ParseError);
}
