#include "leddam/adam.hpp"
#include "leddam/decomposition.hpp"
#include "leddam/errors.hpp"
#include "leddam/gradcheck.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cfloat>
#include <cmath>

using namespace leddam;
using testutil::expect_near;
using testutil::uniform;

namespace {

double weight_sum(const Matrix& w) {
    double s = 0.0;
    for (double v : w.data()) s += v;
    return s;
}

} // namespace

TEST(GaussianKernel, SingletonIsOne) {
    for (Centering c : {Centering::one_based, Centering::zero_based}) {
        const DecompKernel k = init_gaussian_kernel(1, 1.0, c);
        EXPECT_EQ(k.weights, Matrix::from_rows({{1.0}}));
    }
}

TEST(GaussianKernel, SizeThreeOneBased) {
    // Frozen from an independent scalar evaluation: U = [0.8825, 0.8825, 0.3247].
    const DecompKernel k = init_gaussian_kernel(3, 1.0, Centering::one_based);
    expect_near(k.weights, Matrix::from_rows({{0.38873573370633246, 0.38873573370633246, 0.22252853258733515}}),
                1e-12);
    EXPECT_NEAR(k.weights[0], 0.3887, 5e-5);
    EXPECT_NEAR(k.weights[2], 0.2225, 5e-5);
}

TEST(GaussianKernel, SizeThreeZeroBasedIsSymmetric) {
    const DecompKernel k = init_gaussian_kernel(3, 1.0, Centering::zero_based);
    expect_near(k.weights, Matrix::from_rows({{0.2871818801502557, 0.42563623969948866, 0.2871818801502557}}), 1e-12);
}

TEST(GaussianKernel, SizeFiveBothConventions) {
    expect_near(init_gaussian_kernel(5, 1.0, Centering::one_based).weights,
                Matrix::from_rows({{0.1600243518822106, 0.2795470006319175, 0.2795470006319175, 0.1600243518822106,
                                    0.12085729497174381}}),
                1e-12);
    expect_near(init_gaussian_kernel(5, 1.0, Centering::zero_based).weights,
                Matrix::from_rows({{0.1319604905656079, 0.21138855657789296, 0.3133019057129982,
                                    0.21138855657789296, 0.1319604905656079}}),
                1e-12);
}

TEST(GaussianKernel, DefaultSizeHasPlateauPeakUnderOneBasedCentering) {
    const DecompKernel k = init_gaussian_kernel(25, 1.0);
    EXPECT_EQ(k.size, 25u);
    EXPECT_TRUE(k.trainable);
    // Taps 12 and 13 (1-based) carry the peak.
    EXPECT_NEAR(k.weights[11], 0.08422743401962864, 1e-12);
    EXPECT_NEAR(k.weights[12], 0.08422743401962864, 1e-12);
    const DecompKernel z = init_gaussian_kernel(25, 1.0, Centering::zero_based);
    EXPECT_NEAR(z.weights[12], 0.09471610080574572, 1e-12);
}

TEST(GaussianKernel, PositiveAndNormalizedAcrossSizesAndWidths) {
    for (int K : {1, 2, 3, 4, 5, 7, 25, 49})
        for (double sigma : {0.3, 1.0, 2.5, 10.0})
            for (Centering c : {Centering::one_based, Centering::zero_based}) {
                const DecompKernel k = init_gaussian_kernel(K, sigma, c);
                for (double w : k.weights.data()) EXPECT_GT(w, 0.0);
                EXPECT_NEAR(weight_sum(k.weights), 1.0, 1e-12);
                const auto ref = oracle::gaussian_kernel(K, sigma, c == Centering::one_based);
                for (int i = 0; i < K; ++i) EXPECT_NEAR(k.weights[i], ref[i], 1e-12);
            }
}

TEST(GaussianKernel, InvalidArgumentsAreConfigErrors) {
    EXPECT_THROW(init_gaussian_kernel(0, 1.0), ConfigError);
    EXPECT_THROW(init_gaussian_kernel(-3, 1.0), ConfigError);
    EXPECT_THROW(init_gaussian_kernel(3, 0.0), ConfigError);
    EXPECT_THROW(init_gaussian_kernel(3, -1.0), ConfigError);
}

TEST(GaussianKernel, TrainabilityFlagIsKept) {
    EXPECT_FALSE(init_gaussian_kernel(5, 1.0, Centering::one_based, false).trainable);
}

TEST(MovingAverageKernel, UniformAndFrozen) {
    const DecompKernel k4 = init_moving_average_kernel(4);
    EXPECT_EQ(k4.weights, Matrix::from_rows({{0.25, 0.25, 0.25, 0.25}}));
    EXPECT_FALSE(k4.trainable);
    EXPECT_EQ(init_moving_average_kernel(1).weights, Matrix::from_rows({{1.0}}));
    const DecompKernel k25 = init_moving_average_kernel(25);
    for (double w : k25.weights.data()) EXPECT_EQ(w, 1.0 / 25.0);
    EXPECT_THROW(init_moving_average_kernel(0), ConfigError);
}

TEST(ReplicatePad, Examples) {
    const std::vector<double> x{1, 2, 3};
    EXPECT_EQ(replicate_pad(x, 3), (std::vector<double>{1, 1, 2, 3, 3}));
    EXPECT_EQ(replicate_pad(x, 5), (std::vector<double>{1, 1, 1, 2, 3, 3, 3}));
    const std::vector<double> y{1, 2};
    EXPECT_EQ(replicate_pad(y, 2), (std::vector<double>{1, 2, 2}));
    EXPECT_EQ(replicate_pad(y, 1), y);
}

TEST(ReplicatePad, EmptySeriesIsPreconditionError) {
    EXPECT_THROW(replicate_pad(std::vector<double>{}, 3), PreconditionError);
}

TEST(Decompose, ConstantRowHasZeroSeasonal) {
    const Matrix x(2, 9, 3.5);
    for (const DecompKernel& k : {init_gaussian_kernel(5, 1.0), init_gaussian_kernel(25, 1.0, Centering::zero_based),
                                  init_moving_average_kernel(4)}) {
        const Decomposition d = decompose(x, k);
        expect_near(d.trend, x, 1e-14);
        expect_near(d.seasonal, Matrix(2, 9), 1e-14);
    }
}

TEST(Decompose, MovingAverageOnShortRamp) {
    const Decomposition d = decompose(Matrix::from_rows({{1, 2, 3}}), init_moving_average_kernel(3));
    expect_near(d.trend, Matrix::from_rows({{4.0 / 3.0, 2.0, 8.0 / 3.0}}), 1e-15);
    expect_near(d.seasonal, Matrix::from_rows({{-1.0 / 3.0, 0.0, 1.0 / 3.0}}), 1e-15);
}

TEST(Decompose, MatchesBruteForceConvolution) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t rows = 1 + trial % 4;
        const std::size_t cols = 1 + trial % 13;
        const Matrix x = uniform(rows, cols, rng);
        const Matrix w = uniform(1, 1 + trial % 7, rng);
        const Decomposition d = decompose(x, w);
        const auto ref = oracle::trend(oracle::to_mat(x), oracle::to_vec(w));
        EXPECT_LE(oracle::max_abs_diff(ref, d.trend), 1e-12);
    }
}

TEST(Decompose, SeasonalIsExactlyInputMinusTrend) {
    std::mt19937_64 rng(22);
    const Matrix x = uniform(3, 40, rng, -100.0, 100.0);
    const Decomposition d = decompose(x, init_gaussian_kernel(25, 1.0));
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_EQ(d.seasonal[i], x[i] - d.trend[i]);
        // Adding back reproduces x up to the rounding of one addition.
        const double bound = 4.0 * DBL_EPSILON * std::max(std::abs(x[i]), std::abs(d.trend[i]));
        EXPECT_LE(std::abs(d.trend[i] + d.seasonal[i] - x[i]), bound);
    }
}

TEST(Decompose, SymmetricKernelReproducesRampInInterior) {
    const std::size_t D = 40;
    Matrix x(1, D);
    for (std::size_t d = 0; d < D; ++d) x(0, d) = 0.75 * static_cast<double>(d) - 3.0;
    for (int K : {3, 5, 25}) {
        for (const DecompKernel& k : {init_gaussian_kernel(K, 1.3, Centering::zero_based),
                                      init_moving_average_kernel(K)}) {
            const Decomposition dec = decompose(x, k);
            const std::size_t half = static_cast<std::size_t>(K - 1) / 2;
            for (std::size_t d = half; d < D - half; ++d) EXPECT_NEAR(dec.trend(0, d), x(0, d), 1e-9) << "K=" << K;
        }
    }
}

TEST(Decompose, IsLinearInInput) {
    std::mt19937_64 rng(23);
    const DecompKernel k = init_gaussian_kernel(7, 1.0);
    const Matrix x = uniform(2, 20, rng);
    const Matrix y = uniform(2, 20, rng);
    const double a = 1.7, b = -0.4;
    Matrix mix(2, 20);
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
    const Decomposition dm = decompose(mix, k), dx = decompose(x, k), dy = decompose(y, k);
    for (std::size_t i = 0; i < mix.size(); ++i) {
        EXPECT_NEAR(dm.trend[i], a * dx.trend[i] + b * dy.trend[i], 1e-9);
        EXPECT_NEAR(dm.seasonal[i], a * dx.seasonal[i] + b * dy.seasonal[i], 1e-9);
    }
}

TEST(Decompose, SameKernelForEveryRow) {
    const Matrix x = Matrix::from_rows({{1, 4, 2, 8, 5}, {1, 4, 2, 8, 5}});
    const Decomposition d = decompose(x, init_gaussian_kernel(3, 1.0));
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(d.trend(0, c), d.trend(1, c));
}

TEST(Decompose, GradientOfTrendSumWrtWeights) {
    std::mt19937_64 rng(24);
    ParamStore store;
    const Matrix x = uniform(2, 8, rng);
    store.add("weights", init_gaussian_kernel(5, 1.0).weights);
    const auto checks = check_param_gradients(store, [&](ad::Tape& t) {
        return ad::sum(ad::trend_conv(t.constant(x), t.param(store.at("weights"))));
    });
    ASSERT_EQ(checks.size(), 1u);
    EXPECT_LT(checks[0].relative_error, 1e-4);
}

TEST(Decompose, GradientWrtInputAndWeightsForEvenKernel) {
    std::mt19937_64 rng(25);
    ParamStore store;
    store.add("x", uniform(3, 6, rng));
    store.add("weights", uniform(1, 4, rng));
    const Matrix target = uniform(3, 6, rng);
    const auto checks = check_param_gradients(store, [&](ad::Tape& t) {
        const auto ts = ad::decompose(t.param(store.at("x")), t.param(store.at("weights")));
        return ad::add(ad::mse_loss(ts.trend, target), ad::mse_loss(ts.seasonal, target));
    });
    for (const auto& c : checks) EXPECT_TRUE(c.passed) << c.name << " " << c.relative_error;
}

TEST(Decompose, TapeAndPlainFormsAgreeBitwise) {
    std::mt19937_64 rng(26);
    const Matrix x = uniform(3, 17, rng);
    const Matrix w = init_gaussian_kernel(25, 1.0).weights;
    const Decomposition plain = decompose(x, w);
    ad::Tape t;
    const auto ts = ad::decompose(t.constant(x), t.constant(w));
    EXPECT_TRUE(testutil::bitwise_equal(plain.trend, ts.trend.value()));
    EXPECT_TRUE(testutil::bitwise_equal(plain.seasonal, ts.seasonal.value()));
}

TEST(MultiScale, SingleKernelEqualsDecompose) {
    std::mt19937_64 rng(27);
    const Matrix x = uniform(2, 12, rng);
    const DecompKernel k = init_gaussian_kernel(5, 1.0);
    const Decomposition one = decompose(x, k);
    const Decomposition ms = multiscale_decompose(x, MultiScaleDecomp{{k}});
    expect_near(ms.trend, one.trend, 0.0);
    expect_near(ms.seasonal, one.seasonal, 0.0);
}

TEST(MultiScale, TwoIdenticalKernelsEqualDecompose) {
    std::mt19937_64 rng(28);
    const Matrix x = uniform(2, 12, rng);
    const DecompKernel k = init_gaussian_kernel(7, 2.0);
    const Decomposition ms = multiscale_decompose(x, MultiScaleDecomp{{k, k}});
    expect_near(ms.trend, decompose(x, k).trend, 1e-15);
}

TEST(MultiScale, ThreeAndFiveOnShortRamp) {
    // Trends of [1,2,3,4]: K=3 -> [4/3, 2, 3, 11/3]; K=5 -> [1.6, 2.2, 2.8, 3.4].
    const Matrix x = Matrix::from_rows({{1, 2, 3, 4}});
    const Decomposition ms =
        multiscale_decompose(x, MultiScaleDecomp{{init_moving_average_kernel(3), init_moving_average_kernel(5)}});
    expect_near(ms.trend, Matrix::from_rows({{1.4666666666666668, 2.1, 2.9, 3.533333333333333}}), 1e-12);
    expect_near(ms.seasonal, Matrix::from_rows({{1 - 1.4666666666666668, -0.1, 0.1, 4 - 3.533333333333333}}), 1e-12);
}

TEST(MultiScale, GaussianScalesMatchOracle) {
    std::mt19937_64 rng(29);
    const Matrix x = uniform(3, 16, rng);
    const MultiScaleDecomp ms{{init_gaussian_kernel(3, 1.0), init_gaussian_kernel(5, 1.0),
                               init_gaussian_kernel(9, 1.0)}};
    const Decomposition d = multiscale_decompose(x, ms);
    std::vector<oracle::Vec> kernels;
    for (const auto& k : ms.kernels) kernels.push_back(oracle::to_vec(k.weights));
    EXPECT_LE(oracle::max_abs_diff(oracle::multiscale_trend(oracle::to_mat(x), kernels), d.trend), 1e-12);
}

TEST(MultiScale, EmptyListAndMixedCenteringAreConfigErrors) {
    const Matrix x(1, 4, 1.0);
    EXPECT_THROW(multiscale_decompose(x, MultiScaleDecomp{}), ConfigError);
    EXPECT_THROW(multiscale_decompose(x, MultiScaleDecomp{{init_gaussian_kernel(3, 1.0, Centering::one_based),
                                                           init_gaussian_kernel(5, 1.0, Centering::zero_based)}}),
                 ConfigError);
}

TEST(Trainability, TrainableKernelMovesFrozenKernelDoesNot) {
    std::mt19937_64 rng(30);
    const Matrix x = uniform(2, 10, rng);
    const Matrix target = uniform(2, 10, rng);
    ParamStore store;
    auto& live = store.add("live", init_gaussian_kernel(5, 1.0, Centering::one_based, true).weights, true);
    auto& frozen = store.add("frozen", init_gaussian_kernel(5, 1.0, Centering::one_based, false).weights, false);
    const Matrix live0 = live.value, frozen0 = frozen.value;
    AdamState adam(store, AdamConfig{1e-3});
    ad::Tape t;
    const auto a = ad::decompose(t.constant(x), t.param(live));
    const auto b = ad::decompose(t.constant(x), t.param(frozen));
    t.backward(ad::add(ad::mse_loss(a.trend, target), ad::mse_loss(b.trend, target)));
    adam_step(store, adam);
    EXPECT_TRUE(testutil::bitwise_equal(frozen.value, frozen0));
    EXPECT_FALSE(testutil::bitwise_equal(live.value, live0));
}

TEST(Centering, ParseRoundTrip) {
    EXPECT_EQ(parse_centering("paper"), Centering::one_based);
    EXPECT_EQ(parse_centering("zero"), Centering::zero_based);
    EXPECT_EQ(to_string(Centering::zero_based), "zero");
    EXPECT_THROW(parse_centering("middle"), ConfigError);
}
