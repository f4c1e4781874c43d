#include "leddam/data.hpp"
#include "leddam/errors.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace leddam;

namespace {

template <typename Fn>
ParseError capture_parse_error(Fn&& fn) {
    try {
        fn();
    } catch (const ParseError& e) {
        return e;
    }
    ADD_FAILURE() << "expected ParseError";
    return ParseError("none", "none");
}

std::shared_ptr<const Matrix> ramp_series(std::size_t steps, std::size_t channels) {
    Matrix m(steps, channels);
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t c = 0; c < channels; ++c) m(t, c) = static_cast<double>(t) + 100.0 * static_cast<double>(c);
    return std::make_shared<const Matrix>(std::move(m));
}

} // namespace

TEST(Csv, ParsesSmallFile) {
    const auto ds = parse_csv("date,a,b\n2016-07-01 00:00:00,1,2\n2016-07-01 01:00:00,3,4\n2016-07-01 02:00:00,5,6\n",
                              "tiny");
    EXPECT_EQ(ds.name, "tiny");
    EXPECT_EQ(ds.steps(), 3u);
    EXPECT_EQ(ds.channels(), 2u);
    EXPECT_EQ(ds.channel_names, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(ds.values, Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}}));
    EXPECT_EQ(ds.timestamps.front(), "2016-07-01 00:00:00");
    EXPECT_EQ(ds.granularity, "1 hour");
}

TEST(Csv, AcceptsNumericTimestampsAndCrlf) {
    const auto ds = parse_csv("t,x\r\n1,0.5\r\n2,-1e3\r\n");
    EXPECT_EQ(ds.values, Matrix::from_rows({{0.5}, {-1000.0}}));
}

TEST(Csv, RaggedRowNamesRow) {
    const auto e = capture_parse_error([] { parse_csv("date,a,b\n1,1,2\n2,3\n"); });
    EXPECT_EQ(e.kind(), "ragged_row");
    EXPECT_EQ(e.row(), 3u);
}

TEST(Csv, NonNumericCellNamesRowAndColumn) {
    const auto e = capture_parse_error([] { parse_csv("date,a,b\n1,1,2\n2,3,oops\n"); });
    EXPECT_EQ(e.kind(), "non_numeric");
    EXPECT_EQ(e.row(), 3u);
    EXPECT_EQ(e.column(), 3u);
    EXPECT_NE(std::string(e.what()).find("oops"), std::string::npos);
    EXPECT_EQ(capture_parse_error([] { parse_csv("date,a\n1,nan\n"); }).kind(), "non_numeric");
    EXPECT_EQ(capture_parse_error([] { parse_csv("date,a\n1,\n"); }).kind(), "non_numeric");
}

TEST(Csv, NonMonotoneTimestamps) {
    EXPECT_EQ(capture_parse_error([] { parse_csv("date,a\n2,1\n1,2\n"); }).kind(), "non_monotone_timestamp");
    EXPECT_EQ(capture_parse_error([] { parse_csv("date,a\n1,1\n1,2\n"); }).kind(), "non_monotone_timestamp");
    EXPECT_EQ(capture_parse_error([] { parse_csv("date,a\n2016-07-01 01:00,1\n2016-07-01 00:00,2\n"); }).kind(),
              "non_monotone_timestamp");
}

TEST(Csv, BadHeaderAndEmptyFile) {
    EXPECT_EQ(capture_parse_error([] { parse_csv(""); }).kind(), "bad_header");
    EXPECT_EQ(capture_parse_error([] { parse_csv("date\n1\n"); }).kind(), "bad_header");
}

TEST(Csv, MissingFileNamesPath) {
    const auto e = capture_parse_error([] { load_csv("/nonexistent/ETTh1.csv"); });
    EXPECT_EQ(e.kind(), "missing_file");
    EXPECT_NE(std::string(e.what()).find("/nonexistent/ETTh1.csv"), std::string::npos);
}

TEST(Csv, RoundTripsThroughFileAndTakesStemAsName) {
    const auto ds = make_synthetic_dataset(50, 3, 5, "syn");
    const auto dir = std::filesystem::temp_directory_path() / "leddam_csv_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "syn.csv";
    std::ofstream(path) << to_csv(ds);
    const auto back = load_csv(path.string());
    EXPECT_EQ(back.name, "syn");
    EXPECT_EQ(back.channel_names, ds.channel_names);
    EXPECT_EQ(back.timestamps, ds.timestamps);
    EXPECT_TRUE(testutil::bitwise_equal(back.values, ds.values));
    std::filesystem::remove_all(dir);
}

TEST(Splits, SmallExample) {
    const auto s = chronological_split(10, {0.6, 0.2, 0.2}, 1, 1);
    EXPECT_EQ(s.train, (IndexRange{0, 6}));
    EXPECT_EQ(s.val, (IndexRange{6, 8}));
    EXPECT_EQ(s.test, (IndexRange{8, 10}));
}

TEST(Splits, HourlyBenchmarkBorders) {
    const auto s = chronological_split(17420, preset_ratios("ETTh1"), 96, 720);
    EXPECT_EQ(s.train, (IndexRange{0, 10452}));
    EXPECT_EQ(s.val, (IndexRange{10452, 13936}));
    EXPECT_EQ(s.test, (IndexRange{13936, 17420}));
}

TEST(Splits, PartitionTheSeriesForAnyLength) {
    for (std::size_t total = 40; total < 400; total += 7)
        for (std::size_t tenths : {6u, 7u}) {
            const SplitRatios r = tenths == 6 ? SplitRatios{0.6, 0.2, 0.2} : SplitRatios{0.7, 0.1, 0.2};
            const auto s = chronological_split(total, r, 2, 2);
            EXPECT_EQ(s.train.begin, 0u);
            EXPECT_EQ(s.train.end, s.val.begin);
            EXPECT_EQ(s.val.end, s.test.begin);
            EXPECT_EQ(s.test.end, total);
            EXPECT_EQ(s.train.end, total * tenths / 10); // exact, unlike floor(total * 0.7)
            EXPECT_EQ(s.val.end, total * 8 / 10);
        }
}

TEST(Splits, InvalidRatiosAndShortSegments) {
    EXPECT_THROW(chronological_split(100, {0.6, 0.2, 0.1}, 1, 1), ConfigError);
    EXPECT_THROW(chronological_split(100, {0.8, 0.0, 0.2}, 1, 1), ConfigError);
    EXPECT_THROW(chronological_split(100, {0.6, 0.2, 0.2}, 15, 10), ConfigError);
    EXPECT_NO_THROW(chronological_split(100, {0.6, 0.2, 0.2}, 10, 10));
}

TEST(Splits, PresetRatios) {
    for (const char* p : {"ETTh1", "ETTh2", "ETTm1", "ETTm2"}) EXPECT_DOUBLE_EQ(preset_ratios(p).train, 0.6) << p;
    for (const char* p : {"Electricity", "Traffic", "Weather", "Solar", "custom"}) {
        EXPECT_DOUBLE_EQ(preset_ratios(p).train, 0.7) << p;
        EXPECT_DOUBLE_EQ(preset_ratios(p).val, 0.1) << p;
    }
    EXPECT_GE(known_presets().size(), 8u);
}

TEST(Norm, WorkedExample) {
    // Channel with mean 5 and population std 2 on the train rows.
    const Matrix v = Matrix::from_rows({{3}, {7}, {3}, {7}, {9}, {5}});
    const auto stats = fit_norm_stats(v, {0, 4});
    EXPECT_DOUBLE_EQ(stats.mean[0], 5.0);
    EXPECT_DOUBLE_EQ(stats.stddev[0], 2.0);
    const Matrix z = apply_norm(v, stats);
    EXPECT_DOUBLE_EQ(z(4, 0), 2.0);
    EXPECT_DOUBLE_EQ(z(5, 0), 0.0);
}

TEST(Norm, TrainSegmentIsStandardizedAndRoundTrips) {
    const auto ds = make_synthetic_dataset(600, 4, 9);
    const IndexRange train{0, 360};
    const auto st = standardize(ds, train);
    for (std::size_t c = 0; c < 4; ++c) {
        double m = 0.0, ss = 0.0;
        for (std::size_t t = train.begin; t < train.end; ++t) m += st.values(t, c);
        m /= 360.0;
        for (std::size_t t = train.begin; t < train.end; ++t) ss += (st.values(t, c) - m) * (st.values(t, c) - m);
        EXPECT_NEAR(m, 0.0, 1e-12);
        EXPECT_NEAR(std::sqrt(ss / 360.0), 1.0, 1e-12);
    }
    double scale = 0.0;
    for (double v : ds.values.data()) scale = std::max(scale, std::abs(v));
    EXPECT_LE(max_abs_diff(invert_norm(st.values, st.stats), ds.values), 1e-12 * scale);
}

TEST(Norm, StatisticsIgnoreRowsOutsideTrain) {
    auto ds = make_synthetic_dataset(300, 3, 10);
    const IndexRange train{0, 180};
    const auto before = standardize(ds, train).stats;
    for (std::size_t t = 180; t < 300; ++t)
        for (std::size_t c = 0; c < 3; ++c) ds.values(t, c) = 1e6 * static_cast<double>(t);
    const auto after = standardize(ds, train).stats;
    EXPECT_EQ(before.mean, after.mean);
    EXPECT_EQ(before.stddev, after.stddev);
}

TEST(Norm, ConstantChannelIsNamed) {
    RawDataset ds;
    ds.channel_names = {"HUFL", "OT"};
    ds.values = Matrix::from_rows({{1, 4}, {2, 4}, {3, 4}});
    try {
        standardize(ds, {0, 3});
        FAIL() << "expected PreconditionError";
    } catch (const PreconditionError& e) {
        EXPECT_NE(std::string(e.what()).find("OT"), std::string::npos);
    }
}

TEST(Windows, SmallExample) {
    const auto series = ramp_series(10, 1);
    const auto w = make_windows(series, {0, 10}, 3, 2, WindowMode::confined);
    ASSERT_EQ(w.size(), 6u);
    const auto s = w.sample(0);
    EXPECT_EQ(s.x, Matrix::from_rows({{0, 1, 2}}));
    EXPECT_EQ(s.y, Matrix::from_rows({{3, 4}}));
    EXPECT_EQ(w.sample(5).y, Matrix::from_rows({{8, 9}}));
    EXPECT_EQ(make_windows(series, {0, 10}, 3, 2, WindowMode::confined, 2).size(), 3u);
}

TEST(Windows, CountFormulas) {
    const auto series = ramp_series(120, 2);
    for (std::size_t T = 1; T <= 12; ++T)
        for (std::size_t F = 1; F <= 12; ++F)
            for (std::size_t stride : {1u, 2u, 5u}) {
                const IndexRange train{0, 70}, val{70, 100};
                const auto conf = make_windows(series, train, T, F, WindowMode::confined, stride);
                const std::size_t n_conf = train.size() - T - F + 1;
                EXPECT_EQ(conf.size(), (n_conf + stride - 1) / stride);
                const auto spill = make_windows(series, val, T, F, WindowMode::spillover, stride);
                const std::size_t n_spill = val.size() - F + 1;
                EXPECT_EQ(spill.size(), (n_spill + stride - 1) / stride);
            }
}

TEST(Windows, TargetsStayInsideTheirSegment) {
    const auto series = ramp_series(200, 1);
    const IndexRange val{120, 160};
    const auto w = make_windows(series, val, 24, 8, WindowMode::spillover);
    for (std::size_t o : w.origins()) {
        EXPECT_GE(o + 24, val.begin);
        EXPECT_LE(o + 24 + 8, val.end);
    }
    const auto c = make_windows(series, {0, 120}, 24, 8, WindowMode::confined);
    for (std::size_t o : c.origins()) EXPECT_LE(o + 32, 120u);
}

TEST(Windows, AssembleIsChannelMajor) {
    const auto series = ramp_series(30, 3);
    const auto w = make_windows(series, {0, 30}, 4, 2, WindowMode::confined);
    Matrix x, y;
    const std::vector<std::size_t> idx{5, 0};
    w.assemble(idx, x, y);
    ASSERT_EQ(x.rows(), 6u);
    ASSERT_EQ(y.cols(), 2u);
    EXPECT_EQ(x(0, 0), 5.0);
    EXPECT_EQ(x(2, 0), 205.0);
    EXPECT_EQ(x(3, 0), 0.0);
    EXPECT_EQ(y(4, 1), 105.0);
}

TEST(Windows, EmptyResultWarnsInsteadOfFailing) {
    const auto series = ramp_series(10, 1);
    testing::internal::CaptureStderr();
    const auto w = make_windows(series, {0, 4}, 3, 2, WindowMode::confined);
    const std::string err = testing::internal::GetCapturedStderr();
    EXPECT_TRUE(w.empty());
    EXPECT_NE(err.find("warning"), std::string::npos);
    EXPECT_THROW(make_windows(series, {0, 11}, 3, 2, WindowMode::confined), PreconditionError);
    EXPECT_THROW(make_windows(series, {0, 10}, 3, 2, WindowMode::confined, 0), ConfigError);
}

TEST(Prepare, EndToEndOnSyntheticSeries) {
    const auto p = prepare_data(make_synthetic_dataset(1000, 3, 11), {0.6, 0.2, 0.2}, 24, 12);
    EXPECT_EQ(p.train.size(), 600u - 36u + 1u);
    EXPECT_EQ(p.val.size(), 200u - 12u + 1u);
    EXPECT_EQ(p.test.size(), 200u - 12u + 1u);
    EXPECT_EQ(p.train.channels(), 3u);
}

TEST(Synthetic, DeterministicPerSeed) {
    const auto a = make_synthetic_dataset(500, 7, 2021, "ETTh1");
    const auto b = make_synthetic_dataset(500, 7, 2021, "ETTh1");
    const auto c = make_synthetic_dataset(500, 7, 2022, "ETTh1");
    EXPECT_TRUE(testutil::bitwise_equal(a.values, b.values));
    EXPECT_FALSE(testutil::bitwise_equal(a.values, c.values));
    EXPECT_EQ(a.channel_names.back(), "OT");
    for (double v : a.values.data()) EXPECT_TRUE(std::isfinite(v));
}
