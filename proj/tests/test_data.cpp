#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "minusformer/data.hpp"
#include "minusformer/errors.hpp"
#include "minusformer/rng.hpp"

using namespace minusformer;

namespace {

SeriesTable parse(const std::string& text) {
    std::istringstream is(text);
    return parse_csv(is);
}

SeriesTable random_table(std::size_t T, std::size_t D, std::uint64_t seed) {
    SeededRng rng(seed);
    SeriesTable t;
    for (std::size_t d = 0; d < D; ++d) t.names.push_back("v" + std::to_string(d));
    for (std::size_t r = 0; r < T; ++r) {
        t.timestamps.push_back(std::to_string(r));
        for (std::size_t d = 0; d < D; ++d) t.values.push_back(rng.uniform(-50.0, 50.0) * (d + 1));
    }
    return t;
}

SeriesTable ramp(std::size_t T, std::size_t D) {
    SeriesTable t;
    for (std::size_t d = 0; d < D; ++d) t.names.push_back("v" + std::to_string(d));
    for (std::size_t r = 0; r < T; ++r) {
        t.timestamps.push_back(std::to_string(r));
        for (std::size_t d = 0; d < D; ++d) t.values.push_back(static_cast<double>(r * 10 + d));
    }
    return t;
}

}  // namespace

TEST(Csv, ShapeAndOrder) {
    const auto t = parse("date,a,b\n2020-01-01,1,2\n2020-01-02,3,4\n2020-01-03,5.5,-6e-1\n");
    EXPECT_EQ(t.length(), 3u);
    EXPECT_EQ(t.variates(), 2u);
    EXPECT_EQ(t.names, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(t.timestamps[2], "2020-01-03");
    EXPECT_EQ(t.at(2, 1), -0.6);
}

TEST(Csv, EtthHeaderHasSevenVariates) {
    const auto t = parse(
        "date,HUFL,HULL,MUFL,MULL,LUFL,LULL,OT\n"
        "2016-07-01 00:00:00,5.827,2.009,1.599,0.462,4.203,1.340,30.531\n"
        "2016-07-01 01:00:00,5.693,2.076,1.492,0.426,4.142,1.371,27.787\n");
    EXPECT_EQ(t.variates(), 7u);
    EXPECT_EQ(t.names.back(), "OT");
}

TEST(Csv, ParseErrorCarriesLocation) {
    try {
        parse("date,a,b\n1,2,3\n2,4,oops\n");
        FAIL();
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
        EXPECT_NE(msg.find("col"), std::string::npos) << msg;
    }
    EXPECT_THROW(parse("date,a,b\n1,2\n"), ParseError);
}

TEST(Csv, MissingValuesRejected) {
    EXPECT_THROW(parse("date,a\n1,\n"), MissingValue);
    EXPECT_THROW(parse("date,a\n1,NaN\n"), MissingValue);
    EXPECT_THROW(parse("date,a\n1,NA\n"), MissingValue);
}

TEST(Csv, FileRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "minusformer_test_data.csv";
    const auto t = random_table(20, 3, 4);
    {
        std::ofstream os(path);
        write_csv(os, t);
    }
    const auto back = load_csv(path.string());
    EXPECT_EQ(back.names, t.names);
    EXPECT_EQ(back.timestamps, t.timestamps);
    EXPECT_EQ(back.values, t.values);
    std::filesystem::remove(path);
    EXPECT_THROW(load_csv("/nonexistent/file.csv"), IoError);
}

TEST(Scaler, PopulationStatistics) {
    SeriesTable t;
    t.names = {"a", "b"};
    t.timestamps = {"0", "1", "2"};
    t.values = {1, 10, 2, 20, 3, 60};
    const auto s = fit_scaler(t, {0, 3});
    ASSERT_EQ(s.variates(), 2u);
    EXPECT_NEAR(s.mean[0], 2.0, 1e-15);
    EXPECT_NEAR(s.std[0], std::sqrt(2.0 / 3.0), 1e-15);
    EXPECT_NEAR(s.mean[1], 30.0, 1e-15);
    EXPECT_EQ(s.fitted_on, (IndexRange{0, 3}));

    const std::vector<double> col{1, 10, 2, 30, 3, 50};
    const auto fwd = scale(s, col, ScaleDirection::forward);
    EXPECT_NEAR(fwd[0], -1.224744871391589, 1e-12);
    EXPECT_NEAR(fwd[2], 0.0, 1e-15);
    EXPECT_NEAR(fwd[4], 1.224744871391589, 1e-12);
    EXPECT_EQ(fwd[3], 0.0);  // x == mean
}

TEST(Scaler, FitsOnlyTheGivenRange) {
    const auto t = ramp(10, 1);
    const auto s = fit_scaler(t, {0, 4});
    EXPECT_NEAR(s.mean[0], 15.0, 1e-12);
}

TEST(Scaler, ZeroVarianceNamesTheVariate) {
    SeriesTable t;
    t.names = {"ok", "flat"};
    t.timestamps = {"0", "1"};
    t.values = {1, 5, 2, 5};
    try {
        fit_scaler(t, {0, 2});
        FAIL();
    } catch (const ZeroVariance& e) {
        EXPECT_NE(std::string(e.what()).find("flat"), std::string::npos);
    }
}

TEST(Scaler, RoundTripOnRandomTables) {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        const auto t = random_table(200, 4, seed);
        const auto s = fit_scaler(t, {0, 140});
        const auto back = scale(s, scale(s, t, ScaleDirection::forward), ScaleDirection::inverse);
        for (std::size_t i = 0; i < t.values.size(); ++i) EXPECT_NEAR(back.values[i], t.values[i], 1e-9);
    }
}

TEST(Split, Arithmetic) {
    const auto r = chrono_split(100, {});
    EXPECT_EQ(r.train, (IndexRange{0, 70}));
    EXPECT_EQ(r.val, (IndexRange{70, 80}));
    EXPECT_EQ(r.test, (IndexRange{80, 100}));
    EXPECT_THROW(chrono_split(100, {1.0, 0.0, 0.0}), EmptySplit);
    EXPECT_THROW(chrono_split(3, {0.5, 0.1, 0.4}), EmptySplit);
}

TEST(Split, PartitionsEveryLength) {
    for (std::size_t T = 10; T < 500; T += 7) {
        const auto r = chrono_split(T, {0.6, 0.15, 0.25});
        EXPECT_EQ(r.train.begin, 0u);
        EXPECT_EQ(r.train.end, r.val.begin);
        EXPECT_EQ(r.val.end, r.test.begin);
        EXPECT_EQ(r.test.end, T);
    }
}

TEST(Windows, Counting) {
    const auto t = ramp(10, 2);
    EXPECT_EQ(make_windows(t, {4, 2, 1}, {0, 10}).size(), 5u);
    EXPECT_EQ(make_windows(t, {4, 2, 2}, {0, 10}).size(), 3u);
    EXPECT_EQ(make_windows(t, {4, 2, 1}, {0, 6}).size(), 1u);
    EXPECT_THROW(make_windows(t, {4, 2, 1}, {0, 5}), RangeTooShort);
}

TEST(Windows, TargetsAreSourceRowsBitExact) {
    const auto t = random_table(60, 3, 8);
    const WindowSpec spec{7, 5, 2};
    const auto w = make_windows(t, spec, {10, 60});
    for (std::size_t i = 0; i < w.size(); ++i) {
        const std::size_t s = w.start_row(i);
        EXPECT_EQ(s, 10 + 2 * i);
        const auto x = w.input(i);
        const auto y = w.target(i);
        for (std::size_t r = 0; r < 7; ++r)
            for (std::size_t d = 0; d < 3; ++d) EXPECT_EQ(x[r * 3 + d], t.at(s + r, d));
        for (std::size_t r = 0; r < 5; ++r)
            for (std::size_t d = 0; d < 3; ++d) EXPECT_EQ(y[r * 3 + d], t.at(s + 7 + r, d));
    }
}

TEST(Windows, BatchStacksWindows) {
    const auto t = ramp(30, 2);
    const auto w = make_windows(t, {4, 3, 1}, {0, 30});
    const std::vector<std::size_t> idx{5, 0, 9};
    const auto [x, y] = w.batch(idx);
    EXPECT_EQ(x.shape(), (Shape{3, 4, 2}));
    EXPECT_EQ(y.shape(), (Shape{3, 3, 2}));
    EXPECT_EQ(x.at({0, 0, 1}), t.at(5, 1));
    EXPECT_EQ(y.at({2, 2, 0}), t.at(9 + 4 + 2, 0));
}

TEST(Synth, ExactlyPeriodicWithoutNoise) {
    const auto t = synth_series(SynthKind::sine_mix, 400, 2, 0.0, 3);
    // every component period divides 96
    for (std::size_t r = 0; r + 96 < 400; ++r)
        for (std::size_t d = 0; d < 2; ++d) EXPECT_EQ(t.at(r, d), t.at(r + 96, d));
}

TEST(Synth, MatchesDocumentedFormula) {
    const auto t = synth_series(SynthKind::sine_mix, 50, 2, 0.0, 9);
    // recover the phase from t=0 is ambiguous; instead check x(t) - x(t+12) removes the 12-periodic term
    const double two_pi = 2.0 * std::acos(-1.0);
    for (std::size_t d = 0; d < 2; ++d) {
        // phi solves the documented sum at t = 0 and t = 6; verify consistency via a brute-force search
        double best_phi = 0.0, best_err = 1e300;
        for (int k = 0; k < 200000; ++k) {
            const double phi = two_pi * k / 200000.0;
            const double v0 = std::sin(phi) + 0.5 * std::sin(phi) + 0.3 * std::sin(phi);
            const double v6 = std::sin(two_pi * 6 / 24 + phi) + 0.5 * std::sin(two_pi * 6 / 12 + phi) +
                              0.3 * std::sin(two_pi * 6 / 96 + phi);
            const double err = std::abs(v0 - t.at(0, d)) + std::abs(v6 - t.at(6, d));
            if (err < best_err) best_err = err, best_phi = phi;
        }
        for (std::size_t r = 0; r < 50; ++r) {
            const double tt = static_cast<double>(r);
            const double v = std::sin(two_pi * tt / 24 + best_phi) + 0.5 * std::sin(two_pi * tt / 12 + best_phi) +
                             0.3 * std::sin(two_pi * tt / 96 + best_phi);
            EXPECT_NEAR(t.at(r, d), v, 1e-3);
        }
    }
}

TEST(Synth, DeterministicPerSeed) {
    for (auto kind : {SynthKind::sine_mix, SynthKind::trend_sine, SynthKind::random_walk}) {
        const auto a = synth_series(kind, 300, 3, 0.2, 5);
        const auto b = synth_series(kind, 300, 3, 0.2, 5);
        const auto c = synth_series(kind, 300, 3, 0.2, 6);
        EXPECT_EQ(a.values, b.values);
        EXPECT_NE(a.values, c.values);
        EXPECT_EQ(a.length(), 300u);
        EXPECT_EQ(a.variates(), 3u);
    }
}

TEST(Synth, NoiseVarianceMatches) {
    const std::size_t T = 100000;
    const auto clean = synth_series(SynthKind::sine_mix, T, 1, 0.0, 12);
    const auto noisy = synth_series(SynthKind::sine_mix, T, 1, 0.4, 12);
    double s = 0.0, s2 = 0.0;
    for (std::size_t r = 0; r < T; ++r) {
        const double e = noisy.at(r, 0) - clean.at(r, 0);
        s += e;
        s2 += e * e;
    }
    const double var = s2 / T - (s / T) * (s / T);
    EXPECT_NEAR(var, 0.16, 0.05 * 0.16);
}

TEST(Synth, TrendAndKindNames) {
    const auto flat = synth_series(SynthKind::sine_mix, 960, 2, 0.0, 1);
    const auto trend = synth_series(SynthKind::trend_sine, 960, 2, 0.0, 1);
    for (std::size_t d = 0; d < 2; ++d) {
        const double rise = (trend.at(959, d) - flat.at(959, d)) - (trend.at(0, d) - flat.at(0, d));
        EXPECT_NEAR(rise, 959.0 * (d + 1) / 960.0, 1e-9);
    }
    EXPECT_EQ(parse_synth_kind(to_string(SynthKind::random_walk)), SynthKind::random_walk);
    EXPECT_THROW(parse_synth_kind("square_wave"), std::exception);
}
