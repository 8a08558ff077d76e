#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "tsexam/error.hpp"
#include "tsexam/synth.hpp"

using namespace tsexam;
using namespace tsexam::synth;

namespace {

TimeSeries from(std::vector<double> v) {
    TimeSeries s;
    s.values = std::move(v);
    return s;
}

}  // namespace

TEST_CASE("linear trend of slope 1 counts up from the intercept") {
    const auto s = gen_base_pattern(LinearTrend{1.0, 0.0}, 4, 0);
    CHECK(s.values == std::vector<double>{0, 1, 2, 3});
    CHECK(s.provenance.at("spec").at("kind") == "linear_trend");
}

TEST_CASE("zero-variance white noise is all zeros") {
    const auto s = gen_base_pattern(WhiteNoise{0.0, 0.0}, 8, 3);
    CHECK(s.values == std::vector<double>(8, 0.0));
}

TEST_CASE("AR(1) lag-1 autocorrelation approaches its coefficient") {
    const auto s = gen_base_pattern(ArProcess{{0.9}, 1.0, 100}, 10000, 42);
    CHECK(std::abs(oracle::autocorr(s.values, 1) - 0.9) < 0.05);
}

TEST_CASE("generators are deterministic per seed") {
    const PatternSpec specs[] = {Sine{1.5, 12, 0.3, 0}, RandomWalk{1, 0.1, 0}, MeanReverting{0.3, 1, 1, std::nullopt},
                                 SquareWave{1, 10, 0, 0.3}, ExponentialTrend{1, 0.01, 0},
                                 RegimeSwitch{{30, 70}, {0, 2, -1}, {0.1, 0.2, 0.3}}};
    for (const auto& spec : specs) {
        CHECK(gen_base_pattern(spec, 100, 9) == gen_base_pattern(spec, 100, 9));
    }
    CHECK(gen_base_pattern(RandomWalk{}, 50, 1).values != gen_base_pattern(RandomWalk{}, 50, 2).values);
}

TEST_CASE("invalid parameters are rejected with the field name") {
    auto field_of = [](const PatternSpec& spec, std::size_t n) -> std::string {
        try {
            gen_base_pattern(spec, n, 0);
        } catch (const InvalidParameter& e) {
            return e.field();
        }
        return "";
    };
    CHECK(field_of(Sine{1, 0, 0, 0}, 10) == "period");
    CHECK(field_of(SquareWave{1, -2, 0, 0.5}, 10) == "period");
    CHECK(field_of(ArProcess{{}, 1, 10}, 10) == "coeffs");
    CHECK(field_of(RegimeSwitch{{5, 3}, {0, 1, 2}, {1, 1, 1}}, 10) == "boundaries");
    CHECK(field_of(LinearTrend{1, 0}, 1) == "length");
}

TEST_CASE("composition") {
    const auto x = gen_base_pattern(Sine{2, 8, 0.1, 0}, 32, 0);
    SUBCASE("additive identity") { CHECK(compose({x, from(std::vector<double>(32, 0.0))}, Composition::additive).values == x.values); }
    SUBCASE("multiplicative identity") {
        CHECK(compose({x, from(std::vector<double>(32, 1.0))}, Composition::multiplicative).values == x.values);
    }
    SUBCASE("elementwise sum") { CHECK(compose({from({1, 2}), from({3, 4})}, Composition::additive).values == std::vector<double>{4, 6}); }
    SUBCASE("length mismatch") { CHECK_THROWS_AS(compose({from({1, 2}), from({1})}, Composition::additive), InvalidParameter); }
    SUBCASE("empty list") { CHECK_THROWS_AS(compose({}, Composition::additive), InvalidParameter); }
    SUBCASE("commutative") {
        const auto y = gen_base_pattern(RandomWalk{}, 32, 4);
        CHECK(compose({x, y}, Composition::additive).values == compose({y, x}, Composition::additive).values);
    }
}

TEST_CASE("noise at an SNR") {
    const auto sine = gen_base_pattern(Sine{1, 16, 0, 0}, 100000, 0);
    SUBCASE("infinite SNR leaves the series unchanged") { CHECK(add_noise(sine, kNoNoise, 1).values == sine.values); }
    SUBCASE("0 dB noise variance matches the signal power") {
        const auto noisy = add_noise(sine, 0.0, 5);
        std::vector<double> residual(sine.values.size());
        for (std::size_t i = 0; i < residual.size(); ++i) residual[i] = noisy.values[i] - sine.values[i];
        CHECK(std::abs(oracle::variance(residual) - 0.5) < 0.05 * 0.5);
    }
    SUBCASE("lower SNR gives larger residual variance") {
        auto resid_var = [&](double db) {
            const auto n = add_noise(sine, db, 8);
            std::vector<double> r(n.values.size());
            for (std::size_t i = 0; i < r.size(); ++i) r[i] = n.values[i] - sine.values[i];
            return oracle::variance(r);
        };
        CHECK(resid_var(0.0) > resid_var(5.0));
        CHECK(resid_var(5.0) > resid_var(10.0));
    }
    SUBCASE("seeds differ") { CHECK(add_noise(sine, 3, 1).values != add_noise(sine, 3, 2).values); }
    SUBCASE("zero power with finite SNR is rejected") {
        CHECK_THROWS_AS(add_noise(from(std::vector<double>(10, 0.0)), 3.0, 1), InvalidParameter);
    }
}

TEST_CASE("anomaly injection") {
    const auto zeros = from(std::vector<double>(10, 0.0));
    SUBCASE("spike") {
        const auto s = inject_anomaly(zeros, {AnomalyKind::spike, 5, 5, 10}, 0);
        std::vector<double> want(10, 0.0);
        want[5] = 10;
        CHECK(s.values == want);
        CHECK(s.provenance.at("label").at("kind") == "spike");
    }
    SUBCASE("level shift") {
        const auto s = inject_anomaly(from(std::vector<double>(6, 0.0)), {AnomalyKind::level_shift, 2, 4, 1}, 0);
        CHECK(s.values == std::vector<double>{0, 0, 1, 1, 1, 0});
    }
    SUBCASE("variance shift scales the window deviations") {
        const auto noise = gen_base_pattern(WhiteNoise{1, 0}, 6000, 3);
        const auto s = inject_anomaly(noise, {AnomalyKind::variance_shift, 2000, 3999, 3}, 4);
        const std::vector<double> inside(s.values.begin() + 2000, s.values.begin() + 4000);
        CHECK(std::abs(oracle::sd(inside) - 3.0) < 0.3);
    }
    SUBCASE("values outside the window are bit-identical") {
        const auto base = gen_base_pattern(Sine{1, 7, 0.2, 0}, 200, 0);
        for (auto kind : {AnomalyKind::spike, AnomalyKind::level_shift, AnomalyKind::variance_shift, AnomalyKind::pattern_break}) {
            const auto s = inject_anomaly(base, {kind, 50, kind == AnomalyKind::spike ? 50u : 80u, 2.5}, 11);
            for (std::size_t i = 0; i < 200; ++i) {
                if (i >= 50 && i <= 80) continue;
                CHECK(std::memcmp(&s.values[i], &base.values[i], sizeof(double)) == 0);
            }
        }
    }
    SUBCASE("window out of range") { CHECK_THROWS_AS(inject_anomaly(zeros, {AnomalyKind::spike, 9, 10, 1}, 0), InvalidParameter); }
    SUBCASE("zero magnitude") { CHECK_THROWS_AS(inject_anomaly(zeros, {AnomalyKind::spike, 1, 1, 0}, 0), InvalidParameter); }
}

TEST_CASE("OLS slope of a linear trend is exact") {
    for (double slope : {-3.25, 0.0, 0.001, 7.5}) {
        const auto s = gen_base_pattern(LinearTrend{slope, 2.0}, 500, 0);
        CHECK(std::abs(oracle::ols_slope(s.values) - slope) < 1e-9);
    }
}

TEST_CASE("Granger pairs") {
    int null_ok = 0, detected = 0, reverse_quiet = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto [x0, y0] = gen_granger_pair(128, 2, 0.0, seed);
        if (oracle::granger_p(x0.values, y0.values, 2) > 0.05) ++null_ok;
        const auto [x, y] = gen_granger_pair(128, 2, 0.8, seed);
        if (oracle::granger_p(x.values, y.values, 2) < 0.01) ++detected;
        if (oracle::granger_p(y.values, x.values, 2) >= 0.01) ++reverse_quiet;
    }
    CHECK(null_ok >= 90);
    CHECK(detected >= 90);
    CHECK(reverse_quiet >= 80);
    CHECK_THROWS_AS(gen_granger_pair(10, 10, 0.5, 0), InvalidParameter);
}

TEST_CASE("recipes round-trip through JSON and materialize deterministically") {
    Recipe r;
    r.components = {Sine{1, 12, 0, 0}, LinearTrend{0.1, 0}};
    r.length = 64;
    r.seed = 5;
    r.snr_db = 10;
    r.anomalies.push_back({AnomalyKind::spike, 10, 10, 4});
    const auto back = recipe_from_json(to_json(r));
    CHECK(materialize(back) == materialize(r));
    CHECK_THROWS_AS(recipe_from_json(json{{"components", json::array()}, {"bogus", 1}}), InvalidParameter);
}
