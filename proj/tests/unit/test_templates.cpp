#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "template_oracles.hpp"
#include "tsexam/rng.hpp"
#include "tsexam/synth.hpp"
#include "tsexam/templates.hpp"

using namespace tsexam;
using namespace tsexam::templates;

namespace {

constexpr int kSeeds = 20;

using oracle::values;
using Check = std::function<void(const QuestionInstance&, int option)>;

void for_each_instance(const std::string& id, const Check& check) {
    const int options = template_meta(id).option_count;
    for (int option = 0; option < options; ++option) {
        for (int seed = 0; seed < kSeeds; ++seed) {
            const auto q = instantiate(id, option, derive_seed(std::uint64_t(seed), id));
            CAPTURE(option);
            CAPTURE(seed);
            REQUIRE(q.correct_index == option);
            check(q, option);
        }
    }
}

void check_oracle(const std::string& id) {
    const auto& oracle = oracle::template_oracles().at(id);
    for_each_instance(id, [&](const QuestionInstance& q, int option) { CHECK(oracle(q, option) == ""); });
}

}  // namespace

TEST_CASE("registry lists thirteen templates in id order") {
    const auto all = list_templates();
    REQUIRE(all.size() == 13);
    for (std::size_t k = 1; k < all.size(); ++k) CHECK(all[k - 1].template_id < all[k].template_id);
    std::size_t total = 0;
    for (auto c : kAllCategories) {
        const auto some = list_templates(c);
        CHECK_FALSE(some.empty());
        for (const auto& m : some) CHECK(m.category.name == c);
        total += some.size();
    }
    CHECK(total == 13);
    CHECK(list_templates("causality_analysis").size() == 1);
    CHECK(list_templates("not_a_category").empty());
    CHECK_THROWS_AS(template_meta("nope"), UnknownTemplate);
    CHECK_THROWS_AS(instantiate("nope", std::nullopt, 0), UnknownTemplate);
    CHECK_THROWS_AS(instantiate("trend_direction", 3, 0), InvalidParameter);
}

TEST_CASE("instances are valid, deterministic and carry a worked example") {
    for (const auto& m : list_templates()) {
        CAPTURE(m.template_id);
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto q = instantiate(m.template_id, std::nullopt, seed);
            CHECK_NOTHROW(validate(q));
            CHECK(q == instantiate(m.template_id, std::nullopt, seed));
            CHECK(int(q.options.size()) == m.option_count);
            CHECK(q.category == m.category);
            CHECK(values(q).size() == kQuestionLength);
            if (m.template_id != "anomaly_types") CHECK(int(q.series.size()) == m.series_count);
            REQUIRE(q.icl_example);
            CHECK(q.icl_example->series.front().values.size() == kExampleLength);
            CHECK(q.icl_example->answer.substr(0, 1) == "[");
            CHECK(q.series[0].provenance.at("template_id") == m.template_id);
            CHECK(q.series[0].provenance.at("conditioned_on") == q.correct_index);
        }
        CHECK(instantiate(m.template_id, std::nullopt, 1).series[0].values !=
              instantiate(m.template_id, std::nullopt, 2).series[0].values);
    }
}

TEST_CASE("trend_direction follows the fitted slope") {
    check_oracle("trend_direction");
}

TEST_CASE("sine_amplitude_change compares the swing of the first and last quarters") {
    check_oracle("sine_amplitude_change");
}

TEST_CASE("stationarity_after_cycle has a trend only when not stationary") {
    check_oracle("stationarity_after_cycle");
}

TEST_CASE("regime_count matches the number of level jumps") {
    check_oracle("regime_count");
}

TEST_CASE("mean_stability detects a sustained shift") {
    check_oracle("mean_stability");
}

TEST_CASE("mean_reversion and random_walk separate by level persistence") {
    check_oracle("mean_reversion");
    check_oracle("random_walk");
}

TEST_CASE("white_noise has no lag-1 memory") {
    check_oracle("white_noise");
}

TEST_CASE("snr_comparison marks the series with more noise around the clean pattern") {
    check_oracle("snr_comparison");
}

TEST_CASE("anomaly_types injects exactly the two labeled kinds") {
    check_oracle("anomaly_types");
    // Some questions carry a clean reference series, most do not.
    std::size_t with_reference = 0, total = 0;
    for_each_instance("anomaly_types", [&](const QuestionInstance& q, int) {
        with_reference += q.series.size() == 2;
        ++total;
    });
    CHECK(with_reference > 0);
    CHECK(with_reference < total);
}

TEST_CASE("shape_similarity correlates only matching shapes") {
    check_oracle("shape_similarity");
}

TEST_CASE("variance_comparison compares increment spread") {
    check_oracle("variance_comparison");
}

TEST_CASE("granger_causality is detected by an F-test in one direction") {
    check_oracle("granger_causality");
}

TEST_CASE("every template has an oracle") {
    for (const auto& m : list_templates()) CHECK(oracle::template_oracles().count(m.template_id) == 1);
}

TEST_CASE("reference category counts") {
    const auto counts = default_counts();
    std::size_t total = 0;
    for (const auto& [c, n] : counts) total += n;
    CHECK(total == 763);
    CHECK(counts.at(CategoryName::pattern_recognition) == 371);
    CHECK(counts.at(CategoryName::anomaly_detection) == 129);
    CHECK(counts.at(CategoryName::comparative_analysis) == 113);
    CHECK(counts.at(CategoryName::noise_understanding) == 87);
    CHECK(counts.at(CategoryName::causality_analysis) == 63);
    for (std::size_t n : {1u, 10u, 97u, 500u}) {
        std::size_t sum = 0;
        for (const auto& [c, k] : default_counts(n)) sum += k;
        CHECK(sum == n);
    }
}

TEST_CASE("generate_exam honors counts and balances answers") {
    std::map<CategoryName, std::size_t> counts{{CategoryName::pattern_recognition, 24},
                                                {CategoryName::causality_analysis, 10}};
    const auto exam = generate_exam(counts, 5);
    CHECK_NOTHROW(validate(exam));
    REQUIRE(exam.questions.size() == 34);
    const auto got = category_counts(exam);
    CHECK(got[0].second == 24);
    CHECK(got[4].second == 10);
    int yes = 0;
    for (const auto& q : exam.questions) {
        if (q.category.name == CategoryName::causality_analysis) yes += q.correct_index == 0;
    }
    CHECK(yes == 5);
    CHECK(generate_exam(counts, 5) == exam);
    CHECK(generate_exam(counts, 6) != exam);
}

TEST_CASE("sample_question draws from the requested category") {
    for (auto c : kAllCategories) {
        const auto q = sample_question(c, 3, "x1");
        CHECK(q.category.name == c);
        CHECK(q.id == "x1");
    }
}
