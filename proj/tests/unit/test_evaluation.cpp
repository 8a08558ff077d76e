#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "tsexam/evaluation.hpp"
#include "tsexam/rng.hpp"
#include "tsexam/templates.hpp"

using namespace tsexam;
using namespace tsexam::eval;
using doctest::Approx;

namespace {

gateway::ModelRef mock(std::vector<gateway::MockRule> rules, const std::string& id = "mock") {
    gateway::ModelRef m;
    m.model_id = id;
    m.mock = std::make_shared<gateway::MockModel>(std::move(rules));
    return m;
}

gateway::ModelRef always(const std::string& reply, const std::string& id = "mock") {
    return mock({{"*", {reply}, gateway::MockMode::cycle}}, id);
}

Exam exam_of(std::size_t n, std::uint64_t seed) { return templates::generate_exam(templates::default_counts(n), seed); }

ResponseRecord rec(const std::string& id, bool parsable, bool correct, const std::string& cand = "m",
                   const std::string& cat = "pattern_recognition") {
    ResponseRecord r;
    r.question_id = id;
    r.candidate = cand;
    r.parsable = parsable;
    r.correct = correct;
    r.category = cat;
    return r;
}

}  // namespace

TEST_CASE("answer extraction") {
    CHECK(parse_answer("The answer is [B] because the trend rises.", 4) == 1);
    CHECK(parse_answer("[A] looks plausible, but the final answer is [C].", 4) == 2);
    CHECK(parse_answer("[ b ]", 2) == 1);
    CHECK(parse_answer("Final answer: D", 4) == 3);
    CHECK(parse_answer("final answer: b.", 2) == 1);
    CHECK(parse_answer("A", 2) == 0);
    CHECK_FALSE(parse_answer("[E] is my pick", 4));
    CHECK(parse_answer("[E] no, [A]", 4) == 0);
    CHECK_FALSE(parse_answer("I cannot tell.", 4));
    CHECK_FALSE(parse_answer("", 2));
    CHECK_FALSE(parse_answer("The answer is C", 2));
    CHECK_THROWS_AS(parse_answer("A", 1), InvalidParameter);
}

TEST_CASE("accuracy counts unparsable answers as wrong") {
    const std::vector<ResponseRecord> rs{rec("1", true, true), rec("2", true, false), rec("3", false, false),
                                         rec("4", true, true, "n", "noise_understanding")};
    const auto all = accuracy(rs).at("all");
    CHECK(all.total == 4);
    CHECK(all.parsable == 3);
    CHECK(all.correct == 2);
    CHECK(all.general == Approx(0.5));
    CHECK(*all.parsable_only == Approx(2.0 / 3.0));
    const auto by_cat = accuracy(rs, GroupBy::category);
    CHECK(by_cat.at("noise_understanding").general == 1.0);
    CHECK(by_cat.at("pattern_recognition").general == Approx(1.0 / 3.0));
    CHECK(accuracy(rs, GroupBy::candidate).size() == 2);
    CHECK_FALSE(accuracy({rec("x", false, false)}).at("all").parsable_only);
    CHECK_THROWS_AS(accuracy({}), InvalidParameter);
    CHECK_THROWS_AS(group_from_string("weekday"), InvalidParameter);
}

TEST_CASE("records round-trip through JSON") {
    auto r = rec("q1", true, true);
    r.parsed_choice = 1;
    r.raw_text = "[B]";
    r.dpi = 50;
    r.error = "none";
    const auto back = record_from_json(to_json(r));
    CHECK(back.question_id == "q1");
    CHECK(back.parsed_choice == 1);
    CHECK(back.dpi == 50);
    CHECK(back.error == "none");
    CHECK_THROWS_AS(record_from_json(json{{"candidate", "x"}}), ValidationError);
}

TEST_CASE("prompts in both modalities") {
    const auto q = templates::instantiate("trend_direction", 0, 4);
    AdministerOptions text;
    text.modality = Modality::text;
    const auto t = build_prompt(q, text);
    REQUIRE(t.size() == 1);
    CHECK(t[0].images.empty());
    CHECK(t[0].text.find(gateway::serialize_text(q.series[0], 3)) != std::string::npos);
    CHECK(t[0].text.find("[A] " + q.options[0]) != std::string::npos);
    CHECK(t[0].text.find(q.format_hint) != std::string::npos);
    const auto v = build_prompt(q, {});
    REQUIRE(v.size() == 1);
    CHECK(v[0].images.size() == 2);
    CHECK(v[0].text.find(gateway::serialize_text(q.series[0], 3)) == std::string::npos);
}

TEST_CASE("administering and scoring") {
    const auto exam = exam_of(12, 3);
    gateway::Gateway gw;
    AdministerOptions opt;
    opt.modality = Modality::text;
    const auto rs = administer(exam, gw, always("My answer is [A]."), opt);
    REQUIRE(rs.size() == exam.questions.size());
    std::size_t want = 0;
    for (const auto& q : exam.questions) want += q.correct_index == 0;
    CHECK(accuracy(rs).at("all").correct == want);
    CHECK(rs[0].candidate == "mock");
    CHECK_FALSE(rs[0].dpi);

    opt.parallelism = 3;
    const auto parallel = administer(exam, gw, always("My answer is [A]."), opt);
    for (std::size_t i = 0; i < rs.size(); ++i) CHECK(parallel[i].correct == rs[i].correct);

    const auto failing = mock({{"*", {std::string(gateway::kMockAuthFailure)}, gateway::MockMode::cycle}});
    const auto errs = administer(exam, gw, failing, opt);
    CHECK_FALSE(errs[0].parsable);
    CHECK_FALSE(errs[0].error.empty());
    opt.strict = true;
    CHECK_THROWS_AS(administer(exam, gw, failing, opt), gateway::AuthError);

    const auto scored = score(exam, rs);
    CHECK(scored.size() == rs.size());
    auto missing = rs;
    const auto dropped = missing[3].question_id;
    missing.erase(missing.begin() + 3);
    try {
        score(exam, missing);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find(dropped) != std::string::npos);
    }
    auto extra = rs;
    extra.push_back(rec("ghost", true, true));
    CHECK_THROWS_AS(score(exam, extra), ValidationError);
}

TEST_CASE("judge score extraction") {
    CHECK(extract_score("7") == 7);
    CHECK(extract_score("  Score: 9/10") == 9);
    CHECK(extract_score("10") == 10);
    CHECK_FALSE(extract_score("0"));
    CHECK_FALSE(extract_score("11"));
    CHECK_FALSE(extract_score("ten"));
    CHECK_FALSE(extract_score(""));
    CHECK_FALSE(extract_score("1234"));
}

TEST_CASE("jury panel averages per criterion") {
    const auto exam = exam_of(6, 1);
    gateway::Gateway gw;
    const std::vector<gateway::ModelRef> panel{always("8", "j1"), always("Score: 6", "j2"), always("n/a", "j3")};
    const auto report = jury_score(exam.questions, gw, panel, "general");
    CHECK(report.judgments == exam.questions.size() * 5 * 3);
    CHECK(report.scored == exam.questions.size() * 5 * 2);
    CHECK(report.coverage() == Approx(2.0 / 3.0));
    CHECK(report.combined == Approx(7.0));
    CHECK(report.criterion_means.size() == 5);
    REQUIRE(report.questions.size() == exam.questions.size());
    CHECK(report.questions[0].criteria.size() == 5);
    const auto none = jury_score(exam.questions, gw, {always("??")}, "general");
    CHECK(none.combined == 0.0);
    CHECK(none.questions[0].criteria.empty());
    CHECK_THROWS_AS(jury_score(exam.questions, gw, {}, "general"), InvalidParameter);
}

TEST_CASE("criterion prompts depend on the domain") {
    for (auto c : kAllCriteria) {
        const auto generic = criterion_prompt(c, "finance");
        CHECK(generic.find("finance") != std::string::npos);
        CHECK(generic.find("{domain}") == std::string::npos);
        CHECK(criterion_prompt(c, "ECG") != generic);
        CHECK(criterion_prompt(c, "ecg") == criterion_prompt(c, "medicine"));
    }
}

TEST_CASE("edit distance agrees with a reference implementation") {
    Rng rng(5);
    for (int k = 0; k < 200; ++k) {
        std::string a, b;
        for (std::uint64_t i = rng.below(30); i > 0; --i) a += char('a' + rng.below(4));
        for (std::uint64_t i = rng.below(30); i > 0; --i) b += char('a' + rng.below(4));
        CHECK(levenshtein(a, b) == oracle::edit_distance(a, b));
    }
    CHECK(levenshtein("kitten", "sitting") == 3);
    CHECK(levenshtein("caf\xc3\xa9", "cafe") == 1);
    CHECK(levenshtein_norm("caf\xc3\xa9", "cafe") == Approx(0.25));
    CHECK(levenshtein_norm("", "") == 0.0);
    CHECK(levenshtein_norm("abc", "") == 1.0);
}

TEST_CASE("cosine distance") {
    CHECK(cosine_distance({1, 2}, {1, 2}) == 0.0);
    CHECK(cosine_distance({1, 0}, {0, 3}) == Approx(1.0));
    CHECK(cosine_distance({1, 1}, {-2, -2}) == Approx(2.0));
    CHECK(cosine_distance({0, 0}, {0, 0}) == 0.0);
    CHECK(cosine_distance({0, 0}, {1, 0}) == 1.0);
    CHECK_THROWS_AS(cosine_distance({1}, {1, 2}), InvalidParameter);
}

TEST_CASE("diversity statistics") {
    const auto exam = exam_of(30, 2);
    gateway::Gateway gw;
    const auto r = diversity(exam.questions, gw, always("", "embedder"), 10, 4);
    CHECK(r.sampled == 10);
    CHECK(r.pairs == 45);
    REQUIRE(r.embedding);
    CHECK(r.embedding->mean > 0.0);
    CHECK(r.levenshtein.mean > 0.0);
    CHECK(r.levenshtein.mean <= 1.0);

    std::vector<QuestionInstance> same(3, exam.questions[0]);
    const auto zero = diversity(same, gw, always("", "embedder"), 10);
    CHECK(zero.sampled == 3);
    CHECK(zero.levenshtein.mean == 0.0);
    CHECK(zero.embedding->mean == 0.0);

    gateway::ModelRef broken;
    broken.provider = gateway::Provider::http_compatible;
    broken.model_id = "remote";
    broken.endpoint = "http://127.0.0.1:9";
    broken.credentials = "TSEXAM_UNIT_UNSET_KEY";
    const auto partial = diversity(exam.questions, gw, broken, 5);
    CHECK_FALSE(partial.embedding);
    CHECK_FALSE(partial.embedding_error.empty());
    CHECK(partial.pairs == 10);

    std::vector<double> lev;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = i + 1; j < 3; ++j)
            lev.push_back(levenshtein_norm(question_text(exam.questions[i]), question_text(exam.questions[j])));
    const std::vector<QuestionInstance> three(exam.questions.begin(), exam.questions.begin() + 3);
    const auto d3 = diversity(three, gw, always("", "embedder"), 10);
    CHECK(d3.levenshtein.mean == Approx(oracle::mean(lev)));
    CHECK(d3.levenshtein.std == Approx(oracle::sd(lev)));
    CHECK_THROWS_AS(diversity(three, gw, always(""), 1), InvalidParameter);
}
