#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "tsexam/exam.hpp"
#include "tsexam/templates.hpp"

using namespace tsexam;

namespace {

QuestionInstance sample(const std::string& id = "q1") {
    QuestionInstance q;
    q.id = id;
    q.category = {CategoryName::pattern_recognition, "trend"};
    q.question = "Does the series trend upward?";
    q.options = {"Yes", "No"};
    q.correct_index = 1;
    TimeSeries s;
    s.values = {0.1, -0.0, 1e-300, 12345.678901234567, -2.5};
    s.seed = 99;
    s.provenance = {{"op", "pattern"}};
    q.series.push_back(s);
    return q;
}

std::string field_of(const QuestionInstance& q) {
    try {
        validate(q);
    } catch (const ValidationError& e) {
        return e.field();
    }
    return "";
}

}  // namespace

TEST_CASE("taxonomy has five categories and their subcategories") {
    CHECK(std::size(kAllCategories) == 5);
    CHECK(subcategories(CategoryName::pattern_recognition).size() == 6);
    CHECK(subcategories(CategoryName::noise_understanding).size() == 3);
    CHECK(subcategories(CategoryName::anomaly_detection).size() == 1);
    CHECK(subcategories(CategoryName::comparative_analysis).size() == 2);
    CHECK(subcategories(CategoryName::causality_analysis).size() == 1);
    for (auto c : kAllCategories) CHECK(category_from_string(to_string(c)) == c);
    CHECK_FALSE(category_from_string("forecasting"));
}

TEST_CASE("question validation names the offending field") {
    CHECK(field_of(sample()).empty());
    auto q = sample();
    q.id.clear();
    CHECK(field_of(q) == "id");
    q = sample();
    q.category.subcategory = "granger";
    CHECK(field_of(q) == "category");
    q = sample();
    q.options = {"Yes"};
    CHECK(field_of(q) == "options");
    q.options = {"a", "b", "c", "d", "e"};
    CHECK(field_of(q) == "options");
    q.options = {"Yes", "Yes"};
    CHECK(field_of(q) == "options");
    q = sample();
    q.correct_index = 2;
    CHECK(field_of(q) == "correct_index");
    q.correct_index = -1;
    CHECK(field_of(q) == "correct_index");
    q = sample();
    q.series.clear();
    CHECK(field_of(q) == "series");
    q = sample();
    q.series.resize(3, q.series[0]);
    CHECK(field_of(q) == "series");
    q = sample();
    q.series[0].values.clear();
    CHECK(field_of(q) == "series");
    q = sample();
    q.series[0].values[2] = std::nan("");
    CHECK(field_of(q) == "series");
}

TEST_CASE("exam validation rejects duplicate ids") {
    Exam e;
    e.questions = {sample("a"), sample("a")};
    CHECK_THROWS_AS(validate(e), ValidationError);
}

TEST_CASE("serialization round-trips bit-exactly") {
    Exam e;
    e.metadata = {"digest", 42, 2};
    auto q = sample();
    q.icl_example = IclExample{"Example?", "[A] Yes", {q.series[0]}};
    q.hint = "look at the ends";
    q.concept_notes = "slope";
    q.relevant_concepts = {"trend"};
    q.detractor_types = {"noise"};
    q.domain = "finance";
    e.questions.push_back(q);
    e.questions.push_back(sample("q2"));
    const auto back = exam_io::parse(exam_io::serialize(e));
    CHECK(back == e);
    CHECK(std::signbit(back.questions[0].series[0].values[1]));
    CHECK(exam_io::serialize(back) == exam_io::serialize(e));
}

TEST_CASE("generated exams round-trip through files") {
    const auto e = templates::generate_exam(templates::default_counts(40), 3);
    const auto path = std::filesystem::temp_directory_path() / "tsexam_unit_exam.jsonl";
    save_exam(e, path);
    CHECK(load_exam(path) == e);
    std::filesystem::remove(path);
}

TEST_CASE("malformed files report the line and field") {
    Exam e;
    e.questions = {sample("a"), sample("b")};
    const std::string text = exam_io::serialize(e);
    const auto first_nl = text.find('\n');
    const auto second_nl = text.find('\n', first_nl + 1);

    SUBCASE("bad JSON on line 3") {
        const std::string bad = text.substr(0, second_nl + 1) + "{not json\n";
        try {
            exam_io::parse(bad);
            FAIL("expected ExamFormatError");
        } catch (const ExamFormatError& err) {
            CHECK(err.line() == 3);
        }
    }
    SUBCASE("missing option list") {
        auto j = json::parse(text.substr(first_nl + 1, second_nl - first_nl - 1));
        j.erase("options");
        const std::string bad = text.substr(0, first_nl + 1) + j.dump() + "\n" + text.substr(second_nl + 1);
        try {
            exam_io::parse(bad);
            FAIL("expected ExamFormatError");
        } catch (const ExamFormatError& err) {
            CHECK(err.line() == 2);
            CHECK(err.field() == "options");
        }
    }
    SUBCASE("missing header") {
        CHECK_THROWS_AS(exam_io::parse(text.substr(first_nl + 1)), ExamFormatError);
    }
    SUBCASE("unsupported schema version") {
        auto header = json::parse(text.substr(0, first_nl));
        header["schema_version"] = 99;
        try {
            exam_io::parse(header.dump() + "\n" + text.substr(first_nl + 1));
            FAIL("expected ExamFormatError");
        } catch (const ExamFormatError& err) {
            CHECK(err.field() == "schema_version");
        }
    }
    SUBCASE("truncated file") {
        try {
            exam_io::parse(text.substr(0, second_nl + 1));
            FAIL("expected ExamFormatError");
        } catch (const ExamFormatError& err) {
            CHECK(err.field() == "question_count");
        }
    }
    SUBCASE("empty input") { CHECK_THROWS_AS(exam_io::parse(""), ExamFormatError); }
    SUBCASE("unreadable path") { CHECK_THROWS_AS(load_exam("/nonexistent/dir/exam.jsonl"), IoError); }
    SUBCASE("CRLF line endings parse") {
        std::string crlf;
        for (char c : text) {
            if (c == '\n') crlf += '\r';
            crlf += c;
        }
        CHECK(exam_io::parse(crlf) == e);
    }
}

TEST_CASE("category counts and option letters") {
    Exam e;
    e.questions = {sample("a"), sample("b")};
    e.questions[1].category = {CategoryName::causality_analysis, "granger"};
    const auto counts = category_counts(e);
    REQUIRE(counts.size() == 5);
    CHECK(counts[0].second == 1);
    CHECK(counts[4].second == 1);
    CHECK(option_letter(0) == "A");
    CHECK(option_letter(3) == "D");
}
