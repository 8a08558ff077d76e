#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "tsexam/dsl.hpp"

using namespace tsexam;
using namespace tsexam::dsl;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = TSEXAM_FIXTURES;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

TemplateProgram fixture(const std::string& name) { return parse(std::string_view(slurp(kFixtures / "dsl" / name))); }

data::DatasetPtr dataset(const std::string& file, std::vector<std::string> values, std::vector<std::string> meta,
                         std::string group, std::string sort) {
    data::ColumnMapping m;
    m.value_columns = std::move(values);
    m.metadata_columns = std::move(meta);
    m.group_by = std::move(group);
    m.sort_by = std::move(sort);
    return data::load_tabular(kFixtures / "data" / file, m);
}

data::InMemoryDataset single(std::vector<double> values) {
    data::Sample s;
    s.channels = {std::move(values)};
    return data::InMemoryDataset({s}, {"value"});
}

ErrorCode code_of(std::string_view text) {
    try {
        parse(text);
    } catch (const DslError& e) {
        return e.code();
    }
    FAIL("document parsed without error");
    return ErrorCode::PARSE_ERROR;
}

json trend_doc() { return json::parse(slurp(kFixtures / "dsl" / "trend_rule.json")); }

Value eval(std::string_view src, const std::map<std::string, Value>& env = {}) {
    return eval_expression(*parse_expression(src), env);
}

std::vector<double> window_of(const data::DatasetAdapter& ds, const TimeSeries& s) {
    const auto& p = s.provenance;
    const auto ch = ds.query(p.at("index").get<std::size_t>()).channels.front();
    const auto start = p.at("window").at("start").get<std::ptrdiff_t>();
    const auto length = p.at("window").at("length").get<std::ptrdiff_t>();
    return {ch.begin() + start, ch.begin() + start + length};
}

std::vector<std::size_t> runs(const std::vector<double>& r) {
    auto sign = [](double v) { return (v > 0) - (v < 0); };
    std::vector<std::size_t> out{1};
    for (std::size_t i = 1; i < r.size(); ++i) {
        if (sign(r[i]) == sign(r[i - 1])) {
            ++out.back();
        } else {
            out.push_back(1);
        }
    }
    return out;
}

// Independent restatement of the finance template's answer rules.
int finance_option(const std::vector<double>& x) {
    std::vector<double> r;
    for (std::size_t i = 1; i < x.size(); ++i) r.push_back((x[i] - x[i - 1]) / x[i - 1]);
    double up = 0, down = 0;
    for (double v : r) {
        up += v > 0;
        down += v < 0;
    }
    const double consistency = std::max(up, down) / double(r.size());
    const auto rs = runs(r);
    double avg = 0;
    for (auto k : rs) avg += double(k);
    avg /= double(rs.size());
    const double longest = double(*std::max_element(rs.begin(), rs.end()));
    const double overall = std::abs((x.back() - x.front()) / x.front());
    const double strength =
        consistency * 0.4 + std::min(avg / 5, 1.0) * 0.3 + std::min(overall * 10, 1.0) * 0.3;
    if (strength >= 0.7 && longest >= 5) return 0;
    if (strength < 0.4 || consistency < 0.6) return 1;
    if (strength >= 0.4 && strength < 0.7) return 2;
    return 3;
}

}  // namespace

TEST_CASE("expressions") {
    CHECK(std::get<double>(eval("1 + 2 * 3")) == 7);
    CHECK(std::get<double>(eval("(1 + 2) * 3")) == 9);
    CHECK(std::get<double>(eval("-2 * -3")) == 6);
    CHECK(std::get<bool>(eval("1 < 2 && 3 >= 3")));
    CHECK(std::get<bool>(eval("not (1 > 2) and true")));
    CHECK(std::get<bool>(eval("false || !false")));
    CHECK(std::get<bool>(eval("meta.label == 'N'", {{"meta.label", std::string("N")}})));
    CHECK(std::get<double>(eval("mean(x) + len(x)", {{"x", std::vector<double>{1, 2, 3}}})) == 5);
    CHECK(std::get<double>(eval("floor(7 / 2)")) == 3);
    CHECK(std::get<double>(eval("round(2.5)")) == 3);
    CHECK(std::get<double>(eval("round(-2.5)")) == -3);
    CHECK_THROWS_AS(parse_expression("1 +"), DslError);
    CHECK_THROWS_AS(parse_expression("(1"), DslError);

    std::vector<std::string> ids;
    collect_identifiers(*parse_expression("a + f(b) > meta.c || meta2.d"), ids);
    std::sort(ids.begin(), ids.end());
    CHECK(ids == std::vector<std::string>{"a", "b", "meta.c", "meta2.d"});
}

TEST_CASE("function library") {
    const auto names = function_names();
    CHECK(std::is_sorted(names.begin(), names.end()));
    for (const char* f : {"ols_slope", "mean", "std", "rolling_mean", "returns", "floor", "round"})
        CHECK(std::find(names.begin(), names.end(), f) != names.end());
    CHECK(function_signatures().size() >= names.size());
    const std::vector<double> v{3, 1, 4, 1, 5, 9, 2, 6};
    const std::map<std::string, Value> env{{"x", v}};
    CHECK(std::get<double>(eval("ols_slope(x)", env)) == doctest::Approx(oracle::ols_slope(v)));
    CHECK(std::get<double>(eval("std(x)", env)) == doctest::Approx(oracle::sd(v)));
}

TEST_CASE("error fixtures map to their codes") {
    const auto expected = json::parse(slurp(kFixtures / "dsl" / "errors" / "expected.json"));
    CHECK(expected.size() >= 15);
    for (auto it = expected.begin(); it != expected.end(); ++it) {
        CAPTURE(it.key());
        const auto want = code_from_name(it.value().get<std::string>());
        REQUIRE(want);
        try {
            parse(std::string_view(slurp(kFixtures / "dsl" / "errors" / it.key())));
            FAIL("expected DslError");
        } catch (const DslError& e) {
            bool found = false;
            for (const auto& d : e.diagnostics()) found |= d.code == *want;
            CHECK(found);
            CHECK(e.code() == *want);
            CHECK_FALSE(e.diagnostics().front().location.empty());
        }
    }
}

TEST_CASE("code names round-trip") {
    for (int c = 0; c <= int(ErrorCode::INVALID_INSTANCE); ++c) {
        const auto code = ErrorCode(c);
        CHECK(code_from_name(code_name(code)) == code);
    }
    CHECK_FALSE(code_from_name("NOPE"));
}

TEST_CASE("static checks collect several problems at once") {
    auto doc = trend_doc();
    doc["features"]["bad"] = "nosuch(x)";
    doc["question"] = "Is {missing} rising?";
    try {
        parse(doc);
        FAIL("expected DslError");
    } catch (const DslError& e) {
        std::set<ErrorCode> codes;
        for (const auto& d : e.diagnostics()) codes.insert(d.code);
        CHECK(codes.count(ErrorCode::UNKNOWN_FUNCTION));
        CHECK(codes.count(ErrorCode::UNBOUND_PLACEHOLDER));
    }
    doc = trend_doc();
    doc["answer_rules"][0]["when"] = "slope > 0.5 &&";
    CHECK(code_of(doc.dump()) == ErrorCode::PARSE_ERROR);
}

TEST_CASE("program defaults") {
    const auto p = fixture("trend_rule.json");
    CHECK(p.category == Category{CategoryName::pattern_recognition, "statistical_properties"});
    CHECK(p.format_hint == kDefaultFormatHint);
    CHECK(p.selection.series_count == 1);
    CHECK_FALSE(p.selection.window);
    REQUIRE(p.rules.size() == 2);
    CHECK_FALSE(p.rules[1].when);
}

TEST_CASE("a rising series selects the first option") {
    const auto p = fixture("trend_rule.json");
    const auto rising = single({0, 1, 2, 3});
    const auto r = evaluate(p, rising, 1, 0);
    REQUIRE(r.questions.size() == 1);
    CHECK(r.questions[0].correct_index == 0);
    CHECK(r.questions[0].series[0].values == std::vector<double>{0, 1, 2, 3});
    CHECK(r.report.trace[0].features.at("slope").get<double>() == doctest::Approx(1.0));
    const auto flat = single({1, 1, 1, 1});
    CHECK(evaluate(p, flat, 1, 0).questions.at(0).correct_index == 1);
}

TEST_CASE("evaluation against an unusable dataset") {
    auto doc = trend_doc();
    SUBCASE("unknown channel") {
        doc["selection"] = {{"channels", {"nope"}}};
        try {
            evaluate(parse(doc), single({0, 1, 2}), 1, 0);
            FAIL("expected DslError");
        } catch (const DslError& e) {
            CHECK(e.code() == ErrorCode::SCHEMA_MISMATCH);
        }
    }
    SUBCASE("unknown metadata column") {
        doc["question"] = "Is {ticker} rising?";
        doc["selection"] = {{"metadata", {"ticker"}}};
        const auto diags = validate(parse(doc), single({0, 1, 2}));
        REQUIRE_FALSE(diags.empty());
        CHECK(diags[0].code == ErrorCode::SCHEMA_MISMATCH);
    }
    SUBCASE("window longer than every series") {
        doc["selection"] = {{"window", {{"min_length", 10}, {"max_length", 20}}}};
        const auto diags = validate(parse(doc), single({0, 1, 2, 3}));
        REQUIRE(diags.size() == 1);
        CHECK(diags[0].code == ErrorCode::WINDOW_INFEASIBLE);
    }
    SUBCASE("pairs need two samples") {
        doc["selection"] = {{"series_count", 2}, {"pair_samples", true}};
        const auto diags = validate(parse(doc), single({0, 1, 2, 3}));
        REQUIRE_FALSE(diags.empty());
        CHECK(diags[0].code == ErrorCode::INSUFFICIENT_SAMPLES);
    }
    SUBCASE("zero samples requested") {
        doc["selection"] = {{"channels", {"nope"}}};
        const auto r = evaluate(parse(doc), single({0, 1}), 0, 0);
        CHECK(r.questions.empty());
        CHECK(r.report.attempted == 0);
    }
}

TEST_CASE("placeholders format numbers") {
    auto doc = trend_doc();
    doc["question"] = "The slope is {slope:2} over {length} steps.";
    const auto r = evaluate(parse(doc), single({0, 1, 2, 3}), 1, 0);
    CHECK(r.questions.at(0).question == "The slope is 1.00 over 4 steps.");
}

TEST_CASE("finance template matches an independent restatement of its rules") {
    const auto ds = dataset("finance.csv", {"close"}, {"ticker"}, "ticker", "day");
    const auto p = fixture("finance_trend_strength.json");
    CHECK(validate(p, *ds).empty());
    const auto r = evaluate(p, *ds, 40, 3);
    REQUIRE(r.questions.size() == 40);
    std::set<int> seen;
    for (const auto& q : r.questions) {
        const auto& x = q.series.at(0).values;
        CHECK(x == window_of(*ds, q.series[0]));
        CHECK(x.size() >= 50);
        CHECK(x.size() <= 200);
        CHECK(q.correct_index == finance_option(x));
        CHECK(q.question.find("{") == std::string::npos);
        CHECK(q.domain == "finance");
        CHECK_NOTHROW(validate(q));
        seen.insert(q.correct_index);
    }
    CHECK(seen.size() >= 2);
    CHECK(evaluate(p, *ds, 40, 3).questions == r.questions);
}

TEST_CASE("ecg template answers from the beat label and filters the rest") {
    const auto ds = dataset("ecg.csv", {"mlii"}, {"record", "lead", "label"}, "record", "t");
    const auto p = fixture("ecg_label.json");
    const auto r = evaluate(p, *ds, 30, 1);
    REQUIRE(r.questions.size() == 30);
    const std::map<std::string, int> option_of{{"N", 0}, {"V", 1}, {"L", 2}, {"A", 3}};
    for (const auto& q : r.questions) {
        const auto index = q.series[0].provenance.at("index").get<std::size_t>();
        const auto label = ds->query(index).metadata.at("label").get<std::string>();
        REQUIRE(option_of.count(label));
        CHECK(q.correct_index == option_of.at(label));
        CHECK(q.series[0].provenance.at("window").at("start") == 0);
        CHECK(q.question.find("lead MLII") != std::string::npos);
    }
    CHECK(r.report.skipped.count("filtered_out"));
}

TEST_CASE("weather template recovers each station's drift") {
    const auto ds = dataset("weather.csv", {"temperature"}, {"station"}, "station", "hour");
    const auto p = fixture("weather_warming.json");
    const auto r = evaluate(p, *ds, 12, 5);
    REQUIRE(r.questions.size() == 12);
    const std::map<std::string, int> expected{{"north", 0}, {"south", 1}, {"coast", 2}};
    for (const auto& q : r.questions) {
        const auto index = q.series[0].provenance.at("index").get<std::size_t>();
        const auto station = ds->query(index).metadata.at("station").get<std::string>();
        CAPTURE(station);
        CHECK(q.correct_index == expected.at(station));
        CHECK(q.question.find(station) != std::string::npos);
    }
}
