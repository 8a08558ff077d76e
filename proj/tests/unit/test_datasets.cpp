#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "tsexam/datasets.hpp"

using namespace tsexam;
using namespace tsexam::data;
namespace fs = std::filesystem;

namespace {

fs::path write(const std::string& name, const std::string& text) {
    const auto dir = fs::temp_directory_path() / "tsexam_unit_datasets";
    fs::create_directories(dir);
    const auto path = dir / name;
    std::ofstream(path, std::ios::binary) << text;
    return path;
}

ColumnMapping mapping(std::vector<std::string> values, std::vector<std::string> meta = {},
                      std::optional<std::string> group = std::nullopt, std::optional<std::string> sort = std::nullopt) {
    return {std::move(values), std::move(meta), std::move(group), std::move(sort)};
}

}  // namespace

TEST_CASE("quoted delimited cells") {
    CHECK(split_delimited("a,b,c", ',') == std::vector<std::string>{"a", "b", "c"});
    CHECK(split_delimited("\"x,y\",2", ',') == std::vector<std::string>{"x,y", "2"});
    CHECK(split_delimited("\"say \"\"hi\"\"\",", ',') == std::vector<std::string>{"say \"hi\"", ""});
    CHECK(split_delimited("a\tb", '\t') == std::vector<std::string>{"a", "b"});
}

TEST_CASE("groups keep first-appearance order and sort numerically") {
    const auto path = write("grouped.csv", "id,t,v,site\nb,10,5,\"North, upper\"\nb,2,4,x\na,1,1,y\nb,9,3,x\n");
    const auto ds = load_tabular(path, mapping({"v"}, {"site"}, "id", "t"));
    REQUIRE(ds->size() == 2);
    const auto b = ds->query(0);
    CHECK(b.metadata.at("id") == "b");
    CHECK(b.channels.at(0) == std::vector<double>{4, 3, 5});
    CHECK(b.metadata.at("site") == "x");
    CHECK(ds->query(1).channels.at(0) == std::vector<double>{1});
    CHECK(ds->schema().channels == std::vector<std::string>{"v"});
    REQUIRE(ds->schema().find_metadata("site"));
    CHECK(ds->schema().find_metadata("site")->type == ColumnType::string);
    CHECK_THROWS_AS(ds->query(2), InvalidParameter);
}

TEST_CASE("numeric metadata is typed as number") {
    const auto ds = load_tabular(write("num.csv", "rec,v\n100,1\n100,2\n101,3\n"), mapping({"v"}, {}, "rec"));
    REQUIRE(ds->size() == 2);
    CHECK(ds->query(0).metadata.at("rec") == 100);
    CHECK(ds->schema().find_metadata("rec")->type == ColumnType::number);
}

TEST_CASE("without grouping the file is one sample with several channels") {
    const auto ds = load_tabular(write("flat.tsv", "a\tb\n1\t10\n2\t20\n\n3\t30\r\n"), mapping({"a", "b"}));
    REQUIRE(ds->size() == 1);
    CHECK(ds->query(0).channels == std::vector<std::vector<double>>{{1, 2, 3}, {10, 20, 30}});
}

TEST_CASE("blank value cells are skipped with a warning") {
    std::vector<std::string> warnings;
    const auto ds =
        load_tabular(write("gaps.csv", "g,v\nx,1\nx,\ny, \nx,2\n"), mapping({"v"}, {}, "g"), &warnings);
    REQUIRE(ds->size() == 1);
    CHECK(ds->query(0).channels[0] == std::vector<double>{1, 2});
    CHECK(warnings.size() == 3);  // x skipped one row, y skipped one row and was dropped
}

TEST_CASE("malformed files name the data row") {
    try {
        load_tabular(write("bad.csv", "g,v\nx,1\nx,abc\n"), mapping({"v"}, {}, "g"));
        FAIL("expected DatasetError");
    } catch (const DatasetError& e) {
        CHECK(e.row() == 2);
    }
    try {
        load_tabular(write("ragged.csv", "g,v\nx,1,3\n"), mapping({"v"}));
        FAIL("expected DatasetError");
    } catch (const DatasetError& e) {
        CHECK(e.row() == 1);
    }
    CHECK_THROWS_AS(load_tabular(write("cols.csv", "g,v\nx,1\n"), mapping({"w"})), DatasetError);
    CHECK_THROWS_AS(load_tabular(write("empty.csv", ""), mapping({"v"})), DatasetError);
    CHECK_THROWS_AS(load_tabular("/nonexistent/file.csv", mapping({"v"})), DatasetError);
    CHECK_THROWS_AS(load_tabular(write("novals.csv", "v\n1\n"), mapping({})), InvalidParameter);
}

TEST_CASE("newline-delimited JSON records") {
    const auto path = write("rows.jsonl", "{\"s\":\"a\",\"t\":1,\"v\":0.5}\n{\"s\":\"a\",\"t\":0,\"v\":-1}\n"
                                          "{\"s\":\"b\",\"t\":0,\"v\":null}\n");
    std::vector<std::string> warnings;
    const auto ds = load_tabular(path, mapping({"v"}, {}, "s", "t"), &warnings);
    REQUIRE(ds->size() == 1);
    CHECK(ds->query(0).channels[0] == std::vector<double>{-1, 0.5});
    CHECK_FALSE(warnings.empty());
    try {
        load_tabular(write("broken.jsonl", "{\"v\":1}\n[1]\n"), mapping({"v"}));
        FAIL("expected DatasetError");
    } catch (const DatasetError& e) {
        CHECK(e.row() == 2);
    }
}

TEST_CASE("column mappings from JSON") {
    const auto m = mapping_from_json(json{{"value_columns", {"close"}}, {"group_by", "ticker"}});
    CHECK(m.value_columns == std::vector<std::string>{"close"});
    CHECK(m.group_by == "ticker");
    CHECK_FALSE(m.sort_by);
    try {
        mapping_from_json(json{{"value_columns", {"v"}}, {"groupby", "x"}});
        FAIL("expected InvalidParameter");
    } catch (const InvalidParameter& e) {
        CHECK(e.field() == "mapping.groupby");
    }
    CHECK_THROWS_AS(mapping_from_json(json{{"metadata_columns", {"v"}}}), InvalidParameter);
}

TEST_CASE("in-memory datasets infer their schema") {
    Sample a, b;
    a.channels = {{1, 2}};
    a.metadata = {{"k", 1}, {"name", "x"}};
    b.channels = {{3}};
    b.metadata = {{"k", "two"}};
    const InMemoryDataset ds({a, b}, {"value"});
    CHECK(ds.size() == 2);
    REQUIRE(ds.schema().metadata.size() == 2);
    CHECK(ds.schema().metadata[0] == Column{"k", ColumnType::string});
    CHECK(ds.schema().metadata[1] == Column{"name", ColumnType::string});
}

TEST_CASE("synthetic datasets materialize recipes on demand") {
    synth::Recipe r;
    r.components = {synth::LinearTrend{1.0, 0.0}};
    r.length = 5;
    const auto ds = synthetic_adapter({{r, json{{"shape", "up"}, {"id", 3}}}, {r, json::object()}});
    CHECK(ds->size() == 2);
    const auto s = ds->query(0);
    CHECK(s.channels.at(0) == std::vector<double>{0, 1, 2, 3, 4});
    CHECK(s.metadata.at("shape") == "up");
    CHECK(ds->schema().channels == std::vector<std::string>{"value"});
    CHECK_THROWS_AS(ds->query(5), InvalidParameter);
    CHECK_THROWS_AS(synthetic_adapter({}), InvalidParameter);
    CHECK_THROWS_AS(synthetic_adapter({{r, json{{"bad", json::array()}}}}), InvalidParameter);
}
