#include "tsexam/exam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace tsexam {

std::string to_string(CategoryName name) {
    switch (name) {
        case CategoryName::pattern_recognition: return "pattern_recognition";
        case CategoryName::noise_understanding: return "noise_understanding";
        case CategoryName::anomaly_detection: return "anomaly_detection";
        case CategoryName::comparative_analysis: return "comparative_analysis";
        case CategoryName::causality_analysis: return "causality_analysis";
    }
    return "pattern_recognition";
}

std::optional<CategoryName> category_from_string(std::string_view s) {
    for (auto c : kAllCategories) {
        if (to_string(c) == s) return c;
    }
    return std::nullopt;
}

const std::vector<std::string>& subcategories(CategoryName name) {
    static const std::map<CategoryName, std::vector<std::string>> table{
        {CategoryName::pattern_recognition,
         {"trend", "cyclic", "stationarity", "regime_switching", "statistical_properties", "random_processes"}},
        {CategoryName::noise_understanding, {"white_noise", "random_walk", "signal_noise_ratio"}},
        {CategoryName::anomaly_detection, {"anomaly"}},
        {CategoryName::comparative_analysis, {"shape", "distributional"}},
        {CategoryName::causality_analysis, {"granger"}},
    };
    return table.at(name);
}

std::string option_letter(std::size_t index) { return std::string(1, static_cast<char>('A' + index)); }

void validate(const QuestionInstance& q) {
    if (q.id.empty()) throw ValidationError("id", "must be non-empty");
    const auto& subs = subcategories(q.category.name);
    if (std::find(subs.begin(), subs.end(), q.category.subcategory) == subs.end())
        throw ValidationError("category", "subcategory '" + q.category.subcategory + "' not in taxonomy for " +
                                              to_string(q.category.name));
    if (q.options.size() < 2 || q.options.size() > 4) throw ValidationError("options", "must hold 2 to 4 entries");
    std::set<std::string> distinct(q.options.begin(), q.options.end());
    if (distinct.size() != q.options.size()) throw ValidationError("options", "entries must be pairwise distinct");
    if (q.correct_index < 0 || q.correct_index >= static_cast<int>(q.options.size()))
        throw ValidationError("correct_index", "out of range for " + std::to_string(q.options.size()) + " options");
    if (q.series.empty() || q.series.size() > 2) throw ValidationError("series", "must hold 1 or 2 series");
    for (const auto& s : q.series) {
        if (s.values.empty()) throw ValidationError("series", "series must be non-empty");
        for (double v : s.values) {
            if (!std::isfinite(v)) throw ValidationError("series", "values must be finite");
        }
    }
}

void validate(const Exam& exam) {
    std::set<std::string> ids;
    for (const auto& q : exam.questions) {
        validate(q);
        if (!ids.insert(q.id).second) throw ValidationError("id", "duplicate id '" + q.id + "'");
    }
}

std::vector<std::pair<CategoryName, std::size_t>> category_counts(const Exam& exam) {
    std::vector<std::pair<CategoryName, std::size_t>> out;
    for (auto c : kAllCategories) {
        const auto n = static_cast<std::size_t>(std::count_if(exam.questions.begin(), exam.questions.end(),
                                                              [c](const auto& q) { return q.category.name == c; }));
        out.emplace_back(c, n);
    }
    return out;
}

namespace exam_io {
namespace {

const json& require_field(const json& j, const char* key) {
    if (!j.contains(key)) throw ValidationError(key, "missing");
    return j.at(key);
}

template <class T>
T field_as(const json& j, const char* key) {
    try {
        return require_field(j, key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(key, "wrong type");
    }
}

std::vector<std::string> string_list(const json& j, const char* key) {
    if (!j.contains(key)) return {};
    return field_as<std::vector<std::string>>(j, key);
}

}  // namespace

json to_json(const TimeSeries& s) { return {{"values", s.values}, {"seed", s.seed}, {"provenance", s.provenance}}; }

TimeSeries series_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("series", "must be an object");
    TimeSeries s;
    s.values = field_as<std::vector<double>>(j, "values");
    s.seed = j.contains("seed") ? field_as<std::uint64_t>(j, "seed") : 0;
    s.provenance = j.value("provenance", json::object());
    return s;
}

json to_json(const QuestionInstance& q) {
    json series = json::array();
    for (const auto& s : q.series) series.push_back(to_json(s));
    json j{{"id", q.id},
           {"category", {{"name", to_string(q.category.name)}, {"subcategory", q.category.subcategory}}},
           {"question", q.question},
           {"options", q.options},
           {"correct_index", q.correct_index},
           {"series", std::move(series)},
           {"relevant_concepts", q.relevant_concepts},
           {"detractor_types", q.detractor_types},
           {"format_hint", q.format_hint},
           {"domain", q.domain}};
    if (q.icl_example) {
        json ex_series = json::array();
        for (const auto& s : q.icl_example->series) ex_series.push_back(to_json(s));
        j["icl_example"] = {
            {"question", q.icl_example->question}, {"answer", q.icl_example->answer}, {"series", ex_series}};
    }
    if (q.hint) j["hint"] = *q.hint;
    if (q.concept_notes) j["concept_notes"] = *q.concept_notes;
    return j;
}

QuestionInstance question_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("record", "must be an object");
    QuestionInstance q;
    q.id = field_as<std::string>(j, "id");
    const json& cat = require_field(j, "category");
    if (!cat.is_object()) throw ValidationError("category", "must be an object");
    const auto name = category_from_string(field_as<std::string>(cat, "name"));
    if (!name) throw ValidationError("category", "unknown category name");
    q.category.name = *name;
    q.category.subcategory = field_as<std::string>(cat, "subcategory");
    q.question = field_as<std::string>(j, "question");
    q.options = field_as<std::vector<std::string>>(j, "options");
    q.correct_index = field_as<int>(j, "correct_index");
    const json& series = require_field(j, "series");
    if (!series.is_array()) throw ValidationError("series", "must be an array");
    for (const auto& s : series) q.series.push_back(series_from_json(s));
    if (j.contains("icl_example")) {
        const json& ex = j.at("icl_example");
        IclExample icl;
        icl.question = field_as<std::string>(ex, "question");
        icl.answer = field_as<std::string>(ex, "answer");
        if (ex.contains("series")) {
            for (const auto& s : ex.at("series")) icl.series.push_back(series_from_json(s));
        }
        q.icl_example = std::move(icl);
    }
    if (j.contains("hint")) q.hint = field_as<std::string>(j, "hint");
    if (j.contains("concept_notes")) q.concept_notes = field_as<std::string>(j, "concept_notes");
    q.relevant_concepts = string_list(j, "relevant_concepts");
    q.detractor_types = string_list(j, "detractor_types");
    if (j.contains("format_hint")) q.format_hint = field_as<std::string>(j, "format_hint");
    if (j.contains("domain")) q.domain = field_as<std::string>(j, "domain");
    validate(q);
    return q;
}

std::string serialize(const Exam& exam) {
    validate(exam);
    std::ostringstream out;
    json header{{"format", kFormatName},
                {"schema_version", kSchemaVersion},
                {"question_count", exam.questions.size()},
                {"metadata",
                 {{"config_digest", exam.metadata.config_digest},
                  {"seed", exam.metadata.seed},
                  {"round", exam.metadata.round}}}};
    out << header.dump() << '\n';
    for (const auto& q : exam.questions) out << to_json(q).dump() << '\n';
    return out.str();
}

Exam parse(std::string_view text) {
    Exam exam;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool have_header = false;
    std::size_t declared = 0;
    std::set<std::string> ids;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;

        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ExamFormatError(line_no, "record", std::string("invalid JSON: ") + e.what());
        }
        if (!have_header) {
            if (!j.is_object() || j.value("format", "") != kFormatName)
                throw ExamFormatError(line_no, "format", "missing exam header record");
            if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
                throw ExamFormatError(line_no, "schema_version", "missing");
            const int version = j["schema_version"].get<int>();
            if (version != kSchemaVersion)
                throw ExamFormatError(line_no, "schema_version", "unsupported version " + std::to_string(version));
            try {
                const json& meta = j.at("metadata");
                exam.metadata.config_digest = meta.value("config_digest", "");
                exam.metadata.seed = meta.value("seed", std::uint64_t{0});
                exam.metadata.round = meta.value("round", 0);
                declared = j.value("question_count", std::size_t{0});
            } catch (const json::exception& e) {
                throw ExamFormatError(line_no, "metadata", e.what());
            }
            have_header = true;
            continue;
        }
        try {
            QuestionInstance q = question_from_json(j);
            if (!ids.insert(q.id).second) throw ValidationError("id", "duplicate id '" + q.id + "'");
            exam.questions.push_back(std::move(q));
        } catch (const ValidationError& e) {
            throw ExamFormatError(line_no, e.field(), e.what());
        }
    }
    if (!have_header) throw ExamFormatError(1, "format", "empty file; header record required");
    if (declared != exam.questions.size())
        throw ExamFormatError(line_no, "question_count",
                              "header declares " + std::to_string(declared) + " questions, file holds " +
                                  std::to_string(exam.questions.size()));
    return exam;
}

}  // namespace exam_io

void save_exam(const Exam& exam, const std::filesystem::path& path) {
    const std::string text = exam_io::serialize(exam);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path, "cannot open for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) throw IoError(path, "write failed");
}

Exam load_exam(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path, "cannot open for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    return exam_io::parse(buf.str());
}

}  // namespace tsexam
