#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tsexam/error.hpp"
#include "tsexam/time_series.hpp"

namespace tsexam {

enum class CategoryName {
    pattern_recognition,
    noise_understanding,
    anomaly_detection,
    comparative_analysis,
    causality_analysis,
};

inline constexpr CategoryName kAllCategories[] = {
    CategoryName::pattern_recognition, CategoryName::noise_understanding, CategoryName::anomaly_detection,
    CategoryName::comparative_analysis, CategoryName::causality_analysis,
};

std::string to_string(CategoryName name);
std::optional<CategoryName> category_from_string(std::string_view s);

/// Subcategories of the taxonomy, per category.
const std::vector<std::string>& subcategories(CategoryName name);

struct Category {
    CategoryName name = CategoryName::pattern_recognition;
    std::string subcategory = "trend";

    friend bool operator==(const Category&, const Category&) = default;
};

/// Worked example shown before the question (in-context learning).
struct IclExample {
    std::string question;
    std::string answer;
    std::vector<TimeSeries> series;

    friend bool operator==(const IclExample&, const IclExample&) = default;
};

inline constexpr std::string_view kDefaultFormatHint =
    "Please answer the question and provide the correct option letter, e.g., [A], [B], [C], [D], and option "
    "content at the end of your answer. All information need to answer the question is given. If you are unsure, "
    "please provide your best guess.";

struct QuestionInstance {
    std::string id;
    Category category;
    std::string question;
    std::vector<std::string> options;
    int correct_index = 0;
    std::vector<TimeSeries> series;
    std::optional<IclExample> icl_example;
    std::optional<std::string> hint;
    std::optional<std::string> concept_notes;
    std::vector<std::string> relevant_concepts;
    std::vector<std::string> detractor_types;
    std::string format_hint{kDefaultFormatHint};
    std::string domain = "synthetic";

    friend bool operator==(const QuestionInstance&, const QuestionInstance&) = default;
};

struct ExamMetadata {
    std::string config_digest;
    std::uint64_t seed = 0;
    int round = 0;

    friend bool operator==(const ExamMetadata&, const ExamMetadata&) = default;
};

struct Exam {
    std::vector<QuestionInstance> questions;
    ExamMetadata metadata;

    friend bool operator==(const Exam&, const Exam&) = default;
};

/// A question or exam record violates an invariant. field() names the offending field.
class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Malformed exam file. line() is 1-based.
class ExamFormatError : public Error {
public:
    ExamFormatError(std::size_t line, std::string field, const std::string& what)
        : Error("line " + std::to_string(line) + ", field '" + field + "': " + what),
          line_(line),
          field_(std::move(field)) {}
    std::size_t line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::size_t line_;
    std::string field_;
};

class IoError : public Error {
public:
    IoError(const std::filesystem::path& path, const std::string& what)
        : Error(path.string() + ": " + what), path_(path) {}
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

void validate(const QuestionInstance& q);
void validate(const Exam& exam);

namespace exam_io {

inline constexpr int kSchemaVersion = 1;
inline constexpr std::string_view kFormatName = "tsexam.exam";

json to_json(const TimeSeries& s);
TimeSeries series_from_json(const json& j);
json to_json(const QuestionInstance& q);
QuestionInstance question_from_json(const json& j);

std::string serialize(const Exam& exam);
Exam parse(std::string_view text);

}  // namespace exam_io

void save_exam(const Exam& exam, const std::filesystem::path& path);
Exam load_exam(const std::filesystem::path& path);

/// Counts questions per category.
std::vector<std::pair<CategoryName, std::size_t>> category_counts(const Exam& exam);

std::string option_letter(std::size_t index);

}  // namespace tsexam
