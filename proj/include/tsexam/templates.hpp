#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tsexam/exam.hpp"

namespace tsexam::templates {

struct TemplateMeta {
    std::string template_id;
    Category category;
    int option_count = 2;
    int series_count = 1;
    std::string description;
};

class UnknownTemplate : public Error {
public:
    explicit UnknownTemplate(const std::string& id) : Error("unknown template '" + id + "'") {}
};

/// Default series lengths for instantiated questions and their worked examples.
inline constexpr std::size_t kQuestionLength = 128;
inline constexpr std::size_t kExampleLength = 64;

/// Registry listing ordered by template_id.
std::vector<TemplateMeta> list_templates(std::optional<CategoryName> category = std::nullopt);

/// Filters by category name; an unknown name yields an empty list.
std::vector<TemplateMeta> list_templates(std::string_view category_name);

const TemplateMeta& template_meta(const std::string& template_id);

/// Generates one question with series conditioned on the correct option. When forced_correct is
/// absent the option is drawn uniformly from the seed.
QuestionInstance instantiate(const std::string& template_id, std::optional<int> forced_correct, std::uint64_t seed,
                             std::size_t length = kQuestionLength);

/// Per-category question counts of the reference exam (763 questions).
std::map<CategoryName, std::size_t> default_counts();

/// Scales default_counts() proportionally to `total` (largest-remainder rounding).
std::map<CategoryName, std::size_t> default_counts(std::size_t total);

/// Builds an exam with exactly the requested per-category counts. Templates of a category are
/// weighted to follow the reference two-series proportions, and forced correct options cycle
/// through each template's options so answers are balanced.
Exam generate_exam(const std::map<CategoryName, std::size_t>& counts, std::uint64_t seed);

/// Draws a fresh question from a random template of `category` (used as the refinement resampler).
QuestionInstance sample_question(CategoryName category, std::uint64_t seed, const std::string& id);

}  // namespace tsexam::templates
