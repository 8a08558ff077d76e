#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tsexam/datasets.hpp"
#include "tsexam/exam.hpp"

namespace tsexam::dsl {

inline constexpr int kDslVersion = 1;

/// Machine-readable diagnostic codes. These are also the feedback handed to the template generator.
enum class ErrorCode {
    PARSE_ERROR,
    SCHEMA_ERROR,
    UNSUPPORTED_VERSION,
    MISSING_DEFAULT_RULE,
    FEATURE_CYCLE,
    UNKNOWN_FUNCTION,
    UNKNOWN_IDENTIFIER,
    UNBOUND_PLACEHOLDER,
    TYPE_ERROR,
    INVALID_OPTIONS,
    OPTION_OUT_OF_RANGE,
    SCHEMA_MISMATCH,
    WINDOW_INFEASIBLE,
    INSUFFICIENT_SAMPLES,
    INVALID_INSTANCE,
};

std::string_view code_name(ErrorCode code);
std::optional<ErrorCode> code_from_name(std::string_view name);

struct Diagnostic {
    ErrorCode code;
    std::string location;  // dotted path into the document, e.g. "features.slope" or "answer_rules[2].when"
    std::string message;

    std::string to_string() const;
};

class DslError : public Error {
public:
    explicit DslError(std::vector<Diagnostic> diagnostics);
    const std::vector<Diagnostic>& diagnostics() const noexcept { return diagnostics_; }
    /// Code of the first diagnostic.
    ErrorCode code() const noexcept { return diagnostics_.front().code; }

private:
    std::vector<Diagnostic> diagnostics_;
};

enum class Type { scalar, boolean, series, string, any };
std::string_view type_name(Type t);

using Value = std::variant<double, bool, std::vector<double>, std::string>;
Type type_of(const Value& v);

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
    enum class Kind { number, string, boolean, identifier, meta, unary, binary, call };
    Kind kind = Kind::number;
    double number = 0.0;
    std::string text;  // literal text, identifier, meta column, operator or function name
    int meta_sample = 1;  // 1 for meta.X, 2 for meta2.X
    std::vector<ExprPtr> args;
    std::size_t column = 0;  // 1-based offset in the source expression
};

/// Parses a single expression; throws DslError(PARSE_ERROR) with `location` as prefix.
ExprPtr parse_expression(std::string_view source, const std::string& location = "expression");

/// Identifiers an expression reads: plain names, and metadata columns as "meta.X" / "meta2.X".
void collect_identifiers(const Expr& e, std::vector<std::string>& out);

enum class Anchor { random, start, end };

struct Window {
    std::size_t min_length = 2;
    std::size_t max_length = 2;
    Anchor anchor = Anchor::random;
};

struct Selection {
    int series_count = 1;
    std::vector<std::string> channels;  // empty: first channel(s) of each sample
    bool pair_samples = false;          // second series from a different sample, exposed as y / meta2.X
    std::string filter_source;
    ExprPtr filter;
    std::optional<Window> window;
    std::size_t max_total_length = 3000;
    std::vector<std::string> metadata;  // columns exposed as placeholders
};

struct Feature {
    std::string name;
    std::string source;
    ExprPtr expr;
    Type type = Type::any;
};

struct Rule {
    std::string source;  // empty for the default rule
    ExprPtr when;        // null for the default rule
    int option = 0;
};

struct TemplateProgram {
    int dsl_version = kDslVersion;
    std::string name;
    std::string domain;
    Category category{CategoryName::pattern_recognition, "statistical_properties"};
    std::string question;
    std::vector<std::string> options;
    std::map<std::string, double> hyperparameters;
    std::vector<Feature> features;  // topologically ordered
    std::vector<Rule> rules;
    std::vector<std::string> relevant_concepts;
    std::vector<std::string> detractor_types;
    std::string format_hint{kDefaultFormatHint};
    Selection selection;
    json document;  // the parsed source document
};

/// Parses and statically checks a template document (JSON text). Throws DslError listing every
/// problem found.
TemplateProgram parse(std::string_view document);
TemplateProgram parse(const json& document);

/// Checks the program against a dataset: metadata columns, channels, window feasibility.
/// Returns an empty list when the pair is usable.
std::vector<Diagnostic> validate(const TemplateProgram& program, const data::DatasetAdapter& dataset);

struct SampleTrace {
    std::size_t index = 0;
    std::optional<std::size_t> second_index;
    std::size_t window_start = 0;
    std::size_t window_length = 0;
    json features = json::object();
    int matched_rule = -1;
    int option = -1;
    std::string outcome = "produced";  // or the reason the sample was skipped
};

json to_json(const SampleTrace& t);

struct EvalReport {
    std::size_t produced = 0;
    std::size_t attempted = 0;
    std::vector<SampleTrace> trace;  // produced samples, plus skipped ones when verbose
    std::map<std::string, std::size_t> skipped;
};

struct EvalResult {
    std::vector<QuestionInstance> questions;
    EvalReport report;
};

/// Samples dataset entries (without replacement while possible), windows them, computes features,
/// applies the first matching answer rule and fills placeholders. Attempts are capped at
/// 10 * num_samples. Throws DslError when validate() reports problems.
EvalResult evaluate(const TemplateProgram& program, const data::DatasetAdapter& dataset, std::size_t num_samples,
                    std::uint64_t seed, bool verbose = false);

/// Evaluates an expression against bound values (features, hyperparameters, x, y, meta.X...).
Value eval_expression(const Expr& e, const std::map<std::string, Value>& env);

/// Names of the built-in functions, sorted.
std::vector<std::string> function_names();

/// One-line signature summary per function, for documentation and prompts.
std::vector<std::string> function_signatures();

}  // namespace tsexam::dsl
