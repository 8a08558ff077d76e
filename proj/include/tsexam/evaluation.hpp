#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tsexam/exam.hpp"
#include "tsexam/gateway.hpp"

namespace tsexam::eval {

enum class Modality { vision, text };
std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

struct ResponseRecord {
    std::string question_id;
    std::string candidate;
    std::string raw_text;
    std::optional<int> parsed_choice;
    bool correct = false;
    bool parsable = false;
    Modality modality = Modality::vision;
    std::optional<int> dpi;
    std::string category;  // copied from the question, for grouping
    std::string error;     // gateway failure, if any
};

json to_json(const ResponseRecord& r);
ResponseRecord record_from_json(const json& j);

struct AdministerOptions {
    Modality modality = Modality::vision;
    int dpi = 50;
    int decimals = 3;
    bool strict = false;  // rethrow gateway failures instead of recording them as unparsable
    std::size_t parallelism = 1;
    gateway::RetryPolicy retry;
};

/// The chat messages sent for one question.
std::vector<gateway::ModelMessage> build_prompt(const QuestionInstance& q, const AdministerOptions& options);

std::vector<ResponseRecord> administer(const Exam& exam, gateway::Gateway& gw, const gateway::ModelRef& candidate,
                                       const AdministerOptions& options = {});

/// Index of the chosen option: the last bracketed letter in range, else a trailing standalone letter.
std::optional<int> parse_answer(const std::string& raw, int option_count);

/// Scores a raw answer against a question.
ResponseRecord score_response(const QuestionInstance& q, const std::string& candidate, const std::string& raw);

enum class GroupBy { none, category, candidate, modality };
GroupBy group_from_string(const std::string& s);

struct Accuracy {
    std::size_t total = 0;
    std::size_t parsable = 0;
    std::size_t correct = 0;
    double general = 0.0;
    std::optional<double> parsable_only;  // absent when nothing was parsable
};

json to_json(const Accuracy& a);

/// Keyed by group value ("all" when ungrouped).
std::map<std::string, Accuracy> accuracy(const std::vector<ResponseRecord>& records, GroupBy group_by = GroupBy::none);

/// Checks that every record refers to a question of the exam; throws ValidationError naming the first unknown id.
void match_records(const Exam& exam, const std::vector<ResponseRecord>& records);

/// Turns an exam plus raw answer texts into scored records. Throws ValidationError naming the first
/// exam question without a response.
std::vector<ResponseRecord> score(const Exam& exam, const std::vector<ResponseRecord>& responses);

enum class Criterion { specificity, unambiguity, domain_relevance, answerability, no_unintended_hints };
inline constexpr Criterion kAllCriteria[] = {Criterion::specificity, Criterion::unambiguity,
                                             Criterion::domain_relevance, Criterion::answerability,
                                             Criterion::no_unintended_hints};
std::string to_string(Criterion c);

struct JuryScore {
    Criterion criterion;
    std::vector<int> scores;  // per judge that produced a usable score
    double mean = 0.0;
};

struct QuestionJury {
    std::string question_id;
    std::vector<JuryScore> criteria;  // criteria with at least one usable score
};

struct JuryReport {
    std::vector<QuestionJury> questions;
    std::map<std::string, double> criterion_means;
    double combined = 0.0;
    std::size_t judgments = 0;
    std::size_t scored = 0;
    double coverage() const { return judgments ? double(scored) / double(judgments) : 0.0; }
};

json to_json(const JuryReport& r);

/// Criterion prompt for a domain; "medicine" and "ecg" select the electrocardiogram wording.
std::string criterion_prompt(Criterion c, const std::string& domain);

/// First integer in a judge reply, if it is within [1, 10].
std::optional<int> extract_score(const std::string& reply);

JuryReport jury_score(const std::vector<QuestionInstance>& questions, gateway::Gateway& gw,
                      const std::vector<gateway::ModelRef>& panel, const std::string& domain,
                      const std::vector<Criterion>& criteria = {std::begin(kAllCriteria), std::end(kAllCriteria)},
                      std::size_t parallelism = 1);

/// Edit distance over Unicode code points divided by the longer length.
double levenshtein_norm(const std::string& a, const std::string& b);
std::size_t levenshtein(const std::string& a, const std::string& b);

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b);

struct Stat {
    double mean = 0.0;
    double std = 0.0;  // population
};

struct DiversityResult {
    std::size_t sampled = 0;
    std::size_t pairs = 0;
    std::optional<Stat> embedding;
    std::string embedding_error;
    Stat levenshtein;
};

json to_json(const DiversityResult& d);

/// Text compared for diversity: the question followed by its options.
std::string question_text(const QuestionInstance& q);

DiversityResult diversity(const std::vector<QuestionInstance>& questions, gateway::Gateway& gw,
                          const gateway::ModelRef& embedder, std::size_t sample_n = 50, std::uint64_t seed = 0);

}  // namespace tsexam::eval
