#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tsexam/datasets.hpp"
#include "tsexam/dsl.hpp"
#include "tsexam/evaluation.hpp"
#include "tsexam/exam.hpp"
#include "tsexam/gateway.hpp"

namespace tsexam::agent {

enum class ConceptMode { llm, rag };
std::string to_string(ConceptMode m);
ConceptMode concept_mode_from_string(const std::string& s);

struct PipelineConfig {
    std::string task_description;
    std::string domain = "general";  // exam type shown to generator and verifier
    ConceptMode concept_mode = ConceptMode::llm;
    std::size_t structure_samples = 3;
    int regeneration_patience = 3;
    std::vector<std::string> few_shot_pool;  // DSL documents; defaults to the bundled nine
    std::size_t few_shot_per_prompt = 3;
    std::size_t instances_per_template = 4;
    gateway::ModelRef generator;
    gateway::ModelRef verifier;
    gateway::ModelRef strong_model;
    gateway::ModelRef weak_model;
    eval::AdministerOptions capability;  // how the strong/weak pair is examined
    std::size_t rag_chunk_chars = 4000;
    std::size_t parallelism = 1;  // template slots processed concurrently
    std::uint64_t seed = 0;

    /// Throws InvalidParameter on a violated invariant.
    void check() const;
};

/// The bundled few-shot DSL documents, in name order.
std::vector<std::string> default_few_shot_pool();

struct ColumnSummary {
    std::string name;
    std::string kind;  // "channel", "number" or "string"
    double min = 0.0;
    double max = 0.0;
    std::vector<std::string> values;  // distinct values of string columns (capped)
    std::size_t distinct = 0;
};

struct DatasetDescription {
    std::size_t size = 0;
    std::size_t scanned = 0;
    std::size_t min_length = 0;
    std::size_t max_length = 0;
    double mean_length = 0.0;
    std::vector<ColumnSummary> columns;
    std::string usage_example;

    std::string text() const;
};

json to_json(const DatasetDescription& d);

DatasetDescription describe_dataset(const data::DatasetAdapter& dataset, std::size_t max_scan = 5000);

/// Parses a numbered or bulleted list reply into distinct concept strings.
std::vector<std::string> parse_concepts(const std::string& reply);

std::vector<std::string> gen_concepts(gateway::Gateway& gw, const PipelineConfig& config,
                                      const DatasetDescription& dataset,
                                      const std::optional<std::string>& rag_document = std::nullopt);

struct GenerationTranscript {
    /// messages[0] is the generation prompt; then (assistant candidate, user feedback) rounds.
    std::vector<gateway::ModelMessage> messages;
    std::vector<std::string> condensed_summaries;

    std::size_t failure_rounds() const;
    /// Messages sent to the generator: the prompt (with summaries appended) and the verbatim rounds.
    std::vector<gateway::ModelMessage> render() const;
    std::size_t size_chars() const;
};

/// Appends the generator's candidate to the transcript.
void record_candidate(GenerationTranscript& t, const std::string& candidate);
/// Appends verification feedback on the latest candidate.
void record_feedback(GenerationTranscript& t, const std::string& feedback);

/// Replaces every failure round except the latest by a one-line summary. Summaries come from the
/// generator model, or from a truncation rule when the generator is a mock.
GenerationTranscript condense_context(gateway::Gateway& gw, const gateway::ModelRef& generator,
                                      GenerationTranscript transcript);

/// Generation prompt for one slot; `slot_seed` drives the few-shot choice.
std::string generation_prompt(const PipelineConfig& config, const std::vector<std::string>& concepts,
                              std::size_t concept_index, const DatasetDescription& dataset, std::uint64_t slot_seed);

/// The JSON document inside a model reply (code fences and surrounding prose removed).
std::string extract_document(const std::string& reply);

std::string gen_template(gateway::Gateway& gw, const PipelineConfig& config, const std::vector<std::string>& concepts,
                         std::size_t concept_index, const DatasetDescription& dataset, GenerationTranscript& transcript,
                         std::uint64_t slot_seed);

enum class Stage { structure, content, capability };
enum class Verdict { pass, fail, discard };
std::string to_string(Stage s);
std::string to_string(Verdict v);

struct VerificationOutcome {
    Stage stage = Stage::structure;
    Verdict verdict = Verdict::pass;
    std::string feedback;
    std::vector<std::string> codes;  // machine-readable codes for structure failures
};

json to_json(const VerificationOutcome& v);

struct StructureCheck {
    VerificationOutcome outcome;
    std::optional<dsl::TemplateProgram> program;
    std::vector<QuestionInstance> samples;
};

StructureCheck verify_structure(const std::string& document, const data::DatasetAdapter& dataset, std::size_t k,
                                std::uint64_t seed);

/// True when a verifier reply is the acceptance token "1" (surrounding whitespace, quotes and
/// a trailing period tolerated).
bool is_acceptance(const std::string& reply);

VerificationOutcome verify_content(gateway::Gateway& gw, const PipelineConfig& config, const std::string& concept_text,
                                   const std::string& document, const std::vector<QuestionInstance>& samples);

/// Discard iff the weak model is strictly more accurate than the strong one.
VerificationOutcome capability_verdict(double strong_accuracy, double weak_accuracy);

VerificationOutcome capability_filter(gateway::Gateway& gw, const std::vector<QuestionInstance>& samples,
                                      const gateway::ModelRef& strong, const gateway::ModelRef& weak,
                                      const eval::AdministerOptions& options = {});

/// Outcome of one generation attempt; the four values partition attempts.
enum class AttemptOutcome { success, semantic_failure, syntactic_failure, content_rejection };
std::string to_string(AttemptOutcome o);

struct AttemptRecord {
    int attempt = 0;
    AttemptOutcome outcome = AttemptOutcome::success;
    std::vector<VerificationOutcome> stages;
    std::size_t transcript_chars = 0;
};

struct SlotRecord {
    std::size_t slot = 0;
    std::size_t concept_index = 0;
    std::string concept_text;
    std::vector<AttemptRecord> attempts;
    std::string final_state;  // "accepted", "discarded" or "exhausted"
    std::size_t instances = 0;
};

struct PipelineReport {
    std::vector<std::string> concepts;
    std::vector<SlotRecord> slots;
    std::size_t success = 0;
    std::size_t semantic_failure = 0;
    std::size_t syntactic_failure = 0;
    std::size_t content_rejection = 0;
    std::size_t attempts = 0;
    std::size_t accepted = 0;
    std::size_t questions = 0;
};

json to_json(const PipelineReport& r);

struct AcceptedTemplate {
    std::size_t slot = 0;
    std::string document;
    dsl::TemplateProgram program;
};

struct PipelineResult {
    std::vector<AcceptedTemplate> templates;
    Exam exam;
    PipelineReport report;
};

class PipelineError : public Error {
public:
    PipelineError(const std::string& what, json report) : Error(what), report_(std::move(report)) {}
    const json& report() const noexcept { return report_; }

private:
    json report_;
};

PipelineResult run_pipeline(gateway::Gateway& gw, const PipelineConfig& config, const data::DatasetAdapter& dataset,
                            std::size_t num_templates, const std::optional<std::string>& rag_document = std::nullopt);

}  // namespace tsexam::agent
