#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tsexam/datasets.hpp"
#include "tsexam/evaluation.hpp"
#include "tsexam/gateway.hpp"
#include "tsexam/irt.hpp"
#include "tsexam/pipeline.hpp"

namespace tsexam::config {

/// Config file problem; field() is the dotted key path.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what) : Error(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

struct GenSection {
    std::size_t total_questions = 763;
};

struct RefineSection {
    double drop_percentage = 0.2;
    int num_iterations = 3;
    std::vector<std::string> candidates;  // model names
    irt::FitConfig fit;
};

struct AdministerSection {
    eval::Modality modality = eval::Modality::vision;
    int dpi = 50;
    int decimals = 3;
    bool strict = false;
};

struct AgentSection {
    std::string task;
    std::optional<std::filesystem::path> task_file;
    std::string domain = "general";
    agent::ConceptMode concept_mode = agent::ConceptMode::llm;
    std::optional<std::filesystem::path> rag_file;
    std::size_t structure_samples = 3;
    int regeneration_patience = 3;
    std::size_t few_shot_per_prompt = 3;
    std::size_t instances_per_template = 4;
    std::size_t num_templates = 5;
    std::optional<std::filesystem::path> few_shot_dir;
    std::string generator = "generator";
    std::string verifier = "verifier";
    std::string strong_model = "strong";
    std::string weak_model = "weak";
};

struct DatasetSection {
    std::optional<std::filesystem::path> path;
    data::ColumnMapping mapping;
    json synthetic;  // list of {"recipe": ..., "metadata": ...}
};

struct JurySection {
    std::vector<std::string> judges;
    std::string domain = "general";
};

struct DiversitySection {
    std::size_t sample_n = 50;
    std::string embedder = "embedder";
};

struct GatewaySection {
    std::size_t max_in_flight = 4;
    double min_interval_s = 0.0;
    bool audit_log = true;
    int max_attempts = 4;
    double initial_backoff_s = 1.0;
};

struct Config {
    std::uint64_t seed = 0;
    std::size_t parallelism = 1;
    std::filesystem::path output_dir = "run";
    std::map<std::string, gateway::ModelRef> models;
    GatewaySection gateway;
    GenSection gen;
    RefineSection refine;
    AdministerSection administer;
    AgentSection agent;
    DatasetSection dataset;
    JurySection jury;
    DiversitySection diversity;

    /// Model by config name; throws ConfigError naming the key path that referenced it.
    const gateway::ModelRef& model(const std::string& name, const std::string& referenced_from) const;
};

/// Parses a config document. Relative paths resolve against `base_dir`. Unknown keys are rejected.
Config from_json(const json& j, const std::filesystem::path& base_dir = ".");
Config load(const std::filesystem::path& path);

/// Pipeline settings assembled from the agent section and the named models.
agent::PipelineConfig pipeline_config(const Config& c);

gateway::RetryPolicy retry_policy(const Config& c);
eval::AdministerOptions administer_options(const Config& c);

/// The dataset described by the config (file or synthetic recipes).
data::DatasetPtr load_dataset(const Config& c, std::vector<std::string>* warnings = nullptr);

/// Every environment variable named by an http model that is unset, sorted.
std::vector<std::string> missing_credentials(const Config& c, const std::vector<std::string>& model_names);

}  // namespace tsexam::config
