#include "tsexam/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "tsexam/synth.hpp"

namespace tsexam::config {

namespace {

// Reads typed keys from one object and rejects the ones nobody asked for.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "config" : path_, "must be an object");
    }

    std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) {
        used_.insert(key);
        return j_.contains(key);
    }

    const json& raw(const std::string& key) {
        used_.insert(key);
        return j_.at(key);
    }

    template <class T>
    void read(const std::string& key, T& out) {
        if (!has(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(key_path(key), std::string("wrong type: ") + e.what());
        }
    }

    void read_path(const std::string& key, std::optional<std::filesystem::path>& out,
                   const std::filesystem::path& base) {
        std::string s;
        if (!has(key) || j_.at(key).is_null()) return;
        read(key, s);
        out = std::filesystem::path(s).is_absolute() ? std::filesystem::path(s) : base / s;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!used_.count(it.key())) throw ConfigError(key_path(it.key()), "unknown key");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

}  // namespace

const gateway::ModelRef& Config::model(const std::string& name, const std::string& referenced_from) const {
    const auto it = models.find(name);
    if (it == models.end()) throw ConfigError(referenced_from, "no model named '" + name + "' under 'models'");
    return it->second;
}

Config from_json(const json& j, const std::filesystem::path& base_dir) {
    Config c;
    Section top(j, "");
    top.read("seed", c.seed);
    top.read("parallelism", c.parallelism);
    if (c.parallelism < 1) throw ConfigError("parallelism", "must be at least 1");
    std::optional<std::filesystem::path> out;
    top.read_path("output_dir", out, base_dir);
    if (out) c.output_dir = *out;

    if (top.has("models")) {
        const auto& models = top.raw("models");
        if (!models.is_object()) throw ConfigError("models", "must be an object of named models");
        for (auto it = models.begin(); it != models.end(); ++it) {
            try {
                c.models.emplace(it.key(), gateway::model_from_json(*it, it.key()));
            } catch (const InvalidParameter& e) {
                throw ConfigError("models." + e.field(), e.what());
            }
        }
    }

    if (top.has("gateway")) {
        Section s(top.raw("gateway"), "gateway");
        s.read("max_in_flight", c.gateway.max_in_flight);
        s.read("min_interval_s", c.gateway.min_interval_s);
        s.read("audit_log", c.gateway.audit_log);
        s.read("max_attempts", c.gateway.max_attempts);
        s.read("initial_backoff_s", c.gateway.initial_backoff_s);
        s.finish();
        if (c.gateway.max_in_flight < 1) throw ConfigError("gateway.max_in_flight", "must be at least 1");
        if (c.gateway.max_attempts < 1) throw ConfigError("gateway.max_attempts", "must be at least 1");
    }

    if (top.has("gen")) {
        Section s(top.raw("gen"), "gen");
        s.read("total_questions", c.gen.total_questions);
        s.finish();
        if (c.gen.total_questions < 1) throw ConfigError("gen.total_questions", "must be at least 1");
    }

    if (top.has("refine")) {
        Section s(top.raw("refine"), "refine");
        s.read("drop_percentage", c.refine.drop_percentage);
        s.read("num_iterations", c.refine.num_iterations);
        s.read("candidates", c.refine.candidates);
        if (s.has("fit")) {
            Section f(s.raw("fit"), "refine.fit");
            f.read("epochs", c.refine.fit.epochs);
            f.read("lr", c.refine.fit.lr);
            f.read("lr_decay", c.refine.fit.lr_decay);
            f.read("prior_sd_log_a", c.refine.fit.prior_sd_log_a);
            f.read("prior_sd_b", c.refine.fit.prior_sd_b);
            f.read("prior_sd_theta", c.refine.fit.prior_sd_theta);
            f.read("tolerance", c.refine.fit.tolerance);
            f.finish();
        }
        s.finish();
        if (c.refine.drop_percentage < 0 || c.refine.drop_percentage >= 1)
            throw ConfigError("refine.drop_percentage", "must be in [0, 1)");
        if (c.refine.num_iterations < 0) throw ConfigError("refine.num_iterations", "must be non-negative");
    }

    if (top.has("administer")) {
        Section s(top.raw("administer"), "administer");
        std::string modality = eval::to_string(c.administer.modality);
        s.read("modality", modality);
        try {
            c.administer.modality = eval::modality_from_string(modality);
        } catch (const InvalidParameter& e) {
            throw ConfigError("administer.modality", e.what());
        }
        s.read("dpi", c.administer.dpi);
        s.read("decimals", c.administer.decimals);
        s.read("strict", c.administer.strict);
        s.finish();
        if (c.administer.dpi < 1) throw ConfigError("administer.dpi", "must be positive");
        if (c.administer.decimals < 0) throw ConfigError("administer.decimals", "must be non-negative");
    }

    if (top.has("agent")) {
        Section s(top.raw("agent"), "agent");
        auto& a = c.agent;
        s.read("task", a.task);
        s.read_path("task_file", a.task_file, base_dir);
        s.read("domain", a.domain);
        std::string mode = agent::to_string(a.concept_mode);
        s.read("concept_mode", mode);
        try {
            a.concept_mode = agent::concept_mode_from_string(mode);
        } catch (const InvalidParameter& e) {
            throw ConfigError("agent.concept_mode", e.what());
        }
        s.read_path("rag_file", a.rag_file, base_dir);
        s.read("structure_samples", a.structure_samples);
        s.read("regeneration_patience", a.regeneration_patience);
        s.read("few_shot_per_prompt", a.few_shot_per_prompt);
        s.read("instances_per_template", a.instances_per_template);
        s.read("num_templates", a.num_templates);
        s.read_path("few_shot_dir", a.few_shot_dir, base_dir);
        s.read("generator", a.generator);
        s.read("verifier", a.verifier);
        s.read("strong_model", a.strong_model);
        s.read("weak_model", a.weak_model);
        s.finish();
        if (a.structure_samples < 1) throw ConfigError("agent.structure_samples", "must be at least 1");
        if (a.regeneration_patience < 1) throw ConfigError("agent.regeneration_patience", "must be at least 1");
        if (a.instances_per_template != 4 && a.instances_per_template != 5)
            throw ConfigError("agent.instances_per_template", "must be 4 or 5");
        if (a.num_templates < 1) throw ConfigError("agent.num_templates", "must be at least 1");
    }

    if (top.has("dataset")) {
        Section s(top.raw("dataset"), "dataset");
        s.read_path("path", c.dataset.path, base_dir);
        if (s.has("mapping")) {
            try {
                c.dataset.mapping = data::mapping_from_json(s.raw("mapping"));
            } catch (const InvalidParameter& e) {
                throw ConfigError("dataset." + e.field(), e.what());
            }
        }
        if (s.has("synthetic")) c.dataset.synthetic = s.raw("synthetic");
        s.finish();
        if (c.dataset.path && c.dataset.mapping.value_columns.empty())
            throw ConfigError("dataset.mapping.value_columns", "required when dataset.path is set");
        if (c.dataset.path && !c.dataset.synthetic.is_null())
            throw ConfigError("dataset", "give either 'path' or 'synthetic', not both");
    }

    if (top.has("jury")) {
        Section s(top.raw("jury"), "jury");
        s.read("judges", c.jury.judges);
        s.read("domain", c.jury.domain);
        s.finish();
    }

    if (top.has("diversity")) {
        Section s(top.raw("diversity"), "diversity");
        s.read("sample_n", c.diversity.sample_n);
        s.read("embedder", c.diversity.embedder);
        s.finish();
        if (c.diversity.sample_n < 2) throw ConfigError("diversity.sample_n", "must be at least 2");
    }
    top.finish();
    return c;
}

Config load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", path.string() + ": cannot open");
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config", path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

gateway::RetryPolicy retry_policy(const Config& c) {
    gateway::RetryPolicy r;
    r.max_attempts = c.gateway.max_attempts;
    r.initial_backoff_s = c.gateway.initial_backoff_s;
    return r;
}

eval::AdministerOptions administer_options(const Config& c) {
    eval::AdministerOptions o;
    o.modality = c.administer.modality;
    o.dpi = c.administer.dpi;
    o.decimals = c.administer.decimals;
    o.strict = c.administer.strict;
    o.parallelism = c.parallelism;
    o.retry = retry_policy(c);
    return o;
}

namespace {

std::string read_text(const std::filesystem::path& p, const std::string& field) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError(field, p.string() + ": cannot open");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

agent::PipelineConfig pipeline_config(const Config& c) {
    agent::PipelineConfig p;
    const auto& a = c.agent;
    p.task_description = a.task_file ? read_text(*a.task_file, "agent.task_file") : a.task;
    if (p.task_description.empty()) throw ConfigError("agent.task", "a task description (task or task_file) is required");
    p.domain = a.domain;
    p.concept_mode = a.concept_mode;
    p.structure_samples = a.structure_samples;
    p.regeneration_patience = a.regeneration_patience;
    p.few_shot_per_prompt = a.few_shot_per_prompt;
    p.instances_per_template = a.instances_per_template;
    if (a.few_shot_dir) {
        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::directory_iterator(*a.few_shot_dir)) {
            if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) p.few_shot_pool.push_back(read_text(f, "agent.few_shot_dir"));
    } else {
        p.few_shot_pool = agent::default_few_shot_pool();
    }
    if (p.few_shot_per_prompt > p.few_shot_pool.size())
        throw ConfigError("agent.few_shot_per_prompt", "exceeds the few-shot pool size");
    p.generator = c.model(a.generator, "agent.generator");
    p.verifier = c.model(a.verifier, "agent.verifier");
    p.strong_model = c.model(a.strong_model, "agent.strong_model");
    p.weak_model = c.model(a.weak_model, "agent.weak_model");
    p.capability = administer_options(c);
    p.parallelism = c.parallelism;
    p.seed = c.seed;
    return p;
}

data::DatasetPtr load_dataset(const Config& c, std::vector<std::string>* warnings) {
    if (c.dataset.path) return data::load_tabular(*c.dataset.path, c.dataset.mapping, warnings);
    if (c.dataset.synthetic.is_null()) throw ConfigError("dataset", "no dataset configured (set path or synthetic)");
    if (!c.dataset.synthetic.is_array() || c.dataset.synthetic.empty())
        throw ConfigError("dataset.synthetic", "must be a non-empty list of {recipe, metadata}");
    std::vector<std::pair<synth::Recipe, json>> specs;
    for (std::size_t i = 0; i < c.dataset.synthetic.size(); ++i) {
        const auto& e = c.dataset.synthetic[i];
        const std::string field = "dataset.synthetic[" + std::to_string(i) + "]";
        if (!e.is_object() || !e.contains("recipe")) throw ConfigError(field, "needs a 'recipe'");
        try {
            specs.emplace_back(synth::recipe_from_json(e.at("recipe")), e.value("metadata", json::object()));
        } catch (const Error& err) {
            throw ConfigError(field, err.what());
        } catch (const json::exception& err) {
            throw ConfigError(field, err.what());
        }
    }
    return data::synthetic_adapter(std::move(specs));
}

std::vector<std::string> missing_credentials(const Config& c, const std::vector<std::string>& model_names) {
    std::set<std::string> missing;
    for (const auto& name : model_names) {
        const auto it = c.models.find(name);
        if (it == c.models.end() || it->second.provider != gateway::Provider::http_compatible) continue;
        const char* v = std::getenv(it->second.credentials.c_str());
        if (!v || !*v) missing.insert(it->second.credentials);
    }
    return {missing.begin(), missing.end()};
}

}  // namespace tsexam::config
