#include "tsexam/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "parallel.hpp"
#include "tsexam/assets.hpp"
#include "tsexam/rng.hpp"

namespace tsexam::agent {

std::string to_string(ConceptMode m) { return m == ConceptMode::rag ? "rag" : "llm"; }

ConceptMode concept_mode_from_string(const std::string& s) {
    if (s == "llm") return ConceptMode::llm;
    if (s == "rag") return ConceptMode::rag;
    throw InvalidParameter("concept_mode", "expected llm or rag, got '" + s + "'");
}

void PipelineConfig::check() const {
    if (structure_samples < 1) throw InvalidParameter("structure_samples", "must be at least 1");
    if (regeneration_patience < 1) throw InvalidParameter("regeneration_patience", "must be at least 1");
    if (few_shot_per_prompt > few_shot_pool.size())
        throw InvalidParameter("few_shot_per_prompt", "exceeds the few-shot pool size (" +
                                                          std::to_string(few_shot_pool.size()) + ")");
    if (instances_per_template != 4 && instances_per_template != 5)
        throw InvalidParameter("instances_per_template", "must be 4 or 5");
    if (rag_chunk_chars < 200) throw InvalidParameter("rag_chunk_chars", "must be at least 200");
    if (parallelism < 1) throw InvalidParameter("parallelism", "must be at least 1");
    generator.check();
    verifier.check();
    strong_model.check();
    weak_model.check();
}

std::vector<std::string> default_few_shot_pool() {
    std::vector<std::string> out;
    for (const auto& name : assets::list("few_shot/")) out.emplace_back(assets::get(name));
    return out;
}

// --- dataset description ------------------------------------------------------------------

namespace {

std::string fmt(double v) { return gateway::format_decimal(v, std::fabs(v) >= 100 ? 1 : 3); }

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

std::string DatasetDescription::text() const {
    std::string out = "Samples: " + std::to_string(size);
    if (scanned < size) out += " (statistics over the first " + std::to_string(scanned) + ")";
    out += "\nSeries length: " + std::to_string(min_length) + " to " + std::to_string(max_length) + " (mean " +
           fmt(mean_length) + ")\n";
    out += "Channels (bound to x, and y when series_count is 2):\n";
    for (const auto& c : columns) {
        if (c.kind == "channel") out += "  - " + c.name + ": values in [" + fmt(c.min) + ", " + fmt(c.max) + "]\n";
    }
    bool any_meta = false;
    for (const auto& c : columns) {
        if (c.kind == "channel") continue;
        if (!any_meta) out += "Metadata columns (read as meta.NAME):\n";
        any_meta = true;
        if (c.kind == "number") {
            out += "  - " + c.name + " (number): range [" + fmt(c.min) + ", " + fmt(c.max) + "]\n";
        } else {
            out += "  - " + c.name + " (string, " + std::to_string(c.distinct) + " distinct): ";
            for (std::size_t i = 0; i < c.values.size(); ++i) out += (i ? ", " : "") + c.values[i];
            if (c.distinct > c.values.size()) out += ", ...";
            out += "\n";
        }
    }
    if (!any_meta) out += "Metadata columns: none\n";
    out += "Usage example:\n" + usage_example + "\n";
    return out;
}

json to_json(const DatasetDescription& d) {
    json cols = json::array();
    for (const auto& c : d.columns) {
        json j{{"name", c.name}, {"kind", c.kind}};
        if (c.kind == "string") {
            j["values"] = c.values;
            j["distinct"] = c.distinct;
        } else {
            j["min"] = c.min;
            j["max"] = c.max;
        }
        cols.push_back(j);
    }
    return {{"size", d.size},           {"scanned", d.scanned}, {"min_length", d.min_length},
            {"max_length", d.max_length}, {"mean_length", d.mean_length}, {"columns", cols},
            {"usage_example", d.usage_example}};
}

DatasetDescription describe_dataset(const data::DatasetAdapter& dataset, std::size_t max_scan) {
    if (dataset.size() == 0) throw InvalidParameter("dataset", "dataset is empty");
    const auto& schema = dataset.schema();
    DatasetDescription d;
    d.size = dataset.size();
    d.scanned = std::min(dataset.size(), std::max<std::size_t>(max_scan, 1));

    std::vector<ColumnSummary> channels(schema.channels.size());
    for (std::size_t c = 0; c < channels.size(); ++c) {
        channels[c].name = schema.channels[c];
        channels[c].kind = "channel";
        channels[c].min = INFINITY;
        channels[c].max = -INFINITY;
    }
    std::vector<ColumnSummary> meta;
    std::vector<std::set<std::string>> distinct(schema.metadata.size());
    for (const auto& col : schema.metadata) {
        ColumnSummary s;
        s.name = col.name;
        s.kind = data::to_string(col.type);
        s.min = INFINITY;
        s.max = -INFINITY;
        meta.push_back(s);
    }

    d.min_length = SIZE_MAX;
    double total = 0.0;
    for (std::size_t i = 0; i < d.scanned; ++i) {
        const auto sample = dataset.query(i);
        const std::size_t len = sample.channels.empty() ? 0 : sample.channels.front().size();
        d.min_length = std::min(d.min_length, len);
        d.max_length = std::max(d.max_length, len);
        total += double(len);
        for (std::size_t c = 0; c < channels.size() && c < sample.channels.size(); ++c) {
            for (double v : sample.channels[c]) {
                channels[c].min = std::min(channels[c].min, v);
                channels[c].max = std::max(channels[c].max, v);
            }
        }
        for (std::size_t m = 0; m < meta.size(); ++m) {
            const auto it = sample.metadata.find(meta[m].name);
            if (it == sample.metadata.end()) continue;
            if (it->second.is_number()) {
                meta[m].min = std::min(meta[m].min, it->second.get<double>());
                meta[m].max = std::max(meta[m].max, it->second.get<double>());
            } else {
                distinct[m].insert(it->second.is_string() ? it->second.get<std::string>() : it->second.dump());
            }
        }
    }
    d.mean_length = total / double(d.scanned);
    for (std::size_t m = 0; m < meta.size(); ++m) {
        meta[m].distinct = distinct[m].size();
        for (const auto& v : distinct[m]) {
            if (meta[m].values.size() >= 20) break;
            meta[m].values.push_back(v);
        }
    }
    d.columns = channels;
    d.columns.insert(d.columns.end(), meta.begin(), meta.end());

    json example{{"selection",
                  {{"series_count", 1},
                   {"channels", {schema.channels.empty() ? std::string("value") : schema.channels.front()}},
                   {"window", {{"min_length", std::min<std::size_t>(d.min_length, 64)},
                               {"max_length", std::min<std::size_t>(d.min_length, 256)}}}}},
                 {"features", {{"slope", "ols_slope(x)"}}}};
    for (const auto& m : meta) {
        if (m.kind == "string" && !m.values.empty()) {
            example["selection"]["metadata"] = {m.name};
            example["selection"]["filter"] = "meta." + m.name + " == '" + m.values.front() + "'";
            break;
        }
    }
    d.usage_example = example.dump(2);
    return d;
}

// --- concepts -----------------------------------------------------------------------------

std::vector<std::string> parse_concepts(const std::string& reply) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    std::size_t start = 0;
    while (start <= reply.size()) {
        auto end = reply.find('\n', start);
        if (end == std::string::npos) end = reply.size();
        std::string line = trim(reply.substr(start, end - start));
        start = end + 1;
        // Strip list markers: "-", "*", "1.", "2)", and bold markup.
        std::size_t i = 0;
        while (i < line.size() && (line[i] == '-' || line[i] == '*' || line[i] == '#')) ++i;
        std::size_t j = i;
        while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i && j < line.size() && (line[j] == '.' || line[j] == ')' || line[j] == ':')) i = j + 1;
        line = trim(line.substr(i));
        std::string clean;
        for (char c : line) {
            if (c != '*') clean += c;
        }
        clean = trim(clean);
        if (clean.empty()) continue;
        if (seen.insert(lower(clean)).second) out.push_back(clean);
    }
    return out;
}

std::vector<std::string> gen_concepts(gateway::Gateway& gw, const PipelineConfig& config,
                                      const DatasetDescription& dataset, const std::optional<std::string>& rag_document) {
    std::vector<std::string> replies;
    if (config.concept_mode == ConceptMode::rag) {
        if (!rag_document || trim(*rag_document).empty())
            throw InvalidParameter("rag_document", "concept mode 'rag' requires a reference document");
        // Chunks break at paragraph boundaries where possible.
        const std::string& doc = *rag_document;
        std::size_t pos = 0;
        while (pos < doc.size()) {
            std::size_t end = std::min(doc.size(), pos + config.rag_chunk_chars);
            if (end < doc.size()) {
                const auto para = doc.rfind("\n\n", end);
                if (para != std::string::npos && para > pos) end = para;
            }
            const std::string chunk = trim(doc.substr(pos, end - pos));
            pos = end;
            while (pos < doc.size() && std::isspace(static_cast<unsigned char>(doc[pos]))) ++pos;
            if (chunk.empty()) continue;
            const std::string prompt = assets::substitute(std::string(assets::get("prompts/concepts_rag.txt")),
                                                          {{"task", config.task_description},
                                                           {"domain", config.domain},
                                                           {"dataset", dataset.text()},
                                                           {"chunk", chunk}});
            replies.push_back(gw.chat(config.generator, {{gateway::Role::user, prompt, {}}}));
        }
    } else {
        const std::string prompt = assets::substitute(
            std::string(assets::get("prompts/concepts.txt")),
            {{"task", config.task_description}, {"domain", config.domain}, {"dataset", dataset.text()}});
        replies.push_back(gw.chat(config.generator, {{gateway::Role::user, prompt, {}}}));
    }
    std::string joined;
    for (const auto& r : replies) joined += r + "\n";
    auto concepts = parse_concepts(joined);
    if (concepts.empty()) throw gateway::GatewayError("the generator returned no concepts");
    return concepts;
}

// --- transcript ---------------------------------------------------------------------------

std::size_t GenerationTranscript::failure_rounds() const {
    std::size_t n = 0;
    for (std::size_t i = 1; i < messages.size(); ++i) n += messages[i].role == gateway::Role::user ? 1 : 0;
    return n;
}

std::vector<gateway::ModelMessage> GenerationTranscript::render() const {
    std::vector<gateway::ModelMessage> out = messages;
    if (!out.empty() && !condensed_summaries.empty()) {
        out.front().text += "\n\nSummaries of earlier rejected attempts:\n";
        for (const auto& s : condensed_summaries) out.front().text += "- " + s + "\n";
    }
    return out;
}

std::size_t GenerationTranscript::size_chars() const {
    std::size_t n = 0;
    for (const auto& m : messages) n += m.text.size();
    for (const auto& s : condensed_summaries) n += s.size() + 3;
    return n;
}

void record_candidate(GenerationTranscript& t, const std::string& candidate) {
    t.messages.push_back({gateway::Role::assistant, candidate, {}});
}

void record_feedback(GenerationTranscript& t, const std::string& feedback) {
    t.messages.push_back({gateway::Role::user, feedback, {}});
}

GenerationTranscript condense_context(gateway::Gateway& gw, const gateway::ModelRef& generator,
                                      GenerationTranscript transcript) {
    const std::size_t rounds = transcript.failure_rounds();
    if (rounds < 2) return transcript;

    // Rounds are (assistant, user) pairs after the prompt; keep the last one verbatim.
    std::vector<gateway::ModelMessage> kept{transcript.messages.front()};
    std::size_t seen = 0;
    std::string candidate;
    for (std::size_t i = 1; i < transcript.messages.size(); ++i) {
        const auto& m = transcript.messages[i];
        if (seen + 1 >= rounds) {
            kept.push_back(m);
            continue;
        }
        if (m.role == gateway::Role::assistant) {
            candidate = m.text;
            continue;
        }
        ++seen;
        const std::size_t limit = std::min<std::size_t>(240, (candidate.size() + m.text.size()) / 2 + 1);
        std::string summary;
        if (generator.provider == gateway::Provider::mock) {
            const auto nl = m.text.find('\n');
            summary = trim(m.text.substr(0, nl));
        } else {
            const std::string prompt = assets::substitute(std::string(assets::get("prompts/condense.txt")),
                                                          {{"candidate", candidate}, {"feedback", m.text}});
            summary = trim(gw.chat(generator, {{gateway::Role::user, prompt, {}}}));
        }
        summary = "attempt " + std::to_string(transcript.condensed_summaries.size() + 1) + ": " + summary;
        if (summary.size() > limit) summary = summary.substr(0, limit > 3 ? limit - 3 : limit) + "...";
        transcript.condensed_summaries.push_back(std::move(summary));
        candidate.clear();
    }
    transcript.messages = std::move(kept);
    return transcript;
}

// --- generation ---------------------------------------------------------------------------

std::string generation_prompt(const PipelineConfig& config, const std::vector<std::string>& concepts,
                              std::size_t concept_index, const DatasetDescription& dataset, std::uint64_t slot_seed) {
    if (concept_index >= concepts.size())
        throw InvalidParameter("concept_index", std::to_string(concept_index) + " out of range for " +
                                                    std::to_string(concepts.size()) + " concepts");
    std::string concept_list;
    for (std::size_t i = 0; i < concepts.size(); ++i) concept_list += std::to_string(i + 1) + ". " + concepts[i] + "\n";

    Rng rng(derive_seed(slot_seed, "few_shot"));
    auto order = rng.permutation(config.few_shot_pool.size());
    order.resize(config.few_shot_per_prompt);
    std::sort(order.begin(), order.end());
    std::string examples;
    for (std::size_t i = 0; i < order.size(); ++i)
        examples += "Example " + std::to_string(i + 1) + ":\n" + trim(config.few_shot_pool[order[i]]) + "\n\n";

    std::string functions;
    for (const auto& sig : dsl::function_signatures()) functions += "  " + sig + "\n";

    return assets::substitute(std::string(assets::get("prompts/generation.txt")),
                              {{"task", config.task_description},
                               {"domain", config.domain},
                               {"concepts", concept_list},
                               {"concept_no", std::to_string(concept_index + 1)},
                               {"dataset", dataset.text()},
                               {"dsl_reference", std::string(assets::get("prompts/dsl_reference.txt"))},
                               {"functions", functions},
                               {"examples", examples}});
}

std::string extract_document(const std::string& reply) {
    std::string body = reply;
    const auto fence = body.find("```");
    if (fence != std::string::npos) {
        const auto line_end = body.find('\n', fence);
        const auto close = line_end == std::string::npos ? std::string::npos : body.find("```", line_end);
        if (close != std::string::npos) body = body.substr(line_end + 1, close - line_end - 1);
    }
    const auto open = body.find('{');
    const auto last = body.rfind('}');
    if (open == std::string::npos || last == std::string::npos || last < open) return trim(body);
    return body.substr(open, last - open + 1);
}

std::string gen_template(gateway::Gateway& gw, const PipelineConfig& config, const std::vector<std::string>& concepts,
                         std::size_t concept_index, const DatasetDescription& dataset, GenerationTranscript& transcript,
                         std::uint64_t slot_seed) {
    if (transcript.messages.empty())
        transcript.messages.push_back(
            {gateway::Role::user, generation_prompt(config, concepts, concept_index, dataset, slot_seed), {}});
    if (transcript.failure_rounds() >= 2) transcript = condense_context(gw, config.generator, std::move(transcript));
    const std::string candidate = extract_document(gw.chat(config.generator, transcript.render()));
    record_candidate(transcript, candidate);
    return candidate;
}

// --- verification -------------------------------------------------------------------------

std::string to_string(Stage s) {
    switch (s) {
        case Stage::structure: return "structure";
        case Stage::content: return "content";
        case Stage::capability: return "capability";
    }
    return "structure";
}

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::pass: return "pass";
        case Verdict::fail: return "fail";
        case Verdict::discard: return "discard";
    }
    return "pass";
}

json to_json(const VerificationOutcome& v) {
    json j{{"stage", to_string(v.stage)}, {"verdict", to_string(v.verdict)}, {"feedback", v.feedback}};
    if (!v.codes.empty()) j["codes"] = v.codes;
    return j;
}

StructureCheck verify_structure(const std::string& document, const data::DatasetAdapter& dataset, std::size_t k,
                                std::uint64_t seed) {
    StructureCheck out;
    out.outcome.stage = Stage::structure;
    auto fail = [&](const std::vector<dsl::Diagnostic>& diags) {
        out.outcome.verdict = Verdict::fail;
        for (const auto& d : diags) {
            out.outcome.codes.emplace_back(dsl::code_name(d.code));
            out.outcome.feedback += d.to_string() + "\n";
        }
        out.program.reset();
        out.samples.clear();
        return out;
    };
    try {
        out.program = dsl::parse(std::string_view(document));
    } catch (const dsl::DslError& e) {
        return fail(e.diagnostics());
    }
    if (auto diags = dsl::validate(*out.program, dataset); !diags.empty()) return fail(diags);
    try {
        auto result = dsl::evaluate(*out.program, dataset, k, seed);
        if (result.questions.size() < k) {
            std::string why = "produced " + std::to_string(result.questions.size()) + " of " + std::to_string(k) +
                              " samples in " + std::to_string(result.report.attempted) + " attempts";
            if (!result.report.skipped.empty()) {
                why += "; skipped:";
                for (const auto& [reason, n] : result.report.skipped) why += " " + reason + "=" + std::to_string(n);
            }
            return fail({{dsl::ErrorCode::INSUFFICIENT_SAMPLES, "selection", why}});
        }
        out.samples = std::move(result.questions);
    } catch (const dsl::DslError& e) {
        return fail(e.diagnostics());
    } catch (const Error& e) {
        return fail({{dsl::ErrorCode::INVALID_INSTANCE, "evaluate", e.what()}});
    }
    for (const auto& q : out.samples) {
        try {
            validate(q);
        } catch (const ValidationError& e) {
            return fail({{dsl::ErrorCode::INVALID_INSTANCE, e.field(), e.what()}});
        }
    }
    out.outcome.verdict = Verdict::pass;
    out.outcome.feedback = "ok";
    return out;
}

bool is_acceptance(const std::string& reply) {
    std::string t = trim(reply);
    while (!t.empty() && (t.front() == '"' || t.front() == '\'' || t.front() == '`')) t.erase(0, 1);
    while (!t.empty() && (t.back() == '"' || t.back() == '\'' || t.back() == '`' || t.back() == '.')) t.pop_back();
    return trim(t) == "1";
}

VerificationOutcome verify_content(gateway::Gateway& gw, const PipelineConfig& config, const std::string& concept_text,
                                   const std::string& document, const std::vector<QuestionInstance>& samples) {
    std::string rendered = document + "\n\nInstances produced by this template:\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& q = samples[i];
        rendered += "\nInstance " + std::to_string(i + 1) + ": " + q.question + "\n";
        for (std::size_t o = 0; o < q.options.size(); ++o) rendered += "[" + option_letter(o) + "] " + q.options[o] + "\n";
        rendered += "Correct: [" + option_letter(static_cast<std::size_t>(q.correct_index)) + "]\n";
    }
    const std::string prompt = assets::substitute(
        std::string(assets::get("prompts/verifier.txt")),
        {{"exam_type", config.domain}, {"concept", concept_text}, {"exam_template", rendered}});
    const std::string reply = gw.chat(config.verifier, {{gateway::Role::user, prompt, {}}});
    VerificationOutcome out;
    out.stage = Stage::content;
    if (is_acceptance(reply)) {
        out.verdict = Verdict::pass;
        out.feedback = "ok";
    } else {
        out.verdict = Verdict::fail;
        out.feedback = trim(reply);
    }
    return out;
}

VerificationOutcome capability_verdict(double strong_accuracy, double weak_accuracy) {
    VerificationOutcome out;
    out.stage = Stage::capability;
    out.verdict = weak_accuracy > strong_accuracy ? Verdict::discard : Verdict::pass;
    out.feedback = "strong accuracy " + gateway::format_decimal(strong_accuracy, 3) + ", weak accuracy " +
                   gateway::format_decimal(weak_accuracy, 3);
    return out;
}

VerificationOutcome capability_filter(gateway::Gateway& gw, const std::vector<QuestionInstance>& samples,
                                      const gateway::ModelRef& strong, const gateway::ModelRef& weak,
                                      const eval::AdministerOptions& options) {
    if (samples.empty()) throw InvalidParameter("samples", "at least one sample required");
    Exam exam;
    exam.questions = samples;
    const auto s = eval::accuracy(eval::administer(exam, gw, strong, options)).at("all");
    const auto w = eval::accuracy(eval::administer(exam, gw, weak, options)).at("all");
    auto out = capability_verdict(s.general, w.general);
    out.feedback = "strong " + std::to_string(s.correct) + "/" + std::to_string(s.total) + " vs weak " +
                   std::to_string(w.correct) + "/" + std::to_string(w.total) + " (" + out.feedback + ")";
    return out;
}

// --- pipeline -----------------------------------------------------------------------------

std::string to_string(AttemptOutcome o) {
    switch (o) {
        case AttemptOutcome::success: return "success";
        case AttemptOutcome::semantic_failure: return "semantic_failure";
        case AttemptOutcome::syntactic_failure: return "syntactic_failure";
        case AttemptOutcome::content_rejection: return "content_rejection";
    }
    return "success";
}

json to_json(const PipelineReport& r) {
    json slots = json::array();
    for (const auto& s : r.slots) {
        json attempts = json::array();
        for (const auto& a : s.attempts) {
            json stages = json::array();
            for (const auto& v : a.stages) stages.push_back(to_json(v));
            attempts.push_back({{"attempt", a.attempt},
                                {"outcome", to_string(a.outcome)},
                                {"stages", stages},
                                {"transcript_chars", a.transcript_chars}});
        }
        slots.push_back({{"slot", s.slot},
                         {"concept_index", s.concept_index},
                         {"concept", s.concept_text},
                         {"final_state", s.final_state},
                         {"instances", s.instances},
                         {"attempts", attempts}});
    }
    return {{"concepts", r.concepts},
            {"outcomes",
             {{"success", r.success},
              {"semantic_failure", r.semantic_failure},
              {"syntactic_failure", r.syntactic_failure},
              {"content_rejection", r.content_rejection}}},
            {"attempts", r.attempts},
            {"accepted_templates", r.accepted},
            {"questions", r.questions},
            {"slots", slots}};
}

namespace {

std::string feedback_message(const VerificationOutcome& v) {
    return assets::substitute(std::string(assets::get("prompts/feedback.txt")),
                              {{"stage", to_string(v.stage)}, {"feedback", v.feedback}});
}

std::string slot_prefix(std::size_t slot) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "t%02zu-", slot);
    return buf;
}

}  // namespace

PipelineResult run_pipeline(gateway::Gateway& gw, const PipelineConfig& config, const data::DatasetAdapter& dataset,
                            std::size_t num_templates, const std::optional<std::string>& rag_document) {
    config.check();
    if (num_templates == 0) throw InvalidParameter("num_templates", "must be at least 1");
    if (dataset.size() == 0) throw InvalidParameter("dataset", "dataset is empty");

    PipelineResult result;
    auto& report = result.report;
    const auto description = describe_dataset(dataset);
    try {
        report.concepts = gen_concepts(gw, config, description, rag_document);
    } catch (const gateway::GatewayError& e) {
        throw PipelineError(std::string("concept generation failed: ") + e.what(), to_json(report));
    }

    Rng concept_rng(derive_seed(config.seed, "concepts"));
    const auto concept_order = concept_rng.permutation(report.concepts.size());

    report.slots.resize(num_templates);
    std::vector<std::optional<AcceptedTemplate>> accepted(num_templates);
    try {
        detail::parallel_for(num_templates, config.parallelism, [&](std::size_t slot) {
            SlotRecord& rec = report.slots[slot];
            rec.slot = slot;
            rec.concept_index = concept_order[slot % concept_order.size()];
            rec.concept_text = report.concepts[rec.concept_index];
            const std::uint64_t slot_seed = derive_seed(config.seed, "slot:" + std::to_string(slot));
            GenerationTranscript transcript;
            rec.final_state = "exhausted";
            for (int attempt = 1; attempt <= config.regeneration_patience; ++attempt) {
                AttemptRecord a;
                a.attempt = attempt;
                const std::string doc =
                    gen_template(gw, config, report.concepts, rec.concept_index, description, transcript, slot_seed);
                a.transcript_chars = transcript.size_chars();

                auto structure = verify_structure(doc, dataset, config.structure_samples,
                                                  derive_seed(slot_seed, "structure:" + std::to_string(attempt)));
                a.stages.push_back(structure.outcome);
                if (structure.outcome.verdict != Verdict::pass) {
                    a.outcome = AttemptOutcome::syntactic_failure;
                    record_feedback(transcript, feedback_message(structure.outcome));
                    rec.attempts.push_back(std::move(a));
                    continue;
                }
                auto content = verify_content(gw, config, rec.concept_text, doc, structure.samples);
                a.stages.push_back(content);
                if (content.verdict != Verdict::pass) {
                    a.outcome = AttemptOutcome::content_rejection;
                    record_feedback(transcript, feedback_message(content));
                    rec.attempts.push_back(std::move(a));
                    continue;
                }
                auto capability = capability_filter(gw, structure.samples, config.strong_model, config.weak_model,
                                                    config.capability);
                a.stages.push_back(capability);
                if (capability.verdict == Verdict::discard) {
                    a.outcome = AttemptOutcome::semantic_failure;
                    rec.attempts.push_back(std::move(a));
                    rec.final_state = "discarded";
                    return;
                }
                a.outcome = AttemptOutcome::success;
                rec.attempts.push_back(std::move(a));
                rec.final_state = "accepted";
                accepted[slot] = AcceptedTemplate{slot, doc, std::move(*structure.program)};
                return;
            }
        });
    } catch (const gateway::GatewayError& e) {
        throw PipelineError(std::string("template generation aborted: ") + e.what(), to_json(report));
    }

    for (std::size_t slot = 0; slot < num_templates; ++slot) {
        auto& rec = report.slots[slot];
        for (const auto& a : rec.attempts) {
            ++report.attempts;
            switch (a.outcome) {
                case AttemptOutcome::success: ++report.success; break;
                case AttemptOutcome::semantic_failure: ++report.semantic_failure; break;
                case AttemptOutcome::syntactic_failure: ++report.syntactic_failure; break;
                case AttemptOutcome::content_rejection: ++report.content_rejection; break;
            }
        }
        if (!accepted[slot]) continue;
        auto& t = *accepted[slot];
        const std::uint64_t slot_seed = derive_seed(config.seed, "slot:" + std::to_string(slot));
        auto produced = dsl::evaluate(t.program, dataset, config.instances_per_template, derive_seed(slot_seed, "exam"));
        rec.instances = produced.questions.size();
        for (auto& q : produced.questions) {
            q.id = slot_prefix(slot) + q.id;
            result.exam.questions.push_back(std::move(q));
        }
        result.templates.push_back(std::move(t));
    }
    report.accepted = result.templates.size();
    report.questions = result.exam.questions.size();
    if (result.templates.empty()) throw PipelineError("no template was accepted", to_json(report));

    json digest{{"task", config.task_description},
                {"domain", config.domain},
                {"concept_mode", to_string(config.concept_mode)},
                {"k", config.structure_samples},
                {"patience", config.regeneration_patience},
                {"few_shot_per_prompt", config.few_shot_per_prompt},
                {"instances_per_template", config.instances_per_template},
                {"models",
                 {config.generator.model_id, config.verifier.model_id, config.strong_model.model_id,
                  config.weak_model.model_id}},
                {"num_templates", num_templates},
                {"seed", config.seed}};
    result.exam.metadata.config_digest = gateway::sha256_hex(digest.dump());
    result.exam.metadata.seed = config.seed;
    result.exam.metadata.round = 0;
    return result;
}

}  // namespace tsexam::agent
