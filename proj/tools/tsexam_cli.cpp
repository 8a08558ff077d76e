// tsexam command-line tool.
#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "tsexam/config.hpp"
#include "tsexam/dsl.hpp"
#include "tsexam/evaluation.hpp"
#include "tsexam/exam.hpp"
#include "tsexam/gateway.hpp"
#include "tsexam/irt.hpp"
#include "tsexam/pipeline.hpp"
#include "tsexam/templates.hpp"

namespace fs = std::filesystem;
using tsexam::json;
namespace cfg = tsexam::config;
namespace gw = tsexam::gateway;
namespace ev = tsexam::eval;

namespace {

/// Bad flags, config problems or missing credentials: exit status 2.
class UsageError : public tsexam::Error {
public:
    UsageError(std::string kind, std::string field, const std::string& what)
        : Error(what), kind_(std::move(kind)), field_(std::move(field)) {}
    const std::string& kind() const noexcept { return kind_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::string kind_;
    std::string field_;
};

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> parallelism;
};

// Files written by the running command, for the manifest.
struct Run {
    std::string command;
    cfg::Config config;
    json config_json = json::object();
    fs::path out;
    std::vector<fs::path> files;

    std::string digest() const {
        return gw::sha256_hex(json{{"config", config_json}, {"seed", config.seed}}.dump());
    }

    fs::path write(const std::string& name, const std::string& bytes) {
        const fs::path p = out / name;
        fs::create_directories(p.parent_path());
        std::ofstream f(p, std::ios::binary);
        if (!f) throw tsexam::IoError(p, "cannot write");
        f << bytes;
        if (!f) throw tsexam::IoError(p, "write failed");
        files.push_back(name);
        return p;
    }

    void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

    void write_exam(const std::string& name, const tsexam::Exam& exam) {
        write(name, tsexam::exam_io::serialize(exam));
    }

    void write_manifest() {
        json entries = json::array();
        std::sort(files.begin(), files.end());
        files.erase(std::unique(files.begin(), files.end()), files.end());
        for (const auto& f : files) {
            std::ifstream in(out / f, std::ios::binary);
            std::ostringstream ss;
            ss << in.rdbuf();
            const std::string bytes = ss.str();
            entries.push_back({{"path", f.generic_string()}, {"sha256", gw::sha256_hex(bytes)}, {"bytes", bytes.size()}});
        }
        json m{{"command", command},
               {"seed", config.seed},
               {"config_digest", digest()},
               {"version", "0.1.0"},
               {"files", entries}};
        fs::create_directories(out);
        std::ofstream f(out / "manifest.json", std::ios::binary);
        f << m.dump(2) << "\n";
    }
};

Run make_run(const std::string& command, const Globals& g) {
    Run r;
    r.command = command;
    fs::path base = ".";
    if (!g.config_path.empty()) {
        std::ifstream in(g.config_path);
        if (!in) throw cfg::ConfigError("config", g.config_path + ": cannot open");
        try {
            r.config_json = json::parse(in, nullptr, true, true);
        } catch (const json::parse_error& e) {
            throw cfg::ConfigError("config", g.config_path + ": " + e.what());
        }
        base = fs::path(g.config_path).parent_path();
        if (base.empty()) base = ".";
    }
    r.config = cfg::from_json(r.config_json, base);
    if (g.seed) r.config.seed = *g.seed;
    if (g.out) r.config.output_dir = *g.out;
    if (g.parallelism) {
        if (*g.parallelism < 1) throw UsageError("usage", "--parallelism", "must be at least 1");
        r.config.parallelism = *g.parallelism;
    }
    r.out = r.config.output_dir;
    return r;
}

void require_credentials(const Run& r, const std::vector<std::string>& names) {
    const auto missing = cfg::missing_credentials(r.config, names);
    if (missing.empty()) return;
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw UsageError("missing_credentials", missing.front(), "environment variable(s) not set: " + list);
}

gw::GatewayOptions gateway_options(const Run& r) {
    gw::GatewayOptions o;
    o.max_in_flight = r.config.gateway.max_in_flight;
    o.min_interval_s = r.config.gateway.min_interval_s;
    if (r.config.gateway.audit_log) {
        fs::create_directories(r.out);
        o.audit_log = r.out / "audit.ndjson";
    }
    return o;
}

tsexam::Exam read_exam(const std::string& path) {
    if (path.empty()) throw UsageError("usage", "--exam", "an exam file is required");
    return tsexam::load_exam(path);
}

std::string records_jsonl(const std::vector<ev::ResponseRecord>& records) {
    std::string out;
    for (const auto& r : records) out += ev::to_json(r).dump() + "\n";
    return out;
}

std::vector<ev::ResponseRecord> read_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw tsexam::IoError(path, "cannot open");
    std::vector<ev::ResponseRecord> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(ev::record_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw tsexam::ExamFormatError(n, "record", e.what());
        }
    }
    return out;
}

json accuracy_json(const std::vector<ev::ResponseRecord>& records) {
    json j = json::object();
    for (const auto& [name, group] : std::map<std::string, ev::GroupBy>{{"overall", ev::GroupBy::none},
                                                                          {"category", ev::GroupBy::category},
                                                                          {"candidate", ev::GroupBy::candidate},
                                                                          {"modality", ev::GroupBy::modality}}) {
        json g = json::object();
        for (const auto& [key, acc] : ev::accuracy(records, group)) g[key] = ev::to_json(acc);
        j[name] = g;
    }
    return j;
}

// ---- subcommands ----

struct GenArgs {
    std::optional<std::size_t> total;
};

void cmd_gen(const Globals& g, const GenArgs& a) {
    Run r = make_run("gen", g);
    const std::size_t total = a.total.value_or(r.config.gen.total_questions);
    if (total < 1) throw UsageError("usage", "--total", "must be at least 1");
    auto exam = tsexam::templates::generate_exam(tsexam::templates::default_counts(total), r.config.seed);
    exam.metadata.seed = r.config.seed;
    exam.metadata.config_digest = r.digest();
    r.write_exam("exam.jsonl", exam);
    r.write_manifest();
    std::cout << (r.out / "exam.jsonl").string() << ": " << exam.questions.size() << " questions\n";
}

struct RefineArgs {
    std::string exam;
};

void cmd_refine(const Globals& g, const RefineArgs& a) {
    Run r = make_run("refine", g);
    auto exam = read_exam(a.exam);
    const auto& names = r.config.refine.candidates;
    if (names.size() < 2) throw UsageError("config", "refine.candidates", "at least two candidate models are required");
    std::vector<gw::ModelRef> models;
    for (std::size_t i = 0; i < names.size(); ++i)
        models.push_back(r.config.model(names[i], "refine.candidates[" + std::to_string(i) + "]"));
    require_credentials(r, names);

    gw::Gateway gateway(gateway_options(r));
    const auto opts = cfg::administer_options(r.config);
    const tsexam::irt::TakeExam take = [&](const tsexam::Exam& e) {
        std::vector<std::string> qids;
        for (const auto& q : e.questions) qids.push_back(q.id);
        tsexam::irt::ResponseMatrix m(qids, names);
        for (std::size_t c = 0; c < models.size(); ++c) {
            if (models[c].mock) models[c].mock->reset();
            const auto records = ev::administer(e, gateway, models[c], opts);
            for (std::size_t q = 0; q < records.size(); ++q) m.set(q, c, records[q].correct ? 1 : 0);
        }
        return m;
    };
    tsexam::irt::RefineOptions ro;
    ro.drop_percentage = r.config.refine.drop_percentage;
    ro.num_iterations = r.config.refine.num_iterations;
    ro.seed = r.config.seed;
    ro.fit = r.config.refine.fit;
    const auto initial = take(exam);
    auto result = tsexam::irt::refine(std::move(exam), initial, ro, tsexam::irt::builtin_resampler(), take);
    result.exam.metadata.config_digest = r.digest();
    result.exam.metadata.seed = r.config.seed;

    json trace = json::array();
    for (const auto& t : result.trace) trace.push_back(tsexam::irt::to_json(t));
    json matrix = json::array();
    for (std::size_t q = 0; q < result.responses.questions(); ++q) {
        json row = json::array();
        for (std::size_t c = 0; c < result.responses.candidates(); ++c) row.push_back(int(result.responses.at(q, c)));
        matrix.push_back({{"question_id", result.responses.question_ids()[q]}, {"responses", row}});
    }
    r.write_exam("refined_exam.jsonl", result.exam);
    r.write_json("trace.json", {{"rounds", trace}, {"aborted", result.aborted}, {"diagnostic", result.diagnostic}});
    r.write_json("responses.json", {{"candidates", names}, {"matrix", matrix}});
    r.write_manifest();
    std::cout << (r.out / "refined_exam.jsonl").string() << ": " << result.trace.size() << " trace entries"
              << (result.aborted ? " (aborted: " + result.diagnostic + ")" : std::string()) << "\n";
}

struct AgentArgs {
    std::optional<std::size_t> templates;
};

void cmd_agent(const Globals& g, const AgentArgs& a) {
    Run r = make_run("agent", g);
    const auto pc = cfg::pipeline_config(r.config);
    const auto& ag = r.config.agent;
    require_credentials(r, {ag.generator, ag.verifier, ag.strong_model, ag.weak_model});
    std::vector<std::string> warnings;
    const auto dataset = cfg::load_dataset(r.config, &warnings);
    for (const auto& w : warnings) std::cerr << json{{"warning", w}}.dump() << "\n";
    std::optional<std::string> rag;
    if (ag.rag_file) {
        std::ifstream in(*ag.rag_file, std::ios::binary);
        if (!in) throw cfg::ConfigError("agent.rag_file", ag.rag_file->string() + ": cannot open");
        std::ostringstream ss;
        ss << in.rdbuf();
        rag = ss.str();
    }
    gw::Gateway gateway(gateway_options(r));
    const std::size_t n = a.templates.value_or(ag.num_templates);
    try {
        auto result = tsexam::agent::run_pipeline(gateway, pc, *dataset, n, rag);
        result.exam.metadata.seed = r.config.seed;
        r.write_exam("exam.jsonl", result.exam);
        r.write_json("report.json", tsexam::agent::to_json(result.report));
        for (const auto& t : result.templates) {
            char name[32];
            std::snprintf(name, sizeof name, "templates/t%02zu.json", t.slot);
            r.write(name, t.document + (t.document.empty() || t.document.back() != '\n' ? "\n" : ""));
        }
        r.write_manifest();
        std::cout << (r.out / "exam.jsonl").string() << ": " << result.exam.questions.size() << " questions from "
                  << result.templates.size() << " templates\n";
    } catch (const tsexam::agent::PipelineError& e) {
        r.write_json("report.json", e.report());
        r.write_manifest();
        throw;
    }
}

struct AdministerArgs {
    std::string exam;
    std::vector<std::string> models;
    std::string modality;
    std::optional<int> dpi;
};

void cmd_administer(const Globals& g, const AdministerArgs& a) {
    Run r = make_run("administer", g);
    auto opts = cfg::administer_options(r.config);
    if (!a.modality.empty()) {
        try {
            opts.modality = ev::modality_from_string(a.modality);
        } catch (const tsexam::InvalidParameter& e) {
            throw UsageError("usage", "--modality", e.what());
        }
    }
    if (a.dpi) {
        if (*a.dpi < 1) throw UsageError("usage", "--dpi", "must be positive");
        opts.dpi = *a.dpi;
    }
    const auto exam = read_exam(a.exam);
    std::vector<std::string> names = a.models.empty() ? r.config.refine.candidates : a.models;
    if (names.empty()) throw UsageError("usage", "--model", "name at least one model");
    std::vector<gw::ModelRef> models;
    for (const auto& n : names) models.push_back(r.config.model(n, "--model"));
    require_credentials(r, names);
    gw::Gateway gateway(gateway_options(r));
    std::vector<ev::ResponseRecord> all;
    for (std::size_t i = 0; i < models.size(); ++i) {
        auto records = ev::administer(exam, gateway, models[i], opts);
        for (auto& rec : records) rec.candidate = names[i];
        all.insert(all.end(), records.begin(), records.end());
    }
    r.write("responses.jsonl", records_jsonl(all));
    r.write_json("accuracy.json", accuracy_json(all));
    r.write_manifest();
    std::cout << (r.out / "responses.jsonl").string() << ": " << all.size() << " responses\n";
}

struct ScoreArgs {
    std::string exam;
    std::string responses;
};

void cmd_score(const Globals& g, const ScoreArgs& a) {
    Run r = make_run("score", g);
    const auto exam = read_exam(a.exam);
    if (a.responses.empty()) throw UsageError("usage", "--responses", "a responses file is required");
    const auto raw = read_records(a.responses);
    // Group by candidate so each one is checked against the full exam.
    std::map<std::string, std::vector<ev::ResponseRecord>> by_candidate;
    for (const auto& rec : raw) by_candidate[rec.candidate].push_back(rec);
    if (by_candidate.empty()) throw tsexam::ValidationError("responses", "no responses in " + a.responses);
    std::vector<ev::ResponseRecord> scored;
    for (const auto& [candidate, recs] : by_candidate) {
        auto s = ev::score(exam, recs);
        scored.insert(scored.end(), s.begin(), s.end());
    }
    r.write("scored.jsonl", records_jsonl(scored));
    const json acc = accuracy_json(scored);
    r.write_json("accuracy.json", acc);
    r.write_manifest();
    std::cout << acc["overall"].dump(2) << "\n";
}

struct JuryArgs {
    std::string exam;
    std::vector<std::string> judges;
    std::string domain;
};

void cmd_jury(const Globals& g, const JuryArgs& a) {
    Run r = make_run("jury", g);
    const auto exam = read_exam(a.exam);
    const auto names = a.judges.empty() ? r.config.jury.judges : a.judges;
    if (names.empty()) throw UsageError("config", "jury.judges", "name at least one judge model");
    std::vector<gw::ModelRef> panel;
    for (const auto& n : names) panel.push_back(r.config.model(n, "jury.judges"));
    require_credentials(r, names);
    gw::Gateway gateway(gateway_options(r));
    const auto report = ev::jury_score(exam.questions, gateway, panel, a.domain.empty() ? r.config.jury.domain : a.domain,
                                       {std::begin(ev::kAllCriteria), std::end(ev::kAllCriteria)},
                                       r.config.parallelism);
    r.write_json("jury.json", ev::to_json(report));
    r.write_manifest();
    std::cout << "combined " << report.combined << " (coverage " << report.coverage() << ")\n";
}

struct DiversityArgs {
    std::string exam;
    std::optional<std::size_t> sample_n;
};

void cmd_diversity(const Globals& g, const DiversityArgs& a) {
    Run r = make_run("diversity", g);
    const auto exam = read_exam(a.exam);
    const std::size_t n = a.sample_n.value_or(r.config.diversity.sample_n);
    if (n < 2) throw UsageError("usage", "--sample", "must be at least 2");
    gw::ModelRef embedder;
    const auto& name = r.config.diversity.embedder;
    if (r.config.models.count(name)) {
        embedder = r.config.model(name, "diversity.embedder");
        require_credentials(r, {name});
    } else {
        embedder.provider = gw::Provider::mock;
        embedder.model_id = "hashed-words";
        embedder.mock = std::make_shared<gw::MockModel>(std::vector<gw::MockRule>{});
    }
    gw::Gateway gateway(gateway_options(r));
    const auto result = ev::diversity(exam.questions, gateway, embedder, n, r.config.seed);
    r.write_json("diversity.json", ev::to_json(result));
    r.write_manifest();
    std::cout << ev::to_json(result).dump(2) << "\n";
}

struct RenderArgs {
    std::string exam;
    std::optional<int> dpi;
    std::vector<std::string> ids;
};

void cmd_render(const Globals& g, const RenderArgs& a) {
    Run r = make_run("render", g);
    const auto exam = read_exam(a.exam);
    const int dpi = a.dpi.value_or(r.config.administer.dpi);
    const std::set<std::string> wanted(a.ids.begin(), a.ids.end());
    std::set<std::string> seen;
    std::size_t n = 0;
    for (const auto& q : exam.questions) {
        if (!wanted.empty() && !wanted.count(q.id)) continue;
        seen.insert(q.id);
        r.write("plots/" + q.id + ".png", gw::render_plot(q.series, dpi));
        ++n;
    }
    for (const auto& id : wanted)
        if (!seen.count(id)) throw tsexam::ValidationError("question_id", "no question '" + id + "' in the exam");
    r.write_manifest();
    std::cout << n << " plot(s) under " << (r.out / "plots").string() << "\n";
}

struct ReviewArgs {
    std::string dir;
};

// Interactive pass over agent templates: each is shown with its first question and approved or rejected.
void cmd_review(const Globals& g, const ReviewArgs& a) {
    Run r = make_run("review", g);
    const fs::path dir = a.dir.empty() ? r.out : fs::path(a.dir);
    const auto exam = tsexam::load_exam(dir / "exam.jsonl");
    std::vector<fs::path> docs;
    if (fs::is_directory(dir / "templates"))
        for (const auto& e : fs::directory_iterator(dir / "templates"))
            if (e.path().extension() == ".json") docs.push_back(e.path());
    std::sort(docs.begin(), docs.end());
    if (docs.empty()) throw tsexam::ValidationError("templates", "no templates under " + (dir / "templates").string());

    json decisions = json::object();
    std::set<std::string> rejected;
    bool quit = false;
    for (const auto& path : docs) {
        const std::string slot = path.stem().string();
        std::string decision = "skipped";
        if (!quit) {
            std::ifstream in(path);
            const json doc = json::parse(in);
            std::cout << "== " << slot << ": " << doc.value("name", "") << "\n" << doc.value("question", "") << "\n";
            for (const auto& q : exam.questions) {
                if (q.id.rfind(slot + "-", 0) != 0) continue;
                std::cout << "  e.g. " << q.question << "\n";
                for (std::size_t i = 0; i < q.options.size(); ++i)
                    std::cout << "    [" << tsexam::option_letter(i) << "] " << q.options[i]
                              << (int(i) == q.correct_index ? "  *" : "") << "\n";
                break;
            }
            while (true) {
                std::cout << "approve (a), reject (r), skip (s), quit (q)? " << std::flush;
                std::string line;
                if (!std::getline(std::cin, line)) {
                    quit = true;
                    break;
                }
                if (line == "a") decision = "approved";
                else if (line == "r") decision = "rejected";
                else if (line == "s") decision = "skipped";
                else if (line == "q") quit = true;
                else continue;
                break;
            }
        }
        if (decision == "rejected") rejected.insert(slot);
        decisions[slot] = decision;
    }
    tsexam::Exam kept;
    kept.metadata = exam.metadata;
    for (const auto& q : exam.questions) {
        const auto dash = q.id.find('-');
        if (!rejected.count(q.id.substr(0, dash))) kept.questions.push_back(q);
    }
    r.out = dir;
    r.write_json("review.json", decisions);
    r.write_exam("reviewed_exam.jsonl", kept);
    r.write_manifest();
    std::cout << kept.questions.size() << " of " << exam.questions.size() << " questions kept\n";
}

void print_error(const std::string& kind, const std::string& message, const std::string& field = "",
                 const json& extra = nullptr) {
    json j{{"error", {{"type", kind}, {"message", message}}}};
    if (!field.empty()) j["error"]["field"] = field;
    if (!extra.is_null()) j["error"]["details"] = extra;
    std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Time series reasoning exams: generation, refinement, administration and scoring."};
    app.name("tsexam");
    app.require_subcommand(1);
    app.set_version_flag("--version", "0.1.0");

    Globals g;
    app.add_option("-c,--config", g.config_path, "Config file (JSON)");
    app.add_option("--seed", g.seed, "Seed; overrides the config");
    app.add_option("-o,--out", g.out, "Run directory for artifacts; overrides the config");
    app.add_option("-j,--parallelism", g.parallelism, "Concurrent model calls; overrides the config");

    std::function<void()> action;

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate an exam from the builtin templates");
    gen_cmd->add_option("--total", gen.total, "Number of questions (default from config: 763)");
    gen_cmd->callback([&] { action = [&] { cmd_gen(g, gen); }; });

    RefineArgs refine;
    auto* refine_cmd = app.add_subcommand("refine", "Refine an exam with the IRT drop-and-replace loop");
    refine_cmd->add_option("--exam", refine.exam, "Exam file")->required();
    refine_cmd->callback([&] { action = [&] { cmd_refine(g, refine); }; });

    AgentArgs agent;
    auto* agent_cmd = app.add_subcommand("agent", "Generate templates and an exam from a dataset");
    agent_cmd->add_option("--templates", agent.templates, "Template slots to attempt (default from config)");
    agent_cmd->callback([&] { action = [&] { cmd_agent(g, agent); }; });

    AdministerArgs adm;
    auto* adm_cmd = app.add_subcommand("administer", "Ask models to answer an exam");
    adm_cmd->add_option("--exam", adm.exam, "Exam file")->required();
    adm_cmd->add_option("-m,--model", adm.models, "Model name from the config (repeatable)");
    adm_cmd->add_option("--modality", adm.modality, "vision or text");
    adm_cmd->add_option("--dpi", adm.dpi, "Plot resolution for vision prompts");
    adm_cmd->callback([&] { action = [&] { cmd_administer(g, adm); }; });

    ScoreArgs sc;
    auto* score_cmd = app.add_subcommand("score", "Score recorded answers against an exam");
    score_cmd->add_option("--exam", sc.exam, "Exam file")->required();
    score_cmd->add_option("--responses", sc.responses, "Responses file (JSON lines)")->required();
    score_cmd->callback([&] { action = [&] { cmd_score(g, sc); }; });

    JuryArgs jury;
    auto* jury_cmd = app.add_subcommand("jury", "Rate question quality with a panel of judge models");
    jury_cmd->add_option("--exam", jury.exam, "Exam file")->required();
    jury_cmd->add_option("--judge", jury.judges, "Judge model name (repeatable; default from config)");
    jury_cmd->add_option("--domain", jury.domain, "Domain used in the rating prompts");
    jury_cmd->callback([&] { action = [&] { cmd_jury(g, jury); }; });

    DiversityArgs div;
    auto* div_cmd = app.add_subcommand("diversity", "Pairwise diversity of exam questions");
    div_cmd->add_option("--exam", div.exam, "Exam file")->required();
    div_cmd->add_option("--sample", div.sample_n, "Questions to sample (default from config: 50)");
    div_cmd->callback([&] { action = [&] { cmd_diversity(g, div); }; });

    RenderArgs ren;
    auto* ren_cmd = app.add_subcommand("render", "Plot the series of exam questions as PNG files");
    ren_cmd->add_option("--exam", ren.exam, "Exam file")->required();
    ren_cmd->add_option("--dpi", ren.dpi, "Resolution (default from config: 50)");
    ren_cmd->add_option("--id", ren.ids, "Question id to render (repeatable; default all)");
    ren_cmd->callback([&] { action = [&] { cmd_render(g, ren); }; });

    ReviewArgs rev;
    auto* rev_cmd = app.add_subcommand("review", "Approve or reject agent templates interactively");
    rev_cmd->add_option("--dir", rev.dir, "Agent run directory (default: the run directory)");
    rev_cmd->callback([&] { action = [&] { cmd_review(g, rev); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("usage", e.what());
        return 2;
    }

    try {
        action();
        return 0;
    } catch (const UsageError& e) {
        print_error(e.kind(), e.what(), e.field());
        return 2;
    } catch (const cfg::ConfigError& e) {
        print_error("config", e.what(), e.field());
        return 2;
    } catch (const tsexam::agent::PipelineError& e) {
        print_error("pipeline", e.what(), "", e.report());
        return 1;
    } catch (const tsexam::dsl::DslError& e) {
        json codes = json::array();
        for (const auto& d : e.diagnostics()) codes.push_back(d.to_string());
        print_error("dsl", e.what(), "", codes);
        return 1;
    } catch (const tsexam::ExamFormatError& e) {
        print_error("exam_format", e.what(), e.field());
        return 1;
    } catch (const tsexam::ValidationError& e) {
        print_error("validation", e.what(), e.field());
        return 1;
    } catch (const tsexam::InvalidParameter& e) {
        print_error("invalid_parameter", e.what(), e.field());
        return 1;
    } catch (const gw::AuthError& e) {
        print_error("auth", e.what());
        return 1;
    } catch (const gw::GatewayError& e) {
        print_error("gateway", e.what());
        return 1;
    } catch (const std::exception& e) {
        print_error("runtime", e.what());
        return 1;
    }
}
