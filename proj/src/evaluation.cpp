#include "tsexam/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>

#include "parallel.hpp"
#include "tsexam/assets.hpp"
#include "tsexam/rng.hpp"

namespace tsexam::eval {

std::string to_string(Modality m) { return m == Modality::text ? "text" : "vision"; }

Modality modality_from_string(const std::string& s) {
    if (s == "text") return Modality::text;
    if (s == "vision") return Modality::vision;
    throw InvalidParameter("modality", "expected vision or text, got '" + s + "'");
}

json to_json(const ResponseRecord& r) {
    json j{{"question_id", r.question_id},
           {"candidate", r.candidate},
           {"raw_text", r.raw_text},
           {"parsed_choice", r.parsed_choice ? json(*r.parsed_choice) : json(nullptr)},
           {"correct", r.correct},
           {"parsable", r.parsable},
           {"modality", to_string(r.modality)},
           {"dpi", r.dpi ? json(*r.dpi) : json(nullptr)},
           {"category", r.category}};
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

ResponseRecord record_from_json(const json& j) {
    ResponseRecord r;
    try {
        r.question_id = j.at("question_id").get<std::string>();
        r.candidate = j.value("candidate", std::string());
        r.raw_text = j.value("raw_text", std::string());
        if (j.contains("parsed_choice") && !j["parsed_choice"].is_null()) r.parsed_choice = j["parsed_choice"].get<int>();
        r.correct = j.value("correct", false);
        r.parsable = j.value("parsable", r.parsed_choice.has_value());
        r.modality = modality_from_string(j.value("modality", std::string("vision")));
        if (j.contains("dpi") && !j["dpi"].is_null()) r.dpi = j["dpi"].get<int>();
        r.category = j.value("category", std::string());
        r.error = j.value("error", std::string());
    } catch (const json::exception& e) {
        throw ValidationError("response", e.what());
    }
    return r;
}

// --- administration -----------------------------------------------------------------------

namespace {

std::string options_block(const QuestionInstance& q) {
    std::string out;
    for (std::size_t i = 0; i < q.options.size(); ++i) out += "[" + option_letter(i) + "] " + q.options[i] + "\n";
    return out;
}

std::string series_block(const std::vector<TimeSeries>& series, const AdministerOptions& o) {
    std::string out;
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (o.modality == Modality::text) {
            out += "Time series " + std::to_string(i + 1) + ": " + gateway::serialize_text(series[i], o.decimals) + "\n";
        }
    }
    return out;
}

}  // namespace

std::vector<gateway::ModelMessage> build_prompt(const QuestionInstance& q, const AdministerOptions& options) {
    gateway::ModelMessage m;
    m.role = gateway::Role::user;
    std::string text;
    if (q.icl_example) {
        text += "Here is a worked example.\n";
        text += q.icl_example->question + "\n";
        if (options.modality == Modality::vision && !q.icl_example->series.empty()) {
            text += "(The example's time series is shown in image 1.)\n";
            m.images.push_back(gateway::render_plot(q.icl_example->series, options.dpi));
        }
        text += series_block(q.icl_example->series, options);
        text += "Answer: " + q.icl_example->answer + "\n\nNow the question to answer.\n";
    }
    text += q.question + "\n";
    if (options.modality == Modality::vision) {
        m.images.push_back(gateway::render_plot(q.series, options.dpi));
        if (q.icl_example && !q.icl_example->series.empty())
            text += "(The time series for this question is shown in image 2.)\n";
    }
    text += series_block(q.series, options);
    text += "Options:\n" + options_block(q);
    if (q.hint) text += "Hint: " + *q.hint + "\n";
    text += q.format_hint;
    m.text = std::move(text);
    return {std::move(m)};
}

std::optional<int> parse_answer(const std::string& raw, int option_count) {
    if (option_count < 2 || option_count > 26) throw InvalidParameter("option_count", "must be in [2, 26]");
    auto index_of = [&](char c) -> std::optional<int> {
        if (!std::isalpha(static_cast<unsigned char>(c))) return std::nullopt;
        const int idx = std::toupper(static_cast<unsigned char>(c)) - 'A';
        if (idx < 0 || idx >= option_count) return std::nullopt;
        return idx;
    };
    auto space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };

    std::optional<int> last;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] != '[') continue;
        std::size_t j = i + 1;
        while (j < raw.size() && space(raw[j])) ++j;
        if (j >= raw.size()) break;
        const char letter = raw[j++];
        while (j < raw.size() && space(raw[j])) ++j;
        if (j < raw.size() && raw[j] == ']') {
            if (auto idx = index_of(letter)) last = idx;
        }
    }
    if (last) return last;

    // Trailing standalone letter, optionally followed by punctuation: "... the answer is B."
    std::size_t end = raw.size();
    while (end > 0 && (space(raw[end - 1]) || std::ispunct(static_cast<unsigned char>(raw[end - 1])))) --end;
    if (end == 0) return std::nullopt;
    const char c = raw[end - 1];
    if (end >= 2 && std::isalnum(static_cast<unsigned char>(raw[end - 2]))) return std::nullopt;
    return index_of(c);
}

ResponseRecord score_response(const QuestionInstance& q, const std::string& candidate, const std::string& raw) {
    ResponseRecord r;
    r.question_id = q.id;
    r.candidate = candidate;
    r.raw_text = raw;
    r.category = tsexam::to_string(q.category.name);
    r.parsed_choice = parse_answer(raw, static_cast<int>(q.options.size()));
    r.parsable = r.parsed_choice.has_value();
    r.correct = r.parsable && *r.parsed_choice == q.correct_index;
    return r;
}

std::vector<ResponseRecord> administer(const Exam& exam, gateway::Gateway& gw, const gateway::ModelRef& candidate,
                                       const AdministerOptions& options) {
    if (options.dpi <= 0) throw InvalidParameter("dpi", "must be positive");
    std::vector<ResponseRecord> out(exam.questions.size());
    detail::parallel_for(exam.questions.size(), options.parallelism, [&](std::size_t i) {
        const auto& q = exam.questions[i];
        std::string raw;
        std::string error;
        try {
            raw = gw.chat(candidate, build_prompt(q, options), options.retry);
        } catch (const gateway::GatewayError& e) {
            if (options.strict) throw;
            error = e.what();
        }
        ResponseRecord r = score_response(q, candidate.model_id, raw);
        if (!error.empty()) {
            r.parsed_choice.reset();
            r.parsable = false;
            r.correct = false;
            r.error = error;
        }
        r.modality = options.modality;
        if (options.modality == Modality::vision) r.dpi = options.dpi;
        out[i] = std::move(r);
    });
    return out;
}

// --- accuracy -----------------------------------------------------------------------------

GroupBy group_from_string(const std::string& s) {
    if (s.empty() || s == "none") return GroupBy::none;
    if (s == "category") return GroupBy::category;
    if (s == "candidate") return GroupBy::candidate;
    if (s == "modality") return GroupBy::modality;
    throw InvalidParameter("group_by", "expected none, category, candidate or modality, got '" + s + "'");
}

json to_json(const Accuracy& a) {
    return {{"total", a.total},
            {"parsable", a.parsable},
            {"correct", a.correct},
            {"general", a.general},
            {"parsable_only", a.parsable_only ? json(*a.parsable_only) : json(nullptr)}};
}

std::map<std::string, Accuracy> accuracy(const std::vector<ResponseRecord>& records, GroupBy group_by) {
    if (records.empty()) throw InvalidParameter("records", "at least one record required");
    std::map<std::string, Accuracy> out;
    for (const auto& r : records) {
        std::string key = "all";
        switch (group_by) {
            case GroupBy::none: break;
            case GroupBy::category: key = r.category; break;
            case GroupBy::candidate: key = r.candidate; break;
            case GroupBy::modality: key = to_string(r.modality); break;
        }
        auto& a = out[key];
        ++a.total;
        a.parsable += r.parsable ? 1 : 0;
        a.correct += r.correct ? 1 : 0;
    }
    for (auto& [k, a] : out) {
        a.general = double(a.correct) / double(a.total);
        if (a.parsable) a.parsable_only = double(a.correct) / double(a.parsable);
    }
    return out;
}

void match_records(const Exam& exam, const std::vector<ResponseRecord>& records) {
    std::set<std::string> ids;
    for (const auto& q : exam.questions) ids.insert(q.id);
    for (const auto& r : records) {
        if (!ids.count(r.question_id))
            throw ValidationError("question_id", "response refers to unknown question '" + r.question_id + "'");
    }
}

std::vector<ResponseRecord> score(const Exam& exam, const std::vector<ResponseRecord>& responses) {
    match_records(exam, responses);
    std::vector<ResponseRecord> out;
    for (const auto& q : exam.questions) {
        bool found = false;
        for (const auto& r : responses) {
            if (r.question_id != q.id) continue;
            found = true;
            ResponseRecord s = score_response(q, r.candidate, r.raw_text);
            s.modality = r.modality;
            s.dpi = r.dpi;
            s.error = r.error;
            out.push_back(std::move(s));
        }
        if (!found) throw ValidationError("question_id", "no response for question '" + q.id + "'");
    }
    return out;
}

// --- jury ---------------------------------------------------------------------------------

std::string to_string(Criterion c) {
    switch (c) {
        case Criterion::specificity: return "specificity";
        case Criterion::unambiguity: return "unambiguity";
        case Criterion::domain_relevance: return "domain_relevance";
        case Criterion::answerability: return "answerability";
        case Criterion::no_unintended_hints: return "no_unintended_hints";
    }
    return "specificity";
}

json to_json(const JuryReport& r) {
    json qs = json::array();
    for (const auto& q : r.questions) {
        json crit = json::object();
        for (const auto& s : q.criteria) crit[to_string(s.criterion)] = {{"scores", s.scores}, {"mean", s.mean}};
        qs.push_back({{"question_id", q.question_id}, {"criteria", crit}});
    }
    return {{"criterion_means", r.criterion_means}, {"combined", r.combined},   {"judgments", r.judgments},
            {"scored", r.scored},                   {"coverage", r.coverage()}, {"questions", qs}};
}

std::string criterion_prompt(Criterion c, const std::string& domain) {
    std::string lower;
    for (char ch : domain) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    const std::string name = to_string(c);
    if (lower == "medicine" || lower == "ecg" || lower == "medical") {
        const std::string ecg = "jury/ecg/" + name + ".txt";
        if (assets::has(ecg)) return std::string(assets::get(ecg));
    }
    return assets::substitute(std::string(assets::get("jury/generic/" + name + ".txt")), {{"domain", domain}});
}

std::optional<int> extract_score(const std::string& reply) {
    std::size_t i = 0;
    auto skip_noise = [&] {
        while (i < reply.size() && !std::isalnum(static_cast<unsigned char>(reply[i]))) ++i;
    };
    skip_noise();
    static const std::string label = "score";
    if (reply.size() - i >= label.size()) {
        std::string head;
        for (std::size_t k = 0; k < label.size(); ++k)
            head += static_cast<char>(std::tolower(static_cast<unsigned char>(reply[i + k])));
        if (head == label) {
            i += label.size();
            skip_noise();
        }
    }
    int value = 0;
    std::size_t digits = 0;
    while (i < reply.size() && std::isdigit(static_cast<unsigned char>(reply[i])) && digits < 3) {
        value = value * 10 + (reply[i++] - '0');
        ++digits;
    }
    if (digits == 0 || (i < reply.size() && std::isdigit(static_cast<unsigned char>(reply[i])))) return std::nullopt;
    if (value < 1 || value > 10) return std::nullopt;
    return value;
}

JuryReport jury_score(const std::vector<QuestionInstance>& questions, gateway::Gateway& gw,
                      const std::vector<gateway::ModelRef>& panel, const std::string& domain,
                      const std::vector<Criterion>& criteria, std::size_t parallelism) {
    if (panel.empty()) throw InvalidParameter("panel", "at least one judge required");
    if (criteria.empty()) throw InvalidParameter("criteria", "at least one criterion required");
    std::vector<std::string> prompts;
    for (auto c : criteria) prompts.push_back(criterion_prompt(c, domain));

    const std::size_t per_question = criteria.size() * panel.size();
    std::vector<std::optional<int>> scores(questions.size() * per_question);
    detail::parallel_for(scores.size(), parallelism, [&](std::size_t k) {
        const auto& q = questions[k / per_question];
        const std::size_t c = (k % per_question) / panel.size();
        const auto& judge = panel[k % panel.size()];
        std::string text = prompts[c] + "\n\nQuestion:\n" + q.question + "\n\nOptions:\n" + options_block(q) +
                           "\nCorrect answer: [" + option_letter(static_cast<std::size_t>(q.correct_index)) + "] " +
                           q.options[static_cast<std::size_t>(q.correct_index)] + "\n";
        try {
            scores[k] = extract_score(gw.chat(judge, {{gateway::Role::user, text, {}}}));
        } catch (const gateway::GatewayError&) {
            scores[k].reset();
        }
    });

    JuryReport report;
    std::vector<std::vector<double>> per_criterion(criteria.size());
    for (std::size_t qi = 0; qi < questions.size(); ++qi) {
        QuestionJury qj;
        qj.question_id = questions[qi].id;
        for (std::size_t c = 0; c < criteria.size(); ++c) {
            JuryScore js{criteria[c], {}, 0.0};
            for (std::size_t j = 0; j < panel.size(); ++j) {
                const auto& s = scores[qi * per_question + c * panel.size() + j];
                ++report.judgments;
                if (s) {
                    ++report.scored;
                    js.scores.push_back(*s);
                }
            }
            if (js.scores.empty()) continue;
            js.mean = std::accumulate(js.scores.begin(), js.scores.end(), 0.0) / double(js.scores.size());
            per_criterion[c].push_back(js.mean);
            qj.criteria.push_back(std::move(js));
        }
        report.questions.push_back(std::move(qj));
    }
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t c = 0; c < criteria.size(); ++c) {
        if (per_criterion[c].empty()) continue;
        const double m =
            std::accumulate(per_criterion[c].begin(), per_criterion[c].end(), 0.0) / double(per_criterion[c].size());
        report.criterion_means[to_string(criteria[c])] = m;
        total += m;
        ++counted;
    }
    report.combined = counted ? total / double(counted) : 0.0;
    return report;
}

// --- diversity ----------------------------------------------------------------------------

namespace {

std::vector<char32_t> code_points(const std::string& s) {
    std::vector<char32_t> out;
    for (std::size_t i = 0; i < s.size();) {
        const auto c = static_cast<unsigned char>(s[i]);
        int len = c < 0x80 ? 1 : (c >> 5) == 6 ? 2 : (c >> 4) == 14 ? 3 : (c >> 3) == 30 ? 4 : 1;
        if (i + static_cast<std::size_t>(len) > s.size()) len = 1;
        char32_t cp = len == 1 ? c : (c & (0x7F >> len));
        for (int k = 1; k < len; ++k) {
            const auto cc = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
            if ((cc >> 6) != 2) {
                len = 1;
                cp = c;
                break;
            }
            cp = (cp << 6) | (cc & 0x3F);
        }
        out.push_back(cp);
        i += static_cast<std::size_t>(len);
    }
    return out;
}

Stat stat_of(const std::vector<double>& v) {
    Stat s;
    if (v.empty()) return s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / double(v.size()));
    return s;
}

json stat_json(const Stat& s) { return {{"mean", s.mean}, {"std", s.std}}; }

}  // namespace

std::size_t levenshtein(const std::string& a, const std::string& b) {
    const auto x = code_points(a);
    const auto y = code_points(b);
    std::vector<std::size_t> prev(y.size() + 1), cur(y.size() + 1);
    std::iota(prev.begin(), prev.end(), std::size_t{0});
    for (std::size_t i = 1; i <= x.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= y.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[y.size()];
}

double levenshtein_norm(const std::string& a, const std::string& b) {
    const std::size_t longest = std::max(code_points(a).size(), code_points(b).size());
    if (longest == 0) return 0.0;
    return double(levenshtein(a, b)) / double(longest);
}

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw InvalidParameter("embedding", "vectors differ in dimension");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 && nb == 0.0) return 0.0;
    if (na == 0.0 || nb == 0.0) return 1.0;
    if (a == b) return 0.0;
    return std::clamp(1.0 - dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 2.0);
}

json to_json(const DiversityResult& d) {
    json j{{"sampled", d.sampled}, {"pairs", d.pairs}, {"levenshtein", stat_json(d.levenshtein)}};
    j["embedding"] = d.embedding ? stat_json(*d.embedding) : json(nullptr);
    if (!d.embedding_error.empty()) j["embedding_error"] = d.embedding_error;
    return j;
}

std::string question_text(const QuestionInstance& q) {
    std::string out = q.question;
    for (const auto& o : q.options) out += "\n" + o;
    return out;
}

DiversityResult diversity(const std::vector<QuestionInstance>& questions, gateway::Gateway& gw,
                          const gateway::ModelRef& embedder, std::size_t sample_n, std::uint64_t seed) {
    if (questions.size() < 2) throw InvalidParameter("questions", "at least two questions required");
    if (sample_n < 2) throw InvalidParameter("sample_n", "must be at least 2");
    std::vector<std::size_t> picked(questions.size());
    std::iota(picked.begin(), picked.end(), std::size_t{0});
    if (questions.size() > sample_n) {
        Rng rng(seed);
        picked = rng.permutation(questions.size());
        picked.resize(sample_n);
        std::sort(picked.begin(), picked.end());
    }
    std::vector<std::string> texts;
    for (auto i : picked) texts.push_back(question_text(questions[i]));

    DiversityResult out;
    out.sampled = texts.size();
    std::vector<double> lev;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        for (std::size_t j = i + 1; j < texts.size(); ++j) lev.push_back(levenshtein_norm(texts[i], texts[j]));
    }
    out.pairs = lev.size();
    out.levenshtein = stat_of(lev);
    try {
        const auto vecs = gw.embed(embedder, texts);
        std::vector<double> dist;
        for (std::size_t i = 0; i < vecs.size(); ++i) {
            for (std::size_t j = i + 1; j < vecs.size(); ++j) dist.push_back(cosine_distance(vecs[i], vecs[j]));
        }
        out.embedding = stat_of(dist);
    } catch (const Error& e) {
        out.embedding_error = e.what();
    }
    return out;
}

}  // namespace tsexam::eval
