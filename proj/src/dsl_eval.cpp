#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "dsl_library.hpp"
#include "tsexam/rng.hpp"

namespace tsexam::dsl {

using detail::EvalError;

namespace {

double as_scalar(const Value& v, const char* what) {
    if (const double* d = std::get_if<double>(&v)) return *d;
    throw EvalError(std::string(what) + " expects a scalar, got " + std::string(type_name(type_of(v))));
}

bool as_bool(const Value& v, const char* what) {
    if (const bool* b = std::get_if<bool>(&v)) return *b;
    throw EvalError(std::string(what) + " expects a boolean, got " + std::string(type_name(type_of(v))));
}

std::string meta_key(const Expr& e) { return (e.meta_sample == 1 ? "meta." : "meta2.") + e.text; }

}  // namespace

Value eval_expression(const Expr& e, const std::map<std::string, Value>& env) {
    switch (e.kind) {
        case Expr::Kind::number: return e.number;
        case Expr::Kind::string: return e.text;
        case Expr::Kind::boolean: return e.number != 0.0;
        case Expr::Kind::identifier:
        case Expr::Kind::meta: {
            const std::string key = e.kind == Expr::Kind::meta ? meta_key(e) : e.text;
            const auto it = env.find(key);
            if (it == env.end()) throw EvalError("'" + key + "' is not bound");
            return it->second;
        }
        case Expr::Kind::unary: {
            const Value v = eval_expression(*e.args[0], env);
            if (e.text == "not") return !as_bool(v, "'not'");
            return -as_scalar(v, "unary '-'");
        }
        case Expr::Kind::binary: {
            const std::string& op = e.text;
            if (op == "and" || op == "or") {
                const bool l = as_bool(eval_expression(*e.args[0], env), op.c_str());
                if (op == "and" && !l) return false;
                if (op == "or" && l) return true;
                return as_bool(eval_expression(*e.args[1], env), op.c_str());
            }
            const Value l = eval_expression(*e.args[0], env);
            const Value r = eval_expression(*e.args[1], env);
            if (op == "==" || op == "!=") {
                if (l.index() != r.index() || type_of(l) == Type::series)
                    throw EvalError("cannot compare " + std::string(type_name(type_of(l))) + " with " +
                                    std::string(type_name(type_of(r))));
                return (l == r) == (op == "==");
            }
            const double a = as_scalar(l, op.c_str());
            const double b = as_scalar(r, op.c_str());
            if (op == "<") return a < b;
            if (op == "<=") return a <= b;
            if (op == ">") return a > b;
            if (op == ">=") return a >= b;
            if (op == "+") return a + b;
            if (op == "-") return a - b;
            if (op == "*") return a * b;
            if (op == "/") return a / b;
            throw EvalError("unknown operator '" + op + "'");
        }
        case Expr::Kind::call: {
            const detail::Function* f = detail::find_function(e.text);
            if (!f) throw EvalError("unknown function '" + e.text + "'");
            std::vector<Value> args;
            args.reserve(e.args.size());
            for (const auto& a : e.args) args.push_back(eval_expression(*a, env));
            return detail::call(*f, args);
        }
    }
    throw EvalError("malformed expression");
}

namespace {

void collect_meta(const Expr& e, std::set<std::string>& out) {
    if (e.kind == Expr::Kind::meta) out.insert(e.text);
    for (const auto& a : e.args) collect_meta(*a, out);
}

// Metadata columns a program reads, from expressions, placeholders and the exposed list.
std::set<std::string> referenced_metadata(const TemplateProgram& p) {
    std::set<std::string> cols(p.selection.metadata.begin(), p.selection.metadata.end());
    if (p.selection.filter) collect_meta(*p.selection.filter, cols);
    for (const auto& f : p.features) collect_meta(*f.expr, cols);
    for (const auto& r : p.rules) {
        if (r.when) collect_meta(*r.when, cols);
    }
    auto from_text = [&](const std::string& text) {
        for (const auto& piece : detail::split_placeholders(text)) {
            if (!piece.placeholder) continue;
            if (piece.text.rfind("meta.", 0) == 0) cols.insert(piece.text.substr(5));
            if (piece.text.rfind("meta2.", 0) == 0) cols.insert(piece.text.substr(6));
        }
    };
    from_text(p.question);
    for (const auto& o : p.options) from_text(o);
    return cols;
}

std::vector<std::size_t> channel_indices(const TemplateProgram& p, const data::Schema& schema) {
    const auto& sel = p.selection;
    std::vector<std::size_t> out;
    if (sel.channels.empty()) {
        const std::size_t n = sel.pair_samples ? 1 : static_cast<std::size_t>(sel.series_count);
        for (std::size_t i = 0; i < n && i < schema.channels.size(); ++i) out.push_back(i);
        return out;
    }
    for (const auto& c : sel.channels) {
        const auto it = std::find(schema.channels.begin(), schema.channels.end(), c);
        if (it != schema.channels.end()) out.push_back(static_cast<std::size_t>(it - schema.channels.begin()));
    }
    return out;
}

std::size_t per_series_cap(const TemplateProgram& p) {
    const auto n = static_cast<std::size_t>(p.selection.series_count);
    return std::max<std::size_t>(1, p.selection.max_total_length / n);
}

}  // namespace

std::vector<Diagnostic> validate(const TemplateProgram& program, const data::DatasetAdapter& dataset) {
    std::vector<Diagnostic> diags;
    const auto& sel = program.selection;
    const auto& schema = dataset.schema();

    if (program.options.size() < 2 || program.options.size() > 4)
        diags.push_back({ErrorCode::INVALID_OPTIONS, "options", "need 2 to 4 options"});

    for (const auto& c : sel.channels) {
        if (std::find(schema.channels.begin(), schema.channels.end(), c) == schema.channels.end())
            diags.push_back({ErrorCode::SCHEMA_MISMATCH, "selection.channels", "dataset has no channel '" + c + "'"});
    }
    if (sel.channels.empty() && !sel.pair_samples && schema.channels.size() < static_cast<std::size_t>(sel.series_count))
        diags.push_back({ErrorCode::SCHEMA_MISMATCH, "selection.series_count",
                         "dataset has " + std::to_string(schema.channels.size()) + " channel(s), program needs " +
                             std::to_string(sel.series_count)});

    for (const auto& col : referenced_metadata(program)) {
        if (!schema.find_metadata(col))
            diags.push_back({ErrorCode::SCHEMA_MISMATCH, "selection", "dataset has no metadata column '" + col + "'"});
    }

    const std::size_t needed = sel.pair_samples ? 2 : 1;
    if (dataset.size() < needed) {
        diags.push_back({ErrorCode::INSUFFICIENT_SAMPLES, "dataset",
                         "dataset holds " + std::to_string(dataset.size()) + " sample(s), need at least " +
                             std::to_string(needed)});
        return diags;
    }

    if (sel.window) {
        const std::size_t cap = per_series_cap(program);
        if (sel.window->min_length > cap) {
            diags.push_back({ErrorCode::WINDOW_INFEASIBLE, "selection.window.min_length",
                             "min_length " + std::to_string(sel.window->min_length) + " exceeds the per-series cap " +
                                 std::to_string(cap)});
        } else if (diags.empty()) {
            std::size_t longest = 0;
            for (std::size_t i = 0; i < dataset.size(); ++i) {
                const auto s = dataset.query(i);
                for (const auto& ch : s.channels) longest = std::max(longest, ch.size());
            }
            if (sel.window->min_length > longest)
                diags.push_back({ErrorCode::WINDOW_INFEASIBLE, "selection.window.min_length",
                                 "min_length " + std::to_string(sel.window->min_length) +
                                     " exceeds the longest dataset series (" + std::to_string(longest) + ")"});
        }
    }
    return diags;
}

json to_json(const SampleTrace& t) {
    json j{{"index", t.index},
           {"window", {{"start", t.window_start}, {"length", t.window_length}}},
           {"features", t.features},
           {"matched_rule", t.matched_rule},
           {"option", t.option},
           {"outcome", t.outcome}};
    if (t.second_index) j["second_index"] = *t.second_index;
    return j;
}

namespace {

json value_json(const Value& v) {
    return std::visit([](const auto& x) { return json(x); }, v);
}

Value meta_value(const json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_boolean()) return j.get<bool>();
    if (j.is_string()) return j.get<std::string>();
    return j.dump();
}

std::string format_number(double v, int decimals) {
    char buf[64];
    if (decimals < 0) {
        if (std::nearbyint(v) == v && std::fabs(v) < 1e15) {
            std::snprintf(buf, sizeof buf, "%.0f", v);
            return v == 0.0 ? "0" : buf;
        }
        decimals = 2;
    }
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    std::string s = buf;
    // "-0.00" reads oddly in a question.
    if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
    return s;
}

class MissingBinding : public Error {
public:
    using Error::Error;
};

std::string fill(const std::string& text, const std::map<std::string, Value>& env) {
    std::string out;
    for (const auto& piece : detail::split_placeholders(text)) {
        if (!piece.placeholder) {
            out += piece.text;
            continue;
        }
        auto it = env.find(piece.text);
        if (it == env.end()) it = env.find("meta." + piece.text);
        if (it == env.end()) throw MissingBinding("no value for placeholder '{" + piece.text + "}'");
        const Value& v = it->second;
        if (const double* d = std::get_if<double>(&v)) {
            out += format_number(*d, piece.decimals);
        } else if (const bool* b = std::get_if<bool>(&v)) {
            out += *b ? "true" : "false";
        } else if (const std::string* s = std::get_if<std::string>(&v)) {
            out += *s;
        } else {
            throw MissingBinding("placeholder '{" + piece.text + "}' holds a series");
        }
    }
    return out;
}

// Visits dataset indices without replacement; starts a fresh permutation once all were used.
class IndexStream {
public:
    IndexStream(std::size_t n, Rng& rng) : n_(n), rng_(rng) {}

    std::size_t next() {
        if (pos_ == order_.size()) {
            order_ = rng_.permutation(n_);
            pos_ = 0;
        }
        return order_[pos_++];
    }

private:
    std::size_t n_;
    Rng& rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

}  // namespace

EvalResult evaluate(const TemplateProgram& program, const data::DatasetAdapter& dataset, std::size_t num_samples,
                    std::uint64_t seed, bool verbose) {
    EvalResult result;
    if (num_samples == 0) return result;
    if (auto diags = validate(program, dataset); !diags.empty()) throw DslError(std::move(diags));

    const auto& sel = program.selection;
    const auto& schema = dataset.schema();
    const auto channels = channel_indices(program, schema);
    const std::size_t cap = per_series_cap(program);

    Rng rng(seed);
    IndexStream stream(dataset.size(), rng);
    Rng pair_rng(derive_seed(seed, "pair"));
    Rng window_rng(derive_seed(seed, "window"));

    std::map<std::string, Value> base;
    for (const auto& [k, v] : program.hyperparameters) base[k] = v;

    const std::size_t max_attempts = 10 * num_samples;
    auto& report = result.report;
    while (report.produced < num_samples && report.attempted < max_attempts) {
        ++report.attempted;
        SampleTrace trace;
        trace.index = stream.next();
        auto skip = [&](const std::string& reason) {
            ++report.skipped[reason];
            if (verbose) {
                trace.outcome = reason;
                report.trace.push_back(trace);
            }
        };

        const data::Sample first = dataset.query(trace.index);
        std::optional<data::Sample> second;
        if (sel.pair_samples) {
            std::size_t j = pair_rng.below(dataset.size() - 1);
            if (j >= trace.index) ++j;
            trace.second_index = j;
            second = dataset.query(j);
        }

        std::map<std::string, Value> env = base;
        for (const auto& [k, v] : first.metadata) env["meta." + k] = meta_value(v);
        if (second) {
            for (const auto& [k, v] : second->metadata) env["meta2." + k] = meta_value(v);
        }

        if (sel.filter) {
            try {
                if (!as_bool(eval_expression(*sel.filter, env), "filter")) {
                    skip("filtered_out");
                    continue;
                }
            } catch (const EvalError&) {
                skip("filter_error");
                continue;
            }
        }

        std::vector<const std::vector<double>*> raw;
        if (second) {
            raw = {&first.channels.at(channels.front()), &second->channels.at(channels.front())};
        } else {
            for (auto c : channels) raw.push_back(&first.channels.at(c));
        }
        std::size_t available = raw.front()->size();
        for (const auto* r : raw) available = std::min(available, r->size());

        std::size_t length = std::min(available, cap);
        std::size_t start = 0;
        if (sel.window) {
            const std::size_t hi = std::min({sel.window->max_length, available, cap});
            if (sel.window->min_length > hi) {
                skip("series_too_short");
                continue;
            }
            length = sel.window->min_length + window_rng.below(hi - sel.window->min_length + 1);
            switch (sel.window->anchor) {
                case Anchor::start: start = 0; break;
                case Anchor::end: start = available - length; break;
                case Anchor::random: start = window_rng.below(available - length + 1); break;
            }
        }
        if (length < 1) {
            skip("series_too_short");
            continue;
        }
        trace.window_start = start;
        trace.window_length = length;

        std::vector<std::vector<double>> windows;
        for (const auto* r : raw)
            windows.emplace_back(r->begin() + static_cast<std::ptrdiff_t>(start),
                                 r->begin() + static_cast<std::ptrdiff_t>(start + length));
        env["x"] = windows[0];
        if (windows.size() > 1) env["y"] = windows[1];
        env["length"] = static_cast<double>(length);
        env["start"] = static_cast<double>(start);

        std::string failure;
        for (const auto& f : program.features) {
            try {
                Value v = eval_expression(*f.expr, env);
                if (!detail::all_finite(v)) {
                    failure = "non_finite_feature";
                    break;
                }
                trace.features[f.name] = value_json(v);
                env[f.name] = std::move(v);
            } catch (const EvalError&) {
                failure = "feature_error";
                break;
            }
        }
        if (!failure.empty()) {
            skip(failure);
            continue;
        }

        for (std::size_t r = 0; r < program.rules.size() && failure.empty(); ++r) {
            const auto& rule = program.rules[r];
            bool hit = !rule.when;
            if (rule.when) {
                try {
                    hit = as_bool(eval_expression(*rule.when, env), "answer rule");
                } catch (const EvalError&) {
                    failure = "rule_error";
                }
            }
            if (hit && failure.empty()) {
                trace.matched_rule = static_cast<int>(r);
                trace.option = rule.option;
                break;
            }
        }
        if (!failure.empty() || trace.option < 0) {
            skip(failure.empty() ? "no_rule_matched" : failure);
            continue;
        }

        QuestionInstance q;
        try {
            q.question = fill(program.question, env);
            for (const auto& o : program.options) q.options.push_back(fill(o, env));
        } catch (const MissingBinding&) {
            skip("missing_binding");
            continue;
        }
        q.id = program.name + "-" + std::to_string(trace.index) +
               (trace.second_index ? "-" + std::to_string(*trace.second_index) : std::string()) + "-" +
               std::to_string(report.produced);
        q.category = program.category;
        q.correct_index = trace.option;
        q.relevant_concepts = program.relevant_concepts;
        q.detractor_types = program.detractor_types;
        q.format_hint = program.format_hint;
        q.domain = program.domain.empty() ? "dataset" : program.domain;
        for (std::size_t k = 0; k < windows.size(); ++k) {
            TimeSeries s;
            s.values = std::move(windows[k]);
            const std::size_t index = (second && k == 1) ? *trace.second_index : trace.index;
            const std::size_t ch = second ? channels.front() : channels[k];
            s.provenance = {{"source", "dataset"},
                            {"index", index},
                            {"channel", ch < schema.channels.size() ? schema.channels[ch] : std::to_string(ch)},
                            {"window", {{"start", start}, {"length", length}}},
                            {"template", program.name}};
            q.series.push_back(std::move(s));
        }
        try {
            tsexam::validate(q);
        } catch (const ValidationError&) {
            skip("invalid_instance");
            continue;
        }
        result.questions.push_back(std::move(q));
        ++report.produced;
        report.trace.push_back(std::move(trace));
    }
    return result;
}

}  // namespace tsexam::dsl
