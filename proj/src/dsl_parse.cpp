#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>
#include <stdexcept>

#include "dsl_library.hpp"

namespace tsexam::dsl {

namespace {

constexpr std::pair<ErrorCode, std::string_view> kCodeNames[] = {
    {ErrorCode::PARSE_ERROR, "PARSE_ERROR"},
    {ErrorCode::SCHEMA_ERROR, "SCHEMA_ERROR"},
    {ErrorCode::UNSUPPORTED_VERSION, "UNSUPPORTED_VERSION"},
    {ErrorCode::MISSING_DEFAULT_RULE, "MISSING_DEFAULT_RULE"},
    {ErrorCode::FEATURE_CYCLE, "FEATURE_CYCLE"},
    {ErrorCode::UNKNOWN_FUNCTION, "UNKNOWN_FUNCTION"},
    {ErrorCode::UNKNOWN_IDENTIFIER, "UNKNOWN_IDENTIFIER"},
    {ErrorCode::UNBOUND_PLACEHOLDER, "UNBOUND_PLACEHOLDER"},
    {ErrorCode::TYPE_ERROR, "TYPE_ERROR"},
    {ErrorCode::INVALID_OPTIONS, "INVALID_OPTIONS"},
    {ErrorCode::OPTION_OUT_OF_RANGE, "OPTION_OUT_OF_RANGE"},
    {ErrorCode::SCHEMA_MISMATCH, "SCHEMA_MISMATCH"},
    {ErrorCode::WINDOW_INFEASIBLE, "WINDOW_INFEASIBLE"},
    {ErrorCode::INSUFFICIENT_SAMPLES, "INSUFFICIENT_SAMPLES"},
    {ErrorCode::INVALID_INSTANCE, "INVALID_INSTANCE"},
};

std::string join_messages(const std::vector<Diagnostic>& diags) {
    std::string out;
    for (const auto& d : diags) out += (out.empty() ? "" : "; ") + d.to_string();
    return out;
}

}  // namespace

std::string_view code_name(ErrorCode code) {
    for (const auto& [c, n] : kCodeNames) {
        if (c == code) return n;
    }
    return "PARSE_ERROR";
}

std::optional<ErrorCode> code_from_name(std::string_view name) {
    for (const auto& [c, n] : kCodeNames) {
        if (n == name) return c;
    }
    return std::nullopt;
}

std::string Diagnostic::to_string() const {
    return std::string(code_name(code)) + " at " + location + ": " + message;
}

DslError::DslError(std::vector<Diagnostic> diagnostics)
    : Error(diagnostics.empty() ? std::string("template error") : join_messages(diagnostics)),
      diagnostics_(std::move(diagnostics)) {
    if (diagnostics_.empty()) diagnostics_.push_back({ErrorCode::PARSE_ERROR, "document", "unspecified error"});
}

std::string_view type_name(Type t) {
    switch (t) {
        case Type::scalar: return "scalar";
        case Type::boolean: return "boolean";
        case Type::series: return "series";
        case Type::string: return "string";
        case Type::any: return "any";
    }
    return "any";
}

Type type_of(const Value& v) {
    switch (v.index()) {
        case 0: return Type::scalar;
        case 1: return Type::boolean;
        case 2: return Type::series;
        default: return Type::string;
    }
}

// --- expression parser --------------------------------------------------------------------

namespace {

struct Token {
    enum class Kind { number, string, ident, op, end } kind = Kind::end;
    std::string text;
    double number = 0.0;
    std::size_t column = 0;
};

class Parser {
public:
    Parser(std::string_view src, std::string location) : src_(src), location_(std::move(location)) { advance(); }

    ExprPtr parse_all() {
        auto e = parse_or();
        if (tok_.kind != Token::Kind::end) fail("unexpected '" + tok_.text + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw DslError({{ErrorCode::PARSE_ERROR, location_, "column " + std::to_string(tok_.column) + ": " + msg}});
    }

    void advance() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        tok_ = Token{};
        tok_.column = pos_ + 1;
        if (pos_ >= src_.size()) return;
        const char c = src_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
            const std::size_t start = pos_;
            while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) ++pos_;
            if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
                std::size_t p = pos_ + 1;
                if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
                if (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
                    pos_ = p;
                    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
                }
            }
            tok_.kind = Token::Kind::number;
            tok_.text = std::string(src_.substr(start, pos_ - start));
            const auto [ptr, ec] = std::from_chars(tok_.text.data(), tok_.text.data() + tok_.text.size(), tok_.number);
            if (ec != std::errc() || ptr != tok_.text.data() + tok_.text.size()) fail("malformed number '" + tok_.text + "'");
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
            tok_.kind = Token::Kind::ident;
            tok_.text = std::string(src_.substr(start, pos_ - start));
            return;
        }
        if (c == '\'' || c == '"') {
            ++pos_;
            std::string s;
            while (pos_ < src_.size() && src_[pos_] != c) {
                if (src_[pos_] == '\\' && pos_ + 1 < src_.size()) ++pos_;
                s += src_[pos_++];
            }
            if (pos_ >= src_.size()) fail("unterminated string literal");
            ++pos_;
            tok_.kind = Token::Kind::string;
            tok_.text = std::move(s);
            return;
        }
        static const char* two_char[] = {"<=", ">=", "==", "!=", "&&", "||"};
        for (const char* op : two_char) {
            if (src_.substr(pos_, 2) == op) {
                tok_.kind = Token::Kind::op;
                tok_.text = op;
                pos_ += 2;
                return;
            }
        }
        if (std::string_view("()+-*/<>!,.").find(c) != std::string_view::npos) {
            tok_.kind = Token::Kind::op;
            tok_.text = std::string(1, c);
            ++pos_;
            return;
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    bool is_op(std::string_view op) const { return tok_.kind == Token::Kind::op && tok_.text == op; }
    bool is_word(std::string_view w) const { return tok_.kind == Token::Kind::ident && tok_.text == w; }

    ExprPtr node(Expr::Kind kind, std::string text, std::vector<ExprPtr> args, std::size_t column) {
        auto e = std::make_shared<Expr>();
        e->kind = kind;
        e->text = std::move(text);
        e->args = std::move(args);
        e->column = column;
        return e;
    }

    ExprPtr parse_or() {
        auto lhs = parse_and();
        while (is_op("||") || is_word("or")) {
            const auto col = tok_.column;
            advance();
            lhs = node(Expr::Kind::binary, "or", {lhs, parse_and()}, col);
        }
        return lhs;
    }

    ExprPtr parse_and() {
        auto lhs = parse_not();
        while (is_op("&&") || is_word("and")) {
            const auto col = tok_.column;
            advance();
            lhs = node(Expr::Kind::binary, "and", {lhs, parse_not()}, col);
        }
        return lhs;
    }

    ExprPtr parse_not() {
        if (is_op("!") || is_word("not")) {
            const auto col = tok_.column;
            advance();
            return node(Expr::Kind::unary, "not", {parse_not()}, col);
        }
        return parse_comparison();
    }

    ExprPtr parse_comparison() {
        auto lhs = parse_additive();
        static const std::set<std::string> ops{"<", "<=", ">", ">=", "==", "!="};
        if (tok_.kind == Token::Kind::op && ops.count(tok_.text)) {
            const auto op = tok_.text;
            const auto col = tok_.column;
            advance();
            lhs = node(Expr::Kind::binary, op, {lhs, parse_additive()}, col);
            if (tok_.kind == Token::Kind::op && ops.count(tok_.text)) fail("comparisons cannot be chained");
        }
        return lhs;
    }

    ExprPtr parse_additive() {
        auto lhs = parse_multiplicative();
        while (is_op("+") || is_op("-")) {
            const auto op = tok_.text;
            const auto col = tok_.column;
            advance();
            lhs = node(Expr::Kind::binary, op, {lhs, parse_multiplicative()}, col);
        }
        return lhs;
    }

    ExprPtr parse_multiplicative() {
        auto lhs = parse_unary();
        while (is_op("*") || is_op("/")) {
            const auto op = tok_.text;
            const auto col = tok_.column;
            advance();
            lhs = node(Expr::Kind::binary, op, {lhs, parse_unary()}, col);
        }
        return lhs;
    }

    ExprPtr parse_unary() {
        if (is_op("-")) {
            const auto col = tok_.column;
            advance();
            return node(Expr::Kind::unary, "-", {parse_unary()}, col);
        }
        return parse_primary();
    }

    ExprPtr parse_primary() {
        const auto col = tok_.column;
        switch (tok_.kind) {
            case Token::Kind::number: {
                auto e = std::make_shared<Expr>();
                e->kind = Expr::Kind::number;
                e->number = tok_.number;
                e->text = tok_.text;
                e->column = col;
                advance();
                return e;
            }
            case Token::Kind::string: {
                auto e = node(Expr::Kind::string, tok_.text, {}, col);
                advance();
                return e;
            }
            case Token::Kind::ident: {
                const std::string name = tok_.text;
                advance();
                if (name == "true" || name == "false") {
                    auto e = std::make_shared<Expr>();
                    e->kind = Expr::Kind::boolean;
                    e->number = name == "true" ? 1.0 : 0.0;
                    e->text = name;
                    e->column = col;
                    return e;
                }
                if ((name == "meta" || name == "meta2") && is_op(".")) {
                    advance();
                    if (tok_.kind != Token::Kind::ident && tok_.kind != Token::Kind::number)
                        fail("expected a column name after '" + name + ".'");
                    auto e = std::make_shared<Expr>();
                    e->kind = Expr::Kind::meta;
                    e->text = tok_.text;
                    e->meta_sample = name == "meta" ? 1 : 2;
                    e->column = col;
                    advance();
                    return e;
                }
                if (is_op("(")) {
                    advance();
                    std::vector<ExprPtr> args;
                    if (!is_op(")")) {
                        args.push_back(parse_or());
                        while (is_op(",")) {
                            advance();
                            args.push_back(parse_or());
                        }
                    }
                    if (!is_op(")")) fail("expected ')' to close call to " + name);
                    advance();
                    return node(Expr::Kind::call, name, std::move(args), col);
                }
                return node(Expr::Kind::identifier, name, {}, col);
            }
            case Token::Kind::op:
                if (is_op("(")) {
                    advance();
                    auto e = parse_or();
                    if (!is_op(")")) fail("expected ')'");
                    advance();
                    return e;
                }
                fail("unexpected '" + tok_.text + "'");
            case Token::Kind::end: fail("unexpected end of expression");
        }
        fail("unexpected token");
    }

    std::string_view src_;
    std::string location_;
    std::size_t pos_ = 0;
    Token tok_;
};

}  // namespace

ExprPtr parse_expression(std::string_view source, const std::string& location) {
    return Parser(source, location).parse_all();
}

void collect_identifiers(const Expr& e, std::vector<std::string>& out) {
    if (e.kind == Expr::Kind::identifier) out.push_back(e.text);
    if (e.kind == Expr::Kind::meta) out.push_back((e.meta_sample == 1 ? "meta." : "meta2.") + e.text);
    for (const auto& a : e.args) collect_identifiers(*a, out);
}

namespace detail {

std::vector<TextPiece> split_placeholders(std::string_view text) {
    std::vector<TextPiece> out;
    std::string literal;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '{' && i + 1 < text.size() && text[i + 1] == '{') {
            literal += '{';
            ++i;
        } else if (c == '}' && i + 1 < text.size() && text[i + 1] == '}') {
            literal += '}';
            ++i;
        } else if (c == '{') {
            const auto close = text.find('}', i);
            if (close == std::string_view::npos) throw std::invalid_argument("unterminated placeholder");
            std::string_view body = text.substr(i + 1, close - i - 1);
            TextPiece piece;
            piece.placeholder = true;
            const auto colon = body.find(':');
            if (colon != std::string_view::npos) {
                const auto digits = body.substr(colon + 1);
                int d = -1;
                const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), d);
                if (ec != std::errc() || ptr != digits.data() + digits.size() || d < 0 || d > 12)
                    throw std::invalid_argument("bad decimals in placeholder '{" + std::string(body) + "}'");
                piece.decimals = d;
                body = body.substr(0, colon);
            }
            if (body.empty()) throw std::invalid_argument("empty placeholder");
            for (char ch : body) {
                if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '_' && ch != '.')
                    throw std::invalid_argument("bad placeholder name '" + std::string(body) + "'");
            }
            piece.text = std::string(body);
            if (!literal.empty()) out.push_back({false, std::move(literal), -1});
            literal.clear();
            out.push_back(std::move(piece));
            i = close;
        } else if (c == '}') {
            throw std::invalid_argument("unmatched '}'");
        } else {
            literal += c;
        }
    }
    if (!literal.empty()) out.push_back({false, std::move(literal), -1});
    return out;
}

Type check_types(const Expr& e, const std::map<std::string, Type>& env, const std::string& location,
                 std::vector<Diagnostic>& diags) {
    auto where = [&](const Expr& at) { return location + ":" + std::to_string(at.column); };
    auto error = [&](ErrorCode code, const Expr& at, std::string msg) -> Type {
        diags.push_back({code, where(at), std::move(msg)});
        return Type::any;
    };
    auto expect = [&](const Expr& at, Type got, Type want, const std::string& what) {
        if (got != Type::any && got != want)
            error(ErrorCode::TYPE_ERROR, at,
                  what + " expects " + std::string(type_name(want)) + ", got " + std::string(type_name(got)));
    };

    switch (e.kind) {
        case Expr::Kind::number: return Type::scalar;
        case Expr::Kind::string: return Type::string;
        case Expr::Kind::boolean: return Type::boolean;
        case Expr::Kind::identifier: {
            const auto it = env.find(e.text);
            if (it == env.end()) return error(ErrorCode::UNKNOWN_IDENTIFIER, e, "unknown identifier '" + e.text + "'");
            return it->second;
        }
        case Expr::Kind::meta: {
            const std::string key = (e.meta_sample == 1 ? "meta." : "meta2.") + e.text;
            const auto it = env.find(key);
            if (it != env.end()) return it->second;
            const auto prefix = env.find(e.meta_sample == 1 ? "meta" : "meta2");
            if (prefix == env.end())
                return error(ErrorCode::UNKNOWN_IDENTIFIER, e, "'" + key + "' is not available here");
            return Type::any;
        }
        case Expr::Kind::unary: {
            const Type t = check_types(*e.args[0], env, location, diags);
            if (e.text == "not") {
                expect(*e.args[0], t, Type::boolean, "'not'");
                return Type::boolean;
            }
            expect(*e.args[0], t, Type::scalar, "unary '-'");
            return Type::scalar;
        }
        case Expr::Kind::binary: {
            const Type l = check_types(*e.args[0], env, location, diags);
            const Type r = check_types(*e.args[1], env, location, diags);
            const std::string& op = e.text;
            if (op == "and" || op == "or") {
                expect(*e.args[0], l, Type::boolean, "'" + op + "'");
                expect(*e.args[1], r, Type::boolean, "'" + op + "'");
                return Type::boolean;
            }
            if (op == "==" || op == "!=") {
                if (l != Type::any && r != Type::any && l != r)
                    error(ErrorCode::TYPE_ERROR, e,
                          "cannot compare " + std::string(type_name(l)) + " with " + std::string(type_name(r)));
                if (l == Type::series || r == Type::series) error(ErrorCode::TYPE_ERROR, e, "series cannot be compared");
                return Type::boolean;
            }
            if (op == "<" || op == "<=" || op == ">" || op == ">=") {
                expect(*e.args[0], l, Type::scalar, "'" + op + "'");
                expect(*e.args[1], r, Type::scalar, "'" + op + "'");
                return Type::boolean;
            }
            expect(*e.args[0], l, Type::scalar, "'" + op + "'");
            expect(*e.args[1], r, Type::scalar, "'" + op + "'");
            return Type::scalar;
        }
        case Expr::Kind::call: {
            std::vector<Type> args;
            for (const auto& a : e.args) args.push_back(check_types(*a, env, location, diags));
            const Function* f = find_function(e.text);
            if (!f) return error(ErrorCode::UNKNOWN_FUNCTION, e, "unknown function '" + e.text + "'");
            const auto result = call_type(*f, args);
            if (!result) {
                std::string types;
                for (auto t : args) types += std::string(types.empty() ? "" : ", ") + std::string(type_name(t));
                return error(ErrorCode::TYPE_ERROR, e, "no overload " + e.text + "(" + types + "); expected " + f->doc);
            }
            return *result;
        }
    }
    return Type::any;
}

}  // namespace detail

// --- document parser ----------------------------------------------------------------------

namespace {

class DocumentParser {
public:
    explicit DocumentParser(const json& doc) : doc_(doc) {}

    TemplateProgram run() {
        if (!doc_.is_object()) {
            add(ErrorCode::SCHEMA_ERROR, "document", "template document must be a JSON object");
            throw DslError(diags_);
        }
        static const std::set<std::string> known{
            "dsl_version", "name",        "description",      "domain",          "category",
            "question",    "options",     "hyperparameters",  "selection",       "features",
            "answer_rules", "relevant_concepts", "detractor_types", "format_hint"};
        for (auto it = doc_.begin(); it != doc_.end(); ++it) {
            if (!known.count(it.key())) add(ErrorCode::SCHEMA_ERROR, it.key(), "unknown key");
        }
        p_.document = doc_;
        if (doc_.contains("dsl_version")) {
            const auto& v = doc_["dsl_version"];
            if (!v.is_number_integer() || v.get<int>() != kDslVersion)
                add(ErrorCode::UNSUPPORTED_VERSION, "dsl_version",
                    "unsupported version " + v.dump() + " (supported: " + std::to_string(kDslVersion) + ")");
        }
        p_.name = str("name", true);
        p_.domain = str("domain", false);
        p_.question = str("question", true);
        if (doc_.contains("format_hint")) p_.format_hint = str("format_hint", false);
        p_.relevant_concepts = str_list("relevant_concepts");
        p_.detractor_types = str_list("detractor_types");
        parse_category();
        parse_options();
        parse_hyperparameters();
        parse_selection();
        parse_features();
        parse_rules();
        check_placeholders();
        if (!diags_.empty()) throw DslError(diags_);
        return std::move(p_);
    }

private:
    void add(ErrorCode code, std::string location, std::string message) {
        diags_.push_back({code, std::move(location), std::move(message)});
    }

    std::string str(const char* key, bool required) {
        if (!doc_.contains(key)) {
            if (required) add(ErrorCode::SCHEMA_ERROR, key, "required field missing");
            return {};
        }
        if (!doc_[key].is_string()) {
            add(ErrorCode::SCHEMA_ERROR, key, "must be a string");
            return {};
        }
        return doc_[key].get<std::string>();
    }

    std::vector<std::string> str_list(const char* key) {
        if (!doc_.contains(key)) return {};
        const auto& v = doc_[key];
        if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_string(); })) {
            add(ErrorCode::SCHEMA_ERROR, key, "must be a list of strings");
            return {};
        }
        return v.get<std::vector<std::string>>();
    }

    void parse_category() {
        if (!doc_.contains("category")) return;
        const auto& c = doc_["category"];
        if (!c.is_object() || !c.contains("name") || !c["name"].is_string()) {
            add(ErrorCode::SCHEMA_ERROR, "category", "must be an object with string 'name' and 'subcategory'");
            return;
        }
        const auto name = category_from_string(c["name"].get<std::string>());
        if (!name) {
            add(ErrorCode::SCHEMA_ERROR, "category.name", "unknown category '" + c["name"].get<std::string>() + "'");
            return;
        }
        p_.category.name = *name;
        const auto& subs = subcategories(*name);
        p_.category.subcategory = subs.front();
        if (c.contains("subcategory")) {
            if (!c["subcategory"].is_string()) {
                add(ErrorCode::SCHEMA_ERROR, "category.subcategory", "must be a string");
                return;
            }
            const auto sub = c["subcategory"].get<std::string>();
            if (std::find(subs.begin(), subs.end(), sub) == subs.end()) {
                add(ErrorCode::SCHEMA_ERROR, "category.subcategory",
                    "'" + sub + "' is not a subcategory of " + to_string(*name));
                return;
            }
            p_.category.subcategory = sub;
        }
    }

    void parse_options() {
        if (!doc_.contains("options")) {
            add(ErrorCode::SCHEMA_ERROR, "options", "required field missing");
            return;
        }
        p_.options = str_list("options");
        if (p_.options.size() < 2 || p_.options.size() > 4) {
            add(ErrorCode::INVALID_OPTIONS, "options", "need 2 to 4 options, got " + std::to_string(p_.options.size()));
        } else if (std::set<std::string>(p_.options.begin(), p_.options.end()).size() != p_.options.size()) {
            add(ErrorCode::INVALID_OPTIONS, "options", "option texts must be pairwise distinct");
        }
    }

    void parse_hyperparameters() {
        if (!doc_.contains("hyperparameters")) return;
        const auto& h = doc_["hyperparameters"];
        if (!h.is_object()) {
            add(ErrorCode::SCHEMA_ERROR, "hyperparameters", "must be an object of numbers");
            return;
        }
        for (auto it = h.begin(); it != h.end(); ++it) {
            const std::string loc = "hyperparameters." + it.key();
            if (!it->is_number()) {
                add(ErrorCode::SCHEMA_ERROR, loc, "must be a number");
                continue;
            }
            if (reserved(it.key())) {
                add(ErrorCode::SCHEMA_ERROR, loc, "'" + it.key() + "' is a reserved name");
                continue;
            }
            p_.hyperparameters[it.key()] = it->get<double>();
        }
    }

    static bool reserved(const std::string& name) {
        static const std::set<std::string> words{"x", "y", "length", "start", "meta", "meta2",
                                                 "and", "or", "not", "true", "false"};
        return words.count(name) > 0;
    }

    std::size_t size_field(const json& obj, const char* key, std::size_t fallback, const std::string& loc) {
        if (!obj.contains(key)) return fallback;
        const auto& v = obj[key];
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
            add(ErrorCode::SCHEMA_ERROR, loc + "." + key, "must be a non-negative integer");
            return fallback;
        }
        return v.get<std::size_t>();
    }

    void parse_selection() {
        Selection& sel = p_.selection;
        if (!doc_.contains("selection")) return;
        const auto& s = doc_["selection"];
        if (!s.is_object()) {
            add(ErrorCode::SCHEMA_ERROR, "selection", "must be an object");
            return;
        }
        static const std::set<std::string> known{"series_count", "channels", "pair_samples", "filter",
                                                 "window",       "max_total_length", "metadata"};
        for (auto it = s.begin(); it != s.end(); ++it) {
            if (!known.count(it.key())) add(ErrorCode::SCHEMA_ERROR, "selection." + it.key(), "unknown key");
        }
        sel.series_count = static_cast<int>(size_field(s, "series_count", 1, "selection"));
        if (sel.series_count < 1 || sel.series_count > 2)
            add(ErrorCode::SCHEMA_ERROR, "selection.series_count", "must be 1 or 2");
        if (s.contains("pair_samples")) {
            if (!s["pair_samples"].is_boolean()) {
                add(ErrorCode::SCHEMA_ERROR, "selection.pair_samples", "must be a boolean");
            } else {
                sel.pair_samples = s["pair_samples"].get<bool>();
            }
        }
        if (sel.pair_samples && sel.series_count != 2)
            add(ErrorCode::SCHEMA_ERROR, "selection.pair_samples", "requires series_count 2");
        for (const char* key : {"channels", "metadata"}) {
            if (!s.contains(key)) continue;
            const auto& v = s[key];
            if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_string(); })) {
                add(ErrorCode::SCHEMA_ERROR, std::string("selection.") + key, "must be a list of strings");
                continue;
            }
            (std::string(key) == "channels" ? sel.channels : sel.metadata) = v.get<std::vector<std::string>>();
        }
        if (!sel.channels.empty() && !sel.pair_samples && static_cast<int>(sel.channels.size()) != sel.series_count)
            add(ErrorCode::SCHEMA_ERROR, "selection.channels", "must name exactly series_count channels");
        if (!sel.channels.empty() && sel.pair_samples && sel.channels.size() != 1)
            add(ErrorCode::SCHEMA_ERROR, "selection.channels", "pair_samples mode takes a single channel");
        sel.max_total_length = size_field(s, "max_total_length", 3000, "selection");
        if (sel.max_total_length < 2) add(ErrorCode::SCHEMA_ERROR, "selection.max_total_length", "must be at least 2");
        if (s.contains("window")) {
            const auto& w = s["window"];
            if (!w.is_object()) {
                add(ErrorCode::SCHEMA_ERROR, "selection.window", "must be an object");
            } else {
                for (auto it = w.begin(); it != w.end(); ++it) {
                    if (it.key() != "min_length" && it.key() != "max_length" && it.key() != "anchor")
                        add(ErrorCode::SCHEMA_ERROR, "selection.window." + it.key(), "unknown key");
                }
                Window win;
                win.min_length = size_field(w, "min_length", 2, "selection.window");
                win.max_length = size_field(w, "max_length", win.min_length, "selection.window");
                if (w.contains("anchor")) {
                    const auto a = w["anchor"].is_string() ? w["anchor"].get<std::string>() : std::string();
                    if (a == "random") {
                        win.anchor = Anchor::random;
                    } else if (a == "start") {
                        win.anchor = Anchor::start;
                    } else if (a == "end") {
                        win.anchor = Anchor::end;
                    } else {
                        add(ErrorCode::SCHEMA_ERROR, "selection.window.anchor", "must be random, start or end");
                    }
                }
                if (win.min_length < 2) add(ErrorCode::SCHEMA_ERROR, "selection.window.min_length", "must be at least 2");
                if (win.max_length < win.min_length)
                    add(ErrorCode::SCHEMA_ERROR, "selection.window.max_length", "must be >= min_length");
                sel.window = win;
            }
        }
        if (s.contains("filter")) {
            if (!s["filter"].is_string()) {
                add(ErrorCode::SCHEMA_ERROR, "selection.filter", "must be an expression string");
            } else {
                sel.filter_source = s["filter"].get<std::string>();
                try {
                    sel.filter = parse_expression(sel.filter_source, "selection.filter");
                } catch (const DslError& e) {
                    diags_.insert(diags_.end(), e.diagnostics().begin(), e.diagnostics().end());
                }
            }
        }
    }

    std::map<std::string, Type> base_env() const {
        std::map<std::string, Type> env;
        env["x"] = Type::series;
        if (p_.selection.series_count == 2) env["y"] = Type::series;
        env["length"] = Type::scalar;
        env["start"] = Type::scalar;
        env["meta"] = Type::any;
        if (p_.selection.pair_samples) env["meta2"] = Type::any;
        for (const auto& [k, v] : p_.hyperparameters) env[k] = Type::scalar;
        return env;
    }

    void parse_features() {
        if (p_.selection.filter) {
            // Filters see metadata and hyperparameters only; series are not loaded yet.
            std::map<std::string, Type> env;
            env["meta"] = Type::any;
            if (p_.selection.pair_samples) env["meta2"] = Type::any;
            for (const auto& [k, v] : p_.hyperparameters) env[k] = Type::scalar;
            const Type t = detail::check_types(*p_.selection.filter, env, "selection.filter", diags_);
            if (t != Type::boolean && t != Type::any)
                add(ErrorCode::TYPE_ERROR, "selection.filter", "filter must be boolean, got " + std::string(type_name(t)));
        }
        if (!doc_.contains("features")) return;
        const auto& f = doc_["features"];
        if (!f.is_object()) {
            add(ErrorCode::SCHEMA_ERROR, "features", "must be an object mapping names to expressions");
            return;
        }
        std::map<std::string, Feature> parsed;
        for (auto it = f.begin(); it != f.end(); ++it) {
            const std::string loc = "features." + it.key();
            if (!it->is_string()) {
                add(ErrorCode::SCHEMA_ERROR, loc, "must be an expression string");
                continue;
            }
            if (reserved(it.key()) || p_.hyperparameters.count(it.key())) {
                add(ErrorCode::SCHEMA_ERROR, loc, "'" + it.key() + "' clashes with a reserved or hyperparameter name");
                continue;
            }
            Feature feat;
            feat.name = it.key();
            feat.source = it->get<std::string>();
            try {
                feat.expr = parse_expression(feat.source, loc);
            } catch (const DslError& e) {
                diags_.insert(diags_.end(), e.diagnostics().begin(), e.diagnostics().end());
                continue;
            }
            parsed.emplace(feat.name, std::move(feat));
        }

        // Dependency graph among features; Kahn's algorithm with name order for a stable result.
        std::map<std::string, std::set<std::string>> deps;
        for (const auto& [name, feat] : parsed) {
            std::vector<std::string> ids;
            collect_identifiers(*feat.expr, ids);
            for (const auto& id : ids) {
                if (parsed.count(id)) deps[name].insert(id);
            }
            deps[name];
        }
        std::vector<std::string> order;
        std::set<std::string> done;
        while (order.size() < deps.size()) {
            bool progressed = false;
            for (const auto& [name, d] : deps) {
                if (done.count(name)) continue;
                if (std::all_of(d.begin(), d.end(), [&](const std::string& x) { return done.count(x) > 0; })) {
                    order.push_back(name);
                    done.insert(name);
                    progressed = true;
                }
            }
            if (!progressed) break;
        }
        if (order.size() < deps.size()) {
            std::vector<std::string> stuck;
            for (const auto& [name, d] : deps) {
                if (!done.count(name)) stuck.push_back(name);
            }
            std::string names;
            for (const auto& n : stuck) names += (names.empty() ? "" : ", ") + n;
            add(ErrorCode::FEATURE_CYCLE, "features." + stuck.front(), "features form a cycle: " + names);
        }

        auto env = base_env();
        for (const auto& name : order) {
            Feature feat = parsed.at(name);
            feat.type = detail::check_types(*feat.expr, env, "features." + name, diags_);
            env[name] = feat.type;
            p_.features.push_back(std::move(feat));
        }
        feature_env_ = std::move(env);
    }

    void parse_rules() {
        if (!doc_.contains("answer_rules")) {
            add(ErrorCode::MISSING_DEFAULT_RULE, "answer_rules", "answer_rules missing; a final default rule is required");
            return;
        }
        const auto& rules = doc_["answer_rules"];
        if (!rules.is_array()) {
            add(ErrorCode::SCHEMA_ERROR, "answer_rules", "must be a list");
            return;
        }
        if (feature_env_.empty()) feature_env_ = base_env();
        bool saw_default = false;
        for (std::size_t i = 0; i < rules.size(); ++i) {
            const std::string loc = "answer_rules[" + std::to_string(i) + "]";
            const auto& r = rules[i];
            if (!r.is_object()) {
                add(ErrorCode::SCHEMA_ERROR, loc, "must be an object");
                continue;
            }
            for (auto it = r.begin(); it != r.end(); ++it) {
                if (it.key() != "when" && it.key() != "otherwise" && it.key() != "option")
                    add(ErrorCode::SCHEMA_ERROR, loc + "." + it.key(), "unknown key");
            }
            if (saw_default) add(ErrorCode::SCHEMA_ERROR, loc, "rule after the default rule is unreachable");
            Rule rule;
            if (!r.contains("option") || !r["option"].is_number_integer()) {
                add(ErrorCode::SCHEMA_ERROR, loc + ".option", "must be an option index");
            } else {
                rule.option = r["option"].get<int>();
                if (rule.option < 0 || rule.option >= static_cast<int>(p_.options.size()))
                    add(ErrorCode::OPTION_OUT_OF_RANGE, loc + ".option",
                        "option " + std::to_string(rule.option) + " outside 0.." +
                            std::to_string(static_cast<int>(p_.options.size()) - 1));
            }
            const bool is_default = r.contains("otherwise") && r["otherwise"].is_boolean() && r["otherwise"].get<bool>();
            if (is_default && r.contains("when")) add(ErrorCode::SCHEMA_ERROR, loc, "rule has both 'when' and 'otherwise'");
            if (is_default) {
                saw_default = true;
            } else if (!r.contains("when") || !r["when"].is_string()) {
                add(ErrorCode::SCHEMA_ERROR, loc + ".when", "conditional rule needs a 'when' expression");
            } else {
                rule.source = r["when"].get<std::string>();
                try {
                    rule.when = parse_expression(rule.source, loc + ".when");
                    const Type t = detail::check_types(*rule.when, feature_env_, loc + ".when", diags_);
                    if (t != Type::boolean && t != Type::any)
                        add(ErrorCode::TYPE_ERROR, loc + ".when", "condition must be boolean, got " + std::string(type_name(t)));
                } catch (const DslError& e) {
                    diags_.insert(diags_.end(), e.diagnostics().begin(), e.diagnostics().end());
                }
            }
            p_.rules.push_back(std::move(rule));
        }
        if (!saw_default)
            add(ErrorCode::MISSING_DEFAULT_RULE, "answer_rules",
                "the last rule must be an unconditional default ({\"otherwise\": true, \"option\": k})");
    }

    void check_text(const std::string& text, const std::string& loc) {
        std::vector<detail::TextPiece> pieces;
        try {
            pieces = detail::split_placeholders(text);
        } catch (const std::invalid_argument& e) {
            add(ErrorCode::PARSE_ERROR, loc, e.what());
            return;
        }
        const auto& meta = p_.selection.metadata;
        for (const auto& piece : pieces) {
            if (!piece.placeholder) continue;
            const std::string& n = piece.text;
            bool bound = n == "length" || n == "start" || p_.hyperparameters.count(n) > 0 ||
                         std::find(meta.begin(), meta.end(), n) != meta.end();
            if (n.rfind("meta.", 0) == 0) bound = std::find(meta.begin(), meta.end(), n.substr(5)) != meta.end();
            if (n.rfind("meta2.", 0) == 0)
                bound = p_.selection.pair_samples && std::find(meta.begin(), meta.end(), n.substr(6)) != meta.end();
            for (const auto& f : p_.features) {
                if (f.name != n) continue;
                if (f.type == Type::series) {
                    add(ErrorCode::TYPE_ERROR, loc, "placeholder '{" + n + "}' refers to a series feature");
                }
                bound = true;
            }
            if (!bound) add(ErrorCode::UNBOUND_PLACEHOLDER, loc, "placeholder '{" + n + "}' has no binding");
        }
    }

    void check_placeholders() {
        check_text(p_.question, "question");
        for (std::size_t i = 0; i < p_.options.size(); ++i) check_text(p_.options[i], "options[" + std::to_string(i) + "]");
    }

    const json& doc_;
    TemplateProgram p_;
    std::vector<Diagnostic> diags_;
    std::map<std::string, Type> feature_env_;
};

}  // namespace

TemplateProgram parse(const json& document) { return DocumentParser(document).run(); }

TemplateProgram parse(std::string_view document) {
    json j;
    try {
        j = json::parse(document);
    } catch (const json::parse_error& e) {
        throw DslError({{ErrorCode::PARSE_ERROR, "document", std::string("malformed JSON: ") + e.what()}});
    }
    return parse(j);
}

}  // namespace tsexam::dsl
