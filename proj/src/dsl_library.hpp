#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tsexam/dsl.hpp"

namespace tsexam::dsl::detail {

/// Raised while evaluating an expression on one sample (bad argument, empty series...).
class EvalError : public Error {
public:
    using Error::Error;
};

using Impl = Value (*)(const std::vector<Value>&);

struct Overload {
    std::vector<Type> params;
    Type result;
    Impl impl;
};

struct Function {
    std::string name;
    std::string doc;
    std::vector<Overload> overloads;
};

const std::vector<Function>& functions();
const Function* find_function(std::string_view name);

/// Static result type of a call, or nullopt when no overload accepts the argument types.
std::optional<Type> call_type(const Function& f, const std::vector<Type>& args);

/// Runtime dispatch on the actual value types.
Value call(const Function& f, const std::vector<Value>& args);

bool all_finite(const Value& v);

struct TextPiece {
    bool placeholder = false;
    std::string text;  // literal text, or the placeholder name
    int decimals = -1;
};

/// Splits "{name}" / "{name:decimals}" placeholders out of a text. "{{" and "}}" are literal braces.
/// Throws std::invalid_argument on an unterminated or malformed placeholder.
std::vector<TextPiece> split_placeholders(std::string_view text);

/// Static type of an expression given identifier types; appends diagnostics under `location`.
Type check_types(const Expr& e, const std::map<std::string, Type>& env, const std::string& location,
                 std::vector<Diagnostic>& diags);

}  // namespace tsexam::dsl::detail
