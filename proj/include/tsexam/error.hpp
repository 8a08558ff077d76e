#pragma once

#include <stdexcept>
#include <string>

namespace tsexam {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A parameter failed validation. field() names the offending parameter.
class InvalidParameter : public Error {
public:
    InvalidParameter(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace tsexam
