#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace tsexam::assets {

/// Text asset compiled into the library, keyed by path relative to the assets directory
/// (e.g. "prompts/generation.txt"). Throws InvalidParameter when absent.
std::string_view get(std::string_view name);

bool has(std::string_view name);

/// Asset names starting with `prefix`, sorted.
std::vector<std::string> list(std::string_view prefix = "");

/// Replaces every "{key}" with its value; other braces are left alone.
std::string substitute(std::string text, const std::vector<std::pair<std::string, std::string>>& values);

}  // namespace tsexam::assets
