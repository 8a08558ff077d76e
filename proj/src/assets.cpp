#include "tsexam/assets.hpp"

#include <algorithm>
#include <map>

#include "tsexam/error.hpp"

namespace tsexam::assets {

namespace detail {
const std::map<std::string_view, std::string_view>& table();
}

std::string_view get(std::string_view name) {
    const auto& t = detail::table();
    const auto it = t.find(name);
    if (it == t.end()) throw InvalidParameter("asset", "no bundled asset named '" + std::string(name) + "'");
    return it->second;
}

bool has(std::string_view name) { return detail::table().count(name) > 0; }

std::vector<std::string> list(std::string_view prefix) {
    std::vector<std::string> out;
    for (const auto& [k, v] : detail::table()) {
        if (k.substr(0, prefix.size()) == prefix) out.emplace_back(k);
    }
    return out;
}

std::string substitute(std::string text, const std::vector<std::pair<std::string, std::string>>& values) {
    // Single pass, so substituted values are never rescanned.
    std::string out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto open = text.find('{', pos);
        if (open == std::string::npos) break;
        const auto close = text.find('}', open);
        if (close == std::string::npos) break;
        out.append(text, pos, open - pos);
        const std::string_view key(text.data() + open + 1, close - open - 1);
        const auto it = std::find_if(values.begin(), values.end(), [&](const auto& kv) { return kv.first == key; });
        if (it != values.end()) {
            out += it->second;
            pos = close + 1;
        } else {
            out += '{';
            pos = open + 1;
        }
    }
    out.append(text, pos);
    return out;
}

}  // namespace tsexam::assets
