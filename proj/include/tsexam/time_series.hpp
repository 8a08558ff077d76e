#pragma once

#include <cstdint>
#include <cstring>
#include <vector>

#include <nlohmann/json.hpp>

namespace tsexam {

using json = nlohmann::json;

/// Uniformly sampled real-valued sequence plus the recipe that produced it.
struct TimeSeries {
    std::vector<double> values;
    std::uint64_t seed = 0;
    json provenance = json::object();

    std::size_t length() const noexcept { return values.size(); }

    /// Bitwise comparison of values (distinguishes -0.0 from 0.0, NaN payloads).
    friend bool operator==(const TimeSeries& a, const TimeSeries& b) {
        return a.seed == b.seed && a.values.size() == b.values.size() &&
               (a.values.empty() ||
                std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)) == 0) &&
               a.provenance == b.provenance;
    }
};

}  // namespace tsexam
