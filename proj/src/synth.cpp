#include "tsexam/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "tsexam/error.hpp"
#include "tsexam/rng.hpp"

namespace tsexam::synth {
namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

void require(bool ok, const char* field, const std::string& what) {
    if (!ok) throw InvalidParameter(field, what);
}

void require_finite(double v, const char* field) { require(std::isfinite(v), field, "must be finite"); }

void check_finite_output(const std::vector<double>& values) {
    for (double v : values) {
        if (!std::isfinite(v)) throw InvalidParameter("params", "pattern produced non-finite values");
    }
}

json snr_to_json(double snr_db) { return std::isinf(snr_db) ? json("inf") : json(snr_db); }

}  // namespace

std::string kind_name(const PatternSpec& spec) {
    return std::visit(overloaded{
                          [](const LinearTrend&) { return "linear_trend"; },
                          [](const ExponentialTrend&) { return "exponential_trend"; },
                          [](const Sine&) { return "sine"; },
                          [](const SquareWave&) { return "square_wave"; },
                          [](const ArProcess&) { return "ar_process"; },
                          [](const RandomWalk&) { return "random_walk"; },
                          [](const WhiteNoise&) { return "white_noise"; },
                          [](const MeanReverting&) { return "mean_reverting"; },
                          [](const RegimeSwitch&) { return "regime_switch"; },
                      },
                      spec);
}

std::string to_string(AnomalyKind kind) {
    switch (kind) {
        case AnomalyKind::spike: return "spike";
        case AnomalyKind::level_shift: return "level_shift";
        case AnomalyKind::variance_shift: return "variance_shift";
        case AnomalyKind::pattern_break: return "pattern_break";
    }
    return "spike";
}

AnomalyKind anomaly_kind_from_string(const std::string& s) {
    if (s == "spike") return AnomalyKind::spike;
    if (s == "level_shift") return AnomalyKind::level_shift;
    if (s == "variance_shift") return AnomalyKind::variance_shift;
    if (s == "pattern_break") return AnomalyKind::pattern_break;
    throw InvalidParameter("kind", "unknown anomaly kind '" + s + "'");
}

void validate(const PatternSpec& spec, std::size_t length) {
    require(length >= 2, "length", "must be at least 2");
    std::visit(overloaded{
                   [](const LinearTrend& p) {
                       require_finite(p.slope, "slope");
                       require_finite(p.intercept, "intercept");
                   },
                   [](const ExponentialTrend& p) {
                       require_finite(p.scale, "scale");
                       require_finite(p.rate, "rate");
                       require_finite(p.offset, "offset");
                   },
                   [](const Sine& p) {
                       require_finite(p.amplitude, "amplitude");
                       require(std::isfinite(p.period) && p.period > 0, "period", "must be positive");
                       require_finite(p.phase, "phase");
                       require_finite(p.offset, "offset");
                   },
                   [](const SquareWave& p) {
                       require_finite(p.amplitude, "amplitude");
                       require(std::isfinite(p.period) && p.period > 0, "period", "must be positive");
                       require_finite(p.phase, "phase");
                       require(p.duty > 0 && p.duty < 1, "duty", "must be in (0, 1)");
                   },
                   [](const ArProcess& p) {
                       require(!p.coeffs.empty(), "coeffs", "must be non-empty");
                       for (double c : p.coeffs) require_finite(c, "coeffs");
                       require(std::isfinite(p.noise_std) && p.noise_std >= 0, "noise_std", "must be >= 0");
                       require(p.burn_in >= 0, "burn_in", "must be >= 0");
                   },
                   [](const RandomWalk& p) {
                       require(std::isfinite(p.step_std) && p.step_std >= 0, "step_std", "must be >= 0");
                       require_finite(p.drift, "drift");
                       require_finite(p.start, "start");
                   },
                   [](const WhiteNoise& p) {
                       require(std::isfinite(p.std) && p.std >= 0, "std", "must be >= 0");
                       require_finite(p.mean, "mean");
                   },
                   [](const MeanReverting& p) {
                       require(std::isfinite(p.rate) && p.rate > 0 && p.rate < 2, "rate", "must be in (0, 2)");
                       require_finite(p.mean, "mean");
                       require(std::isfinite(p.sigma) && p.sigma >= 0, "sigma", "must be >= 0");
                       if (p.start) require_finite(*p.start, "start");
                   },
                   [length](const RegimeSwitch& p) {
                       for (std::size_t i = 0; i < p.boundaries.size(); ++i) {
                           require(p.boundaries[i] > 0 && p.boundaries[i] < length, "boundaries",
                                   "must lie within (0, length)");
                           require(i == 0 || p.boundaries[i] > p.boundaries[i - 1], "boundaries",
                                   "must be strictly increasing");
                       }
                       require(p.levels.size() == p.boundaries.size() + 1, "levels",
                               "needs one entry per segment");
                       require(p.noise_stds.size() == p.boundaries.size() + 1, "noise_stds",
                               "needs one entry per segment");
                       for (double v : p.levels) require_finite(v, "levels");
                       for (double v : p.noise_stds) require(std::isfinite(v) && v >= 0, "noise_stds", "must be >= 0");
                   },
               },
               spec);
}

TimeSeries gen_base_pattern(const PatternSpec& spec, std::size_t length, std::uint64_t seed) {
    validate(spec, length);
    Rng rng(seed);
    std::vector<double> v(length);
    constexpr double two_pi = 2.0 * std::numbers::pi;

    std::visit(overloaded{
                   [&](const LinearTrend& p) {
                       for (std::size_t t = 0; t < length; ++t) v[t] = p.intercept + p.slope * double(t);
                   },
                   [&](const ExponentialTrend& p) {
                       for (std::size_t t = 0; t < length; ++t) v[t] = p.offset + p.scale * std::exp(p.rate * double(t));
                   },
                   [&](const Sine& p) {
                       for (std::size_t t = 0; t < length; ++t)
                           v[t] = p.offset + p.amplitude * std::sin(two_pi * double(t) / p.period + p.phase);
                   },
                   [&](const SquareWave& p) {
                       for (std::size_t t = 0; t < length; ++t) {
                           double cycle = double(t) / p.period + p.phase / two_pi;
                           cycle -= std::floor(cycle);
                           v[t] = cycle < p.duty ? p.amplitude : -p.amplitude;
                       }
                   },
                   [&](const ArProcess& p) {
                       const std::size_t order = p.coeffs.size();
                       const std::size_t total = length + static_cast<std::size_t>(p.burn_in);
                       std::vector<double> x(total + order, 0.0);
                       for (std::size_t t = order; t < x.size(); ++t) {
                           double acc = p.noise_std * rng.normal();
                           for (std::size_t k = 0; k < order; ++k) acc += p.coeffs[k] * x[t - 1 - k];
                           x[t] = acc;
                       }
                       std::copy(x.end() - static_cast<std::ptrdiff_t>(length), x.end(), v.begin());
                   },
                   [&](const RandomWalk& p) {
                       double x = p.start;
                       v[0] = x;
                       for (std::size_t t = 1; t < length; ++t) {
                           x += p.drift + p.step_std * rng.normal();
                           v[t] = x;
                       }
                   },
                   [&](const WhiteNoise& p) {
                       for (auto& x : v) x = p.mean + p.std * rng.normal();
                   },
                   [&](const MeanReverting& p) {
                       double x = p.start.value_or(p.mean);
                       v[0] = x;
                       for (std::size_t t = 1; t < length; ++t) {
                           x += p.rate * (p.mean - x) + p.sigma * rng.normal();
                           v[t] = x;
                       }
                   },
                   [&](const RegimeSwitch& p) {
                       std::size_t segment = 0;
                       for (std::size_t t = 0; t < length; ++t) {
                           while (segment < p.boundaries.size() && t >= p.boundaries[segment]) ++segment;
                           v[t] = p.levels[segment] + p.noise_stds[segment] * rng.normal();
                       }
                   },
               },
               spec);

    check_finite_output(v);
    TimeSeries out;
    out.values = std::move(v);
    out.seed = seed;
    out.provenance = {{"op", "pattern"}, {"spec", to_json(spec)}, {"length", length}, {"seed", seed}};
    return out;
}

TimeSeries compose(const std::vector<TimeSeries>& components, Composition method) {
    if (components.empty()) throw InvalidParameter("components", "must be non-empty");
    const std::size_t n = components.front().length();
    for (const auto& c : components) {
        if (c.length() != n) throw InvalidParameter("components", "length mismatch");
    }
    TimeSeries out;
    out.values = components.front().values;
    for (std::size_t k = 1; k < components.size(); ++k) {
        const auto& src = components[k].values;
        if (method == Composition::additive) {
            for (std::size_t t = 0; t < n; ++t) out.values[t] += src[t];
        } else {
            for (std::size_t t = 0; t < n; ++t) out.values[t] *= src[t];
        }
    }
    json parts = json::array();
    for (const auto& c : components) parts.push_back(c.provenance);
    out.seed = components.front().seed;
    out.provenance = {{"op", "compose"},
                      {"method", method == Composition::additive ? "additive" : "multiplicative"},
                      {"components", std::move(parts)}};
    return out;
}

double signal_power(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    double acc = 0.0;
    for (double v : values) acc += v * v;
    return acc / double(values.size());
}

TimeSeries add_noise(const TimeSeries& series, double snr_db, std::uint64_t seed) {
    if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity())
        throw InvalidParameter("snr_db", "must be a number or +inf");
    TimeSeries out = series;
    out.provenance = {{"op", "noise"}, {"snr_db", snr_to_json(snr_db)}, {"seed", seed}, {"input", series.provenance}};
    if (std::isinf(snr_db)) return out;
    const double power = signal_power(series.values);
    if (!(power > 0.0)) throw InvalidParameter("series", "zero signal power; noise variance undefined for finite snr_db");
    const double noise_std = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
    Rng rng(seed);
    for (auto& v : out.values) v += noise_std * rng.normal();
    return out;
}

TimeSeries add_noise_std(const TimeSeries& series, double noise_std, std::uint64_t seed) {
    if (!(std::isfinite(noise_std) && noise_std >= 0)) throw InvalidParameter("noise_std", "must be >= 0");
    TimeSeries out = series;
    Rng rng(seed);
    for (auto& v : out.values) v += noise_std * rng.normal();
    out.provenance = {{"op", "noise"}, {"noise_std", noise_std}, {"seed", seed}, {"input", series.provenance}};
    return out;
}

TimeSeries inject_anomaly(const TimeSeries& series, const AnomalyLabel& label, std::uint64_t seed) {
    if (label.start > label.end || label.end >= series.length())
        throw InvalidParameter("window", "anomaly window outside series");
    if (!(std::isfinite(label.magnitude) && label.magnitude != 0.0))
        throw InvalidParameter("magnitude", "must be finite and non-zero");
    if (label.kind == AnomalyKind::spike && label.start != label.end)
        throw InvalidParameter("window", "spike occupies a single step (start == end)");

    TimeSeries out = series;
    auto& v = out.values;
    switch (label.kind) {
        case AnomalyKind::spike: v[label.start] += label.magnitude; break;
        case AnomalyKind::level_shift:
            for (std::size_t t = label.start; t <= label.end; ++t) v[t] += label.magnitude;
            break;
        case AnomalyKind::variance_shift: {
            double mean = 0.0;
            for (std::size_t t = label.start; t <= label.end; ++t) mean += v[t];
            mean /= double(label.end - label.start + 1);
            for (std::size_t t = label.start; t <= label.end; ++t) v[t] = mean + label.magnitude * (v[t] - mean);
            break;
        }
        case AnomalyKind::pattern_break: {
            Rng rng(seed);
            for (std::size_t t = label.start; t <= label.end; ++t) v[t] = label.magnitude * rng.normal();
            break;
        }
    }
    out.provenance = {{"op", "anomaly"}, {"label", to_json(label)}, {"seed", seed}, {"input", series.provenance}};
    return out;
}

std::pair<TimeSeries, TimeSeries> gen_granger_pair(std::size_t length, std::size_t lag, double coupling,
                                                   std::uint64_t seed) {
    if (length < 2) throw InvalidParameter("length", "must be at least 2");
    if (lag == 0 || lag >= length) throw InvalidParameter("lag", "must satisfy 0 < lag < length");
    if (!std::isfinite(coupling)) throw InvalidParameter("coupling", "must be finite");

    TimeSeries x = gen_base_pattern(ArProcess{{kGrangerDriverAr}, 1.0, 100}, length, derive_seed(seed, "driver"));
    Rng rng(derive_seed(seed, "response"));
    TimeSeries y;
    y.values.resize(length);
    for (std::size_t t = 0; t < length; ++t) {
        y.values[t] = rng.normal() + (t >= lag ? coupling * x.values[t - lag] : 0.0);
    }
    const json pair = {{"op", "granger"}, {"length", length}, {"lag", lag}, {"coupling", coupling}, {"seed", seed}};
    x.seed = seed;
    y.seed = seed;
    x.provenance = pair;
    x.provenance["role"] = "cause";
    y.provenance = pair;
    y.provenance["role"] = "effect";
    return {std::move(x), std::move(y)};
}

void validate(const Recipe& recipe) {
    if (recipe.components.empty()) throw InvalidParameter("components", "must be non-empty");
    for (const auto& c : recipe.components) validate(c, recipe.length);
    if (recipe.snr_db && (std::isnan(*recipe.snr_db) || *recipe.snr_db == -std::numeric_limits<double>::infinity()))
        throw InvalidParameter("snr_db", "must be a number or +inf");
    if (recipe.noise_std && !(std::isfinite(*recipe.noise_std) && *recipe.noise_std >= 0))
        throw InvalidParameter("noise_std", "must be >= 0");
    for (const auto& a : recipe.anomalies) {
        if (a.start > a.end || a.end >= recipe.length) throw InvalidParameter("anomalies", "window outside series");
        if (!(std::isfinite(a.magnitude) && a.magnitude != 0.0))
            throw InvalidParameter("anomalies", "magnitude must be finite and non-zero");
    }
}

TimeSeries materialize(const Recipe& recipe) {
    validate(recipe);
    std::vector<TimeSeries> parts;
    parts.reserve(recipe.components.size());
    for (std::size_t k = 0; k < recipe.components.size(); ++k) {
        parts.push_back(gen_base_pattern(recipe.components[k], recipe.length, derive_seed(recipe.seed, k)));
    }
    TimeSeries out = parts.size() == 1 ? std::move(parts.front()) : compose(parts, recipe.method);
    if (recipe.snr_db) out = add_noise(out, *recipe.snr_db, derive_seed(recipe.seed, "noise"));
    if (recipe.noise_std) out = add_noise_std(out, *recipe.noise_std, derive_seed(recipe.seed, "noise_std"));
    for (std::size_t k = 0; k < recipe.anomalies.size(); ++k) {
        out = inject_anomaly(out, recipe.anomalies[k], derive_seed(recipe.seed, 1000 + k));
    }
    out.seed = recipe.seed;
    return out;
}

// --- JSON ---------------------------------------------------------------------------------

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed) {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!ok.count(it.key())) throw InvalidParameter(it.key(), "unknown field");
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw InvalidParameter(key, "wrong type");
    }
}

}  // namespace

json to_json(const PatternSpec& spec) {
    json j = std::visit(
        overloaded{
            [](const LinearTrend& p) { return json{{"slope", p.slope}, {"intercept", p.intercept}}; },
            [](const ExponentialTrend& p) { return json{{"scale", p.scale}, {"rate", p.rate}, {"offset", p.offset}}; },
            [](const Sine& p) {
                return json{{"amplitude", p.amplitude}, {"period", p.period}, {"phase", p.phase}, {"offset", p.offset}};
            },
            [](const SquareWave& p) {
                return json{{"amplitude", p.amplitude}, {"period", p.period}, {"phase", p.phase}, {"duty", p.duty}};
            },
            [](const ArProcess& p) {
                return json{{"coeffs", p.coeffs}, {"noise_std", p.noise_std}, {"burn_in", p.burn_in}};
            },
            [](const RandomWalk& p) { return json{{"step_std", p.step_std}, {"drift", p.drift}, {"start", p.start}}; },
            [](const WhiteNoise& p) { return json{{"std", p.std}, {"mean", p.mean}}; },
            [](const MeanReverting& p) {
                json o{{"rate", p.rate}, {"mean", p.mean}, {"sigma", p.sigma}};
                if (p.start) o["start"] = *p.start;
                return o;
            },
            [](const RegimeSwitch& p) {
                return json{{"boundaries", p.boundaries}, {"levels", p.levels}, {"noise_stds", p.noise_stds}};
            },
        },
        spec);
    j["kind"] = kind_name(spec);
    return j;
}

PatternSpec pattern_from_json(const json& j) {
    if (!j.is_object()) throw InvalidParameter("spec", "must be an object");
    const std::string kind = get_or<std::string>(j, "kind", "");
    if (kind == "linear_trend") {
        reject_unknown(j, {"kind", "slope", "intercept"});
        return LinearTrend{get_or(j, "slope", 0.0), get_or(j, "intercept", 0.0)};
    }
    if (kind == "exponential_trend") {
        reject_unknown(j, {"kind", "scale", "rate", "offset"});
        return ExponentialTrend{get_or(j, "scale", 1.0), get_or(j, "rate", 0.01), get_or(j, "offset", 0.0)};
    }
    if (kind == "sine") {
        reject_unknown(j, {"kind", "amplitude", "period", "phase", "offset"});
        return Sine{get_or(j, "amplitude", 1.0), get_or(j, "period", 16.0), get_or(j, "phase", 0.0),
                    get_or(j, "offset", 0.0)};
    }
    if (kind == "square_wave") {
        reject_unknown(j, {"kind", "amplitude", "period", "phase", "duty"});
        return SquareWave{get_or(j, "amplitude", 1.0), get_or(j, "period", 16.0), get_or(j, "phase", 0.0),
                          get_or(j, "duty", 0.5)};
    }
    if (kind == "ar_process") {
        reject_unknown(j, {"kind", "coeffs", "noise_std", "burn_in"});
        return ArProcess{get_or(j, "coeffs", std::vector<double>{}), get_or(j, "noise_std", 1.0),
                         get_or(j, "burn_in", 100)};
    }
    if (kind == "random_walk") {
        reject_unknown(j, {"kind", "step_std", "drift", "start"});
        return RandomWalk{get_or(j, "step_std", 1.0), get_or(j, "drift", 0.0), get_or(j, "start", 0.0)};
    }
    if (kind == "white_noise") {
        reject_unknown(j, {"kind", "std", "mean"});
        return WhiteNoise{get_or(j, "std", 1.0), get_or(j, "mean", 0.0)};
    }
    if (kind == "mean_reverting") {
        reject_unknown(j, {"kind", "rate", "mean", "sigma", "start"});
        MeanReverting p{get_or(j, "rate", 0.3), get_or(j, "mean", 0.0), get_or(j, "sigma", 1.0), std::nullopt};
        if (j.contains("start")) p.start = get_or(j, "start", 0.0);
        return p;
    }
    if (kind == "regime_switch") {
        reject_unknown(j, {"kind", "boundaries", "levels", "noise_stds"});
        return RegimeSwitch{get_or(j, "boundaries", std::vector<std::size_t>{}),
                            get_or(j, "levels", std::vector<double>{}), get_or(j, "noise_stds", std::vector<double>{})};
    }
    throw InvalidParameter("kind", "unknown pattern kind '" + kind + "'");
}

json to_json(const AnomalyLabel& label) {
    return {{"kind", to_string(label.kind)}, {"start", label.start}, {"end", label.end}, {"magnitude", label.magnitude}};
}

AnomalyLabel anomaly_from_json(const json& j) {
    if (!j.is_object()) throw InvalidParameter("anomaly", "must be an object");
    reject_unknown(j, {"kind", "start", "end", "magnitude"});
    AnomalyLabel a;
    a.kind = anomaly_kind_from_string(get_or<std::string>(j, "kind", ""));
    a.start = get_or<std::size_t>(j, "start", 0);
    a.end = get_or<std::size_t>(j, "end", a.start);
    a.magnitude = get_or(j, "magnitude", 1.0);
    return a;
}

json to_json(const Recipe& r) {
    json comps = json::array();
    for (const auto& c : r.components) comps.push_back(to_json(c));
    json j{{"components", comps},
           {"method", r.method == Composition::additive ? "additive" : "multiplicative"},
           {"length", r.length},
           {"seed", r.seed}};
    if (r.snr_db) j["snr_db"] = snr_to_json(*r.snr_db);
    if (r.noise_std) j["noise_std"] = *r.noise_std;
    if (!r.anomalies.empty()) {
        json an = json::array();
        for (const auto& a : r.anomalies) an.push_back(to_json(a));
        j["anomalies"] = an;
    }
    return j;
}

Recipe recipe_from_json(const json& j) {
    if (!j.is_object()) throw InvalidParameter("recipe", "must be an object");
    reject_unknown(j, {"components", "method", "length", "seed", "snr_db", "noise_std", "anomalies"});
    Recipe r;
    if (!j.contains("components") || !j["components"].is_array())
        throw InvalidParameter("components", "must be an array");
    for (const auto& c : j["components"]) r.components.push_back(pattern_from_json(c));
    const std::string method = get_or<std::string>(j, "method", "additive");
    if (method == "additive") {
        r.method = Composition::additive;
    } else if (method == "multiplicative") {
        r.method = Composition::multiplicative;
    } else {
        throw InvalidParameter("method", "must be additive or multiplicative");
    }
    r.length = get_or<std::size_t>(j, "length", 128);
    r.seed = get_or<std::uint64_t>(j, "seed", 0);
    if (j.contains("snr_db")) {
        const auto& s = j["snr_db"];
        if (s.is_string() && s.get<std::string>() == "inf") {
            r.snr_db = kNoNoise;
        } else if (s.is_number()) {
            r.snr_db = s.get<double>();
        } else {
            throw InvalidParameter("snr_db", "must be a number or \"inf\"");
        }
    }
    if (j.contains("noise_std")) r.noise_std = get_or(j, "noise_std", 0.0);
    if (j.contains("anomalies")) {
        for (const auto& a : j["anomalies"]) r.anomalies.push_back(anomaly_from_json(a));
    }
    validate(r);
    return r;
}

}  // namespace tsexam::synth
