#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tsexam/time_series.hpp"

namespace tsexam::synth {

// Base pattern parameter sets. Periods and boundaries are in steps, phases in radians.

struct LinearTrend {
    double slope = 0.0;
    double intercept = 0.0;
};

struct ExponentialTrend {
    double scale = 1.0;
    double rate = 0.01;
    double offset = 0.0;
};

struct Sine {
    double amplitude = 1.0;
    double period = 16.0;
    double phase = 0.0;
    double offset = 0.0;
};

struct SquareWave {
    double amplitude = 1.0;
    double period = 16.0;
    double phase = 0.0;
    double duty = 0.5;
};

struct ArProcess {
    std::vector<double> coeffs{0.5};
    double noise_std = 1.0;
    int burn_in = 100;
};

struct RandomWalk {
    double step_std = 1.0;
    double drift = 0.0;
    double start = 0.0;
};

struct WhiteNoise {
    double std = 1.0;
    double mean = 0.0;
};

/// Discrete Ornstein-Uhlenbeck: x[t] = x[t-1] + rate * (mean - x[t-1]) + sigma * e[t].
struct MeanReverting {
    double rate = 0.3;
    double mean = 0.0;
    double sigma = 1.0;
    std::optional<double> start;
};

/// Piecewise-constant level with per-segment noise. `boundaries` are change points
/// (first index of segments 2..K), so `levels` and `noise_stds` hold K entries.
struct RegimeSwitch {
    std::vector<std::size_t> boundaries;
    std::vector<double> levels;
    std::vector<double> noise_stds;
};

using PatternSpec = std::variant<LinearTrend, ExponentialTrend, Sine, SquareWave, ArProcess, RandomWalk,
                                 WhiteNoise, MeanReverting, RegimeSwitch>;

std::string kind_name(const PatternSpec& spec);

enum class Composition { additive, multiplicative };

enum class AnomalyKind { spike, level_shift, variance_shift, pattern_break };

std::string to_string(AnomalyKind kind);
AnomalyKind anomaly_kind_from_string(const std::string& s);

struct AnomalyLabel {
    AnomalyKind kind = AnomalyKind::spike;
    std::size_t start = 0;
    std::size_t end = 0;  // inclusive
    double magnitude = 1.0;

    friend bool operator==(const AnomalyLabel&, const AnomalyLabel&) = default;
};

inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

/// Throws InvalidParameter naming the field.
void validate(const PatternSpec& spec, std::size_t length);

TimeSeries gen_base_pattern(const PatternSpec& spec, std::size_t length, std::uint64_t seed);

TimeSeries compose(const std::vector<TimeSeries>& components, Composition method);

/// Adds Gaussian noise with variance = signal power / 10^(snr_db/10). snr_db = kNoNoise returns
/// the input unchanged.
TimeSeries add_noise(const TimeSeries& series, double snr_db, std::uint64_t seed);

/// Absolute-std alternative to add_noise.
TimeSeries add_noise_std(const TimeSeries& series, double noise_std, std::uint64_t seed);

TimeSeries inject_anomaly(const TimeSeries& series, const AnomalyLabel& label, std::uint64_t seed);

/// x is a unit-innovation AR(1) process (coefficient kGrangerDriverAr); y[t] = coupling * x[t-lag] + e[t].
inline constexpr double kGrangerDriverAr = 0.5;
std::pair<TimeSeries, TimeSeries> gen_granger_pair(std::size_t length, std::size_t lag, double coupling,
                                                   std::uint64_t seed);

/// Declarative series recipe: components composed, then optional noise, then anomalies.
/// Each stage draws from its own stream derived from `seed`.
struct Recipe {
    std::vector<PatternSpec> components;
    Composition method = Composition::additive;
    std::size_t length = 128;
    std::uint64_t seed = 0;
    std::optional<double> snr_db;
    std::optional<double> noise_std;
    std::vector<AnomalyLabel> anomalies;
};

void validate(const Recipe& recipe);
TimeSeries materialize(const Recipe& recipe);

json to_json(const PatternSpec& spec);
PatternSpec pattern_from_json(const json& j);
json to_json(const AnomalyLabel& label);
AnomalyLabel anomaly_from_json(const json& j);
json to_json(const Recipe& recipe);
Recipe recipe_from_json(const json& j);

/// Signal power: mean of squared values.
double signal_power(const std::vector<double>& values);

}  // namespace tsexam::synth
