#include "tsexam/templates.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>

#include "tsexam/rng.hpp"
#include "tsexam/synth.hpp"

namespace tsexam::templates {
namespace {

using synth::Recipe;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Generated {
    std::vector<TimeSeries> series;
    json conditioning = json::object();  // extra facts recorded in provenance (clean recipes, labels)
    std::string question_suffix;
};

using Generator = std::function<Generated(int option, std::size_t length, std::uint64_t seed)>;

struct Template {
    TemplateMeta meta;
    std::string question;
    std::vector<std::string> options;
    std::string hint;
    std::string concept_notes;
    std::vector<std::string> concepts;
    double weight = 1.0;  // relative share within its category in generate_exam
    Generator generate;
};

double pick_period(Rng& r, std::initializer_list<double> periods) {
    std::vector<double> v(periods);
    return v[r.below(v.size())];
}

std::uint64_t series_seed(std::uint64_t seed, int k) { return derive_seed(seed, "series" + std::to_string(k)); }

Generated single(TimeSeries s) {
    Generated g;
    g.series.push_back(std::move(s));
    return g;
}

// Segment lengths >= min_len summing to n, drawn uniformly over compositions.
std::vector<std::size_t> random_boundaries(Rng& r, std::size_t n, std::size_t segments, std::size_t min_len) {
    const std::size_t free = n - segments * min_len;
    std::vector<std::size_t> cuts;
    for (std::size_t k = 0; k + 1 < segments; ++k) cuts.push_back(r.below(free + 1));
    std::sort(cuts.begin(), cuts.end());
    std::vector<std::size_t> boundaries;
    for (std::size_t k = 0; k < cuts.size(); ++k) boundaries.push_back(cuts[k] + (k + 1) * min_len);
    return boundaries;
}

// --- pattern recognition ------------------------------------------------------------------

Generated gen_trend(int option, std::size_t n, std::uint64_t seed) {
    Rng r(derive_seed(seed, "params"));
    const double amplitude = r.bernoulli(0.5) ? r.uniform(0.5, 1.5) : 0.0;
    const double period = pick_period(r, {8, 16, 32});
    const double sigma = r.uniform(0.2, 0.6);
    const double scale = amplitude + sigma;
    // Total rise of the trend spans 4-8 times the combined cycle and noise scale.
    const double min_slope = 4.0 * scale / double(n);
    double slope = 0.0;
    if (option == 0) slope = r.uniform(1.0, 2.0) * min_slope;
    if (option == 1) slope = -r.uniform(1.0, 2.0) * min_slope;
    Recipe rc;
    rc.components.push_back(synth::LinearTrend{slope, r.uniform(-1.0, 1.0)});
    if (amplitude > 0) rc.components.push_back(synth::Sine{amplitude, period, r.uniform(0, kTwoPi), 0.0});
    rc.noise_std = sigma;
    rc.length = n;
    rc.seed = series_seed(seed, 0);
    return single(synth::materialize(rc));
}

Generated gen_amplitude(int option, std::size_t n, std::uint64_t seed) {
    Rng r(derive_seed(seed, "params"));
    const double period = pick_period(r, {8, 16});
    const double base = r.uniform(0.5, 1.0);
    const double ratio = r.uniform(2.5, 4.0);
    double a_start = base, a_end = base;
    if (option == 0) a_end = base * ratio;
    if (option == 1) a_start = base * ratio;
    Recipe rc;
    rc.components.push_back(synth::Sine{1.0, period, r.uniform(0, kTwoPi), 0.0});
    rc.components.push_back(synth::LinearTrend{(a_end - a_start) / double(n - 1), a_start});
    rc.method = synth::Composition::multiplicative;
    rc.noise_std = 0.05 * std::min(a_start, a_end);
    rc.length = n;
    rc.seed = series_seed(seed, 0);
    return single(synth::materialize(rc));
}

Generated gen_stationarity(int option, std::size_t n, std::uint64_t seed) {
    Rng r(derive_seed(seed, "params"));
    const double amplitude = r.uniform(1.0, 2.0);
    const double period = pick_period(r, {8, 16, 32});
    const double phi = r.uniform(0.2, 0.5);
    const double innovation = r.uniform(0.3, 0.6);
    const double stationary_sd = innovation / std::sqrt(1.0 - phi * phi);
    Recipe rc;
    rc.components.push_back(synth::Sine{amplitude, period, r.uniform(0, kTwoPi), 0.0});
    rc.components.push_back(synth::ArProcess{{phi}, innovation, 100});
    if (option == 1) {
        const double sign = r.bernoulli(0.5) ? 1.0 : -1.0;
        rc.components.push_back(synth::LinearTrend{sign * r.uniform(6.0, 10.0) * stationary_sd / (double(n) / 2.0), 0.0});
    }
    rc.length = n;
    rc.seed = series_seed(seed, 0);
    Generated g = single(synth::materialize(rc));
    g.conditioning["cycle_period"] = period;
    return g;
}

Generated gen_regimes(int option, std::size_t n, std::uint64_t seed) {
    Rng r(derive_seed(seed, "params"));
    const std::size_t segments = static_cast<std::size_t>(option) + 1;
    const double sigma = r.uniform(0.1, 0.3);
    const double gap = r.uniform(14.0, 18.0) * sigma;
    const double base = r.uniform(-1.0, 1.0);
    auto order = r.permutation(segments);
    synth::RegimeSwitch p;
    p.boundaries = random_boundaries(r, n, segments, n / 8);
    for (std::size_t k = 0; k < segments; ++k) {
        p.levels.push_back(base + gap * double(order[k]));
        p.noise_stds.push_back(sigma);
    }
    Recipe rc;
    rc.components.push_back(p);
    rc.length = n;
    rc.seed = series_seed(seed, 0);
    return single(synth::materialize(rc));
}

Generated gen_mean_stability(int option, std::size_t n, std::uint64_t seed) {
    Rng r(derive_seed(seed, "params"));
    const double phi = r.uniform(0.0, 0.4);
    const double innovation = r.uniform(0.5, 1.0);
    const double sd = innovation / std::sqrt(1.0 - phi * phi);
    Recipe rc;
    rc.components.push_back(synth::ArProcess{{phi}, innovation, 100});
    rc.components.push_back(synth::LinearTrend{0.0, r.uniform(-2.0, 2.0)});
    rc.length = n;
    rc.seed = series_seed(seed, 0);
    if (option == 1) {
        const auto start = static_cast<std::size_t>(r.integer(static_cast<long long>(n / 4), static_cast<long long>(n / 2)));
        const double sign = r.bernoulli(0.5) ? 1.0 : -1.0;
        rc.anomalies.push_back({synth::AnomalyKind::level_shift, start, n - 1, sign * r.uniform(5.0, 7.0) * sd});
    }
    return single(synth::materialize(rc));
}

Generated gen_mean_reversion(int option, std::size_t n, std::uint64_t seed) {
    Rng r(derive_seed(seed, "params"));
    Recipe rc;
    if (option == 0) {
        const double mean = r.uniform(-1.0, 1.0);
        const double sigma = r.uniform(0.5, 1.0);
        const double sign = r.bernoulli(0.5) ? 1.0 : -1.0;
        rc.components.push_back(
            synth::MeanReverting{r.uniform(0.5, 0.9), mean, sigma, mean + sign * r.uniform(2.0, 4.0) * sigma});
    } else {
        rc.components.push_back(synth::RandomWalk{r.uniform(0.5, 1.0), 0.0, r.uniform(-1.0, 1.0)});
    }
    rc.length = n;
    rc.seed = series_seed(seed, 0);
    return single(synth::materialize(rc));
}

// --- noise understanding ------------------------------------------------------------------

Generated gen_white_noise(int option, std::size_t n, std::uint64_t seed) {
    Rng r(derive_seed(seed, "params"));
    Recipe rc;
    if (option == 0) {
        rc.components.push_back(synth::WhiteNoise{r.uniform(0.5, 2.0), r.uniform(-1.0, 1.0)});
    } else if (r.bernoulli(0.5)) {
        rc.components.push_back(synth::ArProcess{{r.uniform(0.6, 0.9)}, r.uniform(0.5, 1.5), 100});
    } else {
        rc.components.push_back(synth::RandomWalk{r.uniform(0.5, 1.5), 0.0, 0.0});
    }
    rc.length = n;
    rc.seed = series_seed(seed, 0);
    return single(synth::materialize(rc));
}

Generated gen_random_walk(int option, std::size_t n, std::uint64_t seed) {
    Rng r(derive_seed(seed, "params"));
    Recipe rc;
    if (option == 0) {
        rc.components.push_back(synth::RandomWalk{r.uniform(0.5, 1.5), 0.0, r.uniform(-1.0, 1.0)});
    } else {
        switch (r.below(3)) {
            case 0: rc.components.push_back(synth::WhiteNoise{r.uniform(0.5, 1.5), r.uniform(-1.0, 1.0)}); break;
            case 1: rc.components.push_back(synth::ArProcess{{r.uniform(0.0, 0.5)}, r.uniform(0.5, 1.5), 100}); break;
            default:
                rc.components.push_back(synth::MeanReverting{r.uniform(0.5, 0.9), 0.0, r.uniform(0.5, 1.5), std::nullopt});
        }
    }
    rc.length = n;
    rc.seed = series_seed(seed, 0);
    return single(synth::materialize(rc));
}

Generated gen_snr(int option, std::size_t n, std::uint64_t seed) {
    Rng r(derive_seed(seed, "params"));
    Recipe clean;
    clean.components.push_back(synth::Sine{r.uniform(1.0, 2.0), pick_period(r, {16, 32}), r.uniform(0, kTwoPi), 0.0});
    const double slope = r.uniform(-2.0, 2.0) / double(n);
    clean.components.push_back(synth::LinearTrend{slope, -slope * double(n - 1) / 2.0});
    clean.length = n;
    clean.seed = series_seed(seed, 0);
    const TimeSeries base = synth::materialize(clean);

    const double noisy_db = r.uniform(0.0, 5.0);
    const double quiet_db = noisy_db + r.uniform(10.0, 15.0);
    Generated g;
    for (int k = 0; k < 2; ++k) {
        const double snr = (k == option) ? noisy_db : quiet_db;
        g.series.push_back(synth::add_noise(base, snr, series_seed(seed, 10 + k)));
    }
    g.conditioning["clean_recipe"] = synth::to_json(clean);
    return g;
}

// --- anomaly detection --------------------------------------------------------------------

using synth::AnomalyKind;

const std::vector<std::pair<AnomalyKind, AnomalyKind>>& anomaly_pairs() {
    static const std::vector<std::pair<AnomalyKind, AnomalyKind>> pairs{
        {AnomalyKind::spike, AnomalyKind::level_shift},
        {AnomalyKind::spike, AnomalyKind::variance_shift},
        {AnomalyKind::level_shift, AnomalyKind::pattern_break},
        {AnomalyKind::variance_shift, AnomalyKind::pattern_break},
    };
    return pairs;
}

Generated gen_anomaly(int option, std::size_t n, std::uint64_t seed) {
    Rng r(derive_seed(seed, "params"));
    const double amplitude = r.uniform(1.0, 2.0);
    Recipe base;
    base.components.push_back(synth::Sine{amplitude, pick_period(r, {16, 32}), r.uniform(0, kTwoPi), 0.0});
    base.noise_std = r.uniform(0.1, 0.2) * amplitude;
    base.length = n;
    base.seed = series_seed(seed, 0);

    auto kinds = anomaly_pairs()[static_cast<std::size_t>(option)];
    if (r.bernoulli(0.5)) std::swap(kinds.first, kinds.second);

    auto make_label = [&](AnomalyKind kind, std::size_t lo, std::size_t hi) {
        synth::AnomalyLabel label;
        label.kind = kind;
        const double sign = r.bernoulli(0.5) ? 1.0 : -1.0;
        std::size_t width = 1;
        switch (kind) {
            case AnomalyKind::spike: label.magnitude = sign * r.uniform(4.0, 6.0) * amplitude; break;
            case AnomalyKind::level_shift: label.magnitude = sign * r.uniform(2.0, 3.0) * amplitude; break;
            case AnomalyKind::variance_shift: label.magnitude = r.uniform(3.0, 5.0); break;
            case AnomalyKind::pattern_break: label.magnitude = r.uniform(0.3, 0.6) * amplitude; break;
        }
        if (kind != AnomalyKind::spike)
            width = static_cast<std::size_t>(r.integer(static_cast<long long>(n / 8), static_cast<long long>(n / 5)));
        label.start = static_cast<std::size_t>(r.integer(static_cast<long long>(lo), static_cast<long long>(hi - width)));
        label.end = label.start + width - 1;
        return label;
    };
    Recipe with_anomalies = base;
    with_anomalies.anomalies.push_back(make_label(kinds.first, n / 8, n / 2));
    with_anomalies.anomalies.push_back(make_label(kinds.second, n / 2, 7 * n / 8));

    Generated g;
    g.series.push_back(synth::materialize(with_anomalies));
    g.conditioning["base_recipe"] = synth::to_json(base);
    // Roughly a third of anomaly questions carry an anomaly-free reference series.
    if (r.bernoulli(0.3101)) {
        Recipe reference = base;
        reference.seed = series_seed(seed, 1);
        g.series.push_back(synth::materialize(reference));
        g.question_suffix = " The second time series shows the normal behavior of the same process for reference.";
    }
    return g;
}

// --- comparative analysis -----------------------------------------------------------------

Recipe shape_recipe(int family, Rng& r, std::size_t n, double period, double amplitude, std::uint64_t seed) {
    Recipe rc;
    rc.length = n;
    rc.seed = seed;
    switch (family) {
        case 0: rc.components.push_back(synth::Sine{amplitude, period, r.uniform(0, kTwoPi), 0.0}); break;
        case 1: {
            const double slope = amplitude * 4.0 / double(n);
            rc.components.push_back(synth::LinearTrend{slope, -slope * double(n - 1) / 2.0});
            break;
        }
        case 2: {
            const double slope = -amplitude * 4.0 / double(n);
            rc.components.push_back(synth::LinearTrend{slope, -slope * double(n - 1) / 2.0});
            break;
        }
        default: rc.components.push_back(synth::SquareWave{amplitude, period, 0.0, 0.5}); break;
    }
    return rc;
}

Generated gen_shape(int option, std::size_t n, std::uint64_t seed) {
    Rng r(derive_seed(seed, "params"));
    const double amplitude = r.uniform(1.0, 2.0);
    const double period = pick_period(r, {16, 32});
    std::vector<Recipe> clean;
    if (option == 0) {
        const int family = static_cast<int>(r.below(4));
        clean.push_back(shape_recipe(family, r, n, period, amplitude, series_seed(seed, 0)));
        clean.push_back(clean.front());
    } else {
        // Pairs whose clean shapes are uncorrelated or anti-correlated.
        switch (r.below(3)) {
            case 0:
                clean.push_back(shape_recipe(0, r, n, period, amplitude, series_seed(seed, 0)));
                clean.push_back(shape_recipe(0, r, n, period / 2.0, amplitude, series_seed(seed, 1)));
                break;
            case 1:
                clean.push_back(shape_recipe(1, r, n, period, amplitude, series_seed(seed, 0)));
                clean.push_back(shape_recipe(2, r, n, period, amplitude, series_seed(seed, 1)));
                break;
            default:
                clean.push_back(shape_recipe(3, r, n, period, amplitude, series_seed(seed, 0)));
                clean.push_back(shape_recipe(0, r, n, period / 2.0, amplitude, series_seed(seed, 1)));
                break;
        }
        if (r.bernoulli(0.5)) std::swap(clean[0], clean[1]);
    }
    Generated g;
    json recipes = json::array();
    for (int k = 0; k < 2; ++k) {
        const TimeSeries s = synth::materialize(clean[static_cast<std::size_t>(k)]);
        g.series.push_back(synth::add_noise(s, r.uniform(5.0, 10.0), series_seed(seed, 10 + k)));
        recipes.push_back(synth::to_json(clean[static_cast<std::size_t>(k)]));
    }
    g.conditioning["clean_recipes"] = recipes;
    return g;
}

Generated gen_variance(int option, std::size_t n, std::uint64_t seed) {
    Rng r(derive_seed(seed, "params"));
    const double step = r.uniform(0.5, 1.5);
    double steps[2] = {step, step};
    if (option == 1) steps[r.below(2)] *= r.uniform(3.0, 5.0);
    Generated g;
    for (int k = 0; k < 2; ++k) {
        Recipe rc;
        rc.components.push_back(synth::RandomWalk{steps[k], 0.0, r.uniform(-1.0, 1.0)});
        rc.length = n;
        rc.seed = series_seed(seed, k);
        g.series.push_back(synth::materialize(rc));
    }
    return g;
}

// --- causality ----------------------------------------------------------------------------

Generated gen_granger(int option, std::size_t n, std::uint64_t seed) {
    Rng r(derive_seed(seed, "params"));
    const double coupling = option == 0 ? r.uniform(0.8, 1.2) : 0.0;
    const auto lag = static_cast<std::size_t>(r.integer(1, 3));
    auto [x, y] = synth::gen_granger_pair(n, lag, coupling, series_seed(seed, 0));
    Generated g;
    if (r.bernoulli(0.5)) {
        g.series = {std::move(x), std::move(y)};
    } else {
        g.series = {std::move(y), std::move(x)};
    }
    return g;
}

// --- registry -----------------------------------------------------------------------------

Template make(std::string id, CategoryName cat, std::string sub, std::string description, std::string question,
              std::vector<std::string> options, int series_count, std::string hint, std::string notes,
              std::vector<std::string> concepts, Generator gen, double weight = 1.0) {
    Template t;
    t.meta.template_id = std::move(id);
    t.meta.category = Category{cat, std::move(sub)};
    t.meta.option_count = static_cast<int>(options.size());
    t.meta.series_count = series_count;
    t.meta.description = std::move(description);
    t.question = std::move(question);
    t.options = std::move(options);
    t.hint = std::move(hint);
    t.concept_notes = std::move(notes);
    t.concepts = std::move(concepts);
    t.generate = std::move(gen);
    t.weight = weight;
    return t;
}

const std::vector<Template>& registry() {
    using C = CategoryName;
    static const std::vector<Template> templates = [] {
        std::vector<Template> t;
        t.push_back(make("anomaly_types", C::anomaly_detection, "anomaly",
                         "Identify the two anomaly kinds injected into a periodic series.",
                         "The following time series has two types of anomalies appearing at different time points. "
                         "What are the likely types of these anomalies?",
                         {"A spike and a level shift", "A spike and a variance shift",
                          "A level shift and a pattern break", "A variance shift and a pattern break"},
                         1,
                         "Look at each unusual region separately. A spike affects a single point, a level shift moves "
                         "a whole stretch up or down, a variance shift widens the swings around the local mean, and a "
                         "pattern break replaces the regular shape with irregular noise.",
                         "Anomaly: an observation or stretch of observations that deviates from the normal behavior "
                         "of the series.",
                         {"anomaly detection", "level shift", "variance shift", "spike"}, gen_anomaly));
        t.push_back(make("granger_causality", C::causality_analysis, "granger",
                         "Decide whether one series Granger-causes the other.",
                         "Is there Granger causality between the two time series?", {"Yes", "No"}, 2,
                         "Check whether past values of one series help predict the future values of the other beyond "
                         "what its own past already explains. Look for movements in one series that are echoed in the "
                         "other a few steps later.",
                         "Granger causality: X Granger-causes Y if lagged values of X improve the prediction of Y.",
                         {"granger causality", "lagged dependence"}, gen_granger));
        t.push_back(make("mean_reversion", C::pattern_recognition, "random_processes",
                         "Distinguish a mean-reverting process from a random walk.",
                         "Does the following time series exhibit a mean reversion property?", {"Yes", "No"}, 1,
                         "After moving away from its typical level, does the series tend to come back, or does it "
                         "wander without returning?",
                         "Mean reversion: the tendency of a process to drift back toward a long-run average.",
                         {"mean reversion", "Ornstein-Uhlenbeck process", "random walk"}, gen_mean_reversion));
        t.push_back(make("mean_stability", C::pattern_recognition, "statistical_properties",
                         "Decide whether the mean level stays constant.",
                         "Is the mean stable over time in the given time series?", {"Yes", "No"}, 1,
                         "Compare the average level of different parts of the series. A sustained jump means the mean "
                         "is not stable.",
                         "Mean stability: the expected value of the series does not change over time.",
                         {"mean", "level shift", "stationarity"}, gen_mean_stability));
        t.push_back(make("random_walk", C::noise_understanding, "random_walk",
                         "Recognize a random walk among stationary noise processes.",
                         "Is the given time series likely to be a random walk process?", {"Yes", "No"}, 1,
                         "A random walk accumulates its shocks, so it wanders far from its starting point and does "
                         "not return to a fixed level.",
                         "Random walk: each value equals the previous value plus an independent random step.",
                         {"random walk", "unit root", "non-stationarity"}, gen_random_walk, 0.425));
        t.push_back(make("regime_count", C::pattern_recognition, "regime_switching",
                         "Count the distinct level regimes in a piecewise-constant series.",
                         "Based on the given time series, how many different regimes are there?",
                         {"One regime", "Two regimes", "Three regimes", "Four regimes"}, 1,
                         "Identify the stretches where the series fluctuates around a fixed level, then count how many "
                         "different levels occur.",
                         "Regime: a period during which the series follows one stable set of statistical properties.",
                         {"regime switching", "structural break"}, gen_regimes));
        t.push_back(make("shape_similarity", C::comparative_analysis, "shape",
                         "Decide whether two noisy series share the same underlying pattern.",
                         "Despite the noise, do the given two time series have similar patterns?", {"Yes", "No"}, 2,
                         "Mentally smooth out the noise in both series and compare the remaining shapes: direction, "
                         "periodicity and timing of peaks.",
                         "Shape similarity: two series follow the same underlying deterministic pattern.",
                         {"pattern similarity", "correlation"}, gen_shape));
        t.push_back(make("sine_amplitude_change", C::pattern_recognition, "cyclic",
                         "Describe how the amplitude of a sine pattern evolves.",
                         "The given time series has sine wave pattern. How does its amplitude change from the "
                         "beginning to the end?",
                         {"The amplitude increases", "The amplitude decreases", "The amplitude stays roughly constant"},
                         1,
                         "Compare the height of the oscillations at the start of the series with the height at the end.",
                         "Amplitude: half the distance between the peaks and troughs of a cycle.",
                         {"seasonality", "amplitude modulation"}, gen_amplitude));
        t.push_back(make("snr_comparison", C::noise_understanding, "signal_noise_ratio",
                         "Pick the noisier of two series sharing one clean pattern.",
                         "You are given two time series with the same underlying pattern but different noise level. "
                         "Which time series has higher magnitude of noise?",
                         {"Time series 1", "Time series 2"}, 2,
                         "The underlying pattern is the same, so compare how much each series jitters around it.",
                         "Signal-to-noise ratio: the power of the underlying signal relative to the power of the noise.",
                         {"signal-to-noise ratio", "noise level"}, gen_snr, 0.15));
        t.push_back(make("stationarity_after_cycle", C::pattern_recognition, "stationarity",
                         "Decide whether the series is stationary once its cycle is removed.",
                         "Is the given time series likely to be stationary after removing the cycle component?",
                         {"Yes", "No"}, 1,
                         "Ignore the repeating cycle and check whether the remaining level and spread stay the same "
                         "throughout the series.",
                         "Stationarity: the mean, variance and autocovariance of the series do not change over time.",
                         {"stationarity", "seasonal decomposition", "trend"}, gen_stationarity));
        t.push_back(make("trend_direction", C::pattern_recognition, "trend",
                         "Identify the sign of the linear trend.",
                         "What is the most likely direction of the linear trend coefficient of the given time series?",
                         {"Positive (upward trend)", "Negative (downward trend)", "Approximately zero (no trend)"}, 1,
                         "Compare the overall level at the beginning and at the end of the series, ignoring short "
                         "oscillations and noise.",
                         "Linear trend: the long-run slope of a straight line fitted to the series.",
                         {"trend", "linear regression"}, gen_trend));
        t.push_back(make("variance_comparison", C::comparative_analysis, "distributional",
                         "Compare the step variance of two random walks.",
                         "You are given two time series which are generated using a random walk. Are they likely to "
                         "have the same variance?",
                         {"Yes", "No"}, 2,
                         "Compare the typical size of the step-to-step changes in the two series rather than their "
                         "overall levels.",
                         "Variance: the expected squared deviation from the mean; for a random walk, of its increments.",
                         {"variance", "random walk", "distribution comparison"}, gen_variance));
        t.push_back(make("white_noise", C::noise_understanding, "white_noise",
                         "Recognize white noise among autocorrelated processes.",
                         "Is the given time series a white noise process?", {"Yes", "No"}, 1,
                         "White noise has no memory: neighboring values are unrelated, and the series keeps "
                         "fluctuating around a constant level with constant spread.",
                         "White noise: a sequence of uncorrelated random values with zero mean and constant variance.",
                         {"white noise", "autocorrelation"}, gen_white_noise, 0.425));
        std::sort(t.begin(), t.end(),
                  [](const Template& a, const Template& b) { return a.meta.template_id < b.meta.template_id; });
        return t;
    }();
    return templates;
}

const Template& find_template(const std::string& id) {
    for (const auto& t : registry()) {
        if (t.meta.template_id == id) return t;
    }
    throw UnknownTemplate(id);
}

std::string hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

std::vector<TimeSeries> wrap(const Template& t, Generated& g, int option, const char* role) {
    std::vector<TimeSeries> out;
    for (std::size_t k = 0; k < g.series.size(); ++k) {
        TimeSeries s = std::move(g.series[k]);
        json prov{{"op", "template"},
                  {"template_id", t.meta.template_id},
                  {"conditioned_on", option},
                  {"role", role},
                  {"series_index", k},
                  {"source", std::move(s.provenance)}};
        for (auto it = g.conditioning.begin(); it != g.conditioning.end(); ++it) prov[it.key()] = it.value();
        s.provenance = std::move(prov);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

std::vector<TemplateMeta> list_templates(std::optional<CategoryName> category) {
    std::vector<TemplateMeta> out;
    for (const auto& t : registry()) {
        if (!category || t.meta.category.name == *category) out.push_back(t.meta);
    }
    return out;
}

std::vector<TemplateMeta> list_templates(std::string_view category_name) {
    const auto cat = category_from_string(category_name);
    if (!cat) return {};
    return list_templates(*cat);
}

const TemplateMeta& template_meta(const std::string& template_id) { return find_template(template_id).meta; }

QuestionInstance instantiate(const std::string& template_id, std::optional<int> forced_correct, std::uint64_t seed,
                             std::size_t length) {
    const Template& t = find_template(template_id);
    if (forced_correct && (*forced_correct < 0 || *forced_correct >= t.meta.option_count))
        throw InvalidParameter("forced_correct", "out of range for template '" + template_id + "'");
    Rng r(derive_seed(seed, "option"));
    const int option = forced_correct ? *forced_correct : static_cast<int>(r.below(t.options.size()));

    Generated main = t.generate(option, length, derive_seed(seed, "main"));

    QuestionInstance q;
    q.id = template_id + "-" + hex(seed);
    q.category = t.meta.category;
    q.question = t.question + main.question_suffix;
    q.options = t.options;
    q.correct_index = option;
    q.series = wrap(t, main, option, "question");
    q.hint = t.hint;
    q.concept_notes = t.concept_notes;
    q.relevant_concepts = t.concepts;
    q.domain = "synthetic";

    const int example_option = static_cast<int>(r.below(t.options.size()));
    Generated example = t.generate(example_option, kExampleLength, derive_seed(seed, "example"));
    IclExample icl;
    icl.question = t.question + example.question_suffix;
    icl.answer = "[" + option_letter(static_cast<std::size_t>(example_option)) + "] " +
                 t.options[static_cast<std::size_t>(example_option)];
    icl.series = wrap(t, example, example_option, "example");
    q.icl_example = std::move(icl);
    return q;
}

std::map<CategoryName, std::size_t> default_counts() {
    return {{CategoryName::anomaly_detection, 129},
            {CategoryName::comparative_analysis, 113},
            {CategoryName::noise_understanding, 87},
            {CategoryName::pattern_recognition, 371},
            {CategoryName::causality_analysis, 63}};
}

std::map<CategoryName, std::size_t> default_counts(std::size_t total) {
    const auto ref = default_counts();
    std::size_t ref_total = 0;
    for (const auto& [c, n] : ref) ref_total += n;
    std::map<CategoryName, std::size_t> out;
    std::vector<std::pair<double, CategoryName>> remainders;
    std::size_t assigned = 0;
    for (const auto& [c, n] : ref) {
        const double exact = double(total) * double(n) / double(ref_total);
        out[c] = static_cast<std::size_t>(std::floor(exact));
        assigned += out[c];
        remainders.emplace_back(exact - std::floor(exact), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < total; ++k, ++assigned) out[remainders[k % remainders.size()].second] += 1;
    return out;
}

namespace {

// Splits `count` across templates in proportion to their weights (largest remainder).
std::vector<std::size_t> split_by_weight(const std::vector<const Template*>& ts, std::size_t count) {
    double total_weight = 0;
    for (auto* t : ts) total_weight += t->weight;
    std::vector<std::size_t> out(ts.size());
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        const double exact = double(count) * ts[k]->weight / total_weight;
        out[k] = static_cast<std::size_t>(std::floor(exact));
        assigned += out[k];
        rem.emplace_back(exact - std::floor(exact), k);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < count; ++k, ++assigned) out[rem[k % rem.size()].second] += 1;
    return out;
}

}  // namespace

Exam generate_exam(const std::map<CategoryName, std::size_t>& counts, std::uint64_t seed) {
    Exam exam;
    exam.metadata.seed = seed;
    std::size_t index = 0;
    for (auto cat : kAllCategories) {
        const auto it = counts.find(cat);
        if (it == counts.end() || it->second == 0) continue;
        std::vector<const Template*> ts;
        for (const auto& t : registry()) {
            if (t.meta.category.name == cat) ts.push_back(&t);
        }
        if (ts.empty()) throw InvalidParameter("counts", "no templates registered for " + to_string(cat));
        const auto per_template = split_by_weight(ts, it->second);
        for (std::size_t k = 0; k < ts.size(); ++k) {
            const Template& t = *ts[k];
            Rng order_rng(derive_seed(seed, "order:" + t.meta.template_id));
            std::vector<int> order(t.options.size());
            std::iota(order.begin(), order.end(), 0);
            order_rng.shuffle(order);
            for (std::size_t i = 0; i < per_template[k]; ++i) {
                const int option = order[i % order.size()];
                const std::uint64_t qseed = derive_seed(seed, index);
                QuestionInstance q = instantiate(t.meta.template_id, option, qseed);
                char buf[16];
                std::snprintf(buf, sizeof buf, "q%05zu", index);
                q.id = std::string(buf) + "-" + t.meta.template_id;
                exam.questions.push_back(std::move(q));
                ++index;
            }
        }
    }
    // Interleave categories deterministically so exam order carries no answer signal.
    Rng shuffle_rng(derive_seed(seed, "shuffle"));
    shuffle_rng.shuffle(exam.questions);
    return exam;
}

QuestionInstance sample_question(CategoryName category, std::uint64_t seed, const std::string& id) {
    std::vector<const Template*> ts;
    for (const auto& t : registry()) {
        if (t.meta.category.name == category) ts.push_back(&t);
    }
    if (ts.empty()) throw InvalidParameter("category", "no templates registered for " + to_string(category));
    Rng r(derive_seed(seed, "resample"));
    double total = 0;
    for (auto* t : ts) total += t->weight;
    double u = r.uniform() * total;
    const Template* chosen = ts.back();
    for (auto* t : ts) {
        if (u < t->weight) {
            chosen = t;
            break;
        }
        u -= t->weight;
    }
    QuestionInstance q = instantiate(chosen->meta.template_id, std::nullopt, derive_seed(seed, "question"));
    q.id = id;
    return q;
}

}  // namespace tsexam::templates
