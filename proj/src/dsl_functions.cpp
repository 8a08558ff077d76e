#include <algorithm>
#include <cmath>
#include <numeric>

#include "dsl_library.hpp"

namespace tsexam::dsl::detail {
namespace {

using Series = std::vector<double>;
using Args = std::vector<Value>;

constexpr Type S = Type::series;
constexpr Type N = Type::scalar;
constexpr Type B = Type::boolean;
constexpr Type T = Type::string;

const Series& series(const Args& a, std::size_t i) { return std::get<Series>(a[i]); }
double scalar(const Args& a, std::size_t i) { return std::get<double>(a[i]); }

const Series& nonempty(const Args& a, std::size_t i, const char* fn) {
    const Series& s = series(a, i);
    if (s.empty()) throw EvalError(std::string(fn) + ": empty series");
    return s;
}

std::size_t count_arg(const Args& a, std::size_t i, const char* fn, std::size_t min_value) {
    const double v = scalar(a, i);
    if (!(v >= double(min_value)) || v != std::floor(v) || v > 1e9)
        throw EvalError(std::string(fn) + ": expected an integer >= " + std::to_string(min_value));
    return static_cast<std::size_t>(v);
}

double mean_of(const Series& s) { return std::accumulate(s.begin(), s.end(), 0.0) / double(s.size()); }

double variance_of(const Series& s) {
    const double m = mean_of(s);
    double acc = 0.0;
    for (double v : s) acc += (v - m) * (v - m);
    return acc / double(s.size());
}

double quantile_of(Series s, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw EvalError("quantile: p must lie in [0,1]");
    std::sort(s.begin(), s.end());
    const double pos = p * double(s.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, s.size() - 1);
    return s[lo] + (pos - double(lo)) * (s[hi] - s[lo]);
}

int sign_of(double v) { return (v > 0) - (v < 0); }

// Lengths of maximal runs of equal sign.
std::vector<std::size_t> sign_runs(const Series& s) {
    std::vector<std::size_t> runs;
    if (s.empty()) return runs;
    std::size_t current = 1;
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (sign_of(s[i]) == sign_of(s[i - 1])) {
            ++current;
        } else {
            runs.push_back(current);
            current = 1;
        }
    }
    runs.push_back(current);
    return runs;
}

Series rolling(const Series& s, std::size_t w, bool want_std, const char* fn) {
    if (w > s.size()) throw EvalError(std::string(fn) + ": window longer than series");
    Series out;
    for (std::size_t i = 0; i + w <= s.size(); ++i) {
        Series part(s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i + w));
        out.push_back(want_std ? std::sqrt(variance_of(part)) : mean_of(part));
    }
    return out;
}

Series map_series(const Series& s, double (*f)(double)) {
    Series out(s.size());
    std::transform(s.begin(), s.end(), out.begin(), f);
    return out;
}

std::vector<Function> build() {
    std::vector<Function> fs;
    auto add = [&fs](std::string name, std::string doc, std::vector<Overload> overloads) {
        fs.push_back({std::move(name), std::move(doc), std::move(overloads)});
    };

    add("mean", "mean(series) -> scalar", {{{S}, N, [](const Args& a) -> Value { return mean_of(nonempty(a, 0, "mean")); }}});
    add("std", "std(series) -> scalar: population standard deviation",
        {{{S}, N, [](const Args& a) -> Value { return std::sqrt(variance_of(nonempty(a, 0, "std"))); }}});
    add("variance", "variance(series) -> scalar: population variance",
        {{{S}, N, [](const Args& a) -> Value { return variance_of(nonempty(a, 0, "variance")); }}});
    add("min", "min(series) -> scalar | min(scalar, scalar) -> scalar",
        {{{S}, N, [](const Args& a) -> Value { const auto& s = nonempty(a, 0, "min"); return *std::min_element(s.begin(), s.end()); }},
         {{N, N}, N, [](const Args& a) -> Value { return std::min(scalar(a, 0), scalar(a, 1)); }}});
    add("max", "max(series) -> scalar | max(scalar, scalar) -> scalar",
        {{{S}, N, [](const Args& a) -> Value { const auto& s = nonempty(a, 0, "max"); return *std::max_element(s.begin(), s.end()); }},
         {{N, N}, N, [](const Args& a) -> Value { return std::max(scalar(a, 0), scalar(a, 1)); }}});
    add("sum", "sum(series) -> scalar",
        {{{S}, N, [](const Args& a) -> Value { const auto& s = series(a, 0); return std::accumulate(s.begin(), s.end(), 0.0); }}});
    add("len", "len(series) -> scalar", {{{S}, N, [](const Args& a) -> Value { return double(series(a, 0).size()); }}});
    add("first", "first(series) -> scalar", {{{S}, N, [](const Args& a) -> Value { return nonempty(a, 0, "first").front(); }}});
    add("last", "last(series) -> scalar", {{{S}, N, [](const Args& a) -> Value { return nonempty(a, 0, "last").back(); }}});
    add("median", "median(series) -> scalar",
        {{{S}, N, [](const Args& a) -> Value { return quantile_of(nonempty(a, 0, "median"), 0.5); }}});
    add("quantile", "quantile(series, p) -> scalar: linear interpolation, p in [0,1]",
        {{{S, N}, N, [](const Args& a) -> Value { return quantile_of(nonempty(a, 0, "quantile"), scalar(a, 1)); }}});
    add("range", "range(series) -> scalar: max - min",
        {{{S}, N, [](const Args& a) -> Value {
              const auto& s = nonempty(a, 0, "range");
              const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
              return *hi - *lo;
          }}});
    add("diff", "diff(series) -> series: first differences",
        {{{S}, S, [](const Args& a) -> Value {
              const auto& s = series(a, 0);
              Series out;
              for (std::size_t i = 1; i < s.size(); ++i) out.push_back(s[i] - s[i - 1]);
              return out;
          }}});
    add("returns", "returns(series) -> series: relative changes (s[t] - s[t-1]) / s[t-1]",
        {{{S}, S, [](const Args& a) -> Value {
              const auto& s = series(a, 0);
              Series out;
              for (std::size_t i = 1; i < s.size(); ++i) out.push_back((s[i] - s[i - 1]) / s[i - 1]);
              return out;
          }}});
    add("pct_change", "pct_change(series) -> scalar: (last - first) / |first|",
        {{{S}, N, [](const Args& a) -> Value {
              const auto& s = nonempty(a, 0, "pct_change");
              return (s.back() - s.front()) / std::abs(s.front());
          }}});
    add("abs", "abs(scalar) -> scalar | abs(series) -> series",
        {{{N}, N, [](const Args& a) -> Value { return std::abs(scalar(a, 0)); }},
         {{S}, S, [](const Args& a) -> Value { return map_series(series(a, 0), [](double v) { return std::abs(v); }); }}});
    add("sqrt", "sqrt(scalar) -> scalar", {{{N}, N, [](const Args& a) -> Value { return std::sqrt(scalar(a, 0)); }}});
    add("log", "log(scalar) -> scalar: natural logarithm",
        {{{N}, N, [](const Args& a) -> Value { return std::log(scalar(a, 0)); }}});
    add("exp", "exp(scalar) -> scalar", {{{N}, N, [](const Args& a) -> Value { return std::exp(scalar(a, 0)); }}});
    add("floor", "floor(scalar) -> scalar", {{{N}, N, [](const Args& a) -> Value { return std::floor(scalar(a, 0)); }}});
    add("round", "round(scalar) -> scalar: half away from zero",
        {{{N}, N, [](const Args& a) -> Value { return std::round(scalar(a, 0)); }}});
    add("clip", "clip(scalar, lo, hi) -> scalar | clip(series, lo, hi) -> series",
        {{{N, N, N}, N, [](const Args& a) -> Value {
              if (scalar(a, 1) > scalar(a, 2)) throw EvalError("clip: lo > hi");
              return std::clamp(scalar(a, 0), scalar(a, 1), scalar(a, 2));
          }},
         {{S, N, N}, S, [](const Args& a) -> Value {
              const double lo = scalar(a, 1), hi = scalar(a, 2);
              if (lo > hi) throw EvalError("clip: lo > hi");
              Series out = series(a, 0);
              for (auto& v : out) v = std::clamp(v, lo, hi);
              return out;
          }}});
    add("rolling_mean", "rolling_mean(series, window) -> series",
        {{{S, N}, S, [](const Args& a) -> Value {
              return rolling(series(a, 0), count_arg(a, 1, "rolling_mean", 1), false, "rolling_mean");
          }}});
    add("rolling_std", "rolling_std(series, window) -> series: population std per window",
        {{{S, N}, S, [](const Args& a) -> Value {
              return rolling(series(a, 0), count_arg(a, 1, "rolling_std", 1), true, "rolling_std");
          }}});
    add("ols_slope", "ols_slope(series) -> scalar: least-squares slope against step index",
        {{{S}, N, [](const Args& a) -> Value {
              const auto& s = series(a, 0);
              if (s.size() < 2) throw EvalError("ols_slope: need at least 2 points");
              const double n = double(s.size());
              const double tbar = (n - 1) / 2.0;
              const double ybar = mean_of(s);
              double sxy = 0, sxx = 0;
              for (std::size_t i = 0; i < s.size(); ++i) {
                  sxy += (double(i) - tbar) * (s[i] - ybar);
                  sxx += (double(i) - tbar) * (double(i) - tbar);
              }
              return sxy / sxx;
          }}});
    add("autocorr", "autocorr(series, lag) -> scalar: sample autocorrelation",
        {{{S, N}, N, [](const Args& a) -> Value {
              const auto& s = series(a, 0);
              const std::size_t lag = count_arg(a, 1, "autocorr", 1);
              if (lag >= s.size()) throw EvalError("autocorr: lag must be shorter than the series");
              const double m = mean_of(s);
              double num = 0, den = 0;
              for (std::size_t i = 0; i < s.size(); ++i) den += (s[i] - m) * (s[i] - m);
              for (std::size_t i = 0; i + lag < s.size(); ++i) num += (s[i] - m) * (s[i + lag] - m);
              return num / den;
          }}});
    add("corr", "corr(series, series) -> scalar: Pearson correlation of equal-length series",
        {{{S, S}, N, [](const Args& a) -> Value {
              const auto& x = series(a, 0);
              const auto& y = series(a, 1);
              if (x.size() != y.size() || x.size() < 2) throw EvalError("corr: series must share a length >= 2");
              const double mx = mean_of(x), my = mean_of(y);
              double sxy = 0, sxx = 0, syy = 0;
              for (std::size_t i = 0; i < x.size(); ++i) {
                  sxy += (x[i] - mx) * (y[i] - my);
                  sxx += (x[i] - mx) * (x[i] - mx);
                  syy += (y[i] - my) * (y[i] - my);
              }
              return sxy / std::sqrt(sxx * syy);
          }}});
    add("count_above", "count_above(series, threshold) -> scalar: values strictly above",
        {{{S, N}, N, [](const Args& a) -> Value {
              const double t = scalar(a, 1);
              const auto& s = series(a, 0);
              return double(std::count_if(s.begin(), s.end(), [t](double v) { return v > t; }));
          }}});
    add("count_below", "count_below(series, threshold) -> scalar: values strictly below",
        {{{S, N}, N, [](const Args& a) -> Value {
              const double t = scalar(a, 1);
              const auto& s = series(a, 0);
              return double(std::count_if(s.begin(), s.end(), [t](double v) { return v < t; }));
          }}});
    add("count_positive", "count_positive(series) -> scalar",
        {{{S}, N, [](const Args& a) -> Value {
              const auto& s = series(a, 0);
              return double(std::count_if(s.begin(), s.end(), [](double v) { return v > 0; }));
          }}});
    add("count_negative", "count_negative(series) -> scalar",
        {{{S}, N, [](const Args& a) -> Value {
              const auto& s = series(a, 0);
              return double(std::count_if(s.begin(), s.end(), [](double v) { return v < 0; }));
          }}});
    add("max_streak", "max_streak(series) -> scalar: longest run of values sharing a sign",
        {{{S}, N, [](const Args& a) -> Value {
              const auto runs = sign_runs(nonempty(a, 0, "max_streak"));
              return double(*std::max_element(runs.begin(), runs.end()));
          }}});
    add("mean_streak", "mean_streak(series) -> scalar: mean length of same-sign runs",
        {{{S}, N, [](const Args& a) -> Value {
              const auto runs = sign_runs(nonempty(a, 0, "mean_streak"));
              return double(std::accumulate(runs.begin(), runs.end(), std::size_t{0})) / double(runs.size());
          }}});
    add("slice", "slice(series, begin, end) -> series: elements [begin, end)",
        {{{S, N, N}, S, [](const Args& a) -> Value {
              const auto& s = series(a, 0);
              const std::size_t b = count_arg(a, 1, "slice", 0), e = count_arg(a, 2, "slice", 0);
              if (b > e || e > s.size()) throw EvalError("slice: bounds out of range");
              return Series(s.begin() + static_cast<std::ptrdiff_t>(b), s.begin() + static_cast<std::ptrdiff_t>(e));
          }}});
    add("head", "head(series, n) -> series: first n elements",
        {{{S, N}, S, [](const Args& a) -> Value {
              const auto& s = series(a, 0);
              const std::size_t n = std::min(count_arg(a, 1, "head", 0), s.size());
              return Series(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n));
          }}});
    add("tail", "tail(series, n) -> series: last n elements",
        {{{S, N}, S, [](const Args& a) -> Value {
              const auto& s = series(a, 0);
              const std::size_t n = std::min(count_arg(a, 1, "tail", 0), s.size());
              return Series(s.end() - static_cast<std::ptrdiff_t>(n), s.end());
          }}});
    add("rsi", "rsi(series, period) -> scalar: relative strength index over the last period changes, 0-100",
        {{{S, N}, N, [](const Args& a) -> Value {
              const auto& s = series(a, 0);
              const std::size_t period = count_arg(a, 1, "rsi", 1);
              if (period >= s.size()) throw EvalError("rsi: period must be shorter than the series");
              double gain = 0, loss = 0;
              for (std::size_t i = s.size() - period; i < s.size(); ++i) {
                  const double d = s[i] - s[i - 1];
                  if (d > 0) gain += d; else loss -= d;
              }
              if (loss == 0) return gain == 0 ? 50.0 : 100.0;
              return 100.0 - 100.0 / (1.0 + gain / loss);
          }}});
    add("select", "select(condition, a, b) -> a if condition else b (a and b share a type)",
        {{{B, N, N}, N, [](const Args& a) -> Value { return std::get<bool>(a[0]) ? a[1] : a[2]; }},
         {{B, T, T}, T, [](const Args& a) -> Value { return std::get<bool>(a[0]) ? a[1] : a[2]; }},
         {{B, S, S}, S, [](const Args& a) -> Value { return std::get<bool>(a[0]) ? a[1] : a[2]; }},
         {{B, B, B}, B, [](const Args& a) -> Value { return std::get<bool>(a[0]) ? a[1] : a[2]; }}});

    std::sort(fs.begin(), fs.end(), [](const Function& x, const Function& y) { return x.name < y.name; });
    return fs;
}

bool accepts(Type param, Type arg) { return arg == Type::any || param == arg; }

}  // namespace

const std::vector<Function>& functions() {
    static const std::vector<Function> fs = build();
    return fs;
}

const Function* find_function(std::string_view name) {
    for (const auto& f : functions()) {
        if (f.name == name) return &f;
    }
    return nullptr;
}

std::optional<Type> call_type(const Function& f, const std::vector<Type>& args) {
    std::optional<Type> result;
    for (const auto& o : f.overloads) {
        if (o.params.size() != args.size()) continue;
        bool ok = true;
        for (std::size_t i = 0; i < args.size() && ok; ++i) ok = accepts(o.params[i], args[i]);
        if (!ok) continue;
        if (!result) {
            result = o.result;
        } else if (*result != o.result) {
            result = Type::any;
        }
    }
    return result;
}

Value call(const Function& f, const std::vector<Value>& args) {
    for (const auto& o : f.overloads) {
        if (o.params.size() != args.size()) continue;
        bool ok = true;
        for (std::size_t i = 0; i < args.size() && ok; ++i) ok = o.params[i] == type_of(args[i]);
        if (ok) return o.impl(args);
    }
    std::string types;
    for (const auto& a : args) types += std::string(types.empty() ? "" : ", ") + std::string(type_name(type_of(a)));
    throw EvalError(f.name + ": no overload for (" + types + ")");
}

bool all_finite(const Value& v) {
    if (const auto* d = std::get_if<double>(&v)) return std::isfinite(*d);
    if (const auto* s = std::get_if<std::vector<double>>(&v))
        return std::all_of(s->begin(), s->end(), [](double x) { return std::isfinite(x); });
    return true;
}

}  // namespace tsexam::dsl::detail

namespace tsexam::dsl {

std::vector<std::string> function_names() {
    std::vector<std::string> out;
    for (const auto& f : detail::functions()) out.push_back(f.name);
    return out;
}

std::vector<std::string> function_signatures() {
    std::vector<std::string> out;
    for (const auto& f : detail::functions()) out.push_back(f.doc);
    return out;
}

}  // namespace tsexam::dsl
