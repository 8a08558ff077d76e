// Per-template checks that an instance's series actually supports its correct option.
#pragma once

#include <cstring>
#include <functional>
#include <map>
#include <set>
#include <string>

#include "oracles.hpp"
#include "tsexam/exam.hpp"
#include "tsexam/synth.hpp"

namespace oracle {

inline const std::vector<double>& values(const tsexam::QuestionInstance& q, std::size_t k = 0) {
    return q.series.at(k).values;
}

inline std::vector<double> ols_residuals(const Eigen::MatrixXd& X, const std::vector<double>& y,
                                         Eigen::VectorXd* beta_out) {
    Eigen::VectorXd Y = Eigen::Map<const Eigen::VectorXd>(y.data(), Eigen::Index(y.size()));
    const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(Y);
    if (beta_out) *beta_out = beta;
    const Eigen::VectorXd r = Y - X * beta;
    return {r.data(), r.data() + r.size()};
}

inline std::vector<double> linear_residuals(const std::vector<double>& y) {
    Eigen::MatrixXd X(y.size(), 2);
    for (std::size_t t = 0; t < y.size(); ++t) X.row(Eigen::Index(t)) << 1.0, double(t);
    return ols_residuals(X, y, nullptr);
}

inline double quarter_sd(const std::vector<double>& v, bool last) {
    const std::size_t q = v.size() / 4;
    const auto begin = last ? v.end() - std::ptrdiff_t(q) : v.begin();
    return sd(std::vector<double>(begin, begin + std::ptrdiff_t(q)));
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

// Jumps larger than 7 robust sigmas of the increments.
inline std::size_t level_jumps(const std::vector<double>& v) {
    std::vector<double> abs_diff;
    for (std::size_t t = 1; t < v.size(); ++t) abs_diff.push_back(std::abs(v[t] - v[t - 1]));
    const double sigma = median(abs_diff) / (0.6745 * std::sqrt(2.0));
    std::size_t jumps = 0;
    for (double d : abs_diff) jumps += d > 7.0 * sigma;
    return jumps;
}

inline double max_split_contrast(const std::vector<double>& v, std::size_t min_segment) {
    double best = 0;
    for (std::size_t k = min_segment; k + min_segment <= v.size(); ++k) {
        const std::vector<double> left(v.begin(), v.begin() + std::ptrdiff_t(k));
        const std::vector<double> right(v.begin() + std::ptrdiff_t(k), v.end());
        const double pooled = std::sqrt((variance(left) * double(left.size()) +
                                         variance(right) * double(right.size())) /
                                        double(v.size()));
        best = std::max(best, std::abs(mean(left) - mean(right)) / pooled);
    }
    return best;
}

inline std::multiset<std::string> anomaly_kinds(const tsexam::json& provenance) {
    std::multiset<std::string> kinds;
    const tsexam::json* node = &provenance.at("source");
    while (node->is_object()) {
        if (node->value("op", "") == "anomaly") kinds.insert(node->at("label").at("kind").get<std::string>());
        if (!node->contains("input")) break;
        node = &node->at("input");
    }
    return kinds;
}

/// Empty when the instance passes its template's check, else what failed.
using TemplateOracle = std::function<std::string(const tsexam::QuestionInstance&, int option)>;

inline std::string fail_if(bool bad, const std::string& what) { return bad ? what : std::string(); }

inline const std::map<std::string, TemplateOracle>& template_oracles() {
    using tsexam::QuestionInstance;
    static const std::map<std::string, TemplateOracle> table{
        {"trend_direction",
         [](const QuestionInstance& q, int o) {
             const auto& v = values(q);
             const double rise = ols_slope(v) * double(v.size() - 1);
             const double s = sd(linear_residuals(v));
             if (o == 0) return fail_if(!(rise > s), "rise not above residual sd");
             if (o == 1) return fail_if(!(rise < -s), "fall not below residual sd");
             return fail_if(!(std::abs(rise) < s), "flat series rises by more than residual sd");
         }},
        {"sine_amplitude_change",
         [](const QuestionInstance& q, int o) {
             const double ratio = quarter_sd(values(q), true) / quarter_sd(values(q), false);
             if (o == 0) return fail_if(!(ratio > 1.5), "amplitude did not grow");
             if (o == 1) return fail_if(!(ratio < 1.0 / 1.5), "amplitude did not shrink");
             return fail_if(!(ratio > 1.0 / 1.5 && ratio < 1.5), "amplitude changed");
         }},
        {"stationarity_after_cycle",
         [](const QuestionInstance& q, int o) {
             const auto& v = values(q);
             const double period = q.series[0].provenance.at("cycle_period").get<double>();
             Eigen::MatrixXd X(v.size(), 4);
             for (std::size_t t = 0; t < v.size(); ++t) {
                 const double w = 2.0 * M_PI * double(t) / period;
                 X.row(Eigen::Index(t)) << 1.0, double(t), std::sin(w), std::cos(w);
             }
             Eigen::VectorXd beta;
             const auto resid = ols_residuals(X, v, &beta);
             const double rise = std::abs(beta(1)) * double(v.size()) / sd(resid);
             if (o == 0) return fail_if(!(rise < 3.0), "trend left after removing the cycle");
             return fail_if(!(rise > 5.0), "no trend after removing the cycle");
         }},
        {"regime_count",
         [](const QuestionInstance& q, int o) {
             return fail_if(level_jumps(values(q)) != std::size_t(o), "level jump count differs from option");
         }},
        {"mean_stability",
         [](const QuestionInstance& q, int o) {
             const double c = max_split_contrast(values(q), 16);
             return o == 0 ? fail_if(!(c < 3.0), "mean shift in stable series")
                           : fail_if(!(c > 3.0), "no mean shift");
         }},
        {"mean_reversion",
         [](const QuestionInstance& q, int o) {
             const double r1 = autocorr(values(q), 1);
             return o == 0 ? fail_if(!(r1 < 0.75), "too persistent") : fail_if(!(r1 > 0.75), "not persistent");
         }},
        {"random_walk",
         [](const QuestionInstance& q, int o) {
             const double r1 = autocorr(values(q), 1);
             return o == 0 ? fail_if(!(r1 > 0.75), "not persistent") : fail_if(!(r1 < 0.75), "too persistent");
         }},
        {"white_noise",
         [](const QuestionInstance& q, int o) {
             const double r1 = std::abs(autocorr(values(q), 1));
             return o == 0 ? fail_if(!(r1 < 0.3), "lag-1 memory in white noise")
                           : fail_if(!(r1 > 0.45), "no lag-1 memory");
         }},
        {"snr_comparison",
         [](const QuestionInstance& q, int o) {
             namespace synth = tsexam::synth;
             const auto clean = synth::materialize(synth::recipe_from_json(q.series[0].provenance.at("clean_recipe")));
             double resid_var[2];
             for (int k = 0; k < 2; ++k) {
                 std::vector<double> r(clean.values.size());
                 for (std::size_t t = 0; t < r.size(); ++t) r[t] = values(q, std::size_t(k))[t] - clean.values[t];
                 resid_var[k] = variance(r);
             }
             return fail_if(!(resid_var[o] > resid_var[1 - o]), "the marked series is not the noisier one");
         }},
        {"anomaly_types",
         [](const QuestionInstance& q, int o) {
             namespace synth = tsexam::synth;
             static const std::vector<std::multiset<std::string>> pairs{{"spike", "level_shift"},
                                                                        {"spike", "variance_shift"},
                                                                        {"level_shift", "pattern_break"},
                                                                        {"variance_shift", "pattern_break"}};
             const auto& prov = q.series[0].provenance;
             if (anomaly_kinds(prov) != pairs[std::size_t(o)]) return std::string("injected kinds differ");
             const auto base = synth::materialize(synth::recipe_from_json(prov.at("base_recipe")));
             std::vector<bool> inside(base.values.size(), false);
             const tsexam::json* node = &prov.at("source");
             while (node->value("op", "") == "anomaly") {
                 const auto label = synth::anomaly_from_json(node->at("label"));
                 bool changed = false;
                 for (std::size_t t = label.start; t <= label.end; ++t) {
                     inside[t] = true;
                     changed |= values(q)[t] != base.values[t];
                 }
                 if (!changed) return std::string("an anomaly window is unchanged");
                 node = &node->at("input");
             }
             for (std::size_t t = 0; t < inside.size(); ++t) {
                 if (!inside[t] && std::memcmp(&values(q)[t], &base.values[t], sizeof(double)) != 0)
                     return "value at " + std::to_string(t) + " changed outside every anomaly window";
             }
             return std::string();
         }},
        {"shape_similarity",
         [](const QuestionInstance& q, int o) {
             const double r = pearson(values(q, 0), values(q, 1));
             return o == 0 ? fail_if(!(r > 0.5), "matching shapes uncorrelated")
                           : fail_if(!(r < 0.5), "different shapes correlated");
         }},
        {"variance_comparison",
         [](const QuestionInstance& q, int o) {
             const double a = sd(diff(values(q, 0)));
             const double b = sd(diff(values(q, 1)));
             const double ratio = std::max(a, b) / std::min(a, b);
             return o == 0 ? fail_if(!(ratio < 1.6), "spreads differ") : fail_if(!(ratio > 2.0), "spreads similar");
         }},
        {"granger_causality",
         [](const QuestionInstance& q, int o) {
             const double p01 = granger_p(values(q, 0), values(q, 1), 3);
             const double p10 = granger_p(values(q, 1), values(q, 0), 3);
             if (o == 0) return fail_if(!(std::min(p01, p10) < 0.01), "no Granger effect found");
             return fail_if(!(p01 > 0.001 && p10 > 0.001), "spurious Granger effect");
         }},
    };
    return table;
}

}  // namespace oracle
