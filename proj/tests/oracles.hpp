// Independent reference computations used by the tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>

namespace oracle {

inline double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

inline double variance(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s / double(v.size());
}

inline double sd(const std::vector<double>& v) { return std::sqrt(variance(v)); }

/// Least-squares slope against 0..n-1 via the normal equations.
inline double ols_slope(const std::vector<double>& y) {
    const std::size_t n = y.size();
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd Y(n);
    for (std::size_t i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = double(i);
        Y(i) = y[i];
    }
    const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(Y);
    return beta(1);
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double mx = mean(x), my = mean(y);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

inline double autocorr(const std::vector<double>& v, std::size_t lag) {
    const double m = mean(v);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < v.size(); ++i) den += (v[i] - m) * (v[i] - m);
    for (std::size_t i = lag; i < v.size(); ++i) num += (v[i] - m) * (v[i - lag] - m);
    return num / den;
}

inline std::vector<double> diff(const std::vector<double>& v) {
    std::vector<double> d;
    for (std::size_t i = 1; i < v.size(); ++i) d.push_back(v[i] - v[i - 1]);
    return d;
}

/// Ljung-Box p-value over lags 1..h.
inline double ljung_box_p(const std::vector<double>& v, std::size_t h) {
    const double n = double(v.size());
    double q = 0;
    for (std::size_t k = 1; k <= h; ++k) {
        const double r = autocorr(v, k);
        q += r * r / (n - double(k));
    }
    q *= n * (n + 2);
    return boost::math::cdf(boost::math::complement(boost::math::chi_squared(double(h)), q));
}

/// p-value of the F-test that `lags` lagged values of x improve an autoregression of y of the same order.
inline double granger_p(const std::vector<double>& x, const std::vector<double>& y, std::size_t lags) {
    const std::size_t n = y.size() - lags;
    Eigen::MatrixXd R(n, 1 + lags), U(n, 1 + 2 * lags);
    Eigen::VectorXd Y(n);
    for (std::size_t t = 0; t < n; ++t) {
        const std::size_t i = t + lags;
        Y(t) = y[i];
        R(t, 0) = U(t, 0) = 1.0;
        for (std::size_t k = 1; k <= lags; ++k) {
            R(t, k) = U(t, k) = y[i - k];
            U(t, lags + k) = x[i - k];
        }
    }
    auto rss = [&](const Eigen::MatrixXd& X) {
        const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(Y);
        return (Y - X * beta).squaredNorm();
    };
    const double rr = rss(R), ru = rss(U);
    const double df1 = double(lags), df2 = double(n) - double(U.cols());
    const double f = ((rr - ru) / df1) / (ru / df2);
    return boost::math::cdf(boost::math::complement(boost::math::fisher_f(df1, df2), f));
}

/// Full dynamic-programming edit distance over bytes.
inline std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
    for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
    for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i)
        for (std::size_t j = 1; j <= b.size(); ++j)
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
    return d[a.size()][b.size()];
}

}  // namespace oracle
