#pragma once

// Brute-force reference implementations used as test oracles. They follow
// the textbook formulas directly (long double, explicit sums, normal
// equations) and share no code with the library.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "metaopt/series_stats.hpp"

namespace oracle {

long double mean(const std::vector<double>& x);
long double sample_std(const std::vector<double>& x);
/// R type 7: 1-based position 1 + (n - 1) p.
long double quantile7(std::vector<double> x, double p);
long double skewness(const std::vector<double>& x);
long double excess_kurtosis(const std::vector<double>& x);

/// sum_{t>k} (x_t - m)(x_{t-k} - m) / sum_t (x_t - m)^2
std::optional<long double> acf(const std::vector<double>& x, int lag);
/// Last coefficient of the order-k Yule-Walker system, solved by elimination.
std::optional<long double> pacf(const std::vector<double>& x, int lag);

/// |slope| of the least-squares line through (t, x_t), t = 1..n.
long double abs_ols_slope(const std::vector<double>& x);

/// ADF tau statistic with constant and trend, via normal equations.
std::optional<long double> adf_stat(const std::vector<double>& x, int lag_order);
long double mackinnon_ct_pvalue(long double stat);

struct Decomposition {
    long double trend, seasonal, residual;
};
/// Classical additive decomposition with a centered moving average.
std::optional<Decomposition> decomposition(const std::vector<double>& x, int period);

long double outlier_ratio(const std::vector<double>& x);
std::size_t peaks(const std::vector<double>& x);
std::size_t troughs(const std::vector<double>& x);

/// Every meta-feature of a complete (NA-free) series.
metaopt::stats::MetaFeatureVector meta_features(const std::vector<double>& x, int period);

/// Field-by-field comparison; returns "field: got vs expected" lines.
std::vector<std::string> compare(const metaopt::stats::MetaFeatureVector& got,
                                 const metaopt::stats::MetaFeatureVector& expected, double rel_tol);

long double expected_improvement(long double mean, long double sigma, long double best);

long double rmse(const std::vector<double>& a, const std::vector<double>& b);

/// Seeded series of mixed character (AR, random walk, seasonal, trend).
std::vector<double> suite_series(std::size_t index, std::size_t length, std::uint64_t seed);

}  // namespace oracle
