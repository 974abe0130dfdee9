#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace metaopt::stats {

/// One observation; std::nullopt is the NA marker.
using Observation = std::optional<double>;
/// A per-field value that may be unavailable (insufficient data, degenerate input).
using MaybeReal = std::optional<double>;
using LagMap = std::map<int, MaybeReal>;

inline constexpr std::array<int, 5> kDefaultLags{1, 3, 6, 12, 24};

struct MetaFeatureVector {
    std::size_t count = 0;
    std::size_t missing = 0;
    MaybeReal mean, std, min, q25, median, q75, max, range, iqr, variance;
    MaybeReal skewness, kurtosis, coef_of_variation, trend_strength;
    MaybeReal adf_stat, adf_pvalue, nonlinearity_proxy;
    MaybeReal trend_strength_decomp, seasonal_strength_decomp, residual_strength;
    LagMap acf;
    LagMap pacf;
    std::size_t num_peaks = 0;
    std::size_t num_troughs = 0;
    MaybeReal zero_ratio, outlier_ratio;

    bool operator==(const MetaFeatureVector&) const = default;
};

enum class TemporalDependence { inconclusive, weak, moderate, strong };
enum class Stationarity { inconclusive, stationary, non_stationary };
enum class Strength { none, mild, pronounced };
enum class NoiseLevel { inconclusive, low, medium, high };

struct MetaSummary {
    TemporalDependence temporal_dependence = TemporalDependence::inconclusive;
    Stationarity stationarity = Stationarity::inconclusive;
    Strength trend = Strength::none;
    Strength seasonality = Strength::none;
    NoiseLevel noise_level = NoiseLevel::inconclusive;
    std::vector<std::string> narrative;

    bool operator==(const MetaSummary&) const = default;
};

struct AdfResult {
    double stat = 0.0;
    double pvalue = 1.0;
    int lag_order = 0;
    std::size_t nobs = 0;  // rows in the regression
};

struct DecompositionStrengths {
    double trend = 0.0;
    double seasonal = 0.0;
    double residual = 0.0;
};

// Summarization cut-offs. Labels change at these values (lower bound inclusive).
inline constexpr double kModerateDependence = 0.3;
inline constexpr double kStrongDependence = 0.6;
inline constexpr double kMildStrength = 0.3;
inline constexpr double kPronouncedStrength = 0.6;
inline constexpr double kStationaryPValue = 0.05;
inline constexpr double kNoisyCv = 1.0;
inline constexpr double kNoisyResidual = 0.4;
inline constexpr double kNoisyOutliers = 0.05;

/// Linear-interpolation quantile of an ascending-sorted sample, p in [0, 1].
[[nodiscard]] double quantile_sorted(std::span<const double> sorted, double p);

/// Sample autocorrelation with a single global mean and full-sample
/// denominator. Lag 0 is 1; lags with fewer than lag + 1 observations are NA.
/// Throws ZeroVariance for a constant series.
[[nodiscard]] LagMap acf(std::span<const double> series, std::span<const int> lags);

/// Partial autocorrelation phi_kk via the Levinson-Durbin recursion over the
/// sample autocorrelations. A singular recursion step turns that lag and all
/// later lags NA.
[[nodiscard]] LagMap pacf(std::span<const double> series, std::span<const int> lags);

/// floor(12 (T/100)^(1/4)), capped so the constant+trend regression keeps
/// positive residual degrees of freedom.
[[nodiscard]] int default_adf_lag_order(std::size_t length);

/// Augmented Dickey-Fuller regression with constant and linear trend.
/// Throws SingularDesign or InsufficientLength.
[[nodiscard]] AdfResult adf_test(std::span<const double> series, int max_lag_order);

/// MacKinnon (1994) approximate p-value for the constant+trend ADF statistic.
[[nodiscard]] double adf_pvalue_ct(double stat);

/// Classical additive decomposition (centered moving average trend,
/// period-position seasonal means). Returns variance shares of each component.
[[nodiscard]] DecompositionStrengths decompose_strengths(std::span<const double> series,
                                                         int seasonal_period);

/// Fraction of observations strictly outside the Tukey fences.
[[nodiscard]] double outlier_ratio(std::span<const double> series);

/// Longest contiguous run of non-NA observations (earliest on ties).
[[nodiscard]] std::vector<double> longest_complete_run(std::span<const Observation> series);

[[nodiscard]] MetaFeatureVector extract_meta_features(std::span<const Observation> series,
                                                      int seasonal_period);
[[nodiscard]] MetaFeatureVector extract_meta_features(std::span<const double> series,
                                                      int seasonal_period);

[[nodiscard]] MetaSummary summarize(const MetaFeatureVector& vector);

[[nodiscard]] std::string to_string(TemporalDependence v);
[[nodiscard]] std::string to_string(Stationarity v);
[[nodiscard]] std::string to_string(Strength v);
[[nodiscard]] std::string to_string(NoiseLevel v);

void to_json(nlohmann::json& j, const MetaFeatureVector& v);
void from_json(const nlohmann::json& j, MetaFeatureVector& v);
void to_json(nlohmann::json& j, const MetaSummary& s);

}  // namespace metaopt::stats
