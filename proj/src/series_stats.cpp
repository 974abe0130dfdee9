#include "metaopt/series_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "metaopt/error.hpp"

namespace metaopt::stats {

namespace {

double mean_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_variance(std::span<const double> v) {
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return acc / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Autocorrelations rho_1..rho_max_lag; index 0 holds rho_0 = 1.
std::vector<double> autocorrelations(std::span<const double> x, int max_lag) {
    if (x.empty()) throw Error(ErrorCode::EmptySeries, "autocorrelation of an empty series");
    const double m = mean_of(x);
    double denom = 0.0;
    for (double v : x) denom += (v - m) * (v - m);
    if (denom == 0.0) {
        throw Error(ErrorCode::ZeroVariance, "autocorrelation of a constant series");
    }
    std::vector<double> rho(static_cast<std::size_t>(max_lag) + 1, 0.0);
    rho[0] = 1.0;
    const std::size_t n = x.size();
    for (int k = 1; k <= max_lag; ++k) {
        double num = 0.0;
        for (std::size_t t = static_cast<std::size_t>(k); t < n; ++t) {
            num += (x[t] - m) * (x[t - static_cast<std::size_t>(k)] - m);
        }
        rho[static_cast<std::size_t>(k)] = num / denom;
    }
    return rho;
}

int max_requested(std::span<const int> lags) {
    int out = 0;
    for (int lag : lags) out = std::max(out, lag);
    return out;
}

}  // namespace

double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw Error(ErrorCode::EmptySeries, "quantile of an empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

LagMap acf(std::span<const double> series, std::span<const int> lags) {
    const int available = static_cast<int>(series.size()) - 1;
    const int max_lag = std::min(max_requested(lags), std::max(available, 0));
    const auto rho = autocorrelations(series, max_lag);
    LagMap out;
    for (int lag : lags) {
        if (lag < 0 || lag > available) {
            out[lag] = std::nullopt;
        } else {
            out[lag] = rho[static_cast<std::size_t>(lag)];
        }
    }
    return out;
}

LagMap pacf(std::span<const double> series, std::span<const int> lags) {
    const int available = static_cast<int>(series.size()) - 1;
    const int max_lag = std::min(max_requested(lags), std::max(available, 0));
    const auto rho = autocorrelations(series, max_lag);

    // phi_kk for k = 1..max_lag, NA after the first singular step.
    std::vector<MaybeReal> diag(static_cast<std::size_t>(max_lag) + 1);
    std::vector<double> phi;  // phi_{k,1..k}
    for (int k = 1; k <= max_lag; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        if (k == 1) {
            phi = {rho[1]};
            diag[1] = rho[1];
            continue;
        }
        double num = rho[ku];
        double den = 1.0;
        for (std::size_t j = 1; j < ku; ++j) {
            num -= phi[j - 1] * rho[ku - j];
            den -= phi[j - 1] * rho[j];
        }
        if (std::abs(den) < 1e-12 || !std::isfinite(den)) break;
        const double phi_kk = num / den;
        std::vector<double> next(ku);
        for (std::size_t j = 1; j < ku; ++j) {
            next[j - 1] = phi[j - 1] - phi_kk * phi[ku - j - 1];
        }
        next[ku - 1] = phi_kk;
        phi = std::move(next);
        diag[ku] = phi_kk;
    }

    LagMap out;
    for (int lag : lags) {
        if (lag == 0) {
            out[lag] = 1.0;
        } else if (lag < 0 || lag > max_lag) {
            out[lag] = std::nullopt;
        } else {
            out[lag] = diag[static_cast<std::size_t>(lag)];
        }
    }
    return out;
}

int default_adf_lag_order(std::size_t length) {
    const auto schwert =
        static_cast<int>(std::floor(12.0 * std::pow(static_cast<double>(length) / 100.0, 0.25)));
    const int cap = static_cast<int>(length / 2) - 3;
    return std::max(0, std::min(schwert, cap));
}

double adf_pvalue_ct(double stat) {
    // Constant+trend, one I(1) series: bounds, switch point and polynomial
    // coefficients (ascending powers) for the normal-CDF approximation.
    constexpr double kMaxStat = 0.7;
    constexpr double kMinStat = -16.18;
    constexpr double kStarStat = -2.89;
    constexpr std::array<double, 3> kSmall{3.2512, 16.047 * 1e-1, 4.9588 * 1e-2};
    constexpr std::array<double, 4> kLarge{2.5261, 6.1654 * 1e-1, -3.7956 * 1e-1, -6.0285 * 1e-2};
    if (stat > kMaxStat) return 1.0;
    if (stat < kMinStat) return 0.0;
    auto horner = [stat](auto const& coef) {
        double acc = 0.0;
        for (auto it = coef.rbegin(); it != coef.rend(); ++it) acc = acc * stat + *it;
        return acc;
    };
    return normal_cdf(stat <= kStarStat ? horner(kSmall) : horner(kLarge));
}

AdfResult adf_test(std::span<const double> series, int max_lag_order) {
    if (max_lag_order < 0) {
        throw Error(ErrorCode::InsufficientLength, "negative ADF lag order");
    }
    const auto p = static_cast<std::size_t>(max_lag_order);
    const std::size_t length = series.size();
    if (length < p + 4) {
        throw Error(ErrorCode::InsufficientLength,
                    "ADF needs at least lag order + 4 observations, got " +
                        std::to_string(length));
    }
    const std::size_t rows = length - 1 - p;
    const std::size_t cols = 3 + p;
    if (rows <= cols) {
        throw Error(ErrorCode::InsufficientLength, "ADF regression has no residual degrees of freedom");
    }

    Eigen::MatrixXd design(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    Eigen::VectorXd response(static_cast<Eigen::Index>(rows));
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t t = r + p + 1;  // index into series of the differenced target
        const auto ri = static_cast<Eigen::Index>(r);
        response(ri) = series[t] - series[t - 1];
        design(ri, 0) = 1.0;
        design(ri, 1) = static_cast<double>(r + 1);
        design(ri, 2) = series[t - 1];
        for (std::size_t i = 1; i <= p; ++i) {
            design(ri, static_cast<Eigen::Index>(2 + i)) = series[t - i] - series[t - i - 1];
        }
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < static_cast<Eigen::Index>(cols)) {
        throw Error(ErrorCode::SingularDesign, "ADF design matrix is rank-deficient");
    }
    const Eigen::VectorXd beta = qr.solve(response);
    const Eigen::VectorXd resid = response - design * beta;
    const double rss = resid.squaredNorm();
    const double sigma2 = rss / static_cast<double>(rows - cols);

    // (X'X)^{-1}_{gg} = || R^{-T} P^T e_g ||^2
    const Eigen::Index k = static_cast<Eigen::Index>(cols);
    Eigen::VectorXd unit = Eigen::VectorXd::Zero(k);
    unit(2) = 1.0;
    const Eigen::VectorXd permuted = qr.colsPermutation().transpose() * unit;
    const auto r_upper = qr.matrixR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
    const Eigen::VectorXd w = r_upper.transpose().solve(permuted);
    const double se = std::sqrt(sigma2 * w.squaredNorm());
    if (!(se > 0.0) || !std::isfinite(se)) {
        throw Error(ErrorCode::SingularDesign, "ADF regression has zero residual variance");
    }

    AdfResult out;
    out.stat = beta(2) / se;
    out.pvalue = adf_pvalue_ct(out.stat);
    out.lag_order = max_lag_order;
    out.nobs = rows;
    return out;
}

DecompositionStrengths decompose_strengths(std::span<const double> series, int seasonal_period) {
    if (seasonal_period < 2) {
        throw Error(ErrorCode::NonPositivePeriod, "seasonal period must be at least 2");
    }
    const auto m = static_cast<std::size_t>(seasonal_period);
    const std::size_t n = series.size();
    if (n < 2 * m) {
        throw Error(ErrorCode::InsufficientLength,
                    "decomposition needs two full periods, got " + std::to_string(n));
    }

    const std::size_t half = m / 2;
    const std::size_t first = half;
    const std::size_t last = n - 1 - half;  // inclusive
    std::vector<double> trend(n, 0.0);
    for (std::size_t t = first; t <= last; ++t) {
        double acc = 0.0;
        if (m % 2 == 1) {
            for (std::size_t i = t - half; i <= t + half; ++i) acc += series[i];
        } else {
            acc = 0.5 * (series[t - half] + series[t + half]);
            for (std::size_t i = t - half + 1; i < t + half; ++i) acc += series[i];
        }
        trend[t] = acc / static_cast<double>(m);
    }

    std::vector<double> position_sum(m, 0.0);
    std::vector<std::size_t> position_count(m, 0);
    for (std::size_t t = first; t <= last; ++t) {
        position_sum[t % m] += series[t] - trend[t];
        ++position_count[t % m];
    }
    std::vector<double> seasonal_pattern(m);
    for (std::size_t j = 0; j < m; ++j) {
        seasonal_pattern[j] = position_sum[j] / static_cast<double>(position_count[j]);
    }
    const double pattern_mean = mean_of(seasonal_pattern);
    for (double& s : seasonal_pattern) s -= pattern_mean;

    const std::size_t defined = last - first + 1;
    std::vector<double> xs(defined), ts(defined), ss(defined), rs(defined);
    for (std::size_t t = first; t <= last; ++t) {
        const std::size_t i = t - first;
        xs[i] = series[t];
        ts[i] = trend[t];
        ss[i] = seasonal_pattern[t % m];
        rs[i] = series[t] - trend[t] - ss[i];
    }
    const double var_x = population_variance(xs);
    if (var_x == 0.0) {
        throw Error(ErrorCode::ZeroVariance, "decomposition of a constant series");
    }
    return {population_variance(ts) / var_x, population_variance(ss) / var_x,
            population_variance(rs) / var_x};
}

double outlier_ratio(std::span<const double> series) {
    if (series.empty()) throw Error(ErrorCode::EmptySeries, "outlier ratio of an empty series");
    std::vector<double> sorted(series.begin(), series.end());
    std::sort(sorted.begin(), sorted.end());
    const double q1 = quantile_sorted(sorted, 0.25);
    const double q3 = quantile_sorted(sorted, 0.75);
    const double iqr = q3 - q1;
    const double low = q1 - 1.5 * iqr;
    const double high = q3 + 1.5 * iqr;
    const auto outside = std::count_if(series.begin(), series.end(),
                                       [&](double x) { return x < low || x > high; });
    return static_cast<double>(outside) / static_cast<double>(series.size());
}

std::vector<double> longest_complete_run(std::span<const Observation> series) {
    std::size_t best_start = 0, best_len = 0, start = 0, len = 0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (series[i].has_value()) {
            if (len == 0) start = i;
            ++len;
            if (len > best_len) {
                best_len = len;
                best_start = start;
            }
        } else {
            len = 0;
        }
    }
    std::vector<double> out;
    out.reserve(best_len);
    for (std::size_t i = best_start; i < best_start + best_len; ++i) out.push_back(*series[i]);
    return out;
}

MetaFeatureVector extract_meta_features(std::span<const Observation> series, int seasonal_period) {
    if (seasonal_period < 2) {
        throw Error(ErrorCode::NonPositivePeriod, "seasonal period must be at least 2");
    }
    std::vector<double> values;
    values.reserve(series.size());
    for (const auto& obs : series) {
        if (obs) values.push_back(*obs);
    }
    if (values.empty()) throw Error(ErrorCode::EmptySeries, "every observation is NA");

    MetaFeatureVector v;
    const std::size_t n = values.size();
    v.count = n;
    v.missing = series.size() - n;

    // Distributional statistics over every retained observation.
    const double mean = mean_of(values);
    v.mean = mean;
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    v.min = sorted.front();
    v.max = sorted.back();
    v.q25 = quantile_sorted(sorted, 0.25);
    v.median = quantile_sorted(sorted, 0.5);
    v.q75 = quantile_sorted(sorted, 0.75);
    v.range = *v.max - *v.min;
    v.iqr = *v.q75 - *v.q25;
    if (n >= 2) {
        const double s = sample_std(values);
        v.std = s;
        v.variance = s * s;
        if (mean != 0.0) v.coef_of_variation = s / std::abs(mean);
    }
    if (n >= 3) {
        double m2 = 0.0, m3 = 0.0, m4 = 0.0;
        for (double x : values) {
            const double d = x - mean;
            m2 += d * d;
            m3 += d * d * d;
            m4 += d * d * d * d;
        }
        m2 /= static_cast<double>(n);
        m3 /= static_cast<double>(n);
        m4 /= static_cast<double>(n);
        if (m2 == 0.0) {
            v.skewness = 0.0;
            v.kurtosis = 0.0;
        } else {
            v.skewness = m3 / std::pow(m2, 1.5);
            v.kurtosis = m4 / (m2 * m2) - 3.0;
        }
    }
    const auto zeros = std::count(values.begin(), values.end(), 0.0);
    v.zero_ratio = static_cast<double>(zeros) / static_cast<double>(n);
    v.outlier_ratio = outlier_ratio(values);

    // Temporal statistics over the longest contiguous non-NA run.
    const std::vector<double> run = longest_complete_run(series);
    const std::size_t len = run.size();
    if (len >= 2) {
        double t_mean = (static_cast<double>(len) + 1.0) / 2.0;
        double x_mean = mean_of(run);
        double sxy = 0.0, sxx = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            const double dt = static_cast<double>(i + 1) - t_mean;
            sxy += dt * (run[i] - x_mean);
            sxx += dt * dt;
        }
        v.trend_strength = std::abs(sxy / sxx);
    }
    if (len >= 3) {
        std::vector<double> diffs(len - 1);
        for (std::size_t i = 1; i < len; ++i) diffs[i - 1] = run[i] - run[i - 1];
        v.nonlinearity_proxy = sample_std(diffs);
        for (std::size_t t = 1; t + 1 < len; ++t) {
            if (run[t - 1] < run[t] && run[t] > run[t + 1]) ++v.num_peaks;
            if (run[t - 1] > run[t] && run[t] < run[t + 1]) ++v.num_troughs;
        }
    }
    try {
        v.acf = acf(run, kDefaultLags);
        v.pacf = pacf(run, kDefaultLags);
    } catch (const Error&) {
        for (int lag : kDefaultLags) {
            v.acf[lag] = std::nullopt;
            v.pacf[lag] = std::nullopt;
        }
    }
    try {
        const auto adf = adf_test(run, default_adf_lag_order(len));
        v.adf_stat = adf.stat;
        v.adf_pvalue = adf.pvalue;
    } catch (const Error&) {
    }
    try {
        const auto d = decompose_strengths(run, seasonal_period);
        v.trend_strength_decomp = d.trend;
        v.seasonal_strength_decomp = d.seasonal;
        v.residual_strength = d.residual;
    } catch (const Error&) {
    }
    return v;
}

MetaFeatureVector extract_meta_features(std::span<const double> series, int seasonal_period) {
    std::vector<Observation> obs(series.begin(), series.end());
    return extract_meta_features(std::span<const Observation>(obs), seasonal_period);
}

namespace {

Strength strength_label(double share) {
    if (share >= kPronouncedStrength) return Strength::pronounced;
    if (share >= kMildStrength) return Strength::mild;
    return Strength::none;
}

}  // namespace

MetaSummary summarize(const MetaFeatureVector& vector) {
    MetaSummary s;

    double abs_sum = 0.0;
    int available = 0;
    for (const auto& [lag, value] : vector.acf) {
        if (lag > 0 && value) {
            abs_sum += std::abs(*value);
            ++available;
        }
    }
    if (available > 0) {
        const double mean_abs = abs_sum / available;
        if (mean_abs >= kStrongDependence) {
            s.temporal_dependence = TemporalDependence::strong;
        } else if (mean_abs >= kModerateDependence) {
            s.temporal_dependence = TemporalDependence::moderate;
        } else {
            s.temporal_dependence = TemporalDependence::weak;
        }
        s.narrative.push_back("Temporal dependence across the measured lags is " +
                              to_string(s.temporal_dependence) + ".");
    }

    if (vector.adf_pvalue) {
        s.stationarity = *vector.adf_pvalue < kStationaryPValue ? Stationarity::stationary
                                                                 : Stationarity::non_stationary;
        s.narrative.push_back(s.stationarity == Stationarity::stationary
                                  ? "The unit-root test rejects a unit root: the series is stationary."
                                  : "The unit-root test does not reject a unit root: the series is non-stationary.");
    }

    if (vector.trend_strength_decomp) {
        s.trend = strength_label(*vector.trend_strength_decomp);
        s.narrative.push_back("The trend component is " + to_string(s.trend) + ".");
    }
    if (vector.seasonal_strength_decomp) {
        s.seasonality = strength_label(*vector.seasonal_strength_decomp);
        s.narrative.push_back("Seasonality at the configured period is " + to_string(s.seasonality) + ".");
    }

    int votes = 0;
    int voters = 0;
    auto vote = [&](const MaybeReal& value, double threshold) {
        if (!value) return;
        ++voters;
        if (*value > threshold) ++votes;
    };
    vote(vector.coef_of_variation, kNoisyCv);
    vote(vector.residual_strength, kNoisyResidual);
    vote(vector.outlier_ratio, kNoisyOutliers);
    if (voters > 0) {
        if (votes == 0) {
            s.noise_level = NoiseLevel::low;
        } else if (2 * votes > voters) {
            s.noise_level = NoiseLevel::high;
        } else {
            s.noise_level = NoiseLevel::medium;
        }
        s.narrative.push_back("The effective noise level is " + to_string(s.noise_level) + ".");
    }
    return s;
}

std::string to_string(TemporalDependence v) {
    switch (v) {
        case TemporalDependence::weak: return "weak";
        case TemporalDependence::moderate: return "moderate";
        case TemporalDependence::strong: return "strong";
        case TemporalDependence::inconclusive: break;
    }
    return "inconclusive";
}

std::string to_string(Stationarity v) {
    switch (v) {
        case Stationarity::stationary: return "stationary";
        case Stationarity::non_stationary: return "non-stationary";
        case Stationarity::inconclusive: break;
    }
    return "inconclusive";
}

std::string to_string(Strength v) {
    switch (v) {
        case Strength::mild: return "mild";
        case Strength::pronounced: return "pronounced";
        case Strength::none: break;
    }
    return "none";
}

std::string to_string(NoiseLevel v) {
    switch (v) {
        case NoiseLevel::low: return "low";
        case NoiseLevel::medium: return "medium";
        case NoiseLevel::high: return "high";
        case NoiseLevel::inconclusive: break;
    }
    return "inconclusive";
}

namespace {

nlohmann::json maybe(const MaybeReal& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

MaybeReal read_maybe(const nlohmann::json& j, const char* key) {
    const auto& field = j.at(key);
    if (field.is_null()) return std::nullopt;
    return field.get<double>();
}

nlohmann::json lag_map_json(const LagMap& m) {
    auto out = nlohmann::json::object();
    for (const auto& [lag, value] : m) out[std::to_string(lag)] = maybe(value);
    return out;
}

LagMap read_lag_map(const nlohmann::json& j) {
    LagMap m;
    for (const auto& [key, value] : j.items()) {
        m[std::stoi(key)] = value.is_null() ? MaybeReal{} : MaybeReal{value.get<double>()};
    }
    return m;
}

}  // namespace

void to_json(nlohmann::json& j, const MetaFeatureVector& v) {
    j = nlohmann::json::object();
    j["count"] = v.count;
    j["missing"] = v.missing;
    j["mean"] = maybe(v.mean);
    j["std"] = maybe(v.std);
    j["min"] = maybe(v.min);
    j["q25"] = maybe(v.q25);
    j["median"] = maybe(v.median);
    j["q75"] = maybe(v.q75);
    j["max"] = maybe(v.max);
    j["range"] = maybe(v.range);
    j["iqr"] = maybe(v.iqr);
    j["variance"] = maybe(v.variance);
    j["skewness"] = maybe(v.skewness);
    j["kurtosis"] = maybe(v.kurtosis);
    j["coef_of_variation"] = maybe(v.coef_of_variation);
    j["trend_strength"] = maybe(v.trend_strength);
    j["adf_stat"] = maybe(v.adf_stat);
    j["adf_pvalue"] = maybe(v.adf_pvalue);
    j["nonlinearity_proxy"] = maybe(v.nonlinearity_proxy);
    j["trend_strength_decomp"] = maybe(v.trend_strength_decomp);
    j["seasonal_strength_decomp"] = maybe(v.seasonal_strength_decomp);
    j["residual_strength"] = maybe(v.residual_strength);
    j["acf"] = lag_map_json(v.acf);
    j["pacf"] = lag_map_json(v.pacf);
    j["num_peaks"] = v.num_peaks;
    j["num_troughs"] = v.num_troughs;
    j["zero_ratio"] = maybe(v.zero_ratio);
    j["outlier_ratio"] = maybe(v.outlier_ratio);
}

void from_json(const nlohmann::json& j, MetaFeatureVector& v) {
    v.count = j.at("count").get<std::size_t>();
    v.missing = j.at("missing").get<std::size_t>();
    v.mean = read_maybe(j, "mean");
    v.std = read_maybe(j, "std");
    v.min = read_maybe(j, "min");
    v.q25 = read_maybe(j, "q25");
    v.median = read_maybe(j, "median");
    v.q75 = read_maybe(j, "q75");
    v.max = read_maybe(j, "max");
    v.range = read_maybe(j, "range");
    v.iqr = read_maybe(j, "iqr");
    v.variance = read_maybe(j, "variance");
    v.skewness = read_maybe(j, "skewness");
    v.kurtosis = read_maybe(j, "kurtosis");
    v.coef_of_variation = read_maybe(j, "coef_of_variation");
    v.trend_strength = read_maybe(j, "trend_strength");
    v.adf_stat = read_maybe(j, "adf_stat");
    v.adf_pvalue = read_maybe(j, "adf_pvalue");
    v.nonlinearity_proxy = read_maybe(j, "nonlinearity_proxy");
    v.trend_strength_decomp = read_maybe(j, "trend_strength_decomp");
    v.seasonal_strength_decomp = read_maybe(j, "seasonal_strength_decomp");
    v.residual_strength = read_maybe(j, "residual_strength");
    v.acf = read_lag_map(j.at("acf"));
    v.pacf = read_lag_map(j.at("pacf"));
    v.num_peaks = j.at("num_peaks").get<std::size_t>();
    v.num_troughs = j.at("num_troughs").get<std::size_t>();
    v.zero_ratio = read_maybe(j, "zero_ratio");
    v.outlier_ratio = read_maybe(j, "outlier_ratio");
}

void to_json(nlohmann::json& j, const MetaSummary& s) {
    j = nlohmann::json{{"temporal_dependence", to_string(s.temporal_dependence)},
                       {"stationarity", to_string(s.stationarity)},
                       {"trend", to_string(s.trend)},
                       {"seasonality", to_string(s.seasonality)},
                       {"noise_level", to_string(s.noise_level)},
                       {"narrative", s.narrative}};
}

}  // namespace metaopt::stats
