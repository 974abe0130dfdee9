#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "metaopt/series_stats.hpp"

namespace metaopt {

/// Multivariate series, one column per feature. NA observations are
/// std::nullopt. Every column has the same length.
struct SeriesDataset {
    std::vector<std::string> feature_names;
    std::vector<std::vector<stats::Observation>> values;  // values[feature][t]
    std::optional<std::vector<std::string>> timestamps;
    std::optional<double> sampling_period;  // seconds

    [[nodiscard]] std::size_t length() const noexcept { return values.empty() ? 0 : values.front().size(); }
    [[nodiscard]] std::size_t feature_index(const std::string& name) const;

    /// Throws DatasetFormat when a structural invariant is broken.
    void check() const;
};

/// CSV with a header row. A column named timestamp/time/date/datetime/"Date Time"
/// (any case), or a leading non-numeric column, is taken as the timestamp column.
/// Empty cells and NA/NaN/null/N/A/? are NA.
[[nodiscard]] SeriesDataset load_csv(const std::filesystem::path& path);
[[nodiscard]] SeriesDataset parse_csv(const std::string& text);

/// {"feature_names": [...], "values": [[...], ...], "timestamps": [...]?,
///  "sampling_period": seconds?}; null entries are NA.
[[nodiscard]] SeriesDataset dataset_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json dataset_to_json(const SeriesDataset& data);

/// Loads by extension: .json as dataset JSON, anything else as CSV.
[[nodiscard]] SeriesDataset load_dataset(const std::filesystem::path& path);

/// Writes a CSV readable by load_csv, values at 17 significant digits.
void write_csv(const SeriesDataset& data, const std::filesystem::path& path);

/// Seeded synthetic dataset: feature "target" follows the AR(2) process
/// x_t = 1.3 x_{t-1} - 0.6 x_{t-2} + e_t (quasi-cyclic) shifted and scaled to a
/// temperature-like range, plus an exogenous AR(1) feature "exog".
[[nodiscard]] SeriesDataset synthetic_ar2(std::size_t length, std::uint64_t seed);

}  // namespace metaopt
