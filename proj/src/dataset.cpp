#include "metaopt/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "metaopt/error.hpp"
#include "metaopt/random.hpp"

namespace metaopt {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    std::string out(s.substr(b, e - b));
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
    return out;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

bool is_na_token(const std::string& cell) {
    static const std::vector<std::string> tokens{"", "na", "nan", "null", "n/a", "?"};
    return std::find(tokens.begin(), tokens.end(), lower(cell)) != tokens.end();
}

std::optional<double> parse_number(const std::string& cell) {
    double value = 0.0;
    const char* first = cell.data();
    const char* last = first + cell.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
    return value;
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string current;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
            current.push_back(c);
        } else if (c == ',' && !quoted) {
            cells.push_back(trim(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    cells.push_back(trim(current));
    return cells;
}

bool is_timestamp_name(const std::string& name) {
    static const std::vector<std::string> names{"timestamp", "time", "date", "datetime", "date time", "ds"};
    return std::find(names.begin(), names.end(), lower(name)) != names.end();
}

// Sortable key for numeric, ISO-8601 and dd.mm.yyyy timestamps; nullopt if unknown.
std::optional<std::string> timestamp_key(const std::string& ts) {
    if (auto n = parse_number(ts)) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%030.9f", *n + 1e15);
        return std::string(buf);
    }
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    char sep = 0;
    if (std::sscanf(ts.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d, &sep, &h, &mi, &s) >= 3 ||
        std::sscanf(ts.c_str(), "%2d.%2d.%4d %2d:%2d:%2d", &d, &mo, &y, &h, &mi, &s) >= 3) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%04d%02d%02d%02d%02d%02d", y, mo, d, h, mi, s);
        return std::string(buf);
    }
    return std::nullopt;
}

}  // namespace

std::size_t SeriesDataset::feature_index(const std::string& name) const {
    const auto it = std::find(feature_names.begin(), feature_names.end(), name);
    if (it == feature_names.end()) {
        throw Error(ErrorCode::DatasetFormat, "dataset has no feature '" + name + "'");
    }
    return static_cast<std::size_t>(it - feature_names.begin());
}

void SeriesDataset::check() const {
    if (feature_names.empty()) throw Error(ErrorCode::DatasetFormat, "dataset has no features");
    if (feature_names.size() != values.size()) {
        throw Error(ErrorCode::DatasetFormat, "feature name count does not match column count");
    }
    const std::size_t t = values.front().size();
    if (t == 0) throw Error(ErrorCode::DatasetFormat, "dataset has no observations");
    for (const auto& col : values) {
        if (col.size() != t) throw Error(ErrorCode::DatasetFormat, "feature columns differ in length");
    }
    if (timestamps) {
        if (timestamps->size() != t) {
            throw Error(ErrorCode::DatasetFormat, "timestamp count does not match observation count");
        }
        std::optional<std::string> previous;
        for (const auto& ts : *timestamps) {
            const auto key = timestamp_key(ts);
            if (!key) {
                previous.reset();
                continue;
            }
            if (previous && !(*previous < *key)) {
                throw Error(ErrorCode::DatasetFormat, "timestamps are not strictly increasing at '" + ts + "'");
            }
            previous = key;
        }
    }
    if (sampling_period && !(*sampling_period > 0.0)) {
        throw Error(ErrorCode::DatasetFormat, "sampling period must be positive");
    }
}

SeriesDataset parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        rows.push_back(split_row(line));
    }
    if (rows.size() < 2) throw Error(ErrorCode::DatasetFormat, "CSV needs a header and at least one row");
    const auto& header = rows.front();
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != header.size()) {
            throw Error(ErrorCode::DatasetFormat, "CSV row " + std::to_string(r + 1) + " has " +
                                                      std::to_string(rows[r].size()) + " cells, expected " +
                                                      std::to_string(header.size()));
        }
    }

    std::optional<std::size_t> ts_col;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (is_timestamp_name(header[c])) {
            ts_col = c;
            break;
        }
    }
    if (!ts_col) {
        const bool first_non_numeric = std::any_of(rows.begin() + 1, rows.end(), [](const auto& row) {
            return !is_na_token(row[0]) && !parse_number(row[0]);
        });
        if (first_non_numeric && header.size() > 1) ts_col = 0;
    }

    SeriesDataset data;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (ts_col && c == *ts_col) continue;
        data.feature_names.push_back(header[c]);
        std::vector<stats::Observation> column;
        column.reserve(rows.size() - 1);
        for (std::size_t r = 1; r < rows.size(); ++r) {
            const auto& cell = rows[r][c];
            if (is_na_token(cell)) {
                column.push_back(std::nullopt);
            } else if (auto v = parse_number(cell)) {
                column.push_back(*v);
            } else {
                throw Error(ErrorCode::DatasetFormat, "non-numeric value '" + cell + "' in column '" +
                                                          header[c] + "'");
            }
        }
        data.values.push_back(std::move(column));
    }
    if (ts_col) {
        std::vector<std::string> ts;
        for (std::size_t r = 1; r < rows.size(); ++r) ts.push_back(rows[r][*ts_col]);
        data.timestamps = std::move(ts);
    }
    data.check();
    return data;
}

SeriesDataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_csv(buffer.str());
}

SeriesDataset dataset_from_json(const nlohmann::json& j) {
    SeriesDataset data;
    data.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    for (const auto& col : j.at("values")) {
        std::vector<stats::Observation> column;
        for (const auto& v : col) {
            column.push_back(v.is_null() ? stats::Observation{} : stats::Observation{v.get<double>()});
        }
        data.values.push_back(std::move(column));
    }
    if (j.contains("timestamps") && !j["timestamps"].is_null()) {
        std::vector<std::string> ts;
        for (const auto& v : j["timestamps"]) ts.push_back(v.is_string() ? v.get<std::string>() : v.dump());
        data.timestamps = std::move(ts);
    }
    if (j.contains("sampling_period") && !j["sampling_period"].is_null()) {
        data.sampling_period = j["sampling_period"].get<double>();
    }
    data.check();
    return data;
}

nlohmann::json dataset_to_json(const SeriesDataset& data) {
    nlohmann::json j;
    j["feature_names"] = data.feature_names;
    auto values = nlohmann::json::array();
    for (const auto& col : data.values) {
        auto column = nlohmann::json::array();
        for (const auto& v : col) column.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
        values.push_back(std::move(column));
    }
    j["values"] = std::move(values);
    j["timestamps"] = data.timestamps ? nlohmann::json(*data.timestamps) : nlohmann::json(nullptr);
    j["sampling_period"] = data.sampling_period ? nlohmann::json(*data.sampling_period) : nlohmann::json(nullptr);
    return j;
}

SeriesDataset load_dataset(const std::filesystem::path& path) {
    if (lower(path.extension().string()) == ".json") {
        std::ifstream in(path);
        if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
        return dataset_from_json(nlohmann::json::parse(in));
    }
    return load_csv(path);
}

void write_csv(const SeriesDataset& data, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    if (data.timestamps) out << "timestamp,";
    for (std::size_t f = 0; f < data.feature_names.size(); ++f) {
        out << (f ? "," : "") << data.feature_names[f];
    }
    out << '\n';
    char buf[64];
    for (std::size_t t = 0; t < data.length(); ++t) {
        if (data.timestamps) out << (*data.timestamps)[t] << ',';
        for (std::size_t f = 0; f < data.values.size(); ++f) {
            if (f) out << ',';
            if (const auto& v = data.values[f][t]) {
                std::snprintf(buf, sizeof buf, "%.17g", *v);
                out << buf;
            } else {
                out << "NA";
            }
        }
        out << '\n';
    }
    if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

SeriesDataset synthetic_ar2(std::size_t length, std::uint64_t seed) {
    constexpr std::size_t kBurnIn = 200;
    Rng rng(seed);
    double x1 = 0.0, x2 = 0.0, z = 0.0;
    SeriesDataset data;
    data.feature_names = {"target", "exog"};
    data.values.assign(2, {});
    data.values[0].reserve(length);
    data.values[1].reserve(length);
    for (std::size_t t = 0; t < length + kBurnIn; ++t) {
        const double x = 1.3 * x1 - 0.6 * x2 + rng.normal();
        z = 0.8 * z + 0.5 * rng.normal();
        x2 = x1;
        x1 = x;
        if (t >= kBurnIn) {
            data.values[0].push_back(10.0 + 2.0 * x);
            data.values[1].push_back(5.0 + 0.5 * x + z);
        }
    }
    std::vector<std::string> ts;
    ts.reserve(length);
    for (std::size_t t = 0; t < length; ++t) ts.push_back(std::to_string(t * 600));
    data.timestamps = std::move(ts);
    data.sampling_period = 600.0;
    return data;
}

}  // namespace metaopt
