#include "metaopt/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "metaopt/error.hpp"

namespace metaopt::space {

ParamSpec ParamSpec::integer(std::string name, std::int64_t low, std::int64_t high) {
    ParamSpec p;
    p.name = std::move(name);
    p.kind = ParamKind::integer_range;
    p.low = static_cast<double>(low);
    p.high = static_cast<double>(high);
    return p;
}

ParamSpec ParamSpec::real(std::string name, double low, double high, Scale scale) {
    ParamSpec p;
    p.name = std::move(name);
    p.kind = ParamKind::real_range;
    p.low = low;
    p.high = high;
    p.scale = scale;
    return p;
}

ParamSpec ParamSpec::categorical(std::string name, std::vector<ParamValue> choices) {
    ParamSpec p;
    p.name = std::move(name);
    p.kind = ParamKind::categorical;
    p.choices = std::move(choices);
    return p;
}

bool value_equals(const ParamValue& a, const ParamValue& b) { return a == b; }

std::string to_string(const ParamValue& v) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    if (const auto* s = std::get_if<std::string>(&v)) return *s;
    std::ostringstream os;
    os.precision(6);
    os << std::get<double>(v);
    return os.str();
}

std::string to_string(ParamKind kind) {
    switch (kind) {
        case ParamKind::integer_range: return "integer-range";
        case ParamKind::real_range: return "real-range";
        case ParamKind::categorical: return "categorical";
    }
    return "?";
}

namespace {

void check_spec(const ParamSpec& p) {
    auto fail = [&](const std::string& why) {
        throw Error(ErrorCode::InvalidSpace, "parameter '" + p.name + "': " + why);
    };
    if (p.name.empty()) fail("empty name");
    if (p.kind == ParamKind::categorical) {
        if (p.choices.empty()) fail("categorical choices must be non-empty");
        for (std::size_t i = 0; i < p.choices.size(); ++i) {
            for (std::size_t j = i + 1; j < p.choices.size(); ++j) {
                if (p.choices[i] == p.choices[j]) fail("duplicate choice " + to_string(p.choices[i]));
            }
        }
        return;
    }
    if (!std::isfinite(p.low) || !std::isfinite(p.high)) fail("bounds must be finite");
    if (p.low > p.high) fail("low exceeds high");
    if (p.kind == ParamKind::integer_range &&
        (std::floor(p.low) != p.low || std::floor(p.high) != p.high)) {
        fail("integer bounds must be integral");
    }
    if (p.scale == Scale::log && p.low <= 0.0) fail("log scale requires low > 0");
}

}  // namespace

SearchSpace::SearchSpace(std::vector<ParamSpec> params) : params_(std::move(params)) {
    if (params_.empty()) throw Error(ErrorCode::InvalidSpace, "search space is empty");
    std::set<std::string> names;
    for (const auto& p : params_) {
        check_spec(p);
        if (!names.insert(p.name).second) {
            throw Error(ErrorCode::InvalidSpace, "duplicate parameter name '" + p.name + "'");
        }
    }
}

const ParamSpec* SearchSpace::find(const std::string& name) const noexcept {
    for (const auto& p : params_) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

const ParamSpec& SearchSpace::at(const std::string& name) const {
    if (const auto* p = find(name)) return *p;
    throw Error(ErrorCode::InvalidConfig, "unknown parameter '" + name + "'");
}

const ParamValue& HyperparamConfig::at(const std::string& name) const {
    const auto it = assignments.find(name);
    if (it == assignments.end()) {
        throw Error(ErrorCode::InvalidConfig, "configuration has no value for '" + name + "'");
    }
    return it->second;
}

double HyperparamConfig::number(const std::string& name) const {
    const auto& v = at(name);
    if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
    if (const auto* d = std::get_if<double>(&v)) return *d;
    throw Error(ErrorCode::InvalidConfig, "'" + name + "' is not numeric");
}

std::int64_t HyperparamConfig::integer(const std::string& name) const {
    const auto& v = at(name);
    if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
    throw Error(ErrorCode::InvalidConfig, "'" + name + "' is not an integer");
}

const std::string& HyperparamConfig::label(const std::string& name) const {
    const auto& v = at(name);
    if (const auto* s = std::get_if<std::string>(&v)) return *s;
    throw Error(ErrorCode::InvalidConfig, "'" + name + "' is not a label");
}

std::string ValidationVerdict::describe() const {
    std::string out;
    for (const auto& v : violations) {
        if (!out.empty()) out += "; ";
        out += v.param + ": " + v.reason;
    }
    return out;
}

ValidationVerdict validate_config(const SearchSpace& space, const HyperparamConfig& config) {
    ValidationVerdict verdict;
    auto add = [&](const std::string& param, std::string reason) {
        verdict.violations.push_back({param, std::move(reason)});
    };
    for (const auto& [name, value] : config.assignments) {
        if (!space.find(name)) add(name, "unknown parameter");
    }
    for (const auto& p : space.params()) {
        const auto it = config.assignments.find(p.name);
        if (it == config.assignments.end()) {
            add(p.name, "missing parameter");
            continue;
        }
        const ParamValue& value = it->second;
        if (p.kind == ParamKind::categorical) {
            const bool found = std::any_of(p.choices.begin(), p.choices.end(),
                                           [&](const ParamValue& c) { return c == value; });
            if (!found) add(p.name, "value " + to_string(value) + " is not among the allowed choices");
            continue;
        }
        double x = 0.0;
        if (const auto* i = std::get_if<std::int64_t>(&value)) {
            x = static_cast<double>(*i);
        } else if (const auto* d = std::get_if<double>(&value)) {
            if (p.kind == ParamKind::integer_range) {
                add(p.name, "expected an integer, got " + to_string(value));
                continue;
            }
            x = *d;
        } else {
            add(p.name, "expected a number, got string \"" + std::get<std::string>(value) + "\"");
            continue;
        }
        if (!std::isfinite(x)) {
            add(p.name, "value is not finite");
            continue;
        }
        if (x < p.low) {
            std::string reason = (x < 0.0 && p.low >= 0.0) ? "negative value " : "value ";
            add(p.name, reason + to_string(value) + " is below the minimum " +
                            to_string(p.kind == ParamKind::integer_range
                                          ? ParamValue{static_cast<std::int64_t>(p.low)}
                                          : ParamValue{p.low}));
        } else if (x > p.high) {
            add(p.name, "value " + to_string(value) + " is above the maximum " +
                            to_string(p.kind == ParamKind::integer_range
                                          ? ParamValue{static_cast<std::int64_t>(p.high)}
                                          : ParamValue{p.high}));
        }
    }
    return verdict;
}

HyperparamConfig sample_uniform(const SearchSpace& space, Rng& rng) {
    HyperparamConfig config;
    for (const auto& p : space.params()) {
        switch (p.kind) {
            case ParamKind::integer_range:
                config.assignments[p.name] = rng.uniform_int(static_cast<std::int64_t>(p.low),
                                                             static_cast<std::int64_t>(p.high));
                break;
            case ParamKind::real_range:
                if (p.scale == Scale::log) {
                    const double v = std::exp(rng.uniform(std::log(p.low), std::log(p.high)));
                    config.assignments[p.name] = std::clamp(v, p.low, p.high);
                } else {
                    config.assignments[p.name] = rng.uniform(p.low, p.high);
                }
                break;
            case ParamKind::categorical: {
                const auto idx = rng.uniform_int(0, static_cast<std::int64_t>(p.choices.size()) - 1);
                config.assignments[p.name] = p.choices[static_cast<std::size_t>(idx)];
                break;
            }
        }
    }
    return config;
}

HyperparamConfig sample_uniform(const SearchSpace& space, std::uint64_t seed) {
    Rng rng(seed);
    return sample_uniform(space, rng);
}

SearchSpace apply_trust_region(const SearchSpace& space, const TrustRegion& region) {
    const auto verdict = validate_config(space, region.center);
    if (!verdict.ok()) {
        throw Error(ErrorCode::InvalidConfig, "trust-region center is invalid: " + verdict.describe());
    }
    const double r = region.numeric_radius_fraction;
    if (!(r > 0.0 && r <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "trust-region radius must lie in (0, 1]");
    }
    std::vector<ParamSpec> shrunk;
    for (const auto& p : space.params()) {
        ParamSpec q = p;
        if (p.kind == ParamKind::categorical) {
            if (region.categorical_policy == CategoricalPolicy::center_only) {
                q.choices = {region.center.at(p.name)};
            }
        } else {
            const double c = region.center.number(p.name);
            double lo = 0.0, hi = 0.0;
            if (p.scale == Scale::log) {
                const double width = std::log(p.high) - std::log(p.low);
                lo = std::exp(std::log(c) - r * width);
                hi = std::exp(std::log(c) + r * width);
            } else {
                const double width = p.high - p.low;
                lo = c - r * width;
                hi = c + r * width;
            }
            if (p.kind == ParamKind::integer_range) {
                lo = std::ceil(lo);
                hi = std::floor(hi);
            }
            q.low = std::max(p.low, lo);
            q.high = std::min(p.high, hi);
            if (q.low > q.high) {
                throw Error(ErrorCode::DegenerateRegion, "trust region on '" + p.name + "' is empty");
            }
        }
        shrunk.push_back(std::move(q));
    }
    return SearchSpace(std::move(shrunk));
}

SearchSpace default_bilstm_space() {
    return SearchSpace({
        ParamSpec::integer("lag", 3, 96),
        ParamSpec::integer("hidden_size", 8, 256),
        ParamSpec::integer("num_layers", 1, 6),
        ParamSpec::real("dropout", 0.0, 0.6),
        ParamSpec::real("lr", 1e-5, 1e-2, Scale::log),
        ParamSpec::categorical("batch_size", {std::int64_t{16}, std::int64_t{32}, std::int64_t{64},
                                              std::int64_t{128}, std::int64_t{256}}),
        ParamSpec::integer("epochs", 5, 200),
        ParamSpec::categorical("optimizer", {std::string("Adam"), std::string("AdamW"),
                                             std::string("Adamax"), std::string("RMSprop"),
                                             std::string("SGD")}),
    });
}

nlohmann::json value_to_json(const ParamValue& v) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
    if (const auto* d = std::get_if<double>(&v)) return *d;
    return std::get<std::string>(v);
}

ParamValue value_from_json(const nlohmann::json& j) {
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_number_float()) return j.get<double>();
    if (j.is_string()) return j.get<std::string>();
    throw Error(ErrorCode::InvalidConfig, "unsupported parameter value " + j.dump());
}

void to_json(nlohmann::json& j, const ParamSpec& p) {
    j = nlohmann::json::object();
    j["name"] = p.name;
    j["kind"] = to_string(p.kind);
    if (p.kind == ParamKind::categorical) {
        j["low"] = nullptr;
        j["high"] = nullptr;
        j["scale"] = nullptr;
        auto choices = nlohmann::json::array();
        for (const auto& c : p.choices) choices.push_back(value_to_json(c));
        j["choices"] = std::move(choices);
    } else {
        if (p.kind == ParamKind::integer_range) {
            j["low"] = static_cast<std::int64_t>(p.low);
            j["high"] = static_cast<std::int64_t>(p.high);
        } else {
            j["low"] = p.low;
            j["high"] = p.high;
        }
        j["scale"] = p.scale == Scale::log ? "log" : "linear";
        j["choices"] = nullptr;
    }
}

void from_json(const nlohmann::json& j, ParamSpec& p) {
    p = ParamSpec{};
    p.name = j.at("name").get<std::string>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "integer-range") {
        p.kind = ParamKind::integer_range;
    } else if (kind == "real-range") {
        p.kind = ParamKind::real_range;
    } else if (kind == "categorical") {
        p.kind = ParamKind::categorical;
    } else {
        throw Error(ErrorCode::InvalidSpace, "unknown parameter kind '" + kind + "'");
    }
    if (p.kind == ParamKind::categorical) {
        for (const auto& c : j.at("choices")) p.choices.push_back(value_from_json(c));
        return;
    }
    p.low = j.at("low").get<double>();
    p.high = j.at("high").get<double>();
    if (j.contains("scale") && !j["scale"].is_null()) {
        const auto scale = j["scale"].get<std::string>();
        if (scale == "log") {
            p.scale = Scale::log;
        } else if (scale != "linear") {
            throw Error(ErrorCode::InvalidSpace, "unknown scale '" + scale + "'");
        }
    }
}

nlohmann::json space_to_json(const SearchSpace& space) {
    auto out = nlohmann::json::array();
    for (const auto& p : space.params()) out.push_back(p);
    return out;
}

SearchSpace space_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw Error(ErrorCode::InvalidSpace, "search space JSON must be an array");
    std::vector<ParamSpec> params;
    for (const auto& item : j) params.push_back(item.get<ParamSpec>());
    return SearchSpace(std::move(params));
}

void to_json(nlohmann::json& j, const HyperparamConfig& c) {
    j = nlohmann::json::object();
    for (const auto& [name, value] : c.assignments) j[name] = value_to_json(value);
}

void from_json(const nlohmann::json& j, HyperparamConfig& c) {
    c.assignments.clear();
    for (const auto& [name, value] : j.items()) c.assignments[name] = value_from_json(value);
}

}  // namespace metaopt::space
