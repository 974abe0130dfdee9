#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "metaopt/random.hpp"

namespace metaopt::space {

/// A hyperparameter value: integer, real or string (categorical label).
using ParamValue = std::variant<std::int64_t, double, std::string>;

enum class ParamKind { integer_range, real_range, categorical };
enum class Scale { linear, log };
enum class CategoricalPolicy { center_only, any };

struct ParamSpec {
    std::string name;
    ParamKind kind = ParamKind::real_range;
    double low = 0.0;   // inclusive; ranges only
    double high = 0.0;  // inclusive; ranges only
    Scale scale = Scale::linear;
    std::vector<ParamValue> choices;  // categorical only, ordered

    [[nodiscard]] static ParamSpec integer(std::string name, std::int64_t low, std::int64_t high);
    [[nodiscard]] static ParamSpec real(std::string name, double low, double high,
                                        Scale scale = Scale::linear);
    [[nodiscard]] static ParamSpec categorical(std::string name, std::vector<ParamValue> choices);

    bool operator==(const ParamSpec&) const = default;
};

/// Ordered, non-empty list of uniquely named parameters. The constructor
/// enforces every ParamSpec invariant and throws InvalidSpace otherwise.
class SearchSpace {
public:
    explicit SearchSpace(std::vector<ParamSpec> params);

    [[nodiscard]] const std::vector<ParamSpec>& params() const noexcept { return params_; }
    [[nodiscard]] const ParamSpec* find(const std::string& name) const noexcept;
    [[nodiscard]] const ParamSpec& at(const std::string& name) const;
    [[nodiscard]] std::size_t size() const noexcept { return params_.size(); }

    bool operator==(const SearchSpace&) const = default;

private:
    std::vector<ParamSpec> params_;
};

struct HyperparamConfig {
    std::map<std::string, ParamValue> assignments;

    [[nodiscard]] const ParamValue& at(const std::string& name) const;
    /// Numeric view of an integer or real assignment.
    [[nodiscard]] double number(const std::string& name) const;
    [[nodiscard]] std::int64_t integer(const std::string& name) const;
    [[nodiscard]] const std::string& label(const std::string& name) const;

    bool operator==(const HyperparamConfig&) const = default;
};

struct Violation {
    std::string param;
    std::string reason;

    bool operator==(const Violation&) const = default;
};

struct ValidationVerdict {
    std::vector<Violation> violations;

    [[nodiscard]] bool ok() const noexcept { return violations.empty(); }
    [[nodiscard]] std::string describe() const;
};

struct TrustRegion {
    HyperparamConfig center;
    double numeric_radius_fraction = 0.25;
    CategoricalPolicy categorical_policy = CategoricalPolicy::any;
};

[[nodiscard]] ValidationVerdict validate_config(const SearchSpace& space,
                                                const HyperparamConfig& config);

[[nodiscard]] HyperparamConfig sample_uniform(const SearchSpace& space, std::uint64_t seed);
[[nodiscard]] HyperparamConfig sample_uniform(const SearchSpace& space, Rng& rng);

/// Shrinks numeric bounds to center +- radius * width (log-domain width for log
/// scale), intersected with the original bounds; integer bounds round inward.
[[nodiscard]] SearchSpace apply_trust_region(const SearchSpace& space, const TrustRegion& region);

/// The eight-parameter forecaster space: lag, hidden_size, num_layers,
/// dropout, lr, batch_size, epochs, optimizer.
[[nodiscard]] SearchSpace default_bilstm_space();

[[nodiscard]] std::string to_string(const ParamValue& v);
[[nodiscard]] std::string to_string(ParamKind kind);
[[nodiscard]] bool value_equals(const ParamValue& a, const ParamValue& b);

nlohmann::json value_to_json(const ParamValue& v);
ParamValue value_from_json(const nlohmann::json& j);

void to_json(nlohmann::json& j, const ParamSpec& p);
void from_json(const nlohmann::json& j, ParamSpec& p);
nlohmann::json space_to_json(const SearchSpace& space);
[[nodiscard]] SearchSpace space_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const HyperparamConfig& c);
void from_json(const nlohmann::json& j, HyperparamConfig& c);

}  // namespace metaopt::space
