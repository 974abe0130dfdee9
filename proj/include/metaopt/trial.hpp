#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "metaopt/search_space.hpp"

namespace metaopt {

enum class TrialOrigin { bo_init, bo_acquired, llm, baseline };

[[nodiscard]] std::string to_string(TrialOrigin origin);
[[nodiscard]] TrialOrigin origin_from_string(const std::string& text);

/// Outcome of one objective evaluation.
struct EvalResult {
    double loss = 0.0;  // RMSE in original target units
    double t_train = 0.0;
    double t_eval = 0.0;
    std::size_t n_test = 0;
    nlohmann::json diagnostics = nlohmann::json::object();
};

/// Objective callback. Failures are reported by throwing metaopt::Error.
using Objective = std::function<EvalResult(const space::HyperparamConfig&)>;

struct Trial {
    std::string trial_id;
    space::HyperparamConfig config;
    std::optional<double> loss;  // nullopt marks a failed trial
    double t_acq = 0.0;
    double t_train = 0.0;
    double t_eval = 0.0;
    TrialOrigin origin = TrialOrigin::bo_init;
    std::string diagnostics;

    [[nodiscard]] bool failed() const noexcept { return !loss.has_value(); }

    bool operator==(const Trial&) const = default;
};

using TrialHistory = std::vector<Trial>;

struct Incumbent {
    space::HyperparamConfig config;
    double loss = 0.0;
    std::string trial_id;

    bool operator==(const Incumbent&) const = default;
};

/// Lowest-loss successful trial; the earliest one wins ties.
/// Throws NoSuccessfulTrials when every trial failed.
[[nodiscard]] Incumbent incumbent(const TrialHistory& history);

/// Running minimum of the loss after each trial (nullopt until the first success).
[[nodiscard]] std::vector<std::optional<double>> running_incumbent(const TrialHistory& history);

void to_json(nlohmann::json& j, const Trial& t);
void from_json(const nlohmann::json& j, Trial& t);
void to_json(nlohmann::json& j, const Incumbent& inc);
void from_json(const nlohmann::json& j, Incumbent& inc);

}  // namespace metaopt
