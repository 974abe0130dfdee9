#include "metaopt/trial.hpp"

#include "metaopt/error.hpp"

namespace metaopt {

std::string to_string(TrialOrigin origin) {
    switch (origin) {
        case TrialOrigin::bo_init: return "bo-init";
        case TrialOrigin::bo_acquired: return "bo-acquired";
        case TrialOrigin::llm: return "llm";
        case TrialOrigin::baseline: return "baseline";
    }
    return "?";
}

TrialOrigin origin_from_string(const std::string& text) {
    if (text == "bo-init") return TrialOrigin::bo_init;
    if (text == "bo-acquired") return TrialOrigin::bo_acquired;
    if (text == "llm") return TrialOrigin::llm;
    if (text == "baseline") return TrialOrigin::baseline;
    throw Error(ErrorCode::InvalidConfig, "unknown trial origin '" + text + "'");
}

Incumbent incumbent(const TrialHistory& history) {
    const Trial* best = nullptr;
    for (const auto& t : history) {
        if (t.failed()) continue;
        if (best == nullptr || *t.loss < *best->loss) best = &t;
    }
    if (best == nullptr) {
        throw Error(ErrorCode::NoSuccessfulTrials, "no successful trial in a history of " +
                                                       std::to_string(history.size()));
    }
    return {best->config, *best->loss, best->trial_id};
}

std::vector<std::optional<double>> running_incumbent(const TrialHistory& history) {
    std::vector<std::optional<double>> out;
    out.reserve(history.size());
    std::optional<double> best;
    for (const auto& t : history) {
        if (!t.failed() && (!best || *t.loss < *best)) best = t.loss;
        out.push_back(best);
    }
    return out;
}

void to_json(nlohmann::json& j, const Trial& t) {
    j = nlohmann::json{{"trial_id", t.trial_id},
                       {"config", t.config},
                       {"loss", t.loss ? nlohmann::json(*t.loss) : nlohmann::json(nullptr)},
                       {"t_acq", t.t_acq},
                       {"t_train", t.t_train},
                       {"t_eval", t.t_eval},
                       {"origin", to_string(t.origin)},
                       {"failed", t.failed()},
                       {"diagnostics", t.diagnostics}};
}

void from_json(const nlohmann::json& j, Trial& t) {
    t.trial_id = j.at("trial_id").get<std::string>();
    t.config = j.at("config").get<space::HyperparamConfig>();
    const auto& loss = j.at("loss");
    t.loss = loss.is_null() ? std::optional<double>{} : std::optional<double>{loss.get<double>()};
    t.t_acq = j.at("t_acq").get<double>();
    t.t_train = j.at("t_train").get<double>();
    t.t_eval = j.at("t_eval").get<double>();
    t.origin = origin_from_string(j.at("origin").get<std::string>());
    t.diagnostics = j.value("diagnostics", std::string{});
}

void to_json(nlohmann::json& j, const Incumbent& inc) {
    j = nlohmann::json{{"config", inc.config}, {"loss", inc.loss}, {"trial_id", inc.trial_id}};
}

void from_json(const nlohmann::json& j, Incumbent& inc) {
    inc.config = j.at("config").get<space::HyperparamConfig>();
    inc.loss = j.at("loss").get<double>();
    inc.trial_id = j.at("trial_id").get<std::string>();
}

}  // namespace metaopt
