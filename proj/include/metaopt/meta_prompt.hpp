#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "metaopt/error.hpp"
#include "metaopt/search_space.hpp"
#include "metaopt/series_stats.hpp"
#include "metaopt/trial.hpp"

namespace metaopt::prompt {

inline constexpr std::string_view kPromptVersion = "metaopt-prompt/1";
inline constexpr std::size_t kHistoryLimit = 10;

struct FeatureMeta {
    std::string name;
    stats::MetaFeatureVector vector;
    stats::MetaSummary summary;
};

struct FewShotExample {
    std::vector<double> input_window;
    std::vector<double> output;
};

struct Feedback {
    space::HyperparamConfig config;
    std::optional<double> loss;  // nullopt when the evaluation failed
    std::string note;
};

struct MetaKnowledgeBundle {
    std::vector<FeatureMeta> data_meta;
    std::string model_description;
    TrialHistory history;
    space::SearchSpace constrained_space = space::default_bilstm_space();
    double target_loss = 0.0;
    std::vector<FewShotExample> few_shot;
    std::optional<Feedback> last_feedback;
    std::optional<Incumbent> incumbent;
    bool include_meta = true;  // false drops data meta-knowledge and model description
    std::vector<std::string> corrective_feedback;  // violations of the previous reply
};

struct PromptDocument {
    std::string system_text;
    std::string user_text;
    std::string schema_text;

    bool operator==(const PromptDocument&) const = default;
};

/// Text sent to the model and hashed into transcripts.
[[nodiscard]] std::string prompt_text(const PromptDocument& doc);

/// FNV-1a 64-bit hash of prompt_text, as 16 lowercase hex digits.
[[nodiscard]] std::string prompt_hash(const PromptDocument& doc);
[[nodiscard]] std::string fnv1a_hex(std::string_view text);

/// %.6g rendering; integers print without a decimal point.
[[nodiscard]] std::string format_number(double v);

/// Compact JSON with every floating-point number at 6 significant digits.
[[nodiscard]] std::string render_json(const nlohmann::json& j);

[[nodiscard]] std::string reply_schema(const space::SearchSpace& space);

[[nodiscard]] PromptDocument build_prompt(const MetaKnowledgeBundle& bundle);

struct ParseError {
    ErrorCode code = ErrorCode::NotJson;
    std::string detail;  // the duplicated key for DuplicateKey
};

struct ParseOutcome {
    std::optional<nlohmann::json> value;
    std::optional<ParseError> error;

    [[nodiscard]] bool ok() const noexcept { return value.has_value(); }
};

/// Accepts exactly one top-level JSON object, optionally inside a code fence.
/// Prose before the object is tolerated; anything after it is rejected.
/// Duplicate keys are detected on the token stream at every nesting level.
[[nodiscard]] ParseOutcome parse_response(const std::string& raw);

/// First duplicated object key in raw JSON text, if any. Throws NotJson.
[[nodiscard]] std::optional<std::string> find_duplicate_key(const std::string& json_text);

struct LlmRecommendation {
    space::HyperparamConfig config;
    std::map<std::string, std::string> reasoning;
    std::optional<std::string> expected_effect;

    bool operator==(const LlmRecommendation&) const = default;
};

struct RecommendationVerdict {
    std::optional<LlmRecommendation> recommendation;
    std::vector<space::Violation> violations;

    [[nodiscard]] bool ok() const noexcept { return recommendation.has_value(); }
    [[nodiscard]] std::string describe() const;
};

/// Canonical categorical label for an LLM-supplied string: exact match first,
/// then case, '-', '_' and space insensitive match against the choices.
[[nodiscard]] std::optional<space::ParamValue> resolve_alias(const space::ParamSpec& spec,
                                                             const std::string& label);

[[nodiscard]] RecommendationVerdict validate_recommendation(const nlohmann::json& parsed,
                                                            const space::SearchSpace& constrained_space);

/// Reply object for a config, as a conformant model would write it.
[[nodiscard]] nlohmann::json recommendation_to_json(const LlmRecommendation& rec);

}  // namespace metaopt::prompt
