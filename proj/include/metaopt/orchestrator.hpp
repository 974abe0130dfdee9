#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "metaopt/dataset.hpp"
#include "metaopt/experiment_store.hpp"
#include "metaopt/llm_gateway.hpp"
#include "metaopt/meta_prompt.hpp"
#include "metaopt/objective_runtime.hpp"
#include "metaopt/search_space.hpp"
#include "metaopt/trial.hpp"

namespace metaopt::orch {

struct OptimizationRunConfig {
    double epsilon = 0.05;
    int max_llm_iterations = 15;   // hard cap on phase-2 iterations
    int llm_initial_budget = 5;    // base budget before extensions
    int budget_extension_step = 2;
    int validation_retries = 2;    // extra prompt rounds after an invalid reply
    std::size_t bo_n_init = 5;
    std::size_t bo_n_total = 15;
    std::uint64_t seed = 0;
    double trust_region_radius = 0.25;
    int seasonal_period = 24;

    std::filesystem::path dataset;
    std::string target_feature = "target";
    double train_fraction = 0.7;
    int horizon = 4;
    objective::TrainerSpec trainer;

    std::optional<llm::LlmEndpointConfig> endpoint;
    std::optional<std::filesystem::path> transcript;  // replay source
    llm::ReplayMode replay_mode = llm::ReplayMode::strict;

    std::optional<space::SearchSpace> search_space;  // default: the eight-parameter space
    std::filesystem::path output_dir = "runs/run";
    std::size_t few_shot_examples = 0;
    std::optional<std::string> model_description;

    bool no_meta = false;
    bool bo_only = false;

    [[nodiscard]] space::SearchSpace space() const;
    [[nodiscard]] store::MethodLabel label() const;

    /// Throws InvalidRunConfig or NonPositiveEpsilon.
    void check() const;
};

void to_json(nlohmann::json& j, const OptimizationRunConfig& c);
/// Missing keys take their defaults.
void from_json(const nlohmann::json& j, OptimizationRunConfig& c);

/// Reads a run config; relative paths resolve against the file's directory.
[[nodiscard]] OptimizationRunConfig load_run_config(const std::filesystem::path& path);

/// bo_incumbent_loss - epsilon. Throws NonPositiveEpsilon, InvalidConfig.
[[nodiscard]] double compute_target_loss(double bo_incumbent_loss, double epsilon);

struct StepTiming {
    std::string trial_id;  // empty for an LLM round that produced no trial
    double t_rec = 0.0;    // t_acq for BO, t_llm for LLM
    double t_train = 0.0;
    double t_eval = 0.0;
};

struct TimingBreakdown {
    std::vector<StepTiming> bo;
    std::vector<StepTiming> llm;
    double t_opt_bo = 0.0;
    double t_opt_llm = 0.0;
};

void to_json(nlohmann::json& j, const TimingBreakdown& t);

/// Sums recommendation, training and evaluation time per method. Every
/// llm-origin trial needs an entry in llm_latency (MissingLatency otherwise);
/// unevaluated_llm_latency covers LLM rounds that produced no trial.
[[nodiscard]] TimingBreakdown aggregate_timing(const TrialHistory& history,
                                               const std::map<std::string, double>& llm_latency,
                                               const std::vector<double>& unevaluated_llm_latency = {});

struct IterationRecord {
    int iteration = 0;
    std::optional<std::string> trial_id;
    std::optional<space::HyperparamConfig> config;
    std::optional<double> loss;
    std::map<std::string, std::string> reasoning;
    std::optional<std::string> expected_effect;
    int attempts = 0;  // prompt rounds used
    std::vector<std::string> errors;
    double t_llm = 0.0;
    double t_train = 0.0;
    double t_eval = 0.0;
    bool improved = false;
    int budget_after = 0;
    double incumbent_after = 0.0;
};

void to_json(nlohmann::json& j, const IterationRecord& r);

struct RunReport {
    store::MethodLabel label = store::MethodLabel::llm_autoopt;
    Incumbent incumbent_initial;
    Incumbent incumbent_final;
    double epsilon = 0.0;
    double target_loss = 0.0;
    bool reached_target = false;
    int iterations_used = 0;
    int final_budget = 0;
    TimingBreakdown timing;
    std::vector<IterationRecord> iterations;
    nlohmann::json bundle_snapshot;
    std::vector<std::string> dropped_features;
};

void to_json(nlohmann::json& j, const RunReport& r);

/// Copy of a report JSON without wall-clock fields, for golden comparisons.
[[nodiscard]] nlohmann::json strip_wall_clock(const nlohmann::json& report);

struct Phase1Result {
    prompt::MetaKnowledgeBundle bundle;
    TrialHistory history;
    Incumbent incumbent;
    std::vector<std::string> dropped_features;
};

/// Run-scoped collaborators: the dataset, the objective and where trials go.
struct RunContext {
    OptimizationRunConfig config;
    SeriesDataset source;   // as loaded, for meta-features
    SeriesDataset dataset;  // without dropped features
    objective::DataSplit split;
    Objective objective;
    std::vector<std::string> dropped_features;
    store::ExperimentStore* store = nullptr;  // optional persistence
    std::string run_id;
};

/// Loads the dataset, drops non-target features that are constant on the
/// training segment, builds the split and the objective.
[[nodiscard]] RunContext prepare(const OptimizationRunConfig& config);

[[nodiscard]] std::string default_model_description(const OptimizationRunConfig& config);

[[nodiscard]] std::vector<prompt::FeatureMeta> extract_dataset_meta(const SeriesDataset& dataset,
                                                                    int seasonal_period);

[[nodiscard]] Phase1Result phase1(RunContext& ctx);

[[nodiscard]] RunReport phase2(RunContext& ctx, Phase1Result& p1, llm::LlmClient& client);

/// Phase 1 only, as a complete report with zero LLM iterations.
[[nodiscard]] RunReport bo_only_report(const RunContext& ctx, const Phase1Result& p1);

struct RunOutcome {
    RunReport report;
    TrialHistory history;
    std::filesystem::path run_dir;
};

/// phase1 + phase2 with everything persisted under config.output_dir:
/// run.json, history.jsonl, transcript.jsonl, report.json, convergence.csv.
/// `client` overrides the configured endpoint or transcript when given.
[[nodiscard]] RunOutcome run(const OptimizationRunConfig& config, llm::LlmClient* client = nullptr);

}  // namespace metaopt::orch
