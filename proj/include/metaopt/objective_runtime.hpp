#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "metaopt/dataset.hpp"
#include "metaopt/search_space.hpp"
#include "metaopt/trial.hpp"

namespace metaopt::objective {

inline constexpr std::string_view kTrainerProtocol = "metaopt-trainer/1";

/// Affine min-max map learned on the training segment. Not clipped.
struct FeatureScaling {
    double min = 0.0;
    double max = 1.0;

    [[nodiscard]] double scale(double v) const { return (v - min) / (max - min); }
    [[nodiscard]] double unscale(double s) const { return s * (max - min) + min; }
};

struct DataSplit {
    double train_fraction = 0.7;
    int horizon = 4;
    std::string target_feature;
    std::size_t target_index = 0;
    std::size_t length = 0;    // T
    std::size_t boundary = 0;  // first test index, floor(T * train_fraction)
    std::vector<FeatureScaling> scaling;  // one per dataset feature
};

/// Throws TooShort (T < 10 or an empty segment), ConstantFeature, DatasetFormat.
[[nodiscard]] DataSplit make_split(const SeriesDataset& dataset, double train_fraction, int horizon,
                                   const std::string& target_feature);

/// Root mean squared error. Throws LengthMismatch, EmptyInput, or
/// InvalidConfig for non-finite input.
[[nodiscard]] double rmse(std::span<const double> actual, std::span<const double> predicted);

/// Supervised windows: inputs are the `lag` scaled values of every feature
/// ending at index e (time-major, feature-minor), the label is the scaled
/// target at e + horizon. Windows touching an NA are dropped.
struct WindowSet {
    std::vector<std::vector<double>> inputs;
    std::vector<double> labels;         // scaled
    std::vector<std::size_t> label_index;  // position of each label in the series
};

/// Training windows have label index < boundary; test windows >= boundary.
[[nodiscard]] WindowSet make_windows(const SeriesDataset& dataset, const DataSplit& split, int lag,
                                     bool test_segment);

/// Test RMSE, in original units, of predicting the last observed target value.
[[nodiscard]] double persistence_rmse(const SeriesDataset& dataset, const DataSplit& split, int lag);

enum class OptimizerKind { sgd, adam, adamw, adamax, rmsprop };

[[nodiscard]] OptimizerKind optimizer_from_string(const std::string& name);

/// First-order update rules over a flat parameter vector. Adam-family use
/// beta1 0.9, beta2 0.999, eps 1e-8; AdamW decays weights by 0.01 (decoupled);
/// RMSprop uses alpha 0.99, eps 1e-8; SGD has no momentum.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double lr, std::size_t n_params);

    void step(std::span<double> params, std::span<const double> grad);

    [[nodiscard]] OptimizerKind kind() const noexcept { return kind_; }
    [[nodiscard]] std::size_t steps() const noexcept { return t_; }
    [[nodiscard]] const std::vector<double>& first_moment() const noexcept { return m_; }
    [[nodiscard]] const std::vector<double>& second_moment() const noexcept { return v_; }

    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;
    static constexpr double kWeightDecay = 0.01;
    static constexpr double kRmsAlpha = 0.99;

private:
    OptimizerKind kind_;
    double lr_;
    std::size_t t_ = 0;
    std::vector<double> m_;
    std::vector<double> v_;
};

/// Feed-forward window forecaster: `num_layers` tanh layers of `hidden_size`
/// units with inverted dropout, then a linear head.
struct ForecastModelState {
    int lag = 1;
    int hidden_size = 1;
    int num_layers = 1;
    std::size_t input_size = 1;
    std::vector<double> params;  // per layer: weights (out x in, row-major), then biases

    [[nodiscard]] static ForecastModelState initialize(int lag, std::size_t n_features, int hidden_size,
                                                       int num_layers, std::uint64_t seed);

    [[nodiscard]] static std::size_t parameter_count(std::size_t input_size, int hidden_size,
                                                     int num_layers);

    /// Deterministic forward pass (no dropout).
    [[nodiscard]] double predict(std::span<const double> input) const;
};

struct TrainingOutcome {
    EvalResult eval;
    std::vector<double> initial_params;
    std::vector<double> final_params;
    double final_train_mse = 0.0;
};

/// Trains on the training windows and scores the test windows. Reads lag,
/// hidden_size, num_layers, dropout, lr, batch_size, epochs, optimizer from the
/// config without enforcing search-space bounds (epochs 0 yields the untrained
/// model). Throws NonFiniteLoss, InvalidConfig, TooShort.
[[nodiscard]] TrainingOutcome train_forecaster(const space::HyperparamConfig& config,
                                               const DataSplit& split, const SeriesDataset& dataset,
                                               std::uint64_t seed);

[[nodiscard]] EvalResult train_builtin_forecaster(const space::HyperparamConfig& config,
                                                  const DataSplit& split, const SeriesDataset& dataset,
                                                  std::uint64_t seed);

struct TrainerSpec {
    enum class Kind { builtin, subprocess };

    Kind kind = Kind::builtin;
    std::vector<std::string> command;  // subprocess only
    std::chrono::duration<double> timeout{600.0};
    std::filesystem::path data_path;  // CSV handed to the subprocess

    /// Throws InvalidRunConfig when an invariant is broken.
    void check() const;
};

void to_json(nlohmann::json& j, const TrainerSpec& spec);
void from_json(const nlohmann::json& j, TrainerSpec& spec);

struct ProcessResult {
    int exit_code = -1;  // -1 when killed by a signal or on timeout
    bool timed_out = false;
    std::string stdout_text;
    std::string stderr_text;
};

/// Runs argv with stdin_text on its stdin, in its own process group, killing
/// the group on timeout. Throws Io if the process cannot be started.
[[nodiscard]] ProcessResult run_process(const std::vector<std::string>& argv, const std::string& stdin_text,
                                        std::chrono::duration<double> timeout);

[[nodiscard]] nlohmann::json make_trainer_request(const space::HyperparamConfig& config,
                                                  const std::filesystem::path& data_path,
                                                  const DataSplit& split, std::uint64_t seed);

/// Validates a reply object against the protocol. Throws ProtocolViolation,
/// or TrainerError for a well-formed {"error": ...} reply.
[[nodiscard]] EvalResult parse_trainer_reply(const nlohmann::json& reply);

/// One request, one reply over stdio. Throws TrainerTimeout,
/// ProtocolViolation, NonZeroExit or TrainerError; messages carry the
/// captured stdout/stderr excerpts.
[[nodiscard]] EvalResult evaluate_subprocess(const TrainerSpec& spec, const space::HyperparamConfig& config,
                                             const DataSplit& split, std::uint64_t seed);

/// Server side of the protocol backed by the built-in forecaster. Returns the
/// reply object and whether the request itself was valid (exit status 0);
/// a diverged training run is a valid request with an error reply.
[[nodiscard]] std::pair<nlohmann::json, bool> handle_trainer_request(const std::string& request_line);

/// Objective evaluating every config with the same seed on a fixed split.
[[nodiscard]] Objective make_objective(const TrainerSpec& spec, const SeriesDataset& dataset,
                                       const DataSplit& split, std::uint64_t seed);

struct ConformanceCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Protocol conformance checks against an external trainer command using a
/// 200-row synthetic CSV written under work_dir.
[[nodiscard]] std::vector<ConformanceCheck> trainer_check(const std::vector<std::string>& command,
                                                          const std::filesystem::path& work_dir,
                                                          std::chrono::duration<double> timeout);

}  // namespace metaopt::objective
