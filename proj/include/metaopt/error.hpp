#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace metaopt {

enum class ErrorCode {
    // series_stats
    EmptySeries,
    NonPositivePeriod,
    ZeroVariance,
    InsufficientLength,
    SingularDesign,
    // search_space
    InvalidSpace,
    InvalidConfig,
    DegenerateRegion,
    // surrogate_bo
    TooFewTrials,
    IllConditioned,
    NoSuccessfulTrials,
    // objective_runtime
    ConstantFeature,
    TooShort,
    LengthMismatch,
    EmptyInput,
    NonFiniteLoss,
    TrainerTimeout,
    ProtocolViolation,
    NonZeroExit,
    TrainerError,
    DatasetFormat,
    // meta_prompt
    NotJson,
    MultipleObjects,
    DuplicateKey,
    TrailingContent,
    // llm_gateway
    Unreachable,
    MissingApiKey,
    HttpStatus,
    Timeout,
    ExhaustedRetries,
    TranscriptExhausted,
    HashMismatch,
    // orchestrator
    NonPositiveEpsilon,
    MissingLatency,
    InvalidRunConfig,
    // experiment_store
    UnknownRun,
    DuplicateTrialId,
    EmptyRun,
    Io,
};

[[nodiscard]] std::string_view to_string(ErrorCode code) noexcept;

/// Error type thrown by every module. The code identifies the failure class;
/// the message carries the human-readable detail.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace metaopt
