#include "metaopt/error.hpp"

namespace metaopt {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::EmptySeries: return "EmptySeries";
        case ErrorCode::NonPositivePeriod: return "NonPositivePeriod";
        case ErrorCode::ZeroVariance: return "ZeroVariance";
        case ErrorCode::InsufficientLength: return "InsufficientLength";
        case ErrorCode::SingularDesign: return "SingularDesign";
        case ErrorCode::InvalidSpace: return "InvalidSpace";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::DegenerateRegion: return "DegenerateRegion";
        case ErrorCode::TooFewTrials: return "TooFewTrials";
        case ErrorCode::IllConditioned: return "IllConditioned";
        case ErrorCode::NoSuccessfulTrials: return "NoSuccessfulTrials";
        case ErrorCode::ConstantFeature: return "ConstantFeature";
        case ErrorCode::TooShort: return "TooShort";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::TrainerTimeout: return "TrainerTimeout";
        case ErrorCode::ProtocolViolation: return "ProtocolViolation";
        case ErrorCode::NonZeroExit: return "NonZeroExit";
        case ErrorCode::TrainerError: return "TrainerError";
        case ErrorCode::DatasetFormat: return "DatasetFormat";
        case ErrorCode::NotJson: return "NotJson";
        case ErrorCode::MultipleObjects: return "MultipleObjects";
        case ErrorCode::DuplicateKey: return "DuplicateKey";
        case ErrorCode::TrailingContent: return "TrailingContent";
        case ErrorCode::Unreachable: return "Unreachable";
        case ErrorCode::MissingApiKey: return "MissingApiKey";
        case ErrorCode::HttpStatus: return "HttpStatus";
        case ErrorCode::Timeout: return "Timeout";
        case ErrorCode::ExhaustedRetries: return "ExhaustedRetries";
        case ErrorCode::TranscriptExhausted: return "TranscriptExhausted";
        case ErrorCode::HashMismatch: return "HashMismatch";
        case ErrorCode::NonPositiveEpsilon: return "NonPositiveEpsilon";
        case ErrorCode::MissingLatency: return "MissingLatency";
        case ErrorCode::InvalidRunConfig: return "InvalidRunConfig";
        case ErrorCode::UnknownRun: return "UnknownRun";
        case ErrorCode::DuplicateTrialId: return "DuplicateTrialId";
        case ErrorCode::EmptyRun: return "EmptyRun";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

}  // namespace metaopt
