#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "metaopt/meta_prompt.hpp"

namespace metaopt::llm {

struct LlmEndpointConfig {
    std::string base_url = "http://127.0.0.1:8000/v1";
    std::string model_name = "qwen2.5-72b-instruct";
    std::string api_key_env;  // empty: no Authorization header
    double temperature = 0.2;
    std::chrono::duration<double> timeout{120.0};
    int max_retries = 2;
    double backoff_initial = 1.0;  // seconds before the first retry
    double backoff_factor = 4.0;   // 1 s, then 4 s
    std::optional<int> max_tokens;

    /// Throws InvalidRunConfig.
    void check() const;
};

void to_json(nlohmann::json& j, const LlmEndpointConfig& c);
void from_json(const nlohmann::json& j, LlmEndpointConfig& c);

struct TranscriptEntry {
    std::string prompt_hash;
    std::string prompt_text;
    std::string raw_reply;
    double latency = 0.0;   // seconds
    std::string timestamp;  // ISO-8601 UTC

    bool operator==(const TranscriptEntry&) const = default;
};

void to_json(nlohmann::json& j, const TranscriptEntry& e);
void from_json(const nlohmann::json& j, TranscriptEntry& e);

using Transcript = std::vector<TranscriptEntry>;

/// JSON-lines transcript. A torn final line (no trailing newline) is ignored.
[[nodiscard]] Transcript load_transcript(const std::filesystem::path& path);
void save_transcript(const Transcript& transcript, const std::filesystem::path& path);

/// Appends one line and flushes it to disk before returning.
void append_transcript_entry(const std::filesystem::path& path, const TranscriptEntry& entry);

[[nodiscard]] std::string utc_timestamp();

struct Completion {
    std::string text;
    double latency = 0.0;
};

class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual Completion complete(const prompt::PromptDocument& prompt) = 0;
};

/// Request body for {base_url}/chat/completions.
[[nodiscard]] nlohmann::json chat_request_body(const LlmEndpointConfig& endpoint,
                                               const prompt::PromptDocument& prompt);

/// OpenAI-compatible chat-completions client. Retries transport errors, 429
/// and 5xx replies with exponential backoff. Throws MissingApiKey before any
/// network traffic, then Unreachable, Timeout, HttpStatus, or ExhaustedRetries
/// once retries are used up.
class HttpGateway : public LlmClient {
public:
    explicit HttpGateway(LlmEndpointConfig endpoint);

    Completion complete(const prompt::PromptDocument& prompt) override;

    [[nodiscard]] int attempts_last_call() const noexcept { return attempts_; }

private:
    LlmEndpointConfig endpoint_;
    std::string api_key_;
    int attempts_ = 0;
};

enum class ReplayMode { strict, lenient };

/// Serves recorded replies in order. Strict mode requires each prompt hash to
/// match the next entry (HashMismatch otherwise); lenient mode ignores hashes.
class Replayer : public LlmClient {
public:
    Replayer(Transcript transcript, ReplayMode mode);

    Completion complete(const prompt::PromptDocument& prompt) override;

    [[nodiscard]] std::size_t consumed() const noexcept { return next_; }
    [[nodiscard]] std::size_t remaining() const noexcept { return transcript_.size() - next_; }

private:
    Transcript transcript_;
    ReplayMode mode_;
    std::size_t next_ = 0;
};

/// Forwards to another client and appends every exchange to a transcript file.
class RecordingClient : public LlmClient {
public:
    RecordingClient(LlmClient& inner, std::filesystem::path path);

    Completion complete(const prompt::PromptDocument& prompt) override;

    [[nodiscard]] const Transcript& recorded() const noexcept { return recorded_; }

private:
    LlmClient& inner_;
    std::filesystem::path path_;
    Transcript recorded_;
};

}  // namespace metaopt::llm
