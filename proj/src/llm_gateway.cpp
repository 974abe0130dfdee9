#include "metaopt/llm_gateway.hpp"

#include <cstdlib>
#include <ctime>
#include <thread>

#include "httplib.h"
#include "metaopt/clock.hpp"
#include "metaopt/error.hpp"
#include "metaopt/jsonl.hpp"

namespace metaopt::llm {

using nlohmann::json;

void LlmEndpointConfig::check() const {
    if (base_url.empty()) throw Error(ErrorCode::InvalidRunConfig, "llm base_url is empty");
    if (!(temperature >= 0.0)) throw Error(ErrorCode::InvalidRunConfig, "llm temperature must be >= 0");
    if (!(timeout.count() > 0.0)) throw Error(ErrorCode::InvalidRunConfig, "llm timeout must be positive");
    if (max_retries < 0) throw Error(ErrorCode::InvalidRunConfig, "llm max_retries must be >= 0");
    if (backoff_initial < 0.0 || backoff_factor < 1.0) {
        throw Error(ErrorCode::InvalidRunConfig, "llm backoff must be >= 0 with factor >= 1");
    }
}

void to_json(json& j, const LlmEndpointConfig& c) {
    j = {{"base_url", c.base_url},
         {"model_name", c.model_name},
         {"api_key_env", c.api_key_env},
         {"temperature", c.temperature},
         {"timeout", c.timeout.count()},
         {"max_retries", c.max_retries},
         {"backoff_initial", c.backoff_initial},
         {"backoff_factor", c.backoff_factor},
         {"max_tokens", c.max_tokens ? json(*c.max_tokens) : json(nullptr)}};
}

void from_json(const json& j, LlmEndpointConfig& c) {
    const LlmEndpointConfig d;
    c.base_url = j.value("base_url", d.base_url);
    c.model_name = j.value("model_name", d.model_name);
    c.api_key_env = j.value("api_key_env", d.api_key_env);
    c.temperature = j.value("temperature", d.temperature);
    c.timeout = std::chrono::duration<double>(j.value("timeout", d.timeout.count()));
    c.max_retries = j.value("max_retries", d.max_retries);
    c.backoff_initial = j.value("backoff_initial", d.backoff_initial);
    c.backoff_factor = j.value("backoff_factor", d.backoff_factor);
    if (j.contains("max_tokens") && !j["max_tokens"].is_null()) c.max_tokens = j["max_tokens"].get<int>();
    c.check();
}

void to_json(json& j, const TranscriptEntry& e) {
    j = {{"prompt_hash", e.prompt_hash},
         {"prompt_text", e.prompt_text},
         {"raw_reply", e.raw_reply},
         {"latency", e.latency},
         {"timestamp", e.timestamp}};
}

void from_json(const json& j, TranscriptEntry& e) {
    e.prompt_hash = j.value("prompt_hash", std::string{});
    e.prompt_text = j.value("prompt_text", std::string{});
    e.raw_reply = j.at("raw_reply").get<std::string>();
    e.latency = j.value("latency", 0.0);
    e.timestamp = j.value("timestamp", std::string{});
}

Transcript load_transcript(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::Io, "no transcript at " + path.string());
    Transcript t;
    for (const auto& line : jsonl::read_lines(path)) t.push_back(json::parse(line).get<TranscriptEntry>());
    return t;
}

void save_transcript(const Transcript& transcript, const std::filesystem::path& path) {
    std::string out;
    for (const auto& e : transcript) out += json(e).dump() + "\n";
    jsonl::write_atomic(path, out);
}

void append_transcript_entry(const std::filesystem::path& path, const TranscriptEntry& entry) {
    jsonl::append_line(path, json(entry).dump());
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                  tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return buf;
}

json chat_request_body(const LlmEndpointConfig& endpoint, const prompt::PromptDocument& prompt) {
    json body = {{"model", endpoint.model_name},
                 {"messages",
                  json::array({{{"role", "system"}, {"content", prompt.system_text}},
                               {{"role", "user"}, {"content", prompt.user_text}}})},
                 {"temperature", endpoint.temperature}};
    if (endpoint.max_tokens) body["max_tokens"] = *endpoint.max_tokens;
    return body;
}

namespace {

struct UrlParts {
    std::string origin;  // scheme://host[:port]
    std::string path_prefix;
};

UrlParts split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidRunConfig, "base_url needs a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    UrlParts parts;
    parts.origin = url.substr(0, path_start);
    parts.path_prefix = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!parts.path_prefix.empty() && parts.path_prefix.back() == '/') parts.path_prefix.pop_back();
    return parts;
}

std::string excerpt(const std::string& s) { return s.size() > 300 ? s.substr(0, 300) + "..." : s; }

}  // namespace

HttpGateway::HttpGateway(LlmEndpointConfig endpoint) : endpoint_(std::move(endpoint)) {
    endpoint_.check();
    if (!endpoint_.api_key_env.empty()) {
        const char* key = std::getenv(endpoint_.api_key_env.c_str());
        if (key == nullptr || *key == '\0') {
            throw Error(ErrorCode::MissingApiKey, "environment variable " + endpoint_.api_key_env + " is not set");
        }
        api_key_ = key;
    }
}

Completion HttpGateway::complete(const prompt::PromptDocument& prompt) {
    const UrlParts url = split_url(endpoint_.base_url);
    const std::string body = chat_request_body(endpoint_, prompt).dump();
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    Stopwatch clock;
    attempts_ = 0;
    double delay = endpoint_.backoff_initial;
    for (;;) {
        ++attempts_;
        ErrorCode code = ErrorCode::Unreachable;
        std::string reason;
        bool retryable = true;
        {
            httplib::Client client(url.origin);
            const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(endpoint_.timeout).count();
            client.set_connection_timeout(micros / 1000000, micros % 1000000);
            client.set_read_timeout(micros / 1000000, micros % 1000000);
            client.set_write_timeout(micros / 1000000, micros % 1000000);
            auto res = client.Post(url.path_prefix + "/chat/completions", headers, body, "application/json");
            if (!res) {
                const auto err = res.error();
                code = (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) ? ErrorCode::Timeout
                                                                                               : ErrorCode::Unreachable;
                reason = httplib::to_string(err);
            } else if (res->status == 200) {
                const auto reply = json::parse(res->body, nullptr, false);
                if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty() ||
                    !reply["choices"][0].contains("message") ||
                    !reply["choices"][0]["message"].contains("content") ||
                    !reply["choices"][0]["message"]["content"].is_string()) {
                    throw Error(ErrorCode::HttpStatus, "200 reply without choices[0].message.content: " + excerpt(res->body));
                }
                return {reply["choices"][0]["message"]["content"].get<std::string>(), clock.seconds()};
            } else {
                code = ErrorCode::HttpStatus;
                reason = "status " + std::to_string(res->status) + ": " + excerpt(res->body);
                retryable = res->status >= 500 || res->status == 429;
            }
        }
        if (!retryable) throw Error(code, reason);
        if (attempts_ > endpoint_.max_retries) {
            if (endpoint_.max_retries == 0) throw Error(code, reason);
            throw Error(ErrorCode::ExhaustedRetries,
                        std::to_string(attempts_) + " attempts failed; last: " + std::string(to_string(code)) + " " + reason);
        }
        std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        delay *= endpoint_.backoff_factor;
    }
}

Replayer::Replayer(Transcript transcript, ReplayMode mode) : transcript_(std::move(transcript)), mode_(mode) {}

Completion Replayer::complete(const prompt::PromptDocument& prompt) {
    if (next_ >= transcript_.size()) {
        throw Error(ErrorCode::TranscriptExhausted,
                    "all " + std::to_string(transcript_.size()) + " recorded replies were consumed");
    }
    const auto& entry = transcript_[next_];
    if (mode_ == ReplayMode::strict) {
        const std::string hash = prompt::prompt_hash(prompt);
        if (hash != entry.prompt_hash) {
            throw Error(ErrorCode::HashMismatch, "entry " + std::to_string(next_) + " was recorded for prompt " +
                                                     entry.prompt_hash + ", got " + hash);
        }
    }
    ++next_;
    return {entry.raw_reply, entry.latency};
}

RecordingClient::RecordingClient(LlmClient& inner, std::filesystem::path path) : inner_(inner), path_(std::move(path)) {}

Completion RecordingClient::complete(const prompt::PromptDocument& prompt) {
    Completion c = inner_.complete(prompt);
    TranscriptEntry e{prompt::prompt_hash(prompt), prompt::prompt_text(prompt), c.text, c.latency, utc_timestamp()};
    append_transcript_entry(path_, e);
    recorded_.push_back(std::move(e));
    return c;
}

}  // namespace metaopt::llm
