#include <atomic>
#include <cstdlib>
#include <thread>

#include "catch_amalgamated.hpp"
#include "httplib.h"
#include "metaopt/error.hpp"
#include "metaopt/llm_gateway.hpp"
#include "support.hpp"

using namespace metaopt;
using namespace metaopt::llm;
using nlohmann::json;

namespace {

// Loopback chat-completions server on an ephemeral port.
class FakeServer {
public:
    explicit FakeServer(int failures_before_success, int failure_status = 500)
        : failures_(failures_before_success), status_(failure_status) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            last_body = req.body;
            last_auth = req.get_header_value("Authorization");
            ++calls;
            if (calls <= failures_) {
                res.status = status_;
                res.set_content("{\"error\": \"busy\"}", "application/json");
                return;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
            const json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "{\"lag\": 12}"}}}}}}};
            res.set_content(reply.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeServer() {
        server_.stop();
        thread_.join();
    }

    [[nodiscard]] std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

    std::atomic<int> calls{0};
    std::string last_body;
    std::string last_auth;

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    int failures_;
    int status_;
};

prompt::PromptDocument doc(const std::string& user) { return {"system", user, "{}"}; }

LlmEndpointConfig endpoint(const std::string& url, int retries) {
    LlmEndpointConfig c;
    c.base_url = url;
    c.max_retries = retries;
    c.backoff_initial = 0.01;
    c.backoff_factor = 2.0;
    c.timeout = std::chrono::seconds(5);
    return c;
}

TranscriptEntry entry_for(const prompt::PromptDocument& d, const std::string& reply) {
    return {prompt::prompt_hash(d), prompt::prompt_text(d), reply, 0.5, "2024-01-01T00:00:00Z"};
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error thrown");
    return ErrorCode::Io;
}

}  // namespace

TEST_CASE("gateway returns the reply content with a positive latency") {
    FakeServer server(0);
    HttpGateway gw(endpoint(server.base_url(), 2));
    const auto c = gw.complete(doc("hello"));
    CHECK(c.text == "{\"lag\": 12}");
    CHECK(c.latency > 0.0);
    CHECK(gw.attempts_last_call() == 1);
    const auto body = json::parse(server.last_body);
    CHECK(body.at("model") == "qwen2.5-72b-instruct");
    CHECK(body.at("messages").size() == 2);
    CHECK(body.at("messages")[1].at("content") == "hello");
    CHECK(server.last_auth.empty());
}

TEST_CASE("gateway retries server errors") {
    FakeServer server(2);
    HttpGateway gw(endpoint(server.base_url(), 3));
    const auto c = gw.complete(doc("x"));
    CHECK(c.text == "{\"lag\": 12}");
    CHECK(gw.attempts_last_call() == 3);
    CHECK(server.calls == 3);
}

TEST_CASE("gateway retries 429 and gives up after the retry budget") {
    FakeServer server(10, 429);
    HttpGateway gw(endpoint(server.base_url(), 2));
    CHECK(code_of([&] { (void)gw.complete(doc("x")); }) == ErrorCode::ExhaustedRetries);
    CHECK(server.calls == 3);
}

TEST_CASE("client errors are not retried") {
    FakeServer server(10, 400);
    HttpGateway gw(endpoint(server.base_url(), 3));
    CHECK(code_of([&] { (void)gw.complete(doc("x")); }) == ErrorCode::HttpStatus);
    CHECK(server.calls == 1);
}

TEST_CASE("zero retries surfaces the transport error") {
    FakeServer server(10);
    HttpGateway gw(endpoint(server.base_url(), 0));
    CHECK(code_of([&] { (void)gw.complete(doc("x")); }) == ErrorCode::HttpStatus);
    HttpGateway dead(endpoint("http://127.0.0.1:1/v1", 0));
    CHECK(code_of([&] { (void)dead.complete(doc("x")); }) == ErrorCode::Unreachable);
}

TEST_CASE("API key comes from the environment") {
    auto c = endpoint("http://127.0.0.1:1/v1", 0);
    c.api_key_env = "METAOPT_TEST_KEY_UNSET";
    ::unsetenv("METAOPT_TEST_KEY_UNSET");
    CHECK(code_of([&] { HttpGateway gw(c); }) == ErrorCode::MissingApiKey);

    FakeServer server(0);
    c.base_url = server.base_url();
    c.api_key_env = "METAOPT_TEST_KEY";
    ::setenv("METAOPT_TEST_KEY", "sk-test", 1);
    HttpGateway gw(c);
    (void)gw.complete(doc("x"));
    CHECK(server.last_auth == "Bearer sk-test");
}

TEST_CASE("strict replay checks prompt hashes") {
    const auto a = doc("first");
    const auto b = doc("second");
    Replayer r({entry_for(a, "one"), entry_for(b, "two")}, ReplayMode::strict);
    const auto c = r.complete(a);
    CHECK(c.text == "one");
    CHECK(c.latency == 0.5);
    CHECK(code_of([&] { (void)r.complete(a); }) == ErrorCode::HashMismatch);
}

TEST_CASE("lenient replay ignores hashes and exhausts") {
    const auto a = doc("first");
    Replayer r({entry_for(a, "1"), entry_for(a, "2"), entry_for(a, "3")}, ReplayMode::lenient);
    CHECK(r.complete(doc("other")).text == "1");
    CHECK(r.complete(doc("other")).text == "2");
    CHECK(r.complete(doc("other")).text == "3");
    CHECK(r.remaining() == 0);
    CHECK(code_of([&] { (void)r.complete(a); }) == ErrorCode::TranscriptExhausted);
}

TEST_CASE("recording then strict replay reproduces the exchange") {
    const auto dir = support::temp_dir("record");
    const auto path = dir / "transcript.jsonl";
    FakeServer server(0);
    HttpGateway gw(endpoint(server.base_url(), 0));
    RecordingClient rec(gw, path);
    const auto a = doc("a");
    const auto b = doc("b");
    const auto ra = rec.complete(a);
    const auto rb = rec.complete(b);

    const auto loaded = load_transcript(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded == rec.recorded());
    CHECK(loaded[0].prompt_hash == prompt::prompt_hash(a));
    CHECK(loaded[0].prompt_text == prompt::prompt_text(a));
    CHECK(loaded[1].raw_reply == rb.text);
    CHECK(loaded[0].latency == ra.latency);
    CHECK(loaded[0].timestamp.back() == 'Z');
    CHECK(loaded[0].timestamp[10] == 'T');

    Replayer replay(loaded, ReplayMode::strict);
    CHECK(replay.complete(a).text == ra.text);
    CHECK(replay.complete(b).text == rb.text);
}

TEST_CASE("transcript persistence ignores a torn last line") {
    const auto dir = support::temp_dir("torn");
    const auto path = dir / "t.jsonl";
    const auto e = entry_for(doc("a"), "reply");
    save_transcript({e, e}, path);
    CHECK(load_transcript(path).size() == 2);
    append_transcript_entry(path, e);
    CHECK(load_transcript(path).size() == 3);
    support::write_file(path, support::read_file(path) + "{\"prompt_hash\": \"ab");
    CHECK(load_transcript(path).size() == 3);
    CHECK(json(e).get<TranscriptEntry>() == e);
}

TEST_CASE("endpoint config validation and JSON") {
    LlmEndpointConfig c;
    c.check();
    auto back = json(c).get<LlmEndpointConfig>();
    CHECK(back.model_name == c.model_name);
    CHECK(back.max_retries == c.max_retries);
    c.max_retries = -1;
    CHECK(code_of([&] { c.check(); }) == ErrorCode::InvalidRunConfig);
    c = {};
    c.temperature = -0.5;
    CHECK(code_of([&] { c.check(); }) == ErrorCode::InvalidRunConfig);
    c = {};
    c.max_tokens = 256;
    CHECK(chat_request_body(c, doc("x")).at("max_tokens") == 256);
    CHECK(chat_request_body(c, doc("x")).at("temperature") == 0.2);
}
