#include "support.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

namespace support {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path fixture(const std::string& name) { return fs::path(METAOPT_FIXTURES) / name; }

fs::path cli_path() { return METAOPT_CLI; }

fs::path temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const fs::path dir = fs::temp_directory_path() /
                         ("metaopt-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

json read_json(const fs::path& path) { return json::parse(read_file(path)); }

metaopt::space::SearchSpace compact_space() { return metaopt::space::space_from_json(read_json(fixture("compact_space.json"))); }

metaopt::orch::OptimizationRunConfig ar2_run_config(const fs::path& output_dir) {
    metaopt::orch::OptimizationRunConfig c;
    c.dataset = fixture("ar2.csv");
    c.output_dir = output_dir;
    c.search_space = compact_space();
    c.seed = 0;
    return c;
}

metaopt::llm::TranscriptEntry reply_entry(const std::string& reply, double latency) {
    metaopt::llm::TranscriptEntry e;
    e.raw_reply = reply;
    e.latency = latency;
    return e;
}

std::string recommendation_reply(const json& config) {
    json j = config;
    json reasoning = json::object();
    for (const auto& [k, v] : config.items()) reasoning[k] = "adjusted";
    j["reasoning"] = reasoning;
    return j.dump();
}

int shell(const std::string& command, std::string* out) {
    FILE* pipe = ::popen(command.c_str(), "r");
    if (pipe == nullptr) return -1;
    std::string text;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) text.append(buf, n);
    const int status = ::pclose(pipe);
    if (out != nullptr) *out = text;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace support
