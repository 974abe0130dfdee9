#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "metaopt/orchestrator.hpp"

namespace support {

std::filesystem::path fixture(const std::string& name);
std::filesystem::path cli_path();

/// Fresh, empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& tag);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);
nlohmann::json read_json(const std::filesystem::path& path);

/// 8-parameter space with small ranges, for fast runs on the AR(2) fixture.
metaopt::space::SearchSpace compact_space();

/// Run config on the AR(2) fixture with the built-in trainer.
metaopt::orch::OptimizationRunConfig ar2_run_config(const std::filesystem::path& output_dir);

/// One transcript line holding only a reply (for lenient replay).
metaopt::llm::TranscriptEntry reply_entry(const std::string& reply, double latency = 1.0);

/// A flat recommendation reply for `config`.
std::string recommendation_reply(const nlohmann::json& config);

/// Runs a shell command, returning its exit status; stdout goes to `out`.
int shell(const std::string& command, std::string* out = nullptr);

}  // namespace support
