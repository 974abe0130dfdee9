#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace metaopt::jsonl {

/// Appends `line` plus a newline with a single write(2) and fsyncs the file.
/// Throws Io.
void append_line(const std::filesystem::path& path, const std::string& line);

/// Complete lines of a JSON-lines file; a final line without a newline is a
/// write in progress and is skipped. A missing file yields no lines.
[[nodiscard]] std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Replaces the file contents atomically (write to a sibling, fsync, rename).
void write_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace metaopt::jsonl
