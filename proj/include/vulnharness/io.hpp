#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace vulnharness {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Writes via a temp file + rename so readers never observe a partial file.
void write_text_file_atomic(const std::filesystem::path& path, std::string_view text);

// Line-delimited JSON. Blank lines are skipped; a malformed line is an io error naming
// the file and line number, except a truncated final line, which `read_jsonl` drops
// when `tolerate_torn_tail` is set (the tail of an append-only log after a crash).
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path,
                                       bool tolerate_torn_tail = false);
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows);
void append_jsonl(const std::filesystem::path& path, const nlohmann::json& row);

}  // namespace vulnharness
