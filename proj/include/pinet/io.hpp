#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pinet {

/// Throws IoError if the file cannot be read.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it into place, so readers
/// never observe a partially written file. Creates parent directories.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

/// True when `bytes` start with the gzip magic 1f 8b.
bool is_gzip(std::span<const std::uint8_t> bytes);
/// Inflates a gzip stream. Throws ParseError on corrupt or truncated input.
std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes);

}  // namespace pinet
