#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace dime {

/// Writes to a sibling temp file, fsyncs, then renames over `path`.
void atomic_write_file(const std::filesystem::path& path, std::string_view contents);

/// Throws IoError if the file cannot be read.
std::string read_file(const std::filesystem::path& path);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view bytes);

}  // namespace dime
