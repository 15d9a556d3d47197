#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace ckp {

/// Lowercase hex SHA-256 digest of a byte buffer.
std::string sha256_hex(std::string_view data);

/// Streaming digest of a file's contents.
std::string sha256_file(const std::filesystem::path& path);

bool is_sha256_hex(std::string_view digest);

} // namespace ckp
