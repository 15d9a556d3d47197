#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace ckp {

using Json = nlohmann::json;

/// Canonical serialization: keys sorted lexicographically by code point
/// (nlohmann's default object ordering), compact separators, UTF-8, one
/// trailing LF. Hashing and round-trip checks rely on these exact bytes.
std::string canonical_dump(const Json& doc);

/// Parse a complete buffer as JSON; trailing garbage is an error.
/// `context` names the source in the error message.
Json parse_json(std::string_view text, const std::string& context);

std::string read_file(const std::filesystem::path& path);

/// Write-temp-then-rename. A reader never observes a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

} // namespace ckp
