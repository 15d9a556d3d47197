#include "ckp/json_util.hpp"

#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <system_error>

#include "ckp/error.hpp"

namespace fs = std::filesystem;

namespace ckp {

std::string canonical_dump(const Json& doc) {
    // nlohmann::json keeps object members in a std::map keyed by byte-wise
    // string comparison, which for UTF-8 equals code-point order.
    return doc.dump() + "\n";
}

Json parse_json(std::string_view text, const std::string& context) {
    Json doc = Json::parse(text, nullptr, false);
    if (doc.is_discarded()) {
        raise(ErrorCode::StoreIoError, "invalid JSON in " + context);
    }
    return doc;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        raise(ErrorCode::StoreIoError, "cannot read " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
    static std::mt19937_64 rng{std::random_device{}()};
    fs::path tmp = path;
    tmp += ".tmp" + std::to_string(rng());

    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            raise(ErrorCode::StoreIoError, "cannot write " + tmp.string());
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            raise(ErrorCode::StoreIoError, "short write to " + tmp.string());
        }
    }

    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        raise(ErrorCode::StoreIoError, "rename failed for " + path.string() + ": " + ec.message());
    }
}

} // namespace ckp
