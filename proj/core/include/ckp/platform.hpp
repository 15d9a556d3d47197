#pragma once

#include <string>

#include <json.hpp>

namespace ckp {

/// Identity of the machine an experiment ran on. The hostname is stored
/// hashed so records can be shared without leaking machine names.
struct PlatformFingerprint {
    std::string os;
    std::string arch;
    std::string hostname_hash;

    static PlatformFingerprint current();

    nlohmann::json to_json() const;
    static PlatformFingerprint from_json(const nlohmann::json& doc);

    bool operator==(const PlatformFingerprint&) const = default;
};

} // namespace ckp
