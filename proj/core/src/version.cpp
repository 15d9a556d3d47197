#include "ckp/version.hpp"

#include <algorithm>
#include <cctype>

#include "ckp/error.hpp"

namespace ckp {

Version Version::parse(std::string_view text) {
    if (text.empty()) {
        raise(ErrorCode::InvalidVersion, "empty version string");
    }

    std::vector<Part> parts;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t sep = text.find_first_of(".-", pos);
        std::string_view token =
            text.substr(pos, sep == std::string_view::npos ? std::string_view::npos : sep - pos);
        if (!token.empty()) {
            bool numeric = std::all_of(token.begin(), token.end(), [](unsigned char c) {
                return std::isdigit(c) != 0;
            });
            // 20-digit runs overflow uint64; keep them as strings
            if (numeric && token.size() <= 19) {
                std::uint64_t value = 0;
                for (char c : token) {
                    value = value * 10 + static_cast<std::uint64_t>(c - '0');
                }
                parts.emplace_back(value);
            } else {
                std::string lowered(token);
                std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                               [](unsigned char c) { return std::tolower(c); });
                parts.emplace_back(std::move(lowered));
            }
        }
        if (sep == std::string_view::npos) {
            break;
        }
        pos = sep + 1;
    }

    if (parts.empty()) {
        raise(ErrorCode::InvalidVersion, "no version components in '" + std::string(text) + "'");
    }
    return Version(std::move(parts));
}

std::string Version::str() const {
    std::string out;
    for (size_t i = 0; i < parts_.size(); ++i) {
        if (i > 0) {
            out.push_back('.');
        }
        if (std::holds_alternative<std::uint64_t>(parts_[i])) {
            out += std::to_string(std::get<std::uint64_t>(parts_[i]));
        } else {
            out += std::get<std::string>(parts_[i]);
        }
    }
    return out;
}

int Version::compare(const Version& a, const Version& b) {
    const auto& pa = a.parts_;
    const auto& pb = b.parts_;
    size_t n = std::min(pa.size(), pb.size());
    for (size_t i = 0; i < n; ++i) {
        const bool a_int = std::holds_alternative<std::uint64_t>(pa[i]);
        const bool b_int = std::holds_alternative<std::uint64_t>(pb[i]);
        if (a_int && b_int) {
            auto x = std::get<std::uint64_t>(pa[i]);
            auto y = std::get<std::uint64_t>(pb[i]);
            if (x != y) {
                return x < y ? -1 : 1;
            }
        } else if (!a_int && !b_int) {
            const auto& x = std::get<std::string>(pa[i]);
            const auto& y = std::get<std::string>(pb[i]);
            if (x != y) {
                return x < y ? -1 : 1;
            }
        } else {
            // integer outranks string at the same position (rc1 < final)
            return a_int ? 1 : -1;
        }
    }
    if (pa.size() != pb.size()) {
        return pa.size() < pb.size() ? -1 : 1;
    }
    return 0;
}

} // namespace ckp
