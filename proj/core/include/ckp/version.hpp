#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ckp {

/// Ordered version identifier parsed from raw tool output.
///
/// Parsing splits on `.` and `-`; all-digit tokens become integers, anything
/// else a lowercase string. Comparison is component-wise: integers compare
/// numerically, strings lexicographically, an integer outranks a string at
/// the same position, and a longer version with an equal prefix outranks the
/// shorter one (so 3.3.1 > 3.3 and 8.1-rc1 < 8.1.0).
class Version {
  public:
    using Part = std::variant<std::uint64_t, std::string>;

    Version() = default;
    explicit Version(std::vector<Part> parts) : parts_(std::move(parts)) {}

    static Version parse(std::string_view text);

    const std::vector<Part>& parts() const { return parts_; }
    bool empty() const { return parts_.empty(); }

    /// Canonical rendering, parts joined with '.'. parse(str()) == *this.
    std::string str() const;

    bool operator==(const Version& other) const { return compare(*this, other) == 0; }
    bool operator!=(const Version& other) const { return compare(*this, other) != 0; }
    bool operator<(const Version& other) const { return compare(*this, other) < 0; }
    bool operator>(const Version& other) const { return compare(*this, other) > 0; }
    bool operator<=(const Version& other) const { return compare(*this, other) <= 0; }
    bool operator>=(const Version& other) const { return compare(*this, other) >= 0; }

    static int compare(const Version& a, const Version& b);

  private:
    std::vector<Part> parts_;
};

} // namespace ckp
