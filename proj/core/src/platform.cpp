#include "ckp/platform.hpp"

#include <sys/utsname.h>

#include "ckp/hash.hpp"

namespace ckp {

PlatformFingerprint PlatformFingerprint::current() {
    PlatformFingerprint fp;
    struct utsname info {};
    if (uname(&info) == 0) {
        fp.os = info.sysname;
        fp.arch = info.machine;
        fp.hostname_hash = sha256_hex(info.nodename).substr(0, 12);
    } else {
        fp.os = "unknown";
        fp.arch = "unknown";
        fp.hostname_hash = sha256_hex("").substr(0, 12);
    }
    return fp;
}

nlohmann::json PlatformFingerprint::to_json() const {
    return {{"os", os}, {"arch", arch}, {"hostname_hash", hostname_hash}};
}

PlatformFingerprint PlatformFingerprint::from_json(const nlohmann::json& doc) {
    PlatformFingerprint fp;
    fp.os = doc.value("os", "");
    fp.arch = doc.value("arch", "");
    fp.hostname_hash = doc.value("hostname_hash", "");
    return fp;
}

} // namespace ckp
