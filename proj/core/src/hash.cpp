#include "ckp/hash.hpp"

#include <array>
#include <cctype>
#include <fstream>

#include <openssl/evp.h>

#include "ckp/error.hpp"

namespace ckp {

namespace {

std::string to_hex(const unsigned char* digest, unsigned len) {
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

struct DigestCtx {
    EVP_MD_CTX* ctx;
    DigestCtx() : ctx(EVP_MD_CTX_new()) {
        if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
            raise(ErrorCode::InternalError, "sha256 init failed");
        }
    }
    ~DigestCtx() { EVP_MD_CTX_free(ctx); }
    DigestCtx(const DigestCtx&) = delete;
    DigestCtx& operator=(const DigestCtx&) = delete;
};

} // namespace

std::string sha256_hex(std::string_view data) {
    DigestCtx d;
    EVP_DigestUpdate(d.ctx, data.data(), data.size());
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_DigestFinal_ex(d.ctx, digest, &len);
    return to_hex(digest, len);
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        raise(ErrorCode::StoreIoError, "cannot read " + path.string());
    }
    DigestCtx d;
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        std::streamsize got = in.gcount();
        if (got > 0) {
            EVP_DigestUpdate(d.ctx, buf.data(), static_cast<size_t>(got));
        }
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_DigestFinal_ex(d.ctx, digest, &len);
    return to_hex(digest, len);
}

bool is_sha256_hex(std::string_view digest) {
    if (digest.size() != 64) {
        return false;
    }
    for (char c : digest) {
        if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) {
            return false;
        }
    }
    return true;
}

} // namespace ckp
