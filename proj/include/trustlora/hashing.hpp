#pragma once

// Content hashing for artifact ids. Ids are SHA-256 over a canonical
// structural description plus the raw weight payload, so provenance edits
// never change an artifact's identity.

#include <openssl/evp.h>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trustlora/errors.hpp"

namespace trustlora {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) {
        if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
            throw NumericError("sha256: failed to initialize digest context");
        }
    }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const void* bytes, std::size_t n) {
        if (EVP_DigestUpdate(ctx_, bytes, n) != 1) {
            throw NumericError("sha256: digest update failed");
        }
    }
    void update(std::string_view s) { update(s.data(), s.size()); }
    void update(std::span<const std::uint8_t> b) { update(b.data(), b.size()); }

    std::string hex_digest() {
        unsigned char out[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_, out, &len) != 1) {
            throw NumericError("sha256: digest finalization failed");
        }
        static const char* hexchars = "0123456789abcdef";
        std::string hex;
        hex.reserve(2 * len);
        for (unsigned int i = 0; i < len; ++i) {
            hex.push_back(hexchars[out[i] >> 4]);
            hex.push_back(hexchars[out[i] & 0xF]);
        }
        return hex;
    }

private:
    EVP_MD_CTX* ctx_;
};

inline std::string sha256_hex(std::string_view s) {
    Sha256 h;
    h.update(s);
    return h.hex_digest();
}

inline std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    Sha256 h;
    h.update(bytes);
    return h.hex_digest();
}

}  // namespace trustlora
