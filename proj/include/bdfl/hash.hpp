#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

namespace bdfl {

// 32-byte SHA-256 digest. One hash function project-wide so coordinates,
// fingerprints and model digests are reproducible across runs.
struct Digest {
    std::array<std::uint8_t, 32> bytes{};

    bool operator==(const Digest&) const = default;
    auto operator<=>(const Digest&) const = default;

    std::string hex() const {
        static const char* k = "0123456789abcdef";
        std::string out;
        out.reserve(64);
        for (auto b : bytes) {
            out.push_back(k[b >> 4]);
            out.push_back(k[b & 0xf]);
        }
        return out;
    }

    // Short form for logs and CSV rows.
    std::string hex12() const { return hex().substr(0, 12); }

    // Big-endian read of the first 8 bytes.
    std::uint64_t leading_u64() const {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v = (v << 8) | bytes[static_cast<std::size_t>(i)];
        return v;
    }
};

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1)
            throw std::runtime_error("sha256: init failed");
    }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    Sha256& update(const void* data, std::size_t len) {
        if (EVP_DigestUpdate(ctx_, data, len) != 1)
            throw std::runtime_error("sha256: update failed");
        return *this;
    }
    Sha256& update(std::string_view s) { return update(s.data(), s.size()); }
    Sha256& update(std::span<const std::uint8_t> s) { return update(s.data(), s.size()); }
    Sha256& update_u64(std::uint64_t v) {
        std::uint8_t buf[8];
        for (int i = 7; i >= 0; --i) {
            buf[i] = static_cast<std::uint8_t>(v & 0xff);
            v >>= 8;
        }
        return update(buf, 8);
    }

    Digest finish() {
        Digest d;
        unsigned int n = 0;
        if (EVP_DigestFinal_ex(ctx_, d.bytes.data(), &n) != 1 || n != 32)
            throw std::runtime_error("sha256: final failed");
        return d;
    }

private:
    EVP_MD_CTX* ctx_;
};

inline Digest sha256(std::string_view s) { return Sha256().update(s).finish(); }

// Hash a vector of doubles over its raw little-endian IEEE-754 bytes.
// Any single-bit change in any weight changes the digest.
inline Digest sha256_doubles(std::span<const double> w) {
    static_assert(sizeof(double) == 8);
    Sha256 h;
    if (!w.empty())
        h.update(w.data(), w.size() * sizeof(double));
    return h.finish();
}

}  // namespace bdfl
