#include <chainsmith/digest.hpp>

#include <openssl/evp.h>

#include <array>
#include <stdexcept>

namespace chainsmith {

namespace {

std::array<unsigned char, 32> sha256(std::string_view bytes) {
    std::array<unsigned char, 32> out{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size())
        throw std::runtime_error("sha256 failed");
    return out;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
    static constexpr char kHex[] = "0123456789abcdef";
    const auto d = sha256(bytes);
    std::string s;
    s.reserve(64);
    for (unsigned char c : d) {
        s.push_back(kHex[c >> 4]);
        s.push_back(kHex[c & 0xF]);
    }
    return s;
}

unsigned long long stable_hash64(std::string_view bytes) {
    const auto d = sha256(bytes);
    unsigned long long h = 0;
    for (int i = 0; i < 8; ++i) h = (h << 8) | d[i];
    return h;
}

}  // namespace chainsmith
