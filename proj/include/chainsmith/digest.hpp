#pragma once

#include <string>
#include <string_view>

namespace chainsmith {

/// Lower-case hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

/// 64-bit key derived from the leading bytes of the SHA-256 of `bytes`.
/// Used to seed per-record samplers independently of processing order.
unsigned long long stable_hash64(std::string_view bytes);

}  // namespace chainsmith
