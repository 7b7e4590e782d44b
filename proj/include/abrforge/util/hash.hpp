#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace abrforge {

std::string sha256_hex(std::string_view data);

// FNV-1a, for in-memory bucketing only.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace abrforge
