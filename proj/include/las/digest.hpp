#pragma once

#include <cstdint>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace las {

// 64-bit FNV-1a. Used for content digests and seed derivation throughout;
// everything that claims to be "deterministic given seed" bottoms out here
// or in mt19937_64, both of which are fixed bit-for-bit.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), h);
}

template <class T>
std::uint64_t fnv1a64_values(const std::vector<T>& v,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(v.data(), v.size() * sizeof(T), h);
}

inline std::uint64_t mix_u64(std::uint64_t h, std::uint64_t x) {
    return fnv1a64(&x, sizeof(x), h);
}

// Seed for a named sub-stream of a base seed, e.g. one oracle record or one
// synthetic sample. Stable across platforms.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t index = 0) {
    std::uint64_t h = fnv1a64(&base, sizeof(base));
    h = fnv1a64(tag, h);
    return mix_u64(h, index);
}

inline std::string hex_digest(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return s;
}

}  // namespace las
