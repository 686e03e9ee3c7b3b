#pragma once

#include <cstdint>
#include <cstddef>
#include <string>
#include <string_view>

namespace patsvd {

/// 64-bit FNV-1a, used for artifact checksums and seed domain separation.
inline uint64_t fnv1a64(const void* data, size_t len, uint64_t state = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        state ^= p[i];
        state *= 0x100000001b3ull;
    }
    return state;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t state = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), state);
}

// String literals must hash as strings; without this overload a literal plus
// a state argument would silently select (const void*, size_t).
inline uint64_t fnv1a64(const char* s, uint64_t state = 0xcbf29ce484222325ull) {
    return fnv1a64(std::string_view(s), state);
}

/// Derives a stream seed from a master seed, a textual domain tag and an
/// index; distinct tags can never collide with each other's streams.
inline uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t index) {
    uint64_t h = fnv1a64(&master, sizeof master);
    h = fnv1a64(tag, h);
    h = fnv1a64(&index, sizeof index, h);
    return h;
}

} // namespace patsvd
