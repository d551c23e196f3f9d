#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

namespace archsearch {

// FNV-1a 64-bit. Fixed constants; used for the synthetic oracle noise,
// snapshot checksums and config hashes, all of which must be bit-stable
// across platforms. The raw-memory form carries a distinct name: with an
// overload, fnv1a64(char_ptr, seed) would silently bind the seed to `len`.
inline std::uint64_t fnv1a64_bytes(const void* data, std::size_t len,
                                   std::uint64_t h = 14695981039346656037ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 14695981039346656037ULL) {
    return fnv1a64_bytes(s.data(), s.size(), h);
}

// Shortest decimal form that round-trips a double exactly. Used anywhere a
// file must be byte-identical when regenerated (tree dumps, snapshots).
std::string format_double(double v);

// Fixed-point with `digits` decimals, locale-independent.
std::string format_fixed(double v, int digits);

std::vector<std::string> split(std::string_view s, char sep);

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace archsearch
