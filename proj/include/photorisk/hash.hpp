#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

namespace photorisk {

// FNV-1a 64-bit. Used as the integrity checksum for dataset manifests and
// weight-file payloads, and by tests to compare whole files.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64_file(const std::filesystem::path& path);

std::string to_hex(std::uint64_t v);

}  // namespace photorisk
