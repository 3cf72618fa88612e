#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace photorisk {

// Minimal binary netpbm I/O: 8-bit PGM (P5) and PPM (P6), maxval 255.
// The readers accept comments and arbitrary whitespace in the header and
// throw ImageFormatError on anything malformed or truncated.

struct GrayImage {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> pixels;  // row-major, height*width

    bool operator==(const GrayImage&) const = default;
};

struct RgbImage {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> pixels;  // row-major, height*width*3

    bool operator==(const RgbImage&) const = default;
};

void write_pgm(const std::filesystem::path& path, const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);

void write_ppm(const std::filesystem::path& path, const RgbImage& img);
RgbImage read_ppm(const std::filesystem::path& path);

}  // namespace photorisk
