#include "photorisk/netpbm.hpp"

#include <fstream>
#include <limits>
#include <string>

#include "photorisk/errors.hpp"

namespace photorisk {

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in, const std::string& path) {
    std::string tok;
    int ch = in.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
        } else if (std::isspace(ch)) {
            ch = in.get();
        } else {
            break;
        }
    }
    while (ch != EOF && !std::isspace(ch)) {
        tok.push_back(static_cast<char>(ch));
        ch = in.get();
    }
    if (tok.empty())
        throw ImageFormatError(path + ": truncated netpbm header");
    return tok;
}

std::size_t parse_dim(const std::string& tok, const std::string& path) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(tok, &pos);
    } catch (const std::exception&) {
        throw ImageFormatError(path + ": bad header field '" + tok + "'");
    }
    if (pos != tok.size() || v == 0)
        throw ImageFormatError(path + ": bad header field '" + tok + "'");
    return static_cast<std::size_t>(v);
}

std::vector<std::uint8_t> read_raster(const std::filesystem::path& path,
                                      const char* magic, std::size_t& w,
                                      std::size_t& h, std::size_t channels) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageFormatError(path.string() + ": cannot open");
    const std::string p = path.string();
    if (next_token(in, p) != magic)
        throw ImageFormatError(p + ": not a " + magic + " file");
    w = parse_dim(next_token(in, p), p);
    h = parse_dim(next_token(in, p), p);
    const std::size_t maxval = parse_dim(next_token(in, p), p);
    if (maxval != 255)
        throw ImageFormatError(p + ": unsupported maxval " + std::to_string(maxval));
    // The header terminator is the single whitespace byte already consumed
    // by next_token; raster data starts here.
    const std::size_t n = w * h * channels;
    std::vector<std::uint8_t> data(n);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw ImageFormatError(p + ": truncated raster data");
    return data;
}

void write_raster(const std::filesystem::path& path, const char* magic,
                  std::size_t w, std::size_t h,
                  const std::vector<std::uint8_t>& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ImageFormatError(path.string() + ": cannot open for writing");
    out << magic << "\n" << w << " " << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    if (!out) throw ImageFormatError(path.string() + ": write failed");
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
    if (img.pixels.size() != img.width * img.height)
        throw ImageFormatError(path.string() + ": pixel buffer does not match size");
    write_raster(path, "P5", img.width, img.height, img.pixels);
}

GrayImage read_pgm(const std::filesystem::path& path) {
    GrayImage img;
    img.pixels = read_raster(path, "P5", img.width, img.height, 1);
    return img;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
    if (img.pixels.size() != img.width * img.height * 3)
        throw ImageFormatError(path.string() + ": pixel buffer does not match size");
    write_raster(path, "P6", img.width, img.height, img.pixels);
}

RgbImage read_ppm(const std::filesystem::path& path) {
    RgbImage img;
    img.pixels = read_raster(path, "P6", img.width, img.height, 3);
    return img;
}

}  // namespace photorisk
