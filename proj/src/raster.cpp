#include "oaip/raster.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace oaip {

namespace {

[[noreturn]] void fail(const std::string& path, std::streampos at, const std::string& what) {
    throw std::runtime_error(path + ": " + what + " (byte offset " +
                             std::to_string(long(at)) + ")");
}

// One PNM header token, skipping whitespace and '#' comments.
long pnm_int(std::ifstream& f, const std::string& path) {
    int ch = f.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = f.get();
        } else if (!std::isspace(ch)) {
            break;
        }
        ch = f.get();
    }
    if (ch == EOF || !std::isdigit(ch)) fail(path, f.tellg(), "expected integer in header");
    long v = 0;
    while (ch != EOF && std::isdigit(ch)) {
        v = v * 10 + (ch - '0');
        if (v > (1L << 30)) fail(path, f.tellg(), "dimension overflow");
        ch = f.get();
    }
    return v;
}

RasterImage load_pnm(std::ifstream& f, const std::string& path, bool color) {
    long w = pnm_int(f, path);
    long h = pnm_int(f, path);
    long maxval = pnm_int(f, path);
    if (w < 1 || h < 1) fail(path, f.tellg(), "non-positive dimensions");
    if (maxval < 1 || maxval > 255)
        fail(path, f.tellg(), "unsupported maxval " + std::to_string(maxval) + " (8-bit only)");
    // exactly one whitespace byte separates header and payload; already eaten
    const int in_ch = color ? 3 : 1;
    std::vector<uint8_t> raw(size_t(w) * h * in_ch);
    std::streampos at = f.tellg();
    f.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (size_t(f.gcount()) != raw.size())
        fail(path, at, "truncated payload: got " + std::to_string(f.gcount()) + " of " +
                           std::to_string(raw.size()) + " bytes");

    RasterImage img;
    img.height = int(h);
    img.width = int(w);
    img.channels = 3;
    img.pixels.resize(size_t(w) * h * 3);
    for (size_t p = 0; p < size_t(w) * h; ++p)
        for (int c = 0; c < 3; ++c)
            img.pixels[p * 3 + c] = float(raw[p * in_ch + (color ? c : 0)]);
    return img;
}

uint32_t read_u32le(std::ifstream& f, const std::string& path) {
    uint8_t b[4];
    std::streampos at = f.tellg();
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f.good()) fail(path, at, "truncated header");
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

RasterImage load_rawf(std::ifstream& f, const std::string& path) {
    uint32_t h = read_u32le(f, path);
    uint32_t w = read_u32le(f, path);
    uint32_t c = read_u32le(f, path);
    if (h == 0 || w == 0 || h > (1u << 20) || w > (1u << 20))
        fail(path, f.tellg(), "dimension overflow");
    if (c != 1 && c != 3) fail(path, f.tellg(), "channel count must be 1 or 3");
    std::vector<float> raw(size_t(h) * w * c);
    std::streampos at = f.tellg();
    f.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size() * 4));
    if (size_t(f.gcount()) != raw.size() * 4)
        fail(path, at, "truncated payload: got " + std::to_string(f.gcount()) + " of " +
                           std::to_string(raw.size() * 4) + " bytes");
    RasterImage img;
    img.height = int(h);
    img.width = int(w);
    img.channels = 3;
    img.pixels.resize(size_t(h) * w * 3);
    for (size_t p = 0; p < size_t(h) * w; ++p)
        for (int ch = 0; ch < 3; ++ch)
            img.pixels[p * 3 + ch] = raw[p * c + (c == 3 ? ch : 0)];
    return img;
}

}  // namespace

RasterImage load_raster(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(path + ": cannot open");
    char magic[4] = {0, 0, 0, 0};
    f.read(magic, 2);
    if (!f.good()) fail(path, 0, "file too short for a magic number");
    if (magic[0] == 'P' && magic[1] == '6') return load_pnm(f, path, true);
    if (magic[0] == 'P' && magic[1] == '5') return load_pnm(f, path, false);
    f.read(magic + 2, 2);
    if (f.good() && std::memcmp(magic, "RAWF", 4) == 0) return load_rawf(f, path);
    fail(path, 0, "unknown magic (expected P5, P6 or RAWF)");
}

void save_rawf(const std::string& path, const RasterImage& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    f.write("RAWF", 4);
    auto put_u32 = [&](uint32_t v) {
        uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
        f.write(reinterpret_cast<const char*>(b), 4);
    };
    put_u32(uint32_t(img.height));
    put_u32(uint32_t(img.width));
    put_u32(uint32_t(img.channels));
    f.write(reinterpret_cast<const char*>(img.pixels.data()),
            std::streamsize(img.pixels.size() * 4));
    if (!f.good()) throw std::runtime_error(path + ": write failed");
}

void save_pgm(const std::string& path, const std::vector<uint8_t>& gray, int height, int width) {
    if (gray.size() != size_t(height) * width)
        throw std::invalid_argument(path + ": pixel count does not match dimensions");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    f << "P5\n" << width << " " << height << "\n255\n";
    f.write(reinterpret_cast<const char*>(gray.data()), std::streamsize(gray.size()));
    if (!f.good()) throw std::runtime_error(path + ": write failed");
}

}  // namespace oaip
