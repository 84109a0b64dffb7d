// Raster ingestion: binary PPM (P6) and PGM (P5) at 8 bit, plus the RAWF
// float container. Single-channel inputs are replicated to three channels.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace oaip {

struct RasterImage {
    int height = 0, width = 0, channels = 0;  // channels is 3 after load
    std::vector<float> pixels;                // row-major, channel-interleaved

    float at(int y, int x, int c) const {
        return pixels[(size_t(y) * width + x) * channels + c];
    }
    size_t size() const { return pixels.size(); }
};

// Sniffs P6/P5/RAWF by magic; pixel values in [0,255] for PNM, verbatim for
// RAWF. Errors carry byte offsets.
RasterImage load_raster(const std::string& path);

void save_rawf(const std::string& path, const RasterImage& img);

// 8-bit binary PGM from row-major gray bytes.
void save_pgm(const std::string& path, const std::vector<uint8_t>& gray, int height, int width);

}  // namespace oaip
