#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hegs {

struct ImageU8 {
    int64_t width = 0, height = 0;
    int channels = 0;  // 1, 3 or 4, interleaved rows
    std::vector<uint8_t> pixels;
};

// PNG (8-bit gray/RGB/RGBA, non-interlaced) and binary PPM (P6). JPEG files
// are rejected with a descriptive error.
ImageU8 load_image_file(const std::string& path);

ImageU8 decode_png(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> encode_png(const ImageU8& img);

void write_ppm(const std::string& path, int64_t width, int64_t height,
               const std::vector<uint8_t>& rgb);
ImageU8 read_ppm(const std::string& path);

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes);

} // namespace hegs
