#include "hegs/image_io.hpp"

#include <cstring>
#include <fstream>

#include "hegs/common.hpp"

#ifdef HEGS_HAVE_ZLIB
#include <zlib.h>
#endif

namespace hegs {

namespace {

uint32_t read_be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | p[3];
}

void write_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

uint32_t crc32_of(const uint8_t* data, size_t len, uint32_t seed) {
#ifdef HEGS_HAVE_ZLIB
    return static_cast<uint32_t>(crc32(seed, data, static_cast<uInt>(len)));
#else
    (void)data; (void)len; (void)seed;
    return 0;
#endif
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

} // namespace

std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    HEGS_CHECK(in.good(), "cannot open " << path);
    return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    HEGS_CHECK(out.good(), "cannot write " << path);
    out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

ImageU8 decode_png(const std::vector<uint8_t>& bytes) {
#ifndef HEGS_HAVE_ZLIB
    throw Error("png support requires zlib");
#else
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    HEGS_CHECK(bytes.size() > 8 && std::memcmp(bytes.data(), sig, 8) == 0, "not a PNG file");

    ImageU8 img;
    int bit_depth = 0, color_type = 0;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    while (pos + 8 <= bytes.size()) {
        const uint32_t len = read_be32(&bytes[pos]);
        const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
        const uint8_t* data = &bytes[pos + 8];
        HEGS_CHECK(pos + 12 + len <= bytes.size(), "truncated PNG chunk");
        if (std::memcmp(type, "IHDR", 4) == 0) {
            HEGS_CHECK(len == 13, "bad IHDR");
            img.width = read_be32(data);
            img.height = read_be32(data + 4);
            bit_depth = data[8];
            color_type = data[9];
            HEGS_CHECK(data[12] == 0, "interlaced PNG not supported");
            HEGS_CHECK(bit_depth == 8, "only 8-bit PNG supported");
            HEGS_CHECK(color_type == 0 || color_type == 2 || color_type == 4 || color_type == 6,
                       "unsupported PNG color type " << color_type);
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    HEGS_CHECK(img.width > 0 && img.height > 0, "PNG missing IHDR");
    const int src_ch = color_type == 0 ? 1 : color_type == 2 ? 3 : color_type == 4 ? 2 : 4;

    const size_t row = static_cast<size_t>(img.width) * src_ch;
    std::vector<uint8_t> raw((row + 1) * img.height);
    uLongf raw_len = raw.size();
    const int rc = uncompress(raw.data(), &raw_len, idat.data(), idat.size());
    HEGS_CHECK(rc == Z_OK && raw_len == raw.size(), "PNG inflate failed (rc=" << rc << ")");

    // undo per-row filters
    std::vector<uint8_t> flat(row * img.height);
    for (int64_t y = 0; y < img.height; ++y) {
        const uint8_t filter = raw[y * (row + 1)];
        const uint8_t* src = &raw[y * (row + 1) + 1];
        uint8_t* dst = &flat[y * row];
        const uint8_t* prev = y > 0 ? &flat[(y - 1) * row] : nullptr;
        for (size_t x = 0; x < row; ++x) {
            const int a = x >= static_cast<size_t>(src_ch) ? dst[x - src_ch] : 0;
            const int b = prev ? prev[x] : 0;
            const int c = (prev && x >= static_cast<size_t>(src_ch)) ? prev[x - src_ch] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw Error("unknown PNG filter");
            }
            dst[x] = static_cast<uint8_t>(v);
        }
    }

    // normalize to 1/3/4 channels (gray+alpha collapses to gray)
    if (color_type == 4) {
        img.channels = 1;
        img.pixels.resize(static_cast<size_t>(img.width) * img.height);
        for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = flat[i * 2];
    } else {
        img.channels = src_ch;
        img.pixels = std::move(flat);
    }
    return img;
#endif
}

std::vector<uint8_t> encode_png(const ImageU8& img) {
#ifndef HEGS_HAVE_ZLIB
    throw Error("png support requires zlib");
#else
    HEGS_CHECK(img.channels == 1 || img.channels == 3 || img.channels == 4,
               "encode_png supports 1/3/4 channels");
    const int color_type = img.channels == 1 ? 0 : img.channels == 3 ? 2 : 6;
    const size_t row = static_cast<size_t>(img.width) * img.channels;

    std::vector<uint8_t> raw((row + 1) * img.height);
    for (int64_t y = 0; y < img.height; ++y) {
        raw[y * (row + 1)] = 0;  // filter none
        std::memcpy(&raw[y * (row + 1) + 1], &img.pixels[y * row], row);
    }
    uLongf bound = compressBound(raw.size());
    std::vector<uint8_t> compressed(bound);
    const int rc = compress2(compressed.data(), &bound, raw.data(), raw.size(), 6);
    HEGS_CHECK(rc == Z_OK, "PNG deflate failed");
    compressed.resize(bound);

    std::vector<uint8_t> out;
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.insert(out.end(), sig, sig + 8);
    auto chunk = [&](const char* type, const std::vector<uint8_t>& data) {
        write_be32(out, static_cast<uint32_t>(data.size()));
        std::vector<uint8_t> body(type, type + 4);
        body.insert(body.end(), data.begin(), data.end());
        out.insert(out.end(), body.begin(), body.end());
        write_be32(out, crc32_of(body.data(), body.size(), crc32_of(nullptr, 0, 0)));
    };
    std::vector<uint8_t> ihdr;
    write_be32(ihdr, static_cast<uint32_t>(img.width));
    write_be32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8);
    ihdr.push_back(static_cast<uint8_t>(color_type));
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    chunk("IHDR", ihdr);
    chunk("IDAT", compressed);
    chunk("IEND", {});
    return out;
#endif
}

void write_ppm(const std::string& path, int64_t width, int64_t height,
               const std::vector<uint8_t>& rgb) {
    HEGS_CHECK(static_cast<int64_t>(rgb.size()) == width * height * 3, "ppm buffer size");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    HEGS_CHECK(out.good(), "cannot write " << path);
    out << "P6\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(rgb.data()), rgb.size());
}

ImageU8 read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    HEGS_CHECK(in.good(), "cannot open " << path);
    std::string magic;
    in >> magic;
    HEGS_CHECK(magic == "P6", "only binary P6 ppm supported");
    ImageU8 img;
    int maxv = 0;
    in >> img.width >> img.height >> maxv;
    HEGS_CHECK(maxv == 255, "ppm maxval must be 255");
    in.get();
    img.channels = 3;
    img.pixels.resize(static_cast<size_t>(img.width) * img.height * 3);
    in.read(reinterpret_cast<char*>(img.pixels.data()), img.pixels.size());
    HEGS_CHECK(in.gcount() == static_cast<std::streamsize>(img.pixels.size()),
               "ppm truncated");
    return img;
}

ImageU8 load_image_file(const std::string& path) {
    auto ends_with = [&](const char* suffix) {
        const size_t n = std::strlen(suffix);
        if (path.size() < n) return false;
        for (size_t i = 0; i < n; ++i)
            if (std::tolower(path[path.size() - n + i]) != suffix[i]) return false;
        return true;
    };
    if (ends_with(".png")) return decode_png(read_file_bytes(path));
    if (ends_with(".ppm")) return read_ppm(path);
    if (ends_with(".jpg") || ends_with(".jpeg"))
        throw Error("jpeg decoding is not supported; convert " + path + " to png");
    // fall back on magic sniffing
    auto bytes = read_file_bytes(path);
    if (bytes.size() > 8 && bytes[0] == 137 && bytes[1] == 'P') return decode_png(bytes);
    if (bytes.size() > 2 && bytes[0] == 'P' && bytes[1] == '6') return read_ppm(path);
    throw Error("unrecognized image format: " + path);
}

} // namespace hegs
