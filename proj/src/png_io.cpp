#include "cbct/png_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "cbct/errors.hpp"

namespace cbct {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

void write_chunk(std::ofstream& out, const char type[4], const std::vector<uint8_t>& payload) {
    std::vector<uint8_t> len;
    put_u32(len, uint32_t(payload.size()));
    out.write(reinterpret_cast<const char*>(len.data()), 4);
    std::vector<uint8_t> body(type, type + 4);
    body.insert(body.end(), payload.begin(), payload.end());
    out.write(reinterpret_cast<const char*>(body.data()), std::streamsize(body.size()));
    const uint32_t crc = uint32_t(::crc32(0, body.data(), uInt(body.size())));
    std::vector<uint8_t> crc_bytes;
    put_u32(crc_bytes, crc);
    out.write(reinterpret_cast<const char*>(crc_bytes.data()), 4);
}

}  // namespace

void write_png_gray8(const std::string& path, int64_t width, int64_t height,
                     const std::vector<uint8_t>& pixels) {
    if (width < 1 || height < 1) throw ParamError("png dimensions must be positive");
    if (int64_t(pixels.size()) != width * height)
        throw ShapeError("png pixel buffer does not match dimensions");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write png: " + path);
    static const uint8_t magic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    out.write(reinterpret_cast<const char*>(magic), 8);

    std::vector<uint8_t> ihdr;
    put_u32(ihdr, uint32_t(width));
    put_u32(ihdr, uint32_t(height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter
    ihdr.push_back(0);  // no interlace
    write_chunk(out, "IHDR", ihdr);

    // filter byte 0 per scanline
    std::vector<uint8_t> raw;
    raw.reserve((width + 1) * height);
    for (int64_t y = 0; y < height; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), pixels.begin() + y * width, pixels.begin() + (y + 1) * width);
    }
    uLongf comp_len = compressBound(uLong(raw.size()));
    std::vector<uint8_t> compressed(comp_len);
    if (compress2(compressed.data(), &comp_len, raw.data(), uLong(raw.size()), 6) != Z_OK)
        throw IoError("zlib compression failed for " + path);
    compressed.resize(comp_len);
    write_chunk(out, "IDAT", compressed);
    write_chunk(out, "IEND", {});
    if (!out) throw IoError("short write on png: " + path);
}

std::vector<uint8_t> slice_gray8(const Volume& vol, SlicePlane plane, int64_t index,
                                 double window, double level, int64_t& out_w, int64_t& out_h) {
    if (window <= 0) {
        auto [mn, mx] = std::minmax_element(vol.data.begin(), vol.data.end());
        window = std::max(1e-12, double(*mx) - double(*mn));
        level = 0.5 * (double(*mx) + double(*mn));
    }
    const double lo = level - 0.5 * window;
    auto to_byte = [&](float v) {
        const double t = (double(v) - lo) / window * 255.0;
        return uint8_t(std::clamp(t, 0.0, 255.0));
    };
    std::vector<uint8_t> img;
    switch (plane) {
        case SlicePlane::kAxial:
            if (index < 0 || index >= vol.d) throw ParamError("axial slice index out of range");
            out_w = vol.w;
            out_h = vol.h;
            img.resize(out_w * out_h);
            for (int64_t y = 0; y < vol.h; ++y)
                for (int64_t x = 0; x < vol.w; ++x) img[y * vol.w + x] = to_byte(vol.at(index, y, x));
            break;
        case SlicePlane::kCoronal:
            if (index < 0 || index >= vol.h) throw ParamError("coronal slice index out of range");
            out_w = vol.w;
            out_h = vol.d;
            img.resize(out_w * out_h);
            for (int64_t z = 0; z < vol.d; ++z)
                for (int64_t x = 0; x < vol.w; ++x) img[z * vol.w + x] = to_byte(vol.at(z, index, x));
            break;
        case SlicePlane::kSagittal:
            if (index < 0 || index >= vol.w) throw ParamError("sagittal slice index out of range");
            out_w = vol.h;
            out_h = vol.d;
            img.resize(out_w * out_h);
            for (int64_t z = 0; z < vol.d; ++z)
                for (int64_t y = 0; y < vol.h; ++y) img[z * vol.h + y] = to_byte(vol.at(z, y, index));
            break;
    }
    return img;
}

void export_slices(const Volume& vol, const std::string& dir, double window, double level,
                   int64_t index) {
    std::filesystem::create_directories(dir);
    const struct {
        SlicePlane plane;
        const char* name;
        int64_t extent;
    } planes[] = {{SlicePlane::kAxial, "axial", vol.d},
                  {SlicePlane::kCoronal, "coronal", vol.h},
                  {SlicePlane::kSagittal, "sagittal", vol.w}};
    for (const auto& p : planes) {
        const int64_t idx = index >= 0 ? std::min(index, p.extent - 1) : p.extent / 2;
        int64_t w = 0, h = 0;
        const auto img = slice_gray8(vol, p.plane, idx, window, level, w, h);
        write_png_gray8(dir + "/" + p.name + "_" + std::to_string(idx) + ".png", w, h, img);
    }
}

}  // namespace cbct
