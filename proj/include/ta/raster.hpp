#ifndef TA_RASTER_HPP
#define TA_RASTER_HPP

#include "ta/error.hpp"

#include <png.h>

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace ta {

/// 8-bit row-major raster with 1 (gray) or 4 (RGBA) interleaved channels.
struct RasterImage {
    int width = 0;
    int height = 0;
    int channels = 4;
    std::vector<std::uint8_t> data;

    RasterImage() = default;
    RasterImage(int w, int h, int c) : width(w), height(h), channels(c) {
        if (w <= 0 || h <= 0) throw DomainError("raster dimensions must be positive");
        if (c != 1 && c != 4) throw DomainError("raster must have 1 or 4 channels");
        data.assign(static_cast<std::size_t>(w) * h * c, 0);
    }

    std::uint8_t* pixel(int x, int y) {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * channels;
    }
    const std::uint8_t* pixel(int x, int y) const {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * channels;
    }

    friend bool operator==(const RasterImage&, const RasterImage&) = default;
};

/// Gray and gray+alpha decode to 1 channel and RGBA respectively; everything else to RGBA.
inline RasterImage read_png(const std::string& path) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str())) {
        throw ValidationError("cannot read PNG '" + path + "': " + img.message);
    }
    const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0 && (img.format & PNG_FORMAT_FLAG_ALPHA) == 0;
    img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGBA;
    RasterImage out(static_cast<int>(img.width), static_cast<int>(img.height), gray ? 1 : 4);
    if (!png_image_finish_read(&img, nullptr, out.data.data(), 0, nullptr)) {
        png_image_free(&img);
        throw ValidationError("cannot decode PNG '" + path + "': " + img.message);
    }
    return out;
}

inline void write_png(const std::string& path, const RasterImage& raster) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(raster.width);
    img.height = static_cast<png_uint_32>(raster.height);
    img.format = raster.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGBA;
    if (!png_image_write_to_file(&img, path.c_str(), 0, raster.data.data(), 0, nullptr)) {
        throw ValidationError("cannot write PNG '" + path + "': " + img.message);
    }
}

} // namespace ta

#endif // TA_RASTER_HPP
