#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace wsiseg {

/// Interleaved 8-bit RGB raster, row-major.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    RgbImage() = default;
    RgbImage(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

    bool empty() const { return width <= 0 || height <= 0; }
    std::size_t offset(int x, int y) const { return (static_cast<std::size_t>(y) * width + x) * 3; }
    std::uint8_t* pixel(int x, int y) { return data.data() + offset(x, y); }
    const std::uint8_t* pixel(int x, int y) const { return data.data() + offset(x, y); }

    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Strictly binary raster (values 0 or 1), row-major.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    BinaryMask() = default;
    BinaryMask(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill) {}

    std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::size_t count() const;
    bool same_dims(const BinaryMask& o) const { return width == o.width && height == o.height; }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Single-channel float raster, row-major.
struct ScalarRaster {
    int width = 0;
    int height = 0;
    std::vector<float> values;

    ScalarRaster() = default;
    ScalarRaster(int w, int h, float fill = 0.0f)
        : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

    float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
    float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }

    friend bool operator==(const ScalarRaster&, const ScalarRaster&) = default;
};

/// Rec. 601 luma of an 8-bit RGB triple, in [0, 255].
inline double luminance(const std::uint8_t* rgb) {
    return 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
}

/// Round-half-up to the nearest integer and clamp into [0, 255].
std::uint8_t clamp_round_u8(double v);

// PNG/TIFF codecs. Readers throw InputError when the file cannot be decoded
// and FormatError when it decodes to an unexpected pixel layout.
RgbImage read_rgb(const std::filesystem::path& path);
void write_rgb_png(const std::filesystem::path& path, const RgbImage& img);

// Masks are stored as 1-bit grayscale PNG; any nonzero sample reads as 1.
BinaryMask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);

// 16-bit grayscale PNG with value = round(v * 65535); v is clamped to [0, 1].
void write_unit_png16(const std::filesystem::path& path, const ScalarRaster& raster);
ScalarRaster read_unit_png16(const std::filesystem::path& path);

}  // namespace wsiseg
