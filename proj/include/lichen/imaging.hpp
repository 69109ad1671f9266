#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "lichen/exec.hpp"

namespace lichen {

// Row-major 8-bit image with 1 or 3 interleaved channels. Three-channel
// rasters are RGB unless produced by rgbToHsv. `scale` is the optional
// physical size of one pixel side in millimetres.
class Raster {
public:
    Raster() = default;
    Raster(int width, int height, int channels);
    Raster(int width, int height, int channels, std::vector<std::uint8_t> data);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    std::size_t pixelCount() const { return static_cast<std::size_t>(width_) * height_; }
    bool empty() const { return data_.empty(); }

    std::uint8_t& at(int x, int y, int c = 0) {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    std::uint8_t at(int x, int y, int c = 0) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    const std::uint8_t* pixel(std::size_t index) const { return data_.data() + index * channels_; }
    std::uint8_t* pixel(std::size_t index) { return data_.data() + index * channels_; }

    std::span<const std::uint8_t> data() const { return data_; }
    std::span<std::uint8_t> data() { return data_; }

    std::optional<double> scale() const { return scale_; }
    void setScale(std::optional<double> mmPerPixel);

    friend bool operator==(const Raster& a, const Raster& b) {
        return a.width_ == b.width_ && a.height_ == b.height_ && a.channels_ == b.channels_ &&
               a.data_ == b.data_;
    }

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<std::uint8_t> data_;
    std::optional<double> scale_;
};

// One bit per pixel stored as a byte: 1 = lichen (white), 0 = background.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int width, int height, std::uint8_t fill = 0);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return bits_.size(); }

    std::uint8_t& at(int x, int y) { return bits_[static_cast<std::size_t>(y) * width_ + x]; }
    std::uint8_t at(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x]; }
    std::uint8_t operator[](std::size_t i) const { return bits_[i]; }
    std::uint8_t& operator[](std::size_t i) { return bits_[i]; }

    std::span<const std::uint8_t> bits() const { return bits_; }
    std::size_t count() const;

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

// Hue on the 8-bit [0,180) convention (degrees / 2); saturation and value
// on [0,255]. The target thresholds H[95-105] only make sense on this scale.
struct HsvBounds {
    int hLo = 95, hHi = 105;
    int sLo = 85, sHi = 255;
    int vLo = 170, vHi = 245;

    bool valid() const { return hLo <= hHi && sLo <= sHi && vLo <= vHi; }
    bool contains(int h, int s, int v) const {
        return h >= hLo && h <= hHi && s >= sLo && s <= sHi && v >= vLo && v <= vHi;
    }
};

struct Rgb {
    std::uint8_t r, g, b;
};

// Unquantised HSV on the same scales as the 8-bit raster (h in [0,180)).
struct HsvF {
    double h, s, v;
};

HsvF toHsv(Rgb px);
Rgb toRgb(HsvF px);

// Rounds half away from zero and clamps into [0,255].
std::uint8_t saturate8(double v);

Raster rgbToHsv(const Raster& img);
Raster hsvToRgb(const Raster& hsv);

// Planar float image used for internal arithmetic.
struct FloatImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> plane; // channel-major: plane[c * w * h + y * w + x]

    float& at(int x, int y, int c) { return plane[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    float at(int x, int y, int c) const { return plane[(static_cast<std::size_t>(c) * height + y) * width + x]; }
};

FloatImage toFloat(const Raster& img);
Raster toRaster(const FloatImage& img);

std::vector<double> gaussianKernel(double sigma);

// Separable Gaussian blur; kernel truncated at ceil(3 sigma) per side,
// borders replicate the edge pixel. sigma == 0 is the identity.
FloatImage gaussianSmooth(const FloatImage& img, double sigma, Exec exec = Exec::Parallel);
Raster gaussianSmooth(const Raster& img, double sigma, Exec exec = Exec::Parallel);

// Pixel set iff all three channels lie within the inclusive bounds.
BinaryMask thresholdHsv(const Raster& hsv, const HsvBounds& bounds);

BinaryMask erode3x3(const BinaryMask& m);
BinaryMask dilate3x3(const BinaryMask& m);
BinaryMask open3x3(const BinaryMask& m);
BinaryMask invert(const BinaryMask& m);

// Image IO. Colour rasters are returned RGB regardless of file order.
Raster readImage(const std::filesystem::path& path);
void writePng(const std::filesystem::path& path, const Raster& img);
std::vector<std::uint8_t> encodePng(const Raster& img);
Raster decodeImage(std::span<const std::uint8_t> bytes);

// Masks are single-channel PNGs holding 0 and 255 only; reading treats
// any value > 127 as lichen.
BinaryMask readMask(const std::filesystem::path& path);
void writeMask(const std::filesystem::path& path, const BinaryMask& mask);
std::vector<std::uint8_t> encodeMaskPng(const BinaryMask& mask);
Raster maskToRaster(const BinaryMask& mask);

// 16-bit single channel label dump (debugging superpixels).
void writeLabels16(const std::filesystem::path& path, int width, int height,
                   std::span<const std::int32_t> labels);
std::vector<std::int32_t> readLabels16(const std::filesystem::path& path, int& width, int& height);

} // namespace lichen
