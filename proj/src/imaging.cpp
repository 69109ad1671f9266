#include "lichen/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "lichen/error.hpp"

namespace lichen {

Raster::Raster(int width, int height, int channels)
    : Raster(width, height, channels,
             std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) *
                                       std::max(height, 0) * std::max(channels, 0))) {}

Raster::Raster(int width, int height, int channels, std::vector<std::uint8_t> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    if (width < 0 || height < 0 || (channels != 1 && channels != 3))
        throw InvalidArgument("raster: bad dimensions or channel count");
    if (data_.size() != static_cast<std::size_t>(width) * height * channels)
        throw InvalidArgument("raster: data length does not match dimensions");
}

void Raster::setScale(std::optional<double> mmPerPixel) {
    if (mmPerPixel && !(*mmPerPixel > 0.0))
        throw InvalidArgument("raster: scale must be positive");
    scale_ = mmPerPixel;
}

BinaryMask::BinaryMask(int width, int height, std::uint8_t fill)
    : width_(width), height_(height),
      bits_(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0), fill ? 1 : 0) {
    if (width < 0 || height < 0) throw InvalidArgument("mask: negative dimensions");
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::uint8_t saturate8(double v) {
    const double r = std::round(v); // half away from zero
    return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

HsvF toHsv(Rgb px) {
    const double r = px.r, g = px.g, b = px.b;
    const double v = std::max({r, g, b});
    const double lo = std::min({r, g, b});
    const double delta = v - lo;
    const double s = v > 0 ? 255.0 * delta / v : 0.0;
    double h = 0.0;
    if (delta > 0) {
        if (v == r)
            h = 60.0 * (g - b) / delta;
        else if (v == g)
            h = 120.0 + 60.0 * (b - r) / delta;
        else
            h = 240.0 + 60.0 * (r - g) / delta;
        if (h < 0) h += 360.0;
    }
    return {h / 2.0, s, v};
}

Rgb toRgb(HsvF px) {
    const double c = px.v * px.s / 255.0;
    double hp = std::fmod(px.h * 2.0, 360.0);
    if (hp < 0) hp += 360.0;
    hp /= 60.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
    }
    const double m = px.v - c;
    return {saturate8(r + m), saturate8(g + m), saturate8(b + m)};
}

Raster rgbToHsv(const Raster& img) {
    if (img.channels() != 3) throw InvalidArgument("rgbToHsv: expected a 3-channel raster");
    Raster out(img.width(), img.height(), 3);
    const auto n = static_cast<std::ptrdiff_t>(img.pixelCount());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto* p = img.pixel(static_cast<std::size_t>(i));
        const HsvF hsv = toHsv({p[0], p[1], p[2]});
        auto* q = out.pixel(static_cast<std::size_t>(i));
        int h = static_cast<int>(std::round(hsv.h));
        if (h >= 180) h -= 180;
        q[0] = static_cast<std::uint8_t>(h);
        q[1] = saturate8(hsv.s);
        q[2] = saturate8(hsv.v);
    }
    out.setScale(img.scale());
    return out;
}

Raster hsvToRgb(const Raster& hsv) {
    if (hsv.channels() != 3) throw InvalidArgument("hsvToRgb: expected a 3-channel raster");
    Raster out(hsv.width(), hsv.height(), 3);
    for (std::size_t i = 0; i < hsv.pixelCount(); ++i) {
        const auto* p = hsv.pixel(i);
        const Rgb c = toRgb({double(p[0]), double(p[1]), double(p[2])});
        auto* q = out.pixel(i);
        q[0] = c.r;
        q[1] = c.g;
        q[2] = c.b;
    }
    out.setScale(hsv.scale());
    return out;
}

FloatImage toFloat(const Raster& img) {
    FloatImage f{img.width(), img.height(), img.channels(),
                 std::vector<float>(img.pixelCount() * img.channels())};
    const std::size_t n = img.pixelCount();
    for (int c = 0; c < img.channels(); ++c)
        for (std::size_t i = 0; i < n; ++i) f.plane[c * n + i] = img.pixel(i)[c];
    return f;
}

Raster toRaster(const FloatImage& img) {
    Raster out(img.width, img.height, img.channels);
    const std::size_t n = out.pixelCount();
    for (int c = 0; c < img.channels; ++c)
        for (std::size_t i = 0; i < n; ++i) out.pixel(i)[c] = saturate8(img.plane[c * n + i]);
    return out;
}

std::vector<double> gaussianKernel(double sigma) {
    if (sigma < 0) throw InvalidArgument("gaussianKernel: sigma must be non-negative");
    if (sigma == 0) return {1.0};
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + radius];
    }
    for (auto& w : k) w /= sum;
    return k;
}

FloatImage gaussianSmooth(const FloatImage& img, double sigma, Exec exec) {
    if (sigma < 0) throw InvalidArgument("gaussianSmooth: sigma must be non-negative");
    if (sigma == 0 || img.plane.empty()) return img;
    const auto k = gaussianKernel(sigma);
    const int r = static_cast<int>(k.size() / 2);
    const int w = img.width, h = img.height;
    const bool par = exec == Exec::Parallel;

    FloatImage tmp = img;
    FloatImage out = img;
    const int rows = img.channels * h;
    // Horizontal pass: each (channel, row) is independent.
#pragma omp parallel for schedule(static) if (par)
    for (int cy = 0; cy < rows; ++cy) {
        const float* src = img.plane.data() + static_cast<std::size_t>(cy) * w;
        float* dst = tmp.plane.data() + static_cast<std::size_t>(cy) * w;
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i) acc += k[i + r] * src[std::clamp(x + i, 0, w - 1)];
            dst[x] = static_cast<float>(acc);
        }
    }
    // Vertical pass.
#pragma omp parallel for schedule(static) if (par)
    for (int cy = 0; cy < rows; ++cy) {
        const int c = cy / h, y = cy % h;
        const float* base = tmp.plane.data() + static_cast<std::size_t>(c) * w * h;
        float* dst = out.plane.data() + static_cast<std::size_t>(cy) * w;
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i)
                acc += k[i + r] * base[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
            dst[x] = static_cast<float>(acc);
        }
    }
    return out;
}

Raster gaussianSmooth(const Raster& img, double sigma, Exec exec) {
    if (sigma < 0) throw InvalidArgument("gaussianSmooth: sigma must be non-negative");
    if (sigma == 0) return img;
    Raster out = toRaster(gaussianSmooth(toFloat(img), sigma, exec));
    out.setScale(img.scale());
    return out;
}

BinaryMask thresholdHsv(const Raster& hsv, const HsvBounds& bounds) {
    if (hsv.channels() != 3) throw InvalidArgument("thresholdHsv: expected an HSV raster");
    BinaryMask m(hsv.width(), hsv.height());
    for (std::size_t i = 0; i < hsv.pixelCount(); ++i) {
        const auto* p = hsv.pixel(i);
        m[i] = bounds.contains(p[0], p[1], p[2]) ? 1 : 0;
    }
    return m;
}

namespace {

// Min (erode) or max (dilate) over the in-bounds 3x3 neighbourhood.
BinaryMask morph3x3(const BinaryMask& m, bool erode) {
    BinaryMask out(m.width(), m.height());
    const int w = m.width(), h = m.height();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::uint8_t v = erode ? 1 : 0;
            for (int dy = -1; dy <= 1; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= h) continue;
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xx = x + dx;
                    if (xx < 0 || xx >= w) continue;
                    if (erode)
                        v &= m.at(xx, yy);
                    else
                        v |= m.at(xx, yy);
                }
            }
            out.at(x, y) = v;
        }
    }
    return out;
}

} // namespace

BinaryMask erode3x3(const BinaryMask& m) { return morph3x3(m, true); }
BinaryMask dilate3x3(const BinaryMask& m) { return morph3x3(m, false); }
BinaryMask open3x3(const BinaryMask& m) { return dilate3x3(erode3x3(m)); }

BinaryMask invert(const BinaryMask& m) {
    BinaryMask out(m.width(), m.height());
    for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? 0 : 1;
    return out;
}

namespace {

Raster fromMat(const cv::Mat& decoded, const std::string& what) {
    if (decoded.empty()) throw IoError("cannot decode image: " + what);
    cv::Mat m = decoded;
    if (m.depth() != CV_8U) m.convertTo(m, CV_8U, m.depth() == CV_16U ? 1.0 / 257.0 : 1.0);
    int channels = m.channels();
    std::vector<std::uint8_t> data(static_cast<std::size_t>(m.rows) * m.cols * (channels == 1 ? 1 : 3));
    if (channels == 1) {
        for (int y = 0; y < m.rows; ++y)
            std::copy_n(m.ptr<std::uint8_t>(y), m.cols, data.data() + static_cast<std::size_t>(y) * m.cols);
        return Raster(m.cols, m.rows, 1, std::move(data));
    }
    for (int y = 0; y < m.rows; ++y) {
        const std::uint8_t* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < m.cols; ++x) {
            const std::uint8_t* p = row + x * channels; // BGR(A)
            std::uint8_t* q = data.data() + (static_cast<std::size_t>(y) * m.cols + x) * 3;
            q[0] = p[2];
            q[1] = p[1];
            q[2] = p[0];
        }
    }
    return Raster(m.cols, m.rows, 3, std::move(data));
}

cv::Mat toMat(const Raster& img) {
    if (img.channels() == 1) {
        cv::Mat m(img.height(), img.width(), CV_8UC1);
        for (int y = 0; y < img.height(); ++y)
            std::copy_n(img.data().data() + static_cast<std::size_t>(y) * img.width(), img.width(),
                        m.ptr<std::uint8_t>(y));
        return m;
    }
    cv::Mat m(img.height(), img.width(), CV_8UC3);
    for (int y = 0; y < img.height(); ++y) {
        std::uint8_t* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < img.width(); ++x) {
            row[3 * x + 0] = img.at(x, y, 2);
            row[3 * x + 1] = img.at(x, y, 1);
            row[3 * x + 2] = img.at(x, y, 0);
        }
    }
    return m;
}

} // namespace

Raster readImage(const std::filesystem::path& path) {
    return fromMat(cv::imread(path.string(), cv::IMREAD_UNCHANGED), path.string());
}

Raster decodeImage(std::span<const std::uint8_t> bytes) {
    const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
    return fromMat(cv::imdecode(buf, cv::IMREAD_UNCHANGED), "<memory>");
}

std::vector<std::uint8_t> encodePng(const Raster& img) {
    std::vector<std::uint8_t> out;
    if (!cv::imencode(".png", toMat(img), out)) throw IoError("PNG encoding failed");
    return out;
}

void writePng(const std::filesystem::path& path, const Raster& img) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), toMat(img))) throw IoError("cannot write " + path.string());
}

Raster maskToRaster(const BinaryMask& mask) {
    std::vector<std::uint8_t> data(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) data[i] = mask[i] ? 255 : 0;
    return Raster(mask.width(), mask.height(), 1, std::move(data));
}

BinaryMask readMask(const std::filesystem::path& path) {
    const cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw IoError("cannot read mask " + path.string());
    BinaryMask out(m.cols, m.rows);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) out.at(x, y) = m.at<std::uint8_t>(y, x) > 127 ? 1 : 0;
    return out;
}

void writeMask(const std::filesystem::path& path, const BinaryMask& mask) {
    writePng(path, maskToRaster(mask));
}

std::vector<std::uint8_t> encodeMaskPng(const BinaryMask& mask) { return encodePng(maskToRaster(mask)); }

void writeLabels16(const std::filesystem::path& path, int width, int height,
                   std::span<const std::int32_t> labels) {
    if (labels.size() != static_cast<std::size_t>(width) * height)
        throw InvalidArgument("writeLabels16: size mismatch");
    cv::Mat m(height, width, CV_16UC1);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            m.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(
                std::clamp<std::int32_t>(labels[static_cast<std::size_t>(y) * width + x], 0, 65535));
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), m)) throw IoError("cannot write " + path.string());
}

std::vector<std::int32_t> readLabels16(const std::filesystem::path& path, int& width, int& height) {
    const cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty() || m.type() != CV_16UC1) throw IoError("not a 16-bit label map: " + path.string());
    width = m.cols;
    height = m.rows;
    std::vector<std::int32_t> out(static_cast<std::size_t>(m.rows) * m.cols);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) out[static_cast<std::size_t>(y) * m.cols + x] = m.at<std::uint16_t>(y, x);
    return out;
}

} // namespace lichen
