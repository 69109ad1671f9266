#include "lichen/rectify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lichen/error.hpp"
#include "lichen/regions.hpp"

namespace lichen::rectify {

void TargetLayout::validate() const {
    if (!(widthMm > 0 && heightMm > 0 && outputPxPerMm > 0))
        throw InvalidArgument("target layout: dimensions and px/mm must be positive");
}

Homography::Homography(const std::array<double, 9>& m) : m_(m) {
    if (m_[8] == 0 || !std::isfinite(m_[8])) throw DegenerateGeometry("homography: h33 is zero");
    for (auto& v : m_) v /= m[8];
    if (std::fabs(determinant()) <= 1e-12) throw DegenerateGeometry("homography is not invertible");
}

Homography Homography::translation(double dx, double dy) {
    return Homography({1, 0, dx, 0, 1, dy, 0, 0, 1});
}

Homography Homography::scaling(double sx, double sy) {
    return Homography({sx, 0, 0, 0, sy, 0, 0, 0, 1});
}

Point2 Homography::apply(Point2 p) const {
    const auto& m = m_;
    const double w = m[6] * p.x + m[7] * p.y + m[8];
    return {(m[0] * p.x + m[1] * p.y + m[2]) / w, (m[3] * p.x + m[4] * p.y + m[5]) / w};
}

double Homography::determinant() const {
    const auto& m = m_;
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Homography Homography::inverse() const {
    const auto& m = m_;
    const double d = determinant();
    std::array<double, 9> inv{
        (m[4] * m[8] - m[5] * m[7]) / d, (m[2] * m[7] - m[1] * m[8]) / d, (m[1] * m[5] - m[2] * m[4]) / d,
        (m[5] * m[6] - m[3] * m[8]) / d, (m[0] * m[8] - m[2] * m[6]) / d, (m[2] * m[3] - m[0] * m[5]) / d,
        (m[3] * m[7] - m[4] * m[6]) / d, (m[1] * m[6] - m[0] * m[7]) / d, (m[0] * m[4] - m[1] * m[3]) / d};
    return Homography(inv);
}

Homography Homography::operator*(const Homography& rhs) const {
    std::array<double, 9> r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) r[3 * i + j] += m_[3 * i + k] * rhs.m_[3 * k + j];
    return Homography(r);
}

QuadDetection detectTargets(const Raster& rgb, const HsvBounds& bounds) {
    if (rgb.channels() != 3) throw InvalidArgument("detectTargets: expected an RGB raster");
    if (!bounds.valid()) throw InvalidArgument("detectTargets: HSV bounds have lo > hi");
    const Raster hsv = rgbToHsv(rgb);
    const BinaryMask mask = open3x3(thresholdHsv(hsv, bounds));
    const regions::Labeling lab = regions::labelComponents(mask);

    struct Blob {
        int label;
        std::int64_t area = 0;
        double wx = 0, wy = 0, wsum = 0;
    };
    std::vector<Blob> blobs(lab.count + 1);
    for (int l = 0; l <= lab.count; ++l) blobs[l].label = l;
    for (int y = 0; y < lab.height; ++y) {
        for (int x = 0; x < lab.width; ++x) {
            const int l = lab.labels[static_cast<std::size_t>(y) * lab.width + x];
            if (!l) continue;
            Blob& b = blobs[l];
            const double v = hsv.at(x, y, 2);
            ++b.area;
            b.wx += v * x;
            b.wy += v * y;
            b.wsum += v;
        }
    }
    std::vector<Blob> kept;
    for (int l = 1; l <= lab.count; ++l)
        if (blobs[l].area >= kMinTargetArea) kept.push_back(blobs[l]);
    std::stable_sort(kept.begin(), kept.end(), [](const Blob& a, const Blob& b) { return a.area > b.area; });
    if (kept.size() < 4) {
        const int found = static_cast<int>(kept.size());
        throw DetectionFailure(found, "detected " + std::to_string(found) + " of 4 calibration targets");
    }
    kept.resize(4);

    std::array<Point2, 4> pts;
    for (int i = 0; i < 4; ++i) pts[i] = {kept[i].wx / kept[i].wsum, kept[i].wy / kept[i].wsum};

    // Picks the unique extreme of key(); a tie means the orientation is
    // ambiguous and we refuse to guess.
    auto extreme = [&](auto key, bool wantMax) {
        int best = 0;
        for (int i = 1; i < 4; ++i)
            if (wantMax ? key(pts[i]) > key(pts[best]) : key(pts[i]) < key(pts[best])) best = i;
        const double scale = 1.0 + std::fabs(key(pts[best]));
        for (int i = 0; i < 4; ++i)
            if (i != best && std::fabs(key(pts[i]) - key(pts[best])) <= 1e-9 * scale)
                throw DetectionFailure(4, "ambiguous target corner ordering");
        return best;
    };
    const auto sum = [](Point2 p) { return p.x + p.y; };
    const auto diff = [](Point2 p) { return p.x - p.y; };
    const std::array<int, 4> order{extreme(sum, false), extreme(diff, true), extreme(sum, true),
                                   extreme(diff, false)};
    std::array<bool, 4> used{};
    for (int i : order) {
        if (used[i]) throw DetectionFailure(4, "ambiguous target corner ordering");
        used[i] = true;
    }

    QuadDetection q;
    for (int r = 0; r < 4; ++r) {
        q.corners[r] = pts[order[r]];
        q.blobAreas[r] = kept[order[r]].area;
    }
    return q;
}

namespace {

void requireNonCollinear(const std::array<Point2, 4>& p, const char* which) {
    double extent = 0;
    for (const auto& a : p)
        for (const auto& b : p) extent = std::max(extent, std::hypot(a.x - b.x, a.y - b.y));
    if (extent == 0) throw DegenerateGeometry(std::string(which) + " quad collapses to a point");
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            for (int k = j + 1; k < 4; ++k) {
                const double cross = (p[j].x - p[i].x) * (p[k].y - p[i].y) - (p[j].y - p[i].y) * (p[k].x - p[i].x);
                if (std::fabs(cross) <= 1e-9 * extent * extent)
                    throw DegenerateGeometry(std::string(which) + " quad has three collinear corners");
            }
}

// Similarity that moves the centroid to the origin and the mean distance
// to sqrt(2); conditions the linear system.
std::array<double, 9> normalizer(const std::array<Point2, 4>& p) {
    double cx = 0, cy = 0;
    for (const auto& q : p) {
        cx += q.x / 4;
        cy += q.y / 4;
    }
    double d = 0;
    for (const auto& q : p) d += std::hypot(q.x - cx, q.y - cy) / 4;
    const double s = std::sqrt(2.0) / d;
    return {s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1};
}

// Gaussian elimination with partial pivoting on an 8x8 system.
bool solve8(std::array<std::array<double, 9>, 8>& a, std::array<double, 8>& x) {
    for (int col = 0; col < 8; ++col) {
        int piv = col;
        for (int r = col + 1; r < 8; ++r)
            if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
        if (std::fabs(a[piv][col]) < 1e-12) return false;
        std::swap(a[piv], a[col]);
        for (int r = col + 1; r < 8; ++r) {
            const double f = a[r][col] / a[col][col];
            for (int c = col; c < 9; ++c) a[r][c] -= f * a[col][c];
        }
    }
    for (int r = 7; r >= 0; --r) {
        double s = a[r][8];
        for (int c = r + 1; c < 8; ++c) s -= a[r][c] * x[c];
        x[r] = s / a[r][r];
    }
    return true;
}

} // namespace

Homography homographyFromPoints(const std::array<Point2, 4>& src, const std::array<Point2, 4>& dst) {
    requireNonCollinear(src, "source");
    requireNonCollinear(dst, "destination");
    const Homography ts(normalizer(src));
    const Homography td(normalizer(dst));

    std::array<std::array<double, 9>, 8> a{};
    for (int i = 0; i < 4; ++i) {
        const Point2 s = ts.apply(src[i]);
        const Point2 d = td.apply(dst[i]);
        a[2 * i] = {s.x, s.y, 1, 0, 0, 0, -d.x * s.x, -d.x * s.y, d.x};
        a[2 * i + 1] = {0, 0, 0, s.x, s.y, 1, -d.y * s.x, -d.y * s.y, d.y};
    }
    std::array<double, 8> h{};
    if (!solve8(a, h)) throw DegenerateGeometry("homography system is singular");
    const Homography hn({h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0});
    return td.inverse() * hn * ts;
}

Homography estimateHomography(const QuadDetection& quad, const TargetLayout& layout) {
    layout.validate();
    const double w = layout.widthPx(), h = layout.heightPx();
    return homographyFromPoints(quad.corners, {Point2{0, 0}, Point2{w, 0}, Point2{w, h}, Point2{0, h}});
}

Raster warpPerspective(const Raster& img, const Homography& srcToDst, int outWidth, int outHeight,
                       Exec exec) {
    if (outWidth <= 0 || outHeight <= 0) throw InvalidArgument("warpPerspective: empty output");
    const Homography inv = srcToDst.inverse();
    const auto& m = inv.matrix();
    const int sw = img.width(), sh = img.height(), ch = img.channels();
    Raster out(outWidth, outHeight, ch);
    const bool par = exec == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int y = 0; y < outHeight; ++y) {
        for (int x = 0; x < outWidth; ++x) {
            const double w = m[6] * x + m[7] * y + m[8];
            const double sx = (m[0] * x + m[1] * y + m[2]) / w;
            const double sy = (m[3] * x + m[4] * y + m[5]) / w;
            if (!(sx >= 0 && sy >= 0 && sx <= sw - 1 && sy <= sh - 1)) continue;
            const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
            const int x1 = std::min(x0 + 1, sw - 1), y1 = std::min(y0 + 1, sh - 1);
            const double fx = sx - x0, fy = sy - y0;
            for (int c = 0; c < ch; ++c) {
                const double top = img.at(x0, y0, c) + fx * (img.at(x1, y0, c) - img.at(x0, y0, c));
                const double bot = img.at(x0, y1, c) + fx * (img.at(x1, y1, c) - img.at(x0, y1, c));
                out.at(x, y, c) = saturate8(top + fy * (bot - top));
            }
        }
    }
    return out;
}

Raster rectifyImage(const Raster& img, const Homography& h, const TargetLayout& layout, Exec exec) {
    layout.validate();
    Raster out = warpPerspective(img, h, static_cast<int>(std::lround(layout.widthPx())),
                                 static_cast<int>(std::lround(layout.heightPx())), exec);
    out.setScale(1.0 / layout.outputPxPerMm);
    return out;
}

Rectified rectify(const Raster& rgb, const HsvBounds& bounds, const TargetLayout& layout) {
    Rectified r;
    r.quad = detectTargets(rgb, bounds);
    r.homography = estimateHomography(r.quad, layout);
    r.image = rectifyImage(rgb, r.homography, layout);
    return r;
}

std::optional<regions::ThallusRecord> measureMarkDisk(const Raster& rectified) {
    const HsvBounds white{0, 179, 0, 40, 215, 255};
    const BinaryMask mask = open3x3(thresholdHsv(rgbToHsv(rectified), white));
    const regions::RegionReport report = regions::measure(mask, rectified.scale());
    std::optional<regions::ThallusRecord> best;
    for (const auto& t : report.thalli)
        if (!best || t.areaPx > best->areaPx) best = t;
    return best;
}

} // namespace lichen::rectify
