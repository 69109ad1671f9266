#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "lichen/exec.hpp"
#include "lichen/imaging.hpp"
#include "lichen/regions.hpp"

namespace lichen::rectify {

// Physical layout of the four target centres. The default is the
// 272 x 185 mm field board rendered at 10 px/mm.
struct TargetLayout {
    double widthMm = 272.0;
    double heightMm = 185.0;
    double outputPxPerMm = 10.0;

    void validate() const;
    double widthPx() const { return widthMm * outputPxPerMm; }
    double heightPx() const { return heightMm * outputPxPerMm; }
};

struct Point2 {
    double x = 0;
    double y = 0;
};

// Target centroids in source pixel coordinates, ordered TL, TR, BR, BL.
struct QuadDetection {
    std::array<Point2, 4> corners{};
    std::array<std::int64_t, 4> blobAreas{};
};

// Projective map normalised so that m[8] == 1. Row-major.
class Homography {
public:
    Homography() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}
    explicit Homography(const std::array<double, 9>& m);

    static Homography identity() { return {}; }
    static Homography translation(double dx, double dy);
    static Homography scaling(double sx, double sy);

    const std::array<double, 9>& matrix() const { return m_; }
    double operator()(int r, int c) const { return m_[3 * r + c]; }

    Point2 apply(Point2 p) const;
    double determinant() const;
    Homography inverse() const;
    Homography operator*(const Homography& rhs) const;

private:
    std::array<double, 9> m_;
};

// Smallest blob (after a 3x3 opening) accepted as a target.
inline constexpr std::int64_t kMinTargetArea = 50;

// Thresholds the image in HSV, opens the mask once with a 3x3 element,
// keeps the four largest 8-connected blobs of at least kMinTargetArea pixels
// and orders their value-weighted centroids by the sum/difference corner
// rule. Throws DetectionFailure when fewer than four blobs qualify or when
// the corner roles are ambiguous.
QuadDetection detectTargets(const Raster& rgb, const HsvBounds& bounds = {});

// Exact homography through four point pairs. Throws DegenerateGeometry if
// three points of either quad are collinear.
Homography homographyFromPoints(const std::array<Point2, 4>& src, const std::array<Point2, 4>& dst);

// Maps the detected quad onto the metric rectangle with TL at the origin.
Homography estimateHomography(const QuadDetection& quad, const TargetLayout& layout);

// Inverse-mapped bilinear warp; `srcToDst` maps source pixels to output
// pixels. Samples falling outside the source are black.
Raster warpPerspective(const Raster& img, const Homography& srcToDst, int outWidth, int outHeight,
                       Exec exec = Exec::Parallel);

// Warps onto the target rectangle and stamps the mm-per-pixel scale.
Raster rectifyImage(const Raster& img, const Homography& h, const TargetLayout& layout,
                    Exec exec = Exec::Parallel);

struct Rectified {
    Raster image;
    QuadDetection quad;
    Homography homography;
};

Rectified rectify(const Raster& rgb, const HsvBounds& bounds, const TargetLayout& layout);

// Locates the white reference mark (low saturation, high value) in a
// rectified image and returns its region measurements, mm fields filled
// from the raster scale. Empty when no such region exists.
std::optional<regions::ThallusRecord> measureMarkDisk(const Raster& rectified);

} // namespace lichen::rectify
