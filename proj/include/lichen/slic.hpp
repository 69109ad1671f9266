#pragma once

#include <cstdint>
#include <vector>

#include "lichen/exec.hpp"
#include "lichen/imaging.hpp"

namespace lichen::slic {

struct SlicParams {
    int nSegments = 500;
    double compactness = 20;
    double sigma = 1;

    void validate() const;
    bool operator==(const SlicParams&) const = default;
};

// The 12 configurations searched in the sweep, nSegments-major.
std::vector<SlicParams> sweepGrid();

struct SuperpixelMap {
    int width = 0;
    int height = 0;
    int count = 0;
    std::vector<std::int32_t> labels; // 0..count-1, row-major
    std::vector<std::int64_t> sizes;

    std::int32_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    bool operator==(const SuperpixelMap&) const = default;
};

// Planar CIELAB (D65) of an RGB float image in [0, 255].
struct LabImage {
    int width = 0, height = 0;
    std::vector<float> l, a, b;
};
LabImage toLab(const FloatImage& rgb);

// Localised k-means in (L, a, b, x, y) followed by connectivity
// enforcement. The serial path visits clusters; the parallel path visits
// pixels. Both break distance ties towards the lower cluster index, so
// they return identical maps.
SuperpixelMap slic(const Raster& img, const SlicParams& p, Exec exec = Exec::Parallel);

// Number of segments after the k-means stage, before connectivity; exposed
// for tests of the grid placement.
int seedCount(int width, int height, int nSegments);

bool isPartition(const SuperpixelMap& m);      // every label used, sizes match
bool allSegmentsConnected(const SuperpixelMap& m); // 4-connectivity

} // namespace lichen::slic
