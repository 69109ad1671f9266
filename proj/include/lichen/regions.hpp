#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "lichen/imaging.hpp"

namespace lichen::regions {

// Label raster of 8-connected foreground components; 0 is background and
// regions are numbered 1..count in raster-scan order of their first pixel.
struct Labeling {
    int width = 0;
    int height = 0;
    int count = 0;
    std::vector<std::int32_t> labels;
};

Labeling labelComponents(const BinaryMask& mask);

struct ThallusRecord {
    int index = 0;
    std::int64_t areaPx = 0;
    std::int64_t filledAreaPx = 0;
    double perimeterPx = 0;
    double centroidRow = 0;
    double centroidCol = 0;
    double majorAxisPx = 0;
    double minorAxisPx = 0;
    std::optional<double> areaMm2;
    std::optional<double> perimeterMm;
    std::optional<double> majorAxisMm;
    std::optional<double> minorAxisMm;
};

struct SceneStats {
    int thallusCount = 0;
    double coverFraction = 0;
    std::int64_t totalLichenAreaPx = 0;
    std::optional<double> totalLichenAreaMm2;
};

struct RegionReport {
    std::vector<ThallusRecord> thalli;
    SceneStats stats;
    std::int64_t totalPixels = 0;
    std::optional<double> mmPerPx;
};

RegionReport measure(const Labeling& regions, std::optional<double> mmPerPx = std::nullopt);
RegionReport measure(const BinaryMask& mask, std::optional<double> mmPerPx = std::nullopt);

// Minimum area, either in pixels or in mm^2 (the latter requires a scale).
struct MinArea {
    double value = 0;
    bool inMm2 = false;
};

RegionReport filterSmall(const RegionReport& report, MinArea threshold);

// Fills background components (4-connected) that do not touch the border.
BinaryMask fillHoles(const BinaryMask& mask);

// Length of the outer 8-connected boundary of the component containing the
// pixel (x, y). See regions.cpp for the estimator.
double contourPerimeter(const BinaryMask& mask, int x, int y);

// Recomputes the scene statistics from a thallus list.
SceneStats sceneStats(const std::vector<ThallusRecord>& thalli, std::int64_t totalPixels,
                      std::optional<double> mmPerPx);

void writeCsv(std::ostream& os, const RegionReport& report);

} // namespace lichen::regions
