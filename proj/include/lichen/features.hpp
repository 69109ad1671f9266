#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "lichen/imaging.hpp"
#include "lichen/slic.hpp"

namespace lichen::features {

enum class HistogramMode { PerChannel, Joint };

struct FeatureOptions {
    int bins = 32; // per channel; per axis in joint mode
    HistogramMode mode = HistogramMode::PerChannel;

    int dimension() const { return mode == HistogramMode::Joint ? bins * bins * bins : 3 * bins; }
};

struct FeatureRow {
    std::string imageId;
    int segmentId = 0;
    std::vector<double> histogram;
};

// One row per segment, in segment order. Per-channel mode concatenates three
// histograms each normalised by the segment size, then rescales the whole
// vector to sum 1.
std::vector<FeatureRow> extractFeatures(const Raster& img, const slic::SuperpixelMap& spx,
                                        const FeatureOptions& opt = {}, const std::string& imageId = "");

// 1 when the lichen fraction of the segment is strictly above `threshold`.
std::vector<int> labelSegments(const slic::SuperpixelMap& spx, const BinaryMask& truth, double threshold = 0.5);

BinaryMask paintSegments(const slic::SuperpixelMap& spx, const std::vector<int>& classes);
BinaryMask quantizedMask(const slic::SuperpixelMap& spx, const BinaryMask& truth, double threshold = 0.5);

struct LabeledTable {
    std::vector<FeatureRow> rows;
    std::vector<int> labels;
    slic::SlicParams slic;
    FeatureOptions features;
    double threshold = 0.5;

    int dimension() const { return rows.empty() ? 0 : static_cast<int>(rows.front().histogram.size()); }
    void append(std::vector<FeatureRow> r, const std::vector<int>& l);
};

// Header `image,segment,f0..fN,label`; values printed with %.9g.
void writeCsv(std::ostream& os, const LabeledTable& t);
// Feature options are inferred from the column count: per-channel when it
// divides by three, otherwise joint when it is a cube.
LabeledTable readCsv(std::istream& is);

} // namespace lichen::features
