#include "lichen/features.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "lichen/error.hpp"

namespace lichen::features {

namespace {

void checkDims(const slic::SuperpixelMap& spx, int w, int h, const char* what) {
    if (spx.width != w || spx.height != h) throw InvalidArgument(std::string(what) + ": dimensions differ");
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

} // namespace

std::vector<FeatureRow> extractFeatures(const Raster& img, const slic::SuperpixelMap& spx, const FeatureOptions& opt,
                                        const std::string& imageId) {
    if (opt.bins < 2) throw InvalidArgument("extractFeatures: bins must be at least 2");
    if (img.channels() != 3) throw InvalidArgument("extractFeatures: expected an RGB raster");
    checkDims(spx, img.width(), img.height(), "extractFeatures");
    const int bins = opt.bins, dim = opt.dimension();
    std::vector<std::vector<std::int64_t>> counts(spx.count, std::vector<std::int64_t>(dim, 0));
    for (std::size_t i = 0; i < img.pixelCount(); ++i) {
        const auto* p = img.pixel(i);
        auto& c = counts[spx.labels[i]];
        const int b0 = p[0] * bins / 256, b1 = p[1] * bins / 256, b2 = p[2] * bins / 256;
        if (opt.mode == HistogramMode::Joint) {
            ++c[(b0 * bins + b1) * bins + b2];
        } else {
            ++c[b0];
            ++c[bins + b1];
            ++c[2 * bins + b2];
        }
    }
    std::vector<FeatureRow> rows(spx.count);
    for (int k = 0; k < spx.count; ++k) {
        rows[k].imageId = imageId;
        rows[k].segmentId = k;
        auto& hist = rows[k].histogram;
        hist.resize(dim);
        const double n = static_cast<double>(spx.sizes[k]);
        double total = 0;
        for (int d = 0; d < dim; ++d) total += hist[d] = counts[k][d] / n;
        for (auto& v : hist) v /= total;
    }
    return rows;
}

std::vector<int> labelSegments(const slic::SuperpixelMap& spx, const BinaryMask& truth, double threshold) {
    checkDims(spx, truth.width(), truth.height(), "labelSegments");
    std::vector<std::int64_t> lichen(spx.count, 0);
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (truth[i]) ++lichen[spx.labels[i]];
    std::vector<int> cls(spx.count);
    for (int k = 0; k < spx.count; ++k)
        cls[k] = static_cast<double>(lichen[k]) / static_cast<double>(spx.sizes[k]) > threshold ? 1 : 0;
    return cls;
}

BinaryMask paintSegments(const slic::SuperpixelMap& spx, const std::vector<int>& classes) {
    if (classes.size() != static_cast<std::size_t>(spx.count))
        throw InvalidArgument("paintSegments: one class per segment required");
    BinaryMask m(spx.width, spx.height);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = classes[spx.labels[i]] ? 1 : 0;
    return m;
}

BinaryMask quantizedMask(const slic::SuperpixelMap& spx, const BinaryMask& truth, double threshold) {
    return paintSegments(spx, labelSegments(spx, truth, threshold));
}

void LabeledTable::append(std::vector<FeatureRow> r, const std::vector<int>& l) {
    if (r.size() != l.size()) throw InvalidArgument("LabeledTable: rows and labels differ in length");
    for (auto& row : r) {
        if (!rows.empty() && row.histogram.size() != rows.front().histogram.size())
            throw InvalidArgument("LabeledTable: inconsistent feature dimension");
        rows.push_back(std::move(row));
    }
    labels.insert(labels.end(), l.begin(), l.end());
}

void writeCsv(std::ostream& os, const LabeledTable& t) {
    if (t.rows.size() != t.labels.size()) throw InvalidArgument("writeCsv: rows and labels differ in length");
    const int dim = t.dimension();
    os << "image,segment";
    for (int d = 0; d < dim; ++d) os << ",f" << d;
    os << ",label\n";
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        if (row.imageId.find_first_of(",\n\"") != std::string::npos)
            throw InvalidArgument("writeCsv: image id contains a separator: " + row.imageId);
        os << row.imageId << ',' << row.segmentId;
        for (double v : row.histogram) os << ',' << fmt(v);
        os << ',' << t.labels[r] << '\n';
    }
}

LabeledTable readCsv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw IoError("readCsv: empty input");
    int dim = 0;
    {
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> head;
        while (std::getline(ss, cell, ',')) head.push_back(cell);
        if (head.size() < 3 || head[0] != "image" || head[1] != "segment" || head.back() != "label")
            throw IoError("readCsv: unexpected header");
        dim = static_cast<int>(head.size()) - 3;
    }
    LabeledTable t;
    if (dim % 3 == 0) {
        t.features = {dim / 3, HistogramMode::PerChannel};
    } else {
        const int b = static_cast<int>(std::lround(std::cbrt(dim)));
        if (b * b * b != dim) throw IoError("readCsv: feature count matches no histogram layout");
        t.features = {b, HistogramMode::Joint};
    }
    int lineNo = 1;
    while (std::getline(is, line)) {
        ++lineNo;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (static_cast<int>(cells.size()) != dim + 3)
            throw IoError("readCsv: line " + std::to_string(lineNo) + " has the wrong number of fields");
        FeatureRow row;
        row.imageId = cells[0];
        try {
            row.segmentId = std::stoi(cells[1]);
            row.histogram.resize(dim);
            for (int d = 0; d < dim; ++d) row.histogram[d] = std::stod(cells[2 + d]);
            t.labels.push_back(std::stoi(cells.back()));
        } catch (const std::logic_error&) {
            throw IoError("readCsv: line " + std::to_string(lineNo) + " is not numeric");
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

} // namespace lichen::features
