#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>

#include "lichen/grabcut.hpp"
#include "lichen/imaging.hpp"
#include "lichen/regions.hpp"
#include "lichen/rng.hpp"

namespace testutil {

inline lichen::Raster randomRaster(lichen::Rng& rng, int w, int h, int channels) {
    lichen::Raster r(w, h, channels);
    for (auto& v : r.data()) v = static_cast<std::uint8_t>(rng.below(256));
    return r;
}

inline lichen::BinaryMask randomMask(lichen::Rng& rng, int w, int h, double p) {
    lichen::BinaryMask m(w, h);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform() < p ? 1 : 0;
    return m;
}

// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratchDir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("lichen_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline lichen::BinaryMask diskMask(int w, int h, double cx, double cy, double r) {
    lichen::BinaryMask m(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.at(x, y) = 1;
    return m;
}

inline double mcc(const lichen::BinaryMask& pred, const lichen::BinaryMask& truth) {
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] && truth[i]) ++tp;
        else if (pred[i]) ++fp;
        else if (truth[i]) ++fn;
        else ++tn;
    }
    const double den = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
    return den > 0 ? (tp * tn - fp * fn) / den : 0.0;
}

// Scripted annotator: one stroke at the deepest pixel of the largest error
// region, labelled from the truth, with a brush that stays inside the
// region. Returns nothing when the mask is already exact.
inline std::optional<lichen::grabcut::Stroke> oracleStroke(const lichen::BinaryMask& mask,
                                                           const lichen::BinaryMask& truth) {
    using namespace lichen;
    BinaryMask fp(mask.width(), mask.height()), fn(mask.width(), mask.height());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        fp[i] = mask[i] && !truth[i];
        fn[i] = !mask[i] && truth[i];
    }
    BinaryMask region(mask.width(), mask.height());
    std::int64_t bestArea = 0;
    for (const BinaryMask* m : {&fp, &fn}) {
        const regions::Labeling lab = regions::labelComponents(*m);
        std::vector<std::int64_t> area(lab.count + 1, 0);
        for (int l : lab.labels) ++area[l];
        for (int l = 1; l <= lab.count; ++l)
            if (area[l] > bestArea) {
                bestArea = area[l];
                for (std::size_t i = 0; i < region.size(); ++i) region[i] = lab.labels[i] == l;
            }
    }
    if (bestArea == 0) return std::nullopt;
    int depth = 0;
    for (BinaryMask e = erode3x3(region); e.count() > 0; e = erode3x3(e)) {
        region = e;
        ++depth;
    }
    std::size_t at = 0;
    while (!region[at]) ++at;
    lichen::grabcut::Stroke s;
    s.points = {{double(at % mask.width()), double(at / mask.width())}};
    s.foreground = truth[at] != 0;
    s.brushRadius = depth == 0 ? 0.5 : std::min(depth, 8);
    return s;
}

} // namespace testutil
