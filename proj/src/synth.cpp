#include "lichen/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "lichen/error.hpp"
#include "lichen/rng.hpp"

namespace lichen::synth {

using rectify::Homography;
using rectify::Point2;

Difficulty parseDifficulty(const std::string& s) {
    if (s == "easy") return Difficulty::Easy;
    if (s == "medium") return Difficulty::Medium;
    if (s == "hard") return Difficulty::Hard;
    throw InvalidArgument("unknown difficulty '" + s + "' (expected easy|medium|hard)");
}

std::string toString(Difficulty d) {
    switch (d) {
    case Difficulty::Easy: return "easy";
    case Difficulty::Medium: return "medium";
    case Difficulty::Hard: return "hard";
    }
    return "medium";
}

bool BlobShape::contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (c * dx + s * dy) / rx;
    const double v = (-s * dx + c * dy) / ry;
    const double r2 = u * u + v * v;
    double bound = 1.0;
    bool perturbed = false;
    for (double a : amp) perturbed = perturbed || a != 0;
    if (perturbed) {
        const double t = std::atan2(v, u);
        for (int k = 0; k < 4; ++k) bound += amp[k] * std::cos((k + 2) * t + phase[k]);
    }
    return r2 <= bound * bound;
}

double BlobShape::boundingRadius() const {
    double a = 0;
    for (double v : amp) a += std::fabs(v);
    return std::max(rx, ry) * (1.0 + a);
}

namespace {

double smooth(double t) { return t * t * (3 - 2 * t); }

double lattice(std::uint64_t seed, std::int64_t x, std::int64_t y) {
    return static_cast<double>(hashCoords(seed, x, y) >> 11) * 0x1.0p-53;
}

// Bilinearly interpolated lattice noise in [0,1).
double valueNoise(std::uint64_t seed, double x, double y) {
    const double fx = std::floor(x), fy = std::floor(y);
    const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
    const double tx = smooth(x - fx), ty = smooth(y - fy);
    const double a = lattice(seed, ix, iy), b = lattice(seed, ix + 1, iy);
    const double c = lattice(seed, ix, iy + 1), d = lattice(seed, ix + 1, iy + 1);
    return (a + tx * (b - a)) + ty * ((c + tx * (d - c)) - (a + tx * (b - a)));
}

// Fractal sum of `octaves` value-noise layers, mapped to [-1, 1].
double fbm(std::uint64_t seed, double x, double y, double cell, int octaves) {
    double sum = 0, norm = 0, amp = 1, freq = 1.0 / cell;
    for (int o = 0; o < octaves; ++o) {
        sum += amp * valueNoise(seed + 0x1000193ull * o, x * freq, y * freq);
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    return 2.0 * sum / norm - 1.0;
}

struct Renderer {
    const SceneSpec& spec;
    std::uint64_t texSeed;
    std::vector<BlobShape> blobs;
    std::vector<double> blobHue;
    std::vector<Point2> targets;
    double targetRadiusPx = 0;
    std::optional<Point2> mark;
    double markRadiusPx = 0;

    int blobAt(double x, double y) const {
        for (std::size_t i = 0; i < blobs.size(); ++i) {
            const auto& b = blobs[i];
            const double dx = x - b.cx, dy = y - b.cy;
            const double br = b.boundingRadius();
            if (dx * dx + dy * dy > br * br) continue;
            if (b.contains(x, y)) return static_cast<int>(i);
        }
        return -1;
    }

    // Colour and lichen membership at a plane coordinate.
    Rgb shade(double x, double y, bool& lichen) const {
        lichen = false;
        const double speck = spec.speckle *
            (2.0 * lattice(texSeed ^ 0x5bd1e995ull, static_cast<std::int64_t>(std::floor(x)),
                           static_cast<std::int64_t>(std::floor(y))) - 1.0);
        for (const auto& t : targets) {
            const double dx = x - t.x, dy = y - t.y;
            if (dx * dx + dy * dy <= targetRadiusPx * targetRadiusPx)
                return toRgb({100.0, 200.0, 205.0 + 0.8 * speck});
        }
        if (mark) {
            const double dx = x - mark->x, dy = y - mark->y;
            if (dx * dx + dy * dy <= markRadiusPx * markRadiusPx)
                return toRgb({0.0, 8.0, 238.0 + 0.4 * speck});
        }
        const double n1 = fbm(texSeed, x, y, spec.noiseScalePx, spec.octaves);
        const double n2 = fbm(texSeed + 77, x, y, spec.noiseScalePx * 1.7, 2);
        const int b = blobAt(x, y);
        if (b >= 0) {
            lichen = true;
            const double n3 = fbm(texSeed + 991 + b, x, y, spec.noiseScalePx * 0.35, 3);
            const double h = blobHue[b] + 2.0 * n2;
            const double s = spec.lichenSaturation + 25.0 * n3;
            const double v = 160.0 + spec.lichenTexture * n3 + speck;
            return toRgb({std::fmod(h + 180.0, 180.0), std::clamp(s, 80.0, 255.0), std::clamp(v, 60.0, 230.0)});
        }
        const double h = 14.0 + 3.0 * n2;
        const double s = 45.0 + 20.0 * n2;
        const double v = 130.0 + spec.rockContrast * n1 + speck;
        return toRgb({std::fmod(h + 180.0, 180.0), std::clamp(s, 0.0, 255.0), std::clamp(v, 20.0, 205.0)});
    }
};

Point2 planeCenter(const SceneSpec& spec) { return {spec.width / 2.0, spec.height / 2.0}; }

} // namespace

SceneSpec presetSpec(Difficulty d, std::uint64_t seed, int width, int height) {
    SceneSpec s;
    s.seed = seed;
    s.width = width;
    s.height = height;
    const double scale = std::sqrt(static_cast<double>(width) * height / (400.0 * 300.0));
    s.blobRadiusMin = 10 * scale;
    s.blobRadiusMax = 38 * scale;
    s.noiseScalePx = 48 * scale;
    s.blobCount = 9;
    switch (d) {
    case Difficulty::Easy:
        s.hueMargin = 40;
        s.lichenSaturation = 170;
        s.rockContrast = 45;
        s.lichenTexture = 25;
        s.colorJitter = 4;
        break;
    case Difficulty::Medium:
        s.hueMargin = 22;
        s.lichenSaturation = 120;
        s.rockContrast = 60;
        s.lichenTexture = 35;
        s.colorJitter = 6;
        break;
    case Difficulty::Hard:
        s.hueMargin = 10;
        s.lichenSaturation = 90;
        s.rockContrast = 70;
        s.lichenTexture = 45;
        s.colorJitter = 5;
        break;
    }
    return s;
}

SceneSpec calibrationSpec(std::uint64_t seed, double pxPerMm, std::optional<WarpParams> warp) {
    SceneSpec s = presetSpec(Difficulty::Easy, seed);
    s.pxPerMm = pxPerMm;
    s.width = static_cast<int>(std::lround((s.layout.widthMm + 56) * pxPerMm));
    s.height = static_cast<int>(std::lround((s.layout.heightMm + 44) * pxPerMm));
    s.blobCount = 6;
    s.blobRadiusMin = 4 * pxPerMm;
    s.blobRadiusMax = 14 * pxPerMm;
    s.noiseScalePx = 12 * pxPerMm;
    s.includeTargets = true;
    s.includeMarkDisk = true;
    s.warp = warp;
    return s;
}

WarpParams randomWarp(std::uint64_t seed, double maxTiltDeg) {
    Rng rng(seed ^ 0xA5A5A5A5ull);
    WarpParams w;
    w.tiltDeg = rng.uniform(0.0, maxTiltDeg);
    w.axisDeg = rng.uniform(0.0, 360.0);
    w.rollDeg = rng.uniform(-8.0, 8.0);
    return w;
}

Homography planeToPhoto(const SceneSpec& spec, const WarpParams& warp) {
    const double deg = std::numbers::pi / 180.0;
    const double t = warp.tiltDeg * deg, a = warp.axisDeg * deg, r = warp.rollDeg * deg;
    // Rodrigues rotation about the in-plane axis (cos a, sin a, 0).
    const double ux = std::cos(a), uy = std::sin(a);
    const double ct = std::cos(t), st = std::sin(t);
    const double tilt[3][3] = {{ct + ux * ux * (1 - ct), ux * uy * (1 - ct), uy * st},
                               {ux * uy * (1 - ct), ct + uy * uy * (1 - ct), -ux * st},
                               {-uy * st, ux * st, ct}};
    const double cr = std::cos(r), sr = std::sin(r);
    const double roll[3][3] = {{cr, -sr, 0}, {sr, cr, 0}, {0, 0, 1}};
    double rot[3][3] = {};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) rot[i][j] += roll[i][k] * tilt[k][j];

    const double f = warp.photoPxPerMm * warp.distanceMm;
    const double u0 = warp.outWidth / 2.0, v0 = warp.outHeight / 2.0;
    const double d = warp.distanceMm;
    // K [r1 r2 t] with t = (0, 0, d).
    const Homography mmToPhoto({f * rot[0][0] + u0 * rot[2][0], f * rot[0][1] + u0 * rot[2][1], u0 * d,
                                f * rot[1][0] + v0 * rot[2][0], f * rot[1][1] + v0 * rot[2][1], v0 * d,
                                rot[2][0], rot[2][1], d});
    const Point2 c = planeCenter(spec);
    const double k = 1.0 / spec.pxPerMm;
    const Homography planeToMm({k, 0, -c.x * k, 0, k, -c.y * k, 0, 0, 1});
    return mmToPhoto * planeToMm;
}

Scene generate(const SceneSpec& spec) {
    if (spec.width <= 0 || spec.height <= 0) throw InvalidArgument("scene size must be positive");
    if (spec.blobCount < 0 || spec.blobRadiusMin <= 0 || spec.blobRadiusMax < spec.blobRadiusMin)
        throw InvalidArgument("bad blob parameters");
    if (!(spec.pxPerMm > 0)) throw InvalidArgument("pxPerMm must be positive");

    Rng root(spec.seed);
    Rng layoutRng = root.split();
    Rng blobRng = root.split();
    Renderer rd{spec, root.split().next(), {}, {}, {}, 0, std::nullopt, 0};

    Scene scene;
    scene.meta.seed = spec.seed;
    scene.meta.pxPerMm = spec.pxPerMm;
    scene.meta.markDiameterMm = spec.includeMarkDisk ? spec.markDiameterMm : 0;

    const Point2 c = planeCenter(spec);
    if (spec.includeTargets) {
        const double hw = spec.layout.widthMm * spec.pxPerMm / 2, hh = spec.layout.heightMm * spec.pxPerMm / 2;
        rd.targets = {{c.x - hw, c.y - hh}, {c.x + hw, c.y - hh}, {c.x + hw, c.y + hh}, {c.x - hw, c.y + hh}};
        rd.targetRadiusPx = spec.targetRadiusMm * spec.pxPerMm;
    }
    if (spec.includeMarkDisk) {
        const double ox = layoutRng.uniform(-50, 50) * spec.pxPerMm;
        const double oy = layoutRng.uniform(-25, 25) * spec.pxPerMm;
        rd.mark = Point2{c.x + ox, c.y + oy};
        rd.markRadiusPx = spec.markDiameterMm * spec.pxPerMm / 2;
    }

    auto clear = [&](const BlobShape& b) {
        const double br = b.boundingRadius() + 3;
        for (const auto& t : rd.targets)
            if (std::hypot(b.cx - t.x, b.cy - t.y) < br + rd.targetRadiusPx) return false;
        if (rd.mark && std::hypot(b.cx - rd.mark->x, b.cy - rd.mark->y) < br + rd.markRadiusPx) return false;
        return true;
    };

    const double lichenHue = 14.0 + spec.hueMargin;
    if (!spec.explicitBlobs.empty()) {
        rd.blobs = spec.explicitBlobs;
    } else {
        for (int i = 0; i < spec.blobCount; ++i) {
            BlobShape b;
            int tries = 0;
            for (;; ++tries) {
                if (tries == 100)
                    throw SpecInfeasible("could not place lichen blob " + std::to_string(i) +
                                         " clear of targets after 100 tries");
                const double r = blobRng.uniform(spec.blobRadiusMin, spec.blobRadiusMax);
                b.rx = r;
                b.ry = r * blobRng.uniform(0.55, 1.0);
                b.angle = blobRng.uniform(0, std::numbers::pi);
                for (int k = 0; k < 4; ++k) {
                    b.amp[k] = blobRng.uniform(0.0, 0.09);
                    b.phase[k] = blobRng.uniform(0, 2 * std::numbers::pi);
                }
                b.cx = blobRng.uniform(0, spec.width);
                b.cy = blobRng.uniform(0, spec.height);
                if (clear(b)) break;
            }
            rd.blobs.push_back(b);
        }
    }
    for (std::size_t i = 0; i < rd.blobs.size(); ++i)
        rd.blobHue.push_back(lichenHue + blobRng.uniform(-spec.colorJitter, spec.colorJitter));
    scene.meta.blobs = rd.blobs;
    scene.meta.targetsPlane = rd.targets;
    scene.meta.markCenterPlane = rd.mark;

    // Plane frame render (also the image when unwarped).
    auto render = [&](int w, int h, const Homography* imageToPlane, Raster& img, BinaryMask& truth) {
        img = Raster(w, h, 3);
        truth = BinaryMask(w, h);
#pragma omp parallel for schedule(dynamic, 8)
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                Point2 p{double(x), double(y)};
                if (imageToPlane) p = imageToPlane->apply(p);
                bool lichen = false;
                const Rgb px = rd.shade(p.x, p.y, lichen);
                img.at(x, y, 0) = px.r;
                img.at(x, y, 1) = px.g;
                img.at(x, y, 2) = px.b;
                truth.at(x, y) = lichen ? 1 : 0;
            }
        }
    };

    if (spec.warp) {
        const Homography h = planeToPhoto(spec, *spec.warp);
        const Homography inv = h.inverse();
        scene.meta.planeToImage = h;
        render(spec.warp->outWidth, spec.warp->outHeight, &inv, scene.image, scene.truth);
        // Plane truth shares the rasterisation predicate.
        scene.planeTruth = BinaryMask(spec.width, spec.height);
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x) scene.planeTruth.at(x, y) = rd.blobAt(x, y) >= 0 ? 1 : 0;
        for (const auto& t : rd.targets) scene.meta.targetsImage.push_back(h.apply(t));
        if (rd.mark) scene.meta.markCenterImage = h.apply(*rd.mark);
    } else {
        render(spec.width, spec.height, nullptr, scene.image, scene.truth);
        scene.planeTruth = scene.truth;
        scene.meta.targetsImage = rd.targets;
        scene.meta.markCenterImage = rd.mark;
        scene.image.setScale(1.0 / spec.pxPerMm);
    }
    return scene;
}

std::string metaJson(const SceneMeta& meta) {
    using nlohmann::json;
    auto pts = [](const std::vector<Point2>& v) {
        json a = json::array();
        for (const auto& p : v) a.push_back({p.x, p.y});
        return a;
    };
    json j;
    j["seed"] = meta.seed;
    j["px_per_mm"] = meta.pxPerMm;
    j["targets_plane"] = pts(meta.targetsPlane);
    j["targets_image"] = pts(meta.targetsImage);
    if (meta.markCenterPlane) {
        j["mark"] = {{"center_plane", {meta.markCenterPlane->x, meta.markCenterPlane->y}},
                     {"center_image", {meta.markCenterImage->x, meta.markCenterImage->y}},
                     {"diameter_mm", meta.markDiameterMm}};
    }
    j["plane_to_image"] = meta.planeToImage.matrix();
    json blobs = json::array();
    for (const auto& b : meta.blobs)
        blobs.push_back({{"cx", b.cx}, {"cy", b.cy}, {"rx", b.rx}, {"ry", b.ry}, {"angle", b.angle}});
    j["blobs"] = blobs;
    return j.dump(2);
}

} // namespace lichen::synth
