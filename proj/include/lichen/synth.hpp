#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lichen/imaging.hpp"
#include "lichen/rectify.hpp"

namespace lichen::synth {

enum class Difficulty { Easy, Medium, Hard };

Difficulty parseDifficulty(const std::string& s);
std::string toString(Difficulty d);

// Noise-perturbed ellipse in plane pixel coordinates. The boundary radius
// along ellipse angle t is scaled by 1 + sum_k amp[k] cos((k+2) t + phase[k]).
struct BlobShape {
    double cx = 0, cy = 0;
    double rx = 10, ry = 10;
    double angle = 0;
    std::array<double, 4> amp{};
    std::array<double, 4> phase{};

    bool contains(double x, double y) const;
    double boundingRadius() const;
};

// Camera pose used to photograph the plane. Tilt rotates the board about an
// in-plane axis at `axisDeg`; roll spins it about the optical axis.
struct WarpParams {
    double tiltDeg = 0;
    double axisDeg = 0;
    double rollDeg = 0;
    double distanceMm = 600;
    double photoPxPerMm = 6.5;
    int outWidth = 3000;
    int outHeight = 2000;
};

struct SceneSpec {
    std::uint64_t seed = 1;
    int width = 400;  // plane frame, pixels
    int height = 300;
    double pxPerMm = 1.0; // plane frame scale

    int blobCount = 8;
    double blobRadiusMin = 10;
    double blobRadiusMax = 40;
    double colorJitter = 6;      // hue jitter between blobs, 8-bit hue units
    std::vector<BlobShape> explicitBlobs; // replaces random blobs when non-empty

    // Rock texture: multi-octave value noise.
    int octaves = 4;
    double noiseScalePx = 48;
    double rockContrast = 60;
    double speckle = 10;

    // Separation between rock and lichen colours.
    double hueMargin = 22;       // 8-bit hue units (degrees / 2)
    double lichenSaturation = 120;
    double lichenTexture = 35;

    bool includeTargets = false;
    bool includeMarkDisk = false;
    rectify::TargetLayout layout{};
    double targetRadiusMm = 10;
    double markDiameterMm = 60;

    std::optional<WarpParams> warp;
};

// Preset for a plain classification scene (no targets).
SceneSpec presetSpec(Difficulty d, std::uint64_t seed, int width = 400, int height = 300);

// Preset for a calibration scene: targets plus the 60 mm mark disk on a
// plane rendered at `pxPerMm`, optionally photographed through `warp`.
SceneSpec calibrationSpec(std::uint64_t seed, double pxPerMm = 4.0,
                          std::optional<WarpParams> warp = std::nullopt);

// Random camera pose with tilt up to `maxTiltDeg` and roll up to 8 degrees.
WarpParams randomWarp(std::uint64_t seed, double maxTiltDeg = 30.0);

struct SceneMeta {
    std::uint64_t seed = 0;
    double pxPerMm = 1;
    std::vector<rectify::Point2> targetsPlane; // TL, TR, BR, BL
    std::vector<rectify::Point2> targetsImage;
    std::optional<rectify::Point2> markCenterPlane;
    std::optional<rectify::Point2> markCenterImage;
    double markDiameterMm = 0;
    rectify::Homography planeToImage; // identity when unwarped
    std::vector<BlobShape> blobs;
};

struct Scene {
    Raster image;
    BinaryMask truth;      // image frame
    BinaryMask planeTruth; // plane frame (equal to truth when unwarped)
    SceneMeta meta;
};

Scene generate(const SceneSpec& spec);

// Homography from plane pixels to photo pixels for the given pose.
rectify::Homography planeToPhoto(const SceneSpec& spec, const WarpParams& warp);

std::string metaJson(const SceneMeta& meta);

} // namespace lichen::synth
