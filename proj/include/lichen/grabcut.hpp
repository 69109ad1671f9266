#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "lichen/imaging.hpp"

namespace lichen::grabcut {

enum class TrimapLabel : std::uint8_t { HardBg = 0, HardFg = 1, ProbBg = 2, ProbFg = 3 };

inline bool isHard(TrimapLabel l) { return l == TrimapLabel::HardBg || l == TrimapLabel::HardFg; }
inline bool isForeground(TrimapLabel l) { return l == TrimapLabel::HardFg || l == TrimapLabel::ProbFg; }

struct Trimap {
    int width = 0;
    int height = 0;
    std::vector<TrimapLabel> labels;

    Trimap() = default;
    Trimap(int w, int h, TrimapLabel fill);
    TrimapLabel& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
    TrimapLabel at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    bool operator==(const Trimap&) const = default;
};

struct Rect {
    int x = 0, y = 0, width = 0, height = 0;
};

// Outside the rectangle is HardBg, inside ProbFg.
Trimap initTrimap(const Raster& img, const Rect& rect);

// Full-covariance Gaussian mixture in RGB. Components with zero weight are
// inert and never win an assignment.
class Gmm {
public:
    static constexpr int kComponents = 5;

    struct Component {
        double weight = 0;
        std::array<double, 3> mean{};
        std::array<double, 9> cov{}; // row-major, SPD after regularisation
    };

    const std::array<Component, kComponents>& components() const { return comp_; }

    // Negative log of weight times density for one component; +inf when
    // the component is empty.
    double componentCost(int k, const double z[3]) const;
    // Cheapest component and its cost.
    std::pair<int, double> best(const double z[3]) const;

    // Sets every component from the samples assigned to it and clamps
    // covariance eigenvalues to at least `minEig`.
    void estimate(const std::vector<std::array<double, 3>>& samples, const std::vector<int>& assign,
                  double minEig = 1e-3);

private:
    void prepare(int k);

    std::array<Component, kComponents> comp_{};
    std::array<std::array<double, 9>, kComponents> inv_{};
    std::array<double, kComponents> constant_{};
};

struct Params {
    int iterations = 5;
    double lambda = 50;
    double minChangeFraction = 0.001; // stop when fewer Prob pixels flip
    std::uint64_t seed = 0x6c696368656eULL;
};

// k-means++ initialised mixtures for both classes followed by one
// reassign-and-reestimate pass. Throws ModelFailure when a class is empty.
std::pair<Gmm, Gmm> fitGmms(const Raster& img, const Trimap& trimap, const Params& params = {});

struct Segmentation {
    BinaryMask mask;
    Trimap trimap;               // Prob labels updated to the final cut
    std::vector<double> energies; // after each iteration's cut
    int iterations = 0;
};

Segmentation segment(const Raster& img, const Trimap& trimap, const Params& params = {});

struct StrokePoint {
    double x = 0, y = 0;
};

struct Stroke {
    std::vector<StrokePoint> points;
    bool foreground = true;
    double brushRadius = 5;
};

// Paints each stroke as a chain of capsules of the brush radius. Later
// strokes overwrite earlier ones.
Trimap applyStrokes(const Trimap& trimap, const std::vector<Stroke>& strokes);

Segmentation refine(const Raster& img, const Trimap& trimap, const std::vector<Stroke>& strokes,
                    const Params& params = {});

// Energy of a labelling under fixed models, as minimised by segment().
double energy(const Raster& img, const Trimap& trimap, const BinaryMask& fg, const Gmm& fgModel,
              const Gmm& bgModel, const Params& params = {});

} // namespace lichen::grabcut
