#include "lichen/grabcut.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "lichen/error.hpp"
#include "lichen/maxflow.hpp"
#include "lichen/rng.hpp"

namespace lichen::grabcut {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
using Sample = std::array<double, 3>;

double sq(const Sample& a, const Sample& b) {
    const double d0 = a[0] - b[0], d1 = a[1] - b[1], d2 = a[2] - b[2];
    return d0 * d0 + d1 * d1 + d2 * d2;
}

std::vector<Sample> pixels(const Raster& img) {
    if (img.channels() != 3) throw InvalidArgument("grabcut: expected an RGB raster");
    std::vector<Sample> z(img.pixelCount());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const auto* p = img.pixel(i);
        z[i] = {double(p[0]), double(p[1]), double(p[2])};
    }
    return z;
}

void checkShape(const Raster& img, const Trimap& t) {
    if (t.width != img.width() || t.height != img.height() ||
        t.labels.size() != static_cast<std::size_t>(t.width) * t.height)
        throw InvalidArgument("grabcut: trimap does not match the image");
}

// The four forward neighbours; the other four are their reverses.
constexpr int kDx[4] = {1, 1, 0, -1};
constexpr int kDy[4] = {0, 1, 1, 1};

struct NLinks {
    int width = 0, height = 0;
    std::vector<std::array<double, 4>> w; // weight towards each forward neighbour, 0 if absent
};

NLinks buildNLinks(const std::vector<Sample>& z, int w, int h, double lambda) {
    double sum = 0;
    std::int64_t count = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int d = 0; d < 4; ++d) {
                const int nx = x + kDx[d], ny = y + kDy[d];
                if (nx < 0 || nx >= w || ny >= h) continue;
                sum += sq(z[static_cast<std::size_t>(y) * w + x], z[static_cast<std::size_t>(ny) * w + nx]);
                ++count;
            }
    const double beta = sum > 0 ? count / (2.0 * sum) : 0.0;
    NLinks n{w, h, std::vector<std::array<double, 4>>(z.size())};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            for (int d = 0; d < 4; ++d) {
                const int nx = x + kDx[d], ny = y + kDy[d];
                if (nx < 0 || nx >= w || ny >= h) {
                    n.w[i][d] = 0;
                    continue;
                }
                const double dist = (kDx[d] != 0 && kDy[d] != 0) ? std::numbers::sqrt2 : 1.0;
                n.w[i][d] = lambda * std::exp(-beta * sq(z[i], z[static_cast<std::size_t>(ny) * w + nx])) / dist;
            }
        }
    return n;
}

int nearest(const Sample& s, const std::vector<Sample>& centers) {
    int best = 0;
    double bd = sq(s, centers[0]);
    for (int k = 1; k < static_cast<int>(centers.size()); ++k) {
        const double d = sq(s, centers[k]);
        if (d < bd) {
            bd = d;
            best = k;
        }
    }
    return best;
}

// k-means++ seeding and ten Lloyd rounds; returns component per sample.
std::vector<int> kmeans(const std::vector<Sample>& s, Rng rng) {
    std::vector<Sample> centers{s[rng.below(s.size())]};
    std::vector<double> d2(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) d2[i] = sq(s[i], centers[0]);
    while (static_cast<int>(centers.size()) < Gmm::kComponents) {
        double total = 0;
        for (double d : d2) total += d;
        if (total <= 0) break; // fewer distinct colours than components
        double r = rng.uniform() * total;
        std::size_t pick = 0;
        for (; pick + 1 < s.size(); ++pick) {
            r -= d2[pick];
            if (r < 0 && d2[pick] > 0) break;
        }
        while (d2[pick] == 0) --pick; // numeric tail fell on a duplicate
        centers.push_back(s[pick]);
        for (std::size_t i = 0; i < s.size(); ++i) d2[i] = std::min(d2[i], sq(s[i], centers.back()));
    }
    std::vector<int> assign(s.size());
    for (int round = 0; round < 10; ++round) {
        for (std::size_t i = 0; i < s.size(); ++i) assign[i] = nearest(s[i], centers);
        std::vector<Sample> acc(centers.size(), Sample{0, 0, 0});
        std::vector<std::int64_t> n(centers.size(), 0);
        for (std::size_t i = 0; i < s.size(); ++i) {
            for (int c = 0; c < 3; ++c) acc[assign[i]][c] += s[i][c];
            ++n[assign[i]];
        }
        for (std::size_t k = 0; k < centers.size(); ++k)
            if (n[k])
                for (int c = 0; c < 3; ++c) centers[k][c] = acc[k][c] / n[k];
    }
    for (std::size_t i = 0; i < s.size(); ++i) assign[i] = nearest(s[i], centers);
    return assign;
}

void reassign(const Gmm& g, const std::vector<Sample>& s, std::vector<int>& assign) {
    assign.resize(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) assign[i] = g.best(s[i].data()).first;
}

struct ClassSamples {
    std::vector<Sample> fg, bg;
};

ClassSamples split(const std::vector<Sample>& z, const Trimap& t) {
    ClassSamples c;
    for (std::size_t i = 0; i < z.size(); ++i) (isForeground(t.labels[i]) ? c.fg : c.bg).push_back(z[i]);
    return c;
}

std::pair<Gmm, Gmm> initialModels(const ClassSamples& c, const Params& params) {
    if (c.fg.empty() || c.bg.empty())
        throw ModelFailure(std::string("grabcut: no ") + (c.fg.empty() ? "foreground" : "background") +
                           " pixels; add strokes of that class");
    Rng rng(params.seed);
    Gmm fg, bg;
    std::vector<int> a = kmeans(c.fg, rng.split());
    fg.estimate(c.fg, a);
    a = kmeans(c.bg, rng.split());
    bg.estimate(c.bg, a);
    return {fg, bg};
}

void refit(Gmm& g, const std::vector<Sample>& s) {
    std::vector<int> a;
    reassign(g, s, a);
    g.estimate(s, a);
}

} // namespace

Trimap::Trimap(int w, int h, TrimapLabel fill) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw InvalidArgument("Trimap: dimensions must be positive");
    labels.assign(static_cast<std::size_t>(w) * h, fill);
}

Trimap initTrimap(const Raster& img, const Rect& r) {
    if (r.width <= 0 || r.height <= 0) throw InvalidArgument("initTrimap: empty rectangle");
    if (r.x < 0 || r.y < 0 || r.x + r.width > img.width() || r.y + r.height > img.height())
        throw InvalidArgument("initTrimap: rectangle exceeds the image");
    Trimap t(img.width(), img.height(), TrimapLabel::HardBg);
    for (int y = r.y; y < r.y + r.height; ++y)
        for (int x = r.x; x < r.x + r.width; ++x) t.at(x, y) = TrimapLabel::ProbFg;
    return t;
}

double Gmm::componentCost(int k, const double z[3]) const {
    if (comp_[k].weight <= 0) return kInf;
    const auto& m = comp_[k].mean;
    const auto& inv = inv_[k];
    const double d[3] = {z[0] - m[0], z[1] - m[1], z[2] - m[2]};
    double q = 0;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) q += d[r] * inv[3 * r + c] * d[c];
    return constant_[k] + 0.5 * q;
}

std::pair<int, double> Gmm::best(const double z[3]) const {
    int bk = 0;
    double bc = componentCost(0, z);
    for (int k = 1; k < kComponents; ++k) {
        const double c = componentCost(k, z);
        if (c < bc) {
            bc = c;
            bk = k;
        }
    }
    return {bk, bc};
}

void Gmm::estimate(const std::vector<std::array<double, 3>>& s, const std::vector<int>& assign, double minEig) {
    if (s.empty() || s.size() != assign.size()) throw ModelFailure("Gmm::estimate: no samples");
    std::array<std::int64_t, kComponents> n{};
    std::array<std::array<double, 3>, kComponents> sum{};
    for (std::size_t i = 0; i < s.size(); ++i) {
        ++n[assign[i]];
        for (int c = 0; c < 3; ++c) sum[assign[i]][c] += s[i][c];
    }
    for (int k = 0; k < kComponents; ++k) {
        comp_[k] = Component{};
        if (!n[k]) continue;
        comp_[k].weight = double(n[k]) / double(s.size());
        for (int c = 0; c < 3; ++c) comp_[k].mean[c] = sum[k][c] / n[k];
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto& cp = comp_[assign[i]];
        const double d[3] = {s[i][0] - cp.mean[0], s[i][1] - cp.mean[1], s[i][2] - cp.mean[2]};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) cp.cov[3 * r + c] += d[r] * d[c];
    }
    for (int k = 0; k < kComponents; ++k) {
        if (!n[k]) continue;
        Eigen::Matrix3d cov;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) cov(r, c) = comp_[k].cov[3 * r + c] / n[k];
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
        const Eigen::Vector3d ev = es.eigenvalues().cwiseMax(minEig);
        const Eigen::Matrix3d v = es.eigenvectors();
        const Eigen::Matrix3d reg = v * ev.asDiagonal() * v.transpose();
        const Eigen::Matrix3d inv = v * ev.cwiseInverse().asDiagonal() * v.transpose();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                comp_[k].cov[3 * r + c] = reg(r, c);
                inv_[k][3 * r + c] = inv(r, c);
            }
        const double logDet = std::log(ev[0]) + std::log(ev[1]) + std::log(ev[2]);
        constant_[k] = -std::log(comp_[k].weight) + 0.5 * logDet + 1.5 * std::log(2 * std::numbers::pi);
    }
}

std::pair<Gmm, Gmm> fitGmms(const Raster& img, const Trimap& trimap, const Params& params) {
    checkShape(img, trimap);
    const ClassSamples c = split(pixels(img), trimap);
    auto [fg, bg] = initialModels(c, params);
    refit(fg, c.fg);
    refit(bg, c.bg);
    return {fg, bg};
}

namespace {

double energyImpl(const std::vector<Sample>& z, const NLinks& nl, const Trimap& t, const BinaryMask& fg,
                  const Gmm& fgModel, const Gmm& bgModel) {
    double e = 0;
    for (std::size_t i = 0; i < z.size(); ++i) e += (fg[i] ? fgModel : bgModel).best(z[i].data()).second;
    for (int y = 0; y < t.height; ++y)
        for (int x = 0; x < t.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * t.width + x;
            for (int d = 0; d < 4; ++d) {
                if (nl.w[i][d] == 0) continue;
                const std::size_t j = static_cast<std::size_t>(y + kDy[d]) * t.width + (x + kDx[d]);
                if (fg[i] != fg[j]) e += nl.w[i][d];
            }
        }
    return e;
}

} // namespace

double energy(const Raster& img, const Trimap& trimap, const BinaryMask& fg, const Gmm& fgModel,
              const Gmm& bgModel, const Params& params) {
    checkShape(img, trimap);
    const auto z = pixels(img);
    return energyImpl(z, buildNLinks(z, img.width(), img.height(), params.lambda), trimap, fg, fgModel, bgModel);
}

Segmentation segment(const Raster& img, const Trimap& trimap, const Params& params) {
    checkShape(img, trimap);
    if (params.iterations < 1) throw InvalidArgument("segment: iterations must be at least 1");
    const int w = img.width(), h = img.height();
    const auto z = pixels(img);
    const NLinks nl = buildNLinks(z, w, h, params.lambda);

    // Finite stand-in for infinity: more than any pixel's total n-link weight.
    double hardCap = 1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0;
            for (int d = 0; d < 4; ++d) s += nl.w[static_cast<std::size_t>(y) * w + x][d];
            for (int d = 0; d < 4; ++d) {
                const int px = x - kDx[d], py = y - kDy[d];
                if (px >= 0 && py >= 0 && px < w) s += nl.w[static_cast<std::size_t>(py) * w + px][d];
            }
            hardCap = std::max(hardCap, 1 + s);
        }

    Segmentation out;
    out.trimap = trimap;
    out.mask = BinaryMask(w, h);
    for (std::size_t i = 0; i < z.size(); ++i) out.mask[i] = isForeground(trimap.labels[i]);

    ClassSamples cls = split(z, out.trimap);
    auto [fgModel, bgModel] = initialModels(cls, params);

    for (int it = 0; it < params.iterations; ++it) {
        if (it > 0) {
            cls = split(z, out.trimap);
            if (cls.fg.empty() || cls.bg.empty()) break; // nothing left to model
        }
        refit(fgModel, cls.fg);
        refit(bgModel, cls.bg);

        graph::MaxFlowGraph g(static_cast<int>(z.size()), static_cast<int>(z.size()) * 4);
        for (std::size_t i = 0; i < z.size(); ++i) {
            const TrimapLabel l = out.trimap.labels[i];
            if (l == TrimapLabel::HardFg) {
                g.addTermWeights(static_cast<int>(i), hardCap, 0);
            } else if (l == TrimapLabel::HardBg) {
                g.addTermWeights(static_cast<int>(i), 0, hardCap);
            } else {
                const double dFg = fgModel.best(z[i].data()).second, dBg = bgModel.best(z[i].data()).second;
                const double m = std::min(dFg, dBg);
                g.addTermWeights(static_cast<int>(i), dBg - m, dFg - m);
            }
        }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                for (int d = 0; d < 4; ++d)
                    if (nl.w[i][d] > 0) {
                        const int j = (y + kDy[d]) * w + (x + kDx[d]);
                        g.addEdges(static_cast<int>(i), j, nl.w[i][d], nl.w[i][d]);
                    }
            }
        g.maxFlow();

        std::size_t changed = 0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            TrimapLabel& l = out.trimap.labels[i];
            if (isHard(l)) continue;
            const bool fg = g.inSourceSegment(static_cast<int>(i));
            const TrimapLabel nl2 = fg ? TrimapLabel::ProbFg : TrimapLabel::ProbBg;
            if (nl2 != l) ++changed;
            l = nl2;
            out.mask[i] = fg;
        }
        out.energies.push_back(energyImpl(z, nl, out.trimap, out.mask, fgModel, bgModel));
        out.iterations = it + 1;
        if (static_cast<double>(changed) < params.minChangeFraction * static_cast<double>(z.size())) break;
    }
    return out;
}

Trimap applyStrokes(const Trimap& trimap, const std::vector<Stroke>& strokes) {
    Trimap t = trimap;
    for (const Stroke& s : strokes) {
        if (s.points.empty()) throw InvalidArgument("stroke has no points");
        if (!(s.brushRadius > 0)) throw InvalidArgument("stroke brush radius must be positive");
        for (const auto& p : s.points)
            if (!(p.x >= -0.5 && p.y >= -0.5 && p.x <= t.width - 0.5 && p.y <= t.height - 0.5))
                throw InvalidArgument("stroke point outside the image");
        const TrimapLabel label = s.foreground ? TrimapLabel::HardFg : TrimapLabel::HardBg;
        const double r = s.brushRadius;
        for (std::size_t k = 0; k < s.points.size(); ++k) {
            const StrokePoint a = s.points[k], b = s.points[k + 1 < s.points.size() ? k + 1 : k];
            const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - r)));
            const int x1 = std::min(t.width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + r)));
            const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - r)));
            const int y1 = std::min(t.height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + r)));
            const double vx = b.x - a.x, vy = b.y - a.y, len2 = vx * vx + vy * vy;
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    double u = len2 > 0 ? ((x - a.x) * vx + (y - a.y) * vy) / len2 : 0;
                    u = std::clamp(u, 0.0, 1.0);
                    const double dx = x - (a.x + u * vx), dy = y - (a.y + u * vy);
                    if (dx * dx + dy * dy <= r * r) t.at(x, y) = label;
                }
        }
    }
    return t;
}

Segmentation refine(const Raster& img, const Trimap& trimap, const std::vector<Stroke>& strokes,
                    const Params& params) {
    return segment(img, applyStrokes(trimap, strokes), params);
}

} // namespace lichen::grabcut
