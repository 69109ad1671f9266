#include "lichen/slic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lichen/error.hpp"

namespace lichen::slic {

void SlicParams::validate() const {
    if (nSegments < 2) throw InvalidArgument("slic: nSegments must be at least 2");
    if (!(compactness > 0)) throw InvalidArgument("slic: compactness must be positive");
    if (!(sigma >= 0)) throw InvalidArgument("slic: sigma must be non-negative");
}

std::vector<SlicParams> sweepGrid() {
    std::vector<SlicParams> g;
    for (int n : {2000, 1000, 500})
        for (double c : {20.0, 10.0})
            for (double s : {3.0, 1.0}) g.push_back({n, c, s});
    return g;
}

namespace {

double srgbToLinear(double c) {
    c /= 255.0;
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double labF(double t) {
    constexpr double d = 6.0 / 29.0;
    return t > d * d * d ? std::cbrt(t) : t / (3 * d * d) + 4.0 / 29.0;
}

struct Grid {
    double step = 0;
    int nx = 0, ny = 0;
};

Grid grid(int w, int h, int nSegments) {
    Grid g;
    g.step = std::sqrt(static_cast<double>(w) * h / nSegments);
    g.nx = std::max(1, static_cast<int>(std::lround(w / g.step)));
    g.ny = std::max(1, static_cast<int>(std::lround(h / g.step)));
    return g;
}

struct Center {
    double l, a, b, x, y;
};

// Search window of a centre: pixels within +-S on each axis. Shared by both
// assignment kernels so they agree on coverage.
struct Window {
    int x0, x1, y0, y1;
};

Window window(const Center& c, double s, int w, int h) {
    return {std::max(0, static_cast<int>(std::ceil(c.x - s))), std::min(w - 1, static_cast<int>(std::floor(c.x + s))),
            std::max(0, static_cast<int>(std::ceil(c.y - s))), std::min(h - 1, static_cast<int>(std::floor(c.y + s)))};
}

inline double dist2(const Center& c, float l, float a, float b, int x, int y, double spatialWeight) {
    const double dl = l - c.l, da = a - c.a, db = b - c.b;
    const double dx = x - c.x, dy = y - c.y;
    return dl * dl + da * da + db * db + (dx * dx + dy * dy) * spatialWeight;
}

void assignSerial(const LabImage& lab, const std::vector<Center>& centers, double s, double sw,
                  std::vector<std::int32_t>& label, std::vector<double>& best) {
    const int w = lab.width, h = lab.height;
    std::fill(best.begin(), best.end(), INFINITY);
    for (int k = 0; k < static_cast<int>(centers.size()); ++k) {
        const Window win = window(centers[k], s, w, h);
        for (int y = win.y0; y <= win.y1; ++y)
            for (int x = win.x0; x <= win.x1; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                const double d = dist2(centers[k], lab.l[i], lab.a[i], lab.b[i], x, y, sw);
                if (d < best[i]) {
                    best[i] = d;
                    label[i] = k;
                }
            }
    }
}

void assignParallel(const LabImage& lab, const std::vector<Center>& centers, double s, double sw,
                    std::vector<std::int32_t>& label) {
    const int w = lab.width, h = lab.height;
    // Bucket every window into the coarse cells it overlaps.
    const int cell = std::max(1, static_cast<int>(std::ceil(s)));
    const int cw = (w + cell - 1) / cell, ch = (h + cell - 1) / cell;
    std::vector<std::vector<int>> buckets(static_cast<std::size_t>(cw) * ch);
    std::vector<Window> wins(centers.size());
    for (int k = 0; k < static_cast<int>(centers.size()); ++k) {
        const Window win = wins[k] = window(centers[k], s, w, h);
        if (win.x0 > win.x1 || win.y0 > win.y1) continue;
        for (int cy = win.y0 / cell; cy <= win.y1 / cell; ++cy)
            for (int cx = win.x0 / cell; cx <= win.x1 / cell; ++cx) buckets[static_cast<std::size_t>(cy) * cw + cx].push_back(k);
    }
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            double best = INFINITY;
            int bestK = -1;
            for (int k : buckets[static_cast<std::size_t>(y / cell) * cw + x / cell]) {
                const Window& win = wins[k];
                if (x < win.x0 || x > win.x1 || y < win.y0 || y > win.y1) continue;
                const double d = dist2(centers[k], lab.l[i], lab.a[i], lab.b[i], x, y, sw);
                if (d < best || (d == best && k < bestK)) {
                    best = d;
                    bestK = k;
                }
            }
            if (bestK >= 0) label[i] = bestK;
        }
    }
}

// Union-find over 4-connected same-label components, merging components
// smaller than `minSize` into their largest neighbour, then relabelling in
// raster order.
SuperpixelMap enforceConnectivity(const std::vector<std::int32_t>& raw, int w, int h, std::int64_t minSize) {
    const std::size_t n = raw.size();
    std::vector<std::int32_t> comp(n, -1);
    std::vector<std::int64_t> size;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < n; ++s) {
        if (comp[s] >= 0) continue;
        const auto id = static_cast<std::int32_t>(size.size());
        size.push_back(0);
        comp[s] = id;
        stack.push_back(s);
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            ++size[id];
            const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
            const std::size_t nb[4] = {i - 1, i + 1, i - w, i + w};
            const bool ok[4] = {x > 0, x + 1 < w, y > 0, y + 1 < h};
            for (int k = 0; k < 4; ++k)
                if (ok[k] && comp[nb[k]] < 0 && raw[nb[k]] == raw[i]) {
                    comp[nb[k]] = id;
                    stack.push_back(nb[k]);
                }
        }
    }
    const int nc = static_cast<int>(size.size());
    std::vector<std::vector<int>> adj(nc);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (x + 1 < w && comp[i] != comp[i + 1]) {
                adj[comp[i]].push_back(comp[i + 1]);
                adj[comp[i + 1]].push_back(comp[i]);
            }
            if (y + 1 < h && comp[i] != comp[i + w]) {
                adj[comp[i]].push_back(comp[i + w]);
                adj[comp[i + w]].push_back(comp[i]);
            }
        }
    for (auto& a : adj) {
        std::sort(a.begin(), a.end());
        a.erase(std::unique(a.begin(), a.end()), a.end());
    }

    std::vector<int> parent(nc);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    for (int c = 0; c < nc; ++c) {
        int r = find(c);
        while (size[r] < minSize) {
            int target = -1;
            for (int nb : adj[r]) {
                const int q = find(nb);
                if (q == r) continue;
                if (target < 0 || size[q] > size[target] || (size[q] == size[target] && q < target)) target = q;
            }
            if (target < 0) break; // the whole image
            parent[r] = target;
            size[target] += size[r];
            std::vector<int> merged;
            merged.reserve(adj[target].size() + adj[r].size());
            std::merge(adj[target].begin(), adj[target].end(), adj[r].begin(), adj[r].end(), std::back_inserter(merged));
            merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
            adj[target] = std::move(merged);
            adj[r].clear();
            r = target;
        }
    }

    SuperpixelMap out;
    out.width = w;
    out.height = h;
    out.labels.resize(n);
    std::vector<std::int32_t> relabel(nc, -1);
    for (std::size_t i = 0; i < n; ++i) {
        const int r = find(comp[i]);
        if (relabel[r] < 0) {
            relabel[r] = out.count++;
            out.sizes.push_back(0);
        }
        out.labels[i] = relabel[r];
        ++out.sizes[relabel[r]];
    }
    return out;
}

} // namespace

LabImage toLab(const FloatImage& rgb) {
    if (rgb.channels != 3) throw InvalidArgument("toLab: expected three channels");
    LabImage lab;
    lab.width = rgb.width;
    lab.height = rgb.height;
    const std::size_t n = static_cast<std::size_t>(rgb.width) * rgb.height;
    lab.l.resize(n);
    lab.a.resize(n);
    lab.b.resize(n);
    const float* r = rgb.plane.data();
    const float* g = r + n;
    const float* b = g + n;
    constexpr double xn = 0.95047, zn = 1.08883;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        const double R = srgbToLinear(r[i]), G = srgbToLinear(g[i]), B = srgbToLinear(b[i]);
        const double X = 0.4124564 * R + 0.3575761 * G + 0.1804375 * B;
        const double Y = 0.2126729 * R + 0.7151522 * G + 0.0721750 * B;
        const double Z = 0.0193339 * R + 0.1191920 * G + 0.9503041 * B;
        const double fx = labF(X / xn), fy = labF(Y), fz = labF(Z / zn);
        lab.l[i] = static_cast<float>(116 * fy - 16);
        lab.a[i] = static_cast<float>(500 * (fx - fy));
        lab.b[i] = static_cast<float>(200 * (fy - fz));
    }
    return lab;
}

int seedCount(int width, int height, int nSegments) {
    const Grid g = grid(width, height, nSegments);
    return g.nx * g.ny;
}

SuperpixelMap slic(const Raster& img, const SlicParams& p, Exec exec) {
    p.validate();
    if (img.channels() != 3) throw InvalidArgument("slic: expected an RGB raster");
    const int w = img.width(), h = img.height();
    if (static_cast<std::int64_t>(p.nSegments) > static_cast<std::int64_t>(w) * h)
        throw InvalidArgument("slic: more segments than pixels");

    const LabImage lab = toLab(gaussianSmooth(toFloat(img), p.sigma, exec));
    const Grid g = grid(w, h, p.nSegments);
    const double s = g.step;
    const double sw = (p.compactness / s) * (p.compactness / s);

    auto at = [&](int x, int y) { return static_cast<std::size_t>(std::clamp(y, 0, h - 1)) * w + std::clamp(x, 0, w - 1); };
    auto gradient = [&](int x, int y) {
        const std::size_t l = at(x - 1, y), r = at(x + 1, y), u = at(x, y - 1), d = at(x, y + 1);
        auto sq = [&](std::size_t i, std::size_t j) {
            const double a = lab.l[i] - lab.l[j], b = lab.a[i] - lab.a[j], c = lab.b[i] - lab.b[j];
            return a * a + b * b + c * c;
        };
        return sq(l, r) + sq(u, d);
    };

    // Seeds at cell centres of an nx-by-ny grid. A seed moves to a pixel of
    // its 3x3 neighbourhood only if that pixel is strictly flatter.
    std::vector<Center> centers;
    const double sx = static_cast<double>(w) / g.nx, sy = static_cast<double>(h) / g.ny;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            double fx = sx * (i + 0.5) - 0.5, fy = sy * (j + 0.5) - 0.5;
            const int cx = std::clamp(static_cast<int>(std::lround(fx)), 0, w - 1);
            const int cy = std::clamp(static_cast<int>(std::lround(fy)), 0, h - 1);
            int bx = cx, by = cy;
            double bg = gradient(cx, cy);
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int x = cx + dx, y = cy + dy;
                    if (x < 0 || y < 0 || x >= w || y >= h) continue;
                    const double gv = gradient(x, y);
                    if (gv < bg) {
                        bg = gv;
                        bx = x;
                        by = y;
                    }
                }
            if (bx != cx || by != cy) {
                fx = bx;
                fy = by;
            }
            const std::size_t k = static_cast<std::size_t>(by) * w + bx;
            centers.push_back({lab.l[k], lab.a[k], lab.b[k], fx, fy});
        }

    std::vector<std::int32_t> label(static_cast<std::size_t>(w) * h, -1);
    std::vector<double> best(exec == Exec::Serial ? label.size() : 0);
    for (int iter = 0; iter < 10; ++iter) {
        if (exec == Exec::Serial)
            assignSerial(lab, centers, s, sw, label, best);
        else
            assignParallel(lab, centers, s, sw, label);

        // Centre update in raster order so both paths sum identically.
        std::vector<Center> acc(centers.size(), Center{0, 0, 0, 0, 0});
        std::vector<std::int64_t> n(centers.size(), 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                const int k = label[i];
                if (k < 0) continue;
                acc[k].l += lab.l[i];
                acc[k].a += lab.a[i];
                acc[k].b += lab.b[i];
                acc[k].x += x;
                acc[k].y += y;
                ++n[k];
            }
        for (std::size_t k = 0; k < centers.size(); ++k)
            if (n[k]) centers[k] = {acc[k].l / n[k], acc[k].a / n[k], acc[k].b / n[k], acc[k].x / n[k], acc[k].y / n[k]};
    }
    const auto minSize = static_cast<std::int64_t>(std::floor(s * s / 4));
    return enforceConnectivity(label, w, h, std::max<std::int64_t>(minSize, 1));
}

bool isPartition(const SuperpixelMap& m) {
    if (m.labels.size() != static_cast<std::size_t>(m.width) * m.height) return false;
    if (m.sizes.size() != static_cast<std::size_t>(m.count)) return false;
    std::vector<std::int64_t> seen(m.count, 0);
    for (auto l : m.labels) {
        if (l < 0 || l >= m.count) return false;
        ++seen[l];
    }
    for (int k = 0; k < m.count; ++k)
        if (seen[k] == 0 || seen[k] != m.sizes[k]) return false;
    return true;
}

bool allSegmentsConnected(const SuperpixelMap& m) {
    std::vector<char> visited(m.labels.size(), 0);
    std::vector<char> labelSeen(m.count, 0);
    std::vector<std::size_t> stack;
    const int w = m.width, h = m.height;
    for (std::size_t s = 0; s < m.labels.size(); ++s) {
        if (visited[s]) continue;
        const int l = m.labels[s];
        if (labelSeen[l]) return false; // a second component of the same label
        labelSeen[l] = 1;
        visited[s] = 1;
        stack.push_back(s);
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
            const std::size_t nb[4] = {i - 1, i + 1, i - w, i + w};
            const bool ok[4] = {x > 0, x + 1 < w, y > 0, y + 1 < h};
            for (int k = 0; k < 4; ++k)
                if (ok[k] && !visited[nb[k]] && m.labels[nb[k]] == l) {
                    visited[nb[k]] = 1;
                    stack.push_back(nb[k]);
                }
        }
    }
    return true;
}

} // namespace lichen::slic
