#include "lichen/maxflow.hpp"

#include <algorithm>
#include <climits>
#include <cmath>

#include "lichen/error.hpp"

namespace lichen::graph {

namespace {
constexpr int kTerminal = -1;
constexpr int kOrphan = -2;
} // namespace

MaxFlowGraph::MaxFlowGraph(int vertexCount, int edgeHint) {
    if (vertexCount < 0) throw InvalidArgument("MaxFlowGraph: negative vertex count");
    vtx_.resize(vertexCount);
    // Edge slots 0 and 1 are never used so that index 0 can mean "none".
    edges_.reserve(2 + 2 * static_cast<std::size_t>(std::max(edgeHint, 0)));
    edges_.resize(2, Edge{0, 0, 0});
}

int MaxFlowGraph::addVertex() {
    vtx_.emplace_back();
    return vertexCount() - 1;
}

void MaxFlowGraph::addTermWeights(int i, double sourceW, double sinkW) {
    if (i < 0 || i >= vertexCount()) throw InvalidArgument("addTermWeights: vertex out of range");
    if (!(sourceW >= 0 && sinkW >= 0)) throw InvalidArgument("addTermWeights: negative capacity");
    const double dw = vtx_[i].weight;
    if (dw > 0)
        sourceW += dw;
    else
        sinkW -= dw;
    flow_ += std::min(sourceW, sinkW);
    vtx_[i].weight = sourceW - sinkW;
}

void MaxFlowGraph::addEdges(int i, int j, double w, double revW) {
    if (i < 0 || j < 0 || i >= vertexCount() || j >= vertexCount() || i == j)
        throw InvalidArgument("addEdges: bad endpoints");
    if (!(w >= 0 && revW >= 0)) throw InvalidArgument("addEdges: negative capacity");
    const int e = static_cast<int>(edges_.size());
    edges_.push_back({j, vtx_[i].first, w});
    vtx_[i].first = e;
    edges_.push_back({i, vtx_[j].first, revW});
    vtx_[j].first = e + 1;
}

double MaxFlowGraph::maxFlow() {
    const int n = vertexCount();
    // Sentinel for the active list lives one past the last vertex.
    vtx_.emplace_back();
    const int nil = n;
    int first = nil, last = nil;
    int currTs = 0;
    std::vector<int> orphans;

    auto& V = vtx_;
    auto& E = edges_;

    for (int i = 0; i < n; ++i) {
        Vtx& v = V[i];
        v.ts = 0;
        v.next = -1;
        if (v.weight != 0) {
            if (first == nil)
                first = i;
            else
                V[last].next = i;
            last = i;
            v.dist = 1;
            v.parent = kTerminal;
            v.t = v.weight < 0;
        } else {
            v.parent = 0;
        }
    }
    if (first != nil) V[last].next = nil;
    V[nil].next = -1;

    auto enqueue = [&](int u) {
        V[u].next = nil;
        if (first == nil)
            first = u;
        else
            V[last].next = u;
        last = u;
    };

    for (;;) {
        int e0 = -1;
        // Grow both search trees until they touch.
        while (first != nil) {
            const int v = first;
            if (V[v].parent) {
                const unsigned char vt = V[v].t;
                for (int ei = V[v].first; ei != 0; ei = E[ei].next) {
                    if (E[ei ^ vt].weight == 0) continue;
                    const int u = E[ei].dst;
                    if (!V[u].parent) {
                        V[u].t = vt;
                        V[u].parent = ei ^ 1;
                        V[u].ts = V[v].ts;
                        V[u].dist = V[v].dist + 1;
                        if (V[u].next < 0) enqueue(u);
                        continue;
                    }
                    if (V[u].t != vt) {
                        e0 = ei ^ vt;
                        break;
                    }
                    if (V[u].dist > V[v].dist + 1 && V[u].ts <= V[v].ts) {
                        V[u].parent = ei ^ 1;
                        V[u].ts = V[v].ts;
                        V[u].dist = V[v].dist + 1;
                    }
                }
                if (e0 > 0) break;
            }
            first = V[v].next;
            V[v].next = -1;
            if (first == nil) last = nil;
        }
        if (e0 <= 0) break;

        // Bottleneck along source->e0->sink.
        double minWeight = E[e0].weight;
        for (int k = 1; k >= 0; --k) {
            int v = E[e0 ^ k].dst;
            for (int ei; (ei = V[v].parent) >= 0; v = E[ei].dst) minWeight = std::min(minWeight, E[ei ^ k].weight);
            minWeight = std::min(minWeight, std::fabs(V[v].weight));
        }

        E[e0].weight -= minWeight;
        E[e0 ^ 1].weight += minWeight;
        flow_ += minWeight;
        for (int k = 1; k >= 0; --k) {
            int v = E[e0 ^ k].dst;
            for (int ei; (ei = V[v].parent) >= 0; v = E[ei].dst) {
                E[ei ^ (k ^ 1)].weight += minWeight;
                if ((E[ei ^ k].weight -= minWeight) == 0) {
                    orphans.push_back(v);
                    V[v].parent = kOrphan;
                }
            }
            V[v].weight += minWeight * (1 - k * 2);
            if (V[v].weight == 0) {
                orphans.push_back(v);
                V[v].parent = kOrphan;
            }
        }

        // Adopt orphans: find a new valid parent or free the vertex.
        ++currTs;
        while (!orphans.empty()) {
            const int v2 = orphans.back();
            orphans.pop_back();
            int minDist = INT_MAX;
            int best = 0;
            const unsigned char vt = V[v2].t;
            for (int ei = V[v2].first; ei != 0; ei = E[ei].next) {
                if (E[ei ^ (vt ^ 1)].weight == 0) continue;
                int u = E[ei].dst;
                if (V[u].t != vt || V[u].parent == 0) continue;
                int d = 0;
                for (;;) {
                    if (V[u].ts == currTs) {
                        d += V[u].dist;
                        break;
                    }
                    const int ej = V[u].parent;
                    ++d;
                    if (ej < 0) {
                        if (ej == kOrphan)
                            d = INT_MAX - 1;
                        else {
                            V[u].ts = currTs;
                            V[u].dist = 1;
                        }
                        break;
                    }
                    u = E[ej].dst;
                }
                if (++d < INT_MAX) {
                    if (d < minDist) {
                        minDist = d;
                        best = ei;
                    }
                    for (u = E[ei].dst; V[u].ts != currTs; u = E[V[u].parent].dst) {
                        V[u].ts = currTs;
                        V[u].dist = --d;
                    }
                }
            }
            if ((V[v2].parent = best) > 0) {
                V[v2].ts = currTs;
                V[v2].dist = minDist;
                continue;
            }
            V[v2].ts = 0;
            for (int ei = V[v2].first; ei != 0; ei = E[ei].next) {
                const int u = E[ei].dst;
                const int ej = V[u].parent;
                if (V[u].t != vt || !ej) continue;
                if (E[ei ^ (vt ^ 1)].weight != 0 && V[u].next < 0) enqueue(u);
                if (ej > 0 && E[ej].dst == v2) {
                    orphans.push_back(u);
                    V[u].parent = kOrphan;
                }
            }
        }
    }
    vtx_.pop_back();
    return flow_;
}

bool MaxFlowGraph::inSourceSegment(int i) const {
    if (i < 0 || i >= vertexCount()) throw InvalidArgument("inSourceSegment: vertex out of range");
    return vtx_[i].parent != 0 && vtx_[i].t == 0;
}

} // namespace lichen::graph
