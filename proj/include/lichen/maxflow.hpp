#pragma once

#include <vector>

namespace lichen::graph {

// Boykov-Kolmogorov max-flow on a graph with terminal links folded into a
// per-vertex residual (positive: excess from the source, negative: to the
// sink). Capacities are doubles and must be non-negative.
class MaxFlowGraph {
public:
    explicit MaxFlowGraph(int vertexCount = 0, int edgeHint = 0);

    int addVertex();
    int vertexCount() const { return static_cast<int>(vtx_.size()); }

    // Adds capacity from the source and to the sink. Repeated calls add up.
    void addTermWeights(int i, double sourceW, double sinkW);
    // Directed pair i->j with capacity w and j->i with capacity revW.
    void addEdges(int i, int j, double w, double revW);

    double maxFlow();
    // After maxFlow(): true when i is reachable from the source in the
    // residual graph (the source side of the minimum cut).
    bool inSourceSegment(int i) const;

private:
    struct Vtx {
        int next = -1; // active-list link; -1 when not queued
        int parent = 0; // edge index to the parent, 0 = free, <0 terminal/orphan
        int first = 0;
        int ts = 0;
        int dist = 0;
        double weight = 0;
        unsigned char t = 0; // 0 source tree, 1 sink tree
    };
    struct Edge {
        int dst;
        int next;
        double weight;
    };

    std::vector<Vtx> vtx_;
    std::vector<Edge> edges_;
    double flow_ = 0;
};

} // namespace lichen::graph
