#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <queue>

#include "lichen/error.hpp"
#include "lichen/maxflow.hpp"
#include "lichen/rng.hpp"
#include "maxflow_oracle.hpp"

using namespace lichen;
using lichen::graph::MaxFlowGraph;

using namespace testutil;

TEST_CASE("two-node chain") {
    MaxFlowGraph g(2);
    g.addTermWeights(0, 5, 0);
    g.addTermWeights(1, 0, 3);
    g.addEdges(0, 1, 4, 0);
    CHECK(g.maxFlow() == 3);
    CHECK(g.inSourceSegment(0));
    CHECK(g.inSourceSegment(1));
}

TEST_CASE("terminal-only vertices contribute min of their two links") {
    MaxFlowGraph g(3);
    g.addTermWeights(0, 2, 7);
    g.addTermWeights(1, 9, 1);
    g.addTermWeights(1, 0, 4); // accumulates
    g.addTermWeights(2, 0, 0);
    CHECK(g.maxFlow() == 2 + 5);
    CHECK_FALSE(g.inSourceSegment(0));
    CHECK(g.inSourceSegment(1));
}

TEST_CASE("rejects negative capacities and self loops") {
    MaxFlowGraph g(2);
    CHECK_THROWS_AS(g.addEdges(0, 0, 1, 1), InvalidArgument);
    CHECK_THROWS_AS(g.addEdges(0, 1, -1, 1), InvalidArgument);
    CHECK_THROWS_AS(g.addTermWeights(0, -1, 0), InvalidArgument);
}

TEST_CASE("integer graphs: flow equals Edmonds-Karp exactly and the cut is minimal") {
    Rng rng(1234);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = rng.range(2, 400);
        const RandomGraph g = randomGraph(rng, n, rng.uniform(1.0, 4.0), true);
        MaxFlowGraph mf = build(g);
        const double flow = mf.maxFlow();
        std::vector<char> side;
        const double ref = edmondsKarp(g, &side);
        REQUIRE(flow == ref);
        REQUIRE(cutValue(g, mf) == ref);
        // Both report the source-reachable set of the residual graph.
        for (int i = 0; i < n; ++i) REQUIRE(static_cast<bool>(side[i]) == mf.inSourceSegment(i));
    }
}

TEST_CASE("real-valued graphs agree with Edmonds-Karp to rounding") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const RandomGraph g = randomGraph(rng, rng.range(2, 200), 3.0, false);
        MaxFlowGraph mf = build(g);
        const double flow = mf.maxFlow();
        const double ref = edmondsKarp(g);
        CHECK(flow == doctest::Approx(ref).epsilon(1e-9));
        CHECK(cutValue(g, mf) == doctest::Approx(ref).epsilon(1e-9));
    }
}

TEST_CASE("grid graph: uniform pull splits at the weakest column") {
    const int w = 10, h = 6;
    MaxFlowGraph g(w * h);
    for (int y = 0; y < h; ++y) {
        g.addTermWeights(y * w, 100, 0);
        g.addTermWeights(y * w + w - 1, 0, 100);
        for (int x = 0; x + 1 < w; ++x) g.addEdges(y * w + x, y * w + x + 1, x == 6 ? 1 : 10, x == 6 ? 1 : 10);
    }
    CHECK(g.maxFlow() == 6);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) CHECK(g.inSourceSegment(y * w + x) == (x <= 6));
}
