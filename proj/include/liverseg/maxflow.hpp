#pragma once

// Exact s-t min-cut on voxel graphs: terminal capacities per node plus an
// undirected n-link list. Solved with the Boykov-Kolmogorov dual search
// tree algorithm; a 2^n enumeration oracle covers small instances.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "liverseg/grid.hpp"

namespace liverseg {

struct GridGraph {
    struct Edge {
        std::int32_t u = 0;
        std::int32_t v = 0;
        double cap = 0.0;  // residual capacity in both directions
    };

    int num_nodes = 0;
    std::vector<double> cap_source;  // e_sx
    std::vector<double> cap_sink;    // e_xt
    std::vector<Edge> edges;
    Dims3 dims{0, 0, 0};  // set when the graph mirrors a voxel grid

    void validate() const;
};

struct CutResult {
    double flow = 0.0;
    std::vector<std::uint8_t> labels;  // 1 = source side (object)
};

// Cut cost of an arbitrary labeling on the original capacities.
double cut_cost(const GridGraph& graph, const std::vector<std::uint8_t>& labels);

// Maximum flow / minimum cut. Nodes reachable from the source in the final
// residual graph are labeled 1. The returned flow equals the cut cost of the
// returned labeling (asserted internally to 1e-9 relative).
CutResult solve_maxflow(const GridGraph& graph);

// Enumerates all 2^n labelings (n <= 20); ties break to the
// lexicographically smallest label vector.
CutResult brute_force_mincut(const GridGraph& graph);

// Debug text dump: node count, one t-link line per node, one n-link line per
// edge.
void dump_graph(const GridGraph& graph, std::ostream& out);

}  // namespace liverseg
