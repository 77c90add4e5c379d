#include "liverseg/maxflow.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace liverseg {

void GridGraph::validate() const
{
    if (num_nodes < 0)
        throw std::invalid_argument("GridGraph: negative node count");
    if (cap_source.size() != static_cast<std::size_t>(num_nodes) ||
        cap_sink.size() != static_cast<std::size_t>(num_nodes))
        throw std::invalid_argument("GridGraph: terminal capacity size mismatch");
    for (int i = 0; i < num_nodes; ++i)
        if (!(cap_source[i] >= 0.0) || !std::isfinite(cap_source[i]) ||
            !(cap_sink[i] >= 0.0) || !std::isfinite(cap_sink[i]))
            throw std::invalid_argument("GridGraph: terminal capacities must be "
                                        "non-negative and finite");
    for (const auto& e : edges) {
        if (e.u < 0 || e.u >= num_nodes || e.v < 0 || e.v >= num_nodes || e.u == e.v)
            throw std::invalid_argument("GridGraph: edge endpoints out of range");
        if (!(e.cap >= 0.0) || !std::isfinite(e.cap))
            throw std::invalid_argument("GridGraph: edge capacities must be "
                                        "non-negative and finite");
    }
}

double cut_cost(const GridGraph& graph, const std::vector<std::uint8_t>& labels)
{
    if (labels.size() != static_cast<std::size_t>(graph.num_nodes))
        throw std::invalid_argument("cut_cost: label count mismatch");
    double cost = 0.0;
    for (int i = 0; i < graph.num_nodes; ++i)
        cost += labels[i] ? graph.cap_sink[i] : graph.cap_source[i];
    for (const auto& e : graph.edges)
        if (labels[e.u] != labels[e.v])
            cost += e.cap;
    return cost;
}

namespace {

constexpr int kNone = -1;
constexpr int kTerminal = -2;
constexpr int kOrphan = -3;
constexpr double kSatEps = 1e-12;

// Boykov-Kolmogorov max-flow with dual search trees and orphan adoption.
class BkSolver {
public:
    explicit BkSolver(const GridGraph& graph) : n_(graph.num_nodes)
    {
        tr_cap_.resize(n_);
        first_.assign(n_, kNone);
        parent_.assign(n_, kNone);
        tree_.assign(n_, 0);  // 0 free, 1 source, 2 sink
        ts_.assign(n_, 0);
        dist_.assign(n_, 0);
        in_active_.assign(n_, 0);

        for (int i = 0; i < n_; ++i) {
            // Flow through both t-links of one node is immediate.
            double common = std::min(graph.cap_source[i], graph.cap_sink[i]);
            flow_ += common;
            tr_cap_[i] = graph.cap_source[i] - graph.cap_sink[i];
        }

        arcs_.reserve(graph.edges.size() * 2);
        for (const auto& e : graph.edges) {
            add_arc(e.u, e.v, e.cap);
            add_arc(e.v, e.u, e.cap);
        }
    }

    CutResult run()
    {
        for (int i = 0; i < n_; ++i) {
            if (tr_cap_[i] > 0.0) {
                tree_[i] = 1;
                parent_[i] = kTerminal;
                dist_[i] = 1;
                activate(i);
            } else if (tr_cap_[i] < 0.0) {
                tree_[i] = 2;
                parent_[i] = kTerminal;
                dist_[i] = 1;
                activate(i);
            }
        }

        int current = kNone;
        while (true) {
            int p = current;
            current = kNone;
            if (p == kNone || tree_[p] == 0) {
                p = next_active();
                if (p == kNone)
                    break;
            }
            int bridge = grow(p);
            if (bridge == kNone)
                continue;
            current = p;  // p may still have unexplored arcs
            ++time_;
            augment(bridge);
            adopt();
        }

        CutResult result;
        result.flow = flow_;
        result.labels.resize(n_);
        for (int i = 0; i < n_; ++i)
            result.labels[i] = tree_[i] == 1 ? 1 : 0;
        return result;
    }

private:
    struct Arc {
        int head;
        int next;
        double rcap;
    };

    void add_arc(int u, int v, double cap)
    {
        arcs_.push_back({v, first_[u], cap});
        first_[u] = static_cast<int>(arcs_.size()) - 1;
    }

    static int sister(int a) { return a ^ 1; }

    void activate(int i)
    {
        if (!in_active_[i]) {
            in_active_[i] = 1;
            active_.push_back(i);
        }
    }

    int next_active()
    {
        while (!active_.empty()) {
            int i = active_.front();
            active_.pop_front();
            in_active_[i] = 0;
            if (tree_[i] != 0)
                return i;
        }
        return kNone;
    }

    // Expands the tree of p; returns an arc bridging the two trees, oriented
    // from the source tree into the sink tree, or kNone if p is exhausted.
    int grow(int p)
    {
        const int t = tree_[p];
        for (int a = first_[p]; a != kNone; a = arcs_[a].next) {
            double cap = t == 1 ? arcs_[a].rcap : arcs_[sister(a)].rcap;
            if (cap <= 0.0)
                continue;
            int q = arcs_[a].head;
            if (tree_[q] == 0) {
                tree_[q] = t;
                parent_[q] = sister(a);
                ts_[q] = ts_[p];
                dist_[q] = dist_[p] + 1;
                activate(q);
            } else if (tree_[q] != t) {
                return t == 1 ? a : sister(a);
            } else if (ts_[q] <= ts_[p] && dist_[q] > dist_[p] + 1) {
                // Shorter route to the root through p.
                parent_[q] = sister(a);
                ts_[q] = ts_[p];
                dist_[q] = dist_[p] + 1;
            }
        }
        return kNone;
    }

    void saturate(double& rcap)
    {
        if (rcap < kSatEps)
            rcap = 0.0;
    }

    void augment(int bridge)
    {
        const int s_node = arcs_[sister(bridge)].head;
        const int t_node = arcs_[bridge].head;

        double bottleneck = arcs_[bridge].rcap;
        for (int n = s_node;;) {
            int pa = parent_[n];
            if (pa == kTerminal) {
                bottleneck = std::min(bottleneck, tr_cap_[n]);
                break;
            }
            bottleneck = std::min(bottleneck, arcs_[sister(pa)].rcap);
            n = arcs_[pa].head;
        }
        for (int n = t_node;;) {
            int pa = parent_[n];
            if (pa == kTerminal) {
                bottleneck = std::min(bottleneck, -tr_cap_[n]);
                break;
            }
            bottleneck = std::min(bottleneck, arcs_[pa].rcap);
            n = arcs_[pa].head;
        }

        arcs_[bridge].rcap -= bottleneck;
        arcs_[sister(bridge)].rcap += bottleneck;
        saturate(arcs_[bridge].rcap);

        for (int n = s_node;;) {
            int pa = parent_[n];
            if (pa == kTerminal) {
                tr_cap_[n] -= bottleneck;
                if (tr_cap_[n] < kSatEps) {
                    tr_cap_[n] = std::max(tr_cap_[n], 0.0);
                    make_orphan_front(n);
                }
                break;
            }
            arcs_[pa].rcap += bottleneck;
            arcs_[sister(pa)].rcap -= bottleneck;
            saturate(arcs_[sister(pa)].rcap);
            if (arcs_[sister(pa)].rcap == 0.0)
                make_orphan_front(n);
            n = arcs_[pa].head;
        }
        for (int n = t_node;;) {
            int pa = parent_[n];
            if (pa == kTerminal) {
                tr_cap_[n] += bottleneck;
                if (-tr_cap_[n] < kSatEps) {
                    tr_cap_[n] = std::min(tr_cap_[n], 0.0);
                    make_orphan_front(n);
                }
                break;
            }
            arcs_[pa].rcap -= bottleneck;
            arcs_[sister(pa)].rcap += bottleneck;
            saturate(arcs_[pa].rcap);
            if (arcs_[pa].rcap == 0.0)
                make_orphan_front(n);
            n = arcs_[pa].head;
        }
        flow_ += bottleneck;
    }

    void make_orphan_front(int i)
    {
        if (parent_[i] != kOrphan) {
            parent_[i] = kOrphan;
            orphans_.push_front(i);
        }
    }

    void make_orphan_back(int i)
    {
        if (parent_[i] != kOrphan) {
            parent_[i] = kOrphan;
            orphans_.push_back(i);
        }
    }

    void adopt()
    {
        while (!orphans_.empty()) {
            int p = orphans_.front();
            orphans_.pop_front();
            process_orphan(p);
        }
    }

    // Distance from q to its terminal through valid parents, or INT_MAX if q
    // is not rooted. Marks visited nodes with the current timestamp.
    int root_distance(int q)
    {
        int d = 0;
        int n = q;
        while (true) {
            if (ts_[n] == time_) {
                d += dist_[n];
                break;
            }
            int pa = parent_[n];
            if (pa == kOrphan || pa == kNone)
                return std::numeric_limits<int>::max();
            if (pa == kTerminal) {
                ts_[n] = time_;
                dist_[n] = 1;
                d += 1;
                break;
            }
            n = arcs_[pa].head;
            ++d;
        }
        // Re-mark the path with exact distances.
        int dd = d;
        for (int m = q; ts_[m] != time_; m = arcs_[parent_[m]].head) {
            ts_[m] = time_;
            dist_[m] = dd--;
        }
        return d;
    }

    void process_orphan(int p)
    {
        const int t = tree_[p];
        int best_arc = kNone;
        int best_dist = std::numeric_limits<int>::max();

        for (int a = first_[p]; a != kNone; a = arcs_[a].next) {
            double cap = t == 1 ? arcs_[sister(a)].rcap : arcs_[a].rcap;
            if (cap <= 0.0)
                continue;
            int q = arcs_[a].head;
            if (tree_[q] != t)
                continue;
            int d = root_distance(q);
            if (d < best_dist) {
                best_dist = d;
                best_arc = a;
            }
        }

        if (best_arc != kNone) {
            parent_[p] = best_arc;
            ts_[p] = time_;
            dist_[p] = best_dist + 1;
            return;
        }

        // No admissible parent: p leaves the tree; neighbors may become
        // active or orphaned.
        for (int a = first_[p]; a != kNone; a = arcs_[a].next) {
            int q = arcs_[a].head;
            if (tree_[q] != t)
                continue;
            double cap = t == 1 ? arcs_[sister(a)].rcap : arcs_[a].rcap;
            if (cap > 0.0)
                activate(q);
            int qpa = parent_[q];
            if (qpa >= 0 && arcs_[qpa].head == p)
                make_orphan_back(q);
        }
        tree_[p] = 0;
        parent_[p] = kNone;
    }

    int n_;
    double flow_ = 0.0;
    int time_ = 0;
    std::vector<Arc> arcs_;
    std::vector<int> first_;
    std::vector<double> tr_cap_;
    std::vector<int> parent_;
    std::vector<char> tree_;
    std::vector<int> ts_;
    std::vector<int> dist_;
    std::vector<char> in_active_;
    std::deque<int> active_;
    std::deque<int> orphans_;
};

}  // namespace

CutResult solve_maxflow(const GridGraph& graph)
{
    graph.validate();
    if (graph.num_nodes == 0)
        return {};

    CutResult result = BkSolver(graph).run();

    double cost = cut_cost(graph, result.labels);
    double tol = 1e-9 * std::max(1.0, std::abs(cost));
    if (std::abs(result.flow - cost) > tol)
        throw std::runtime_error("solve_maxflow: flow/cut duality violated "
                                 "(flow " + std::to_string(result.flow) + ", cut " +
                                 std::to_string(cost) + ")");
    return result;
}

CutResult brute_force_mincut(const GridGraph& graph)
{
    graph.validate();
    if (graph.num_nodes > 20)
        throw std::invalid_argument("brute_force_mincut: too many nodes");
    if (graph.num_nodes == 0)
        return {};

    const int n = graph.num_nodes;
    std::vector<std::uint8_t> labels(n), best;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::uint64_t m = 0; m < (std::uint64_t{1} << n); ++m) {
        for (int i = 0; i < n; ++i)
            labels[i] = (m >> i) & 1;
        double c = cut_cost(graph, labels);
        if (c < best_cost || (c == best_cost && labels < best)) {
            best_cost = c;
            best = labels;
        }
    }
    return {best_cost, best};
}

void dump_graph(const GridGraph& graph, std::ostream& out)
{
    out.precision(17);
    out << "nodes " << graph.num_nodes << "\n";
    for (int i = 0; i < graph.num_nodes; ++i)
        out << "t " << i << ' ' << graph.cap_source[i] << ' ' << graph.cap_sink[i] << "\n";
    for (const auto& e : graph.edges)
        out << "n " << e.u << ' ' << e.v << ' ' << e.cap << "\n";
}

}  // namespace liverseg
