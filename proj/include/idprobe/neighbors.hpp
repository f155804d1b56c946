#pragma once

#include "idprobe/common.hpp"
#include "idprobe/point_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <utility>
#include <vector>

namespace idprobe {

/// Per-point sorted nearest neighbors. Row i lists the k nearest points to
/// point i (self excluded), distances ascending, ties broken by ascending
/// point index.
struct NeighborTable {
    int k = 0;
    IndexMatrix indices;   // N x k
    RowMatrix distances;   // N x k, Euclidean
};

namespace detail {

/// Squared Euclidean distance, accumulated dimension by dimension. Both the
/// kd-tree and the brute-force path use this exact loop so their outputs are
/// bit-identical.
inline double squared_distance(const RowMatrix& pts, int a, int b) {
    const double* pa = pts.data() + std::size_t(a) * std::size_t(pts.cols());
    const double* pb = pts.data() + std::size_t(b) * std::size_t(pts.cols());
    double sum = 0.0;
    for (Eigen::Index j = 0; j < pts.cols(); ++j) {
        const double diff = pa[j] - pb[j];
        sum += diff * diff;
    }
    return sum;
}

/// Fixed-capacity list of the current k best (d2, index) candidates,
/// kept sorted ascending by (d2, index).
class BestList {
  public:
    BestList(int k) : capacity_(k) { entries_.reserve(std::size_t(k)); }

    bool full() const { return int(entries_.size()) == capacity_; }
    double worst_d2() const { return entries_.back().first; }

    bool would_accept(double d2, int index) const {
        if (!full()) return true;
        const auto& worst = entries_.back();
        return d2 < worst.first || (d2 == worst.first && index < worst.second);
    }

    void insert(double d2, int index) {
        if (!would_accept(d2, index)) return;
        const std::pair<double, int> entry{d2, index};
        auto pos = std::lower_bound(entries_.begin(), entries_.end(), entry);
        entries_.insert(pos, entry);
        if (int(entries_.size()) > capacity_) entries_.pop_back();
    }

    const std::vector<std::pair<double, int>>& entries() const { return entries_; }

  private:
    int capacity_;
    std::vector<std::pair<double, int>> entries_;
};

}  // namespace detail

/// Exact kd-tree over a point cloud. The build is deterministic (median
/// split on the widest dimension, ties by lower dimension index) and queries
/// return exactly the brute-force result including index tie-breaks.
class KdTree {
  public:
    explicit KdTree(const RowMatrix& points, int leaf_size = 16)
        : pts_(points), leaf_size_(std::max(1, leaf_size)) {
        order_.resize(std::size_t(points.rows()));
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = int(i);
        nodes_.reserve(order_.size() / std::size_t(leaf_size_) * 2 + 1);
        if (!order_.empty()) build(0, int(order_.size()));
    }

    /// k nearest to the point at `query_index`, excluding itself.
    void query(int query_index, detail::BestList& best) const {
        if (!nodes_.empty()) search(0, query_index, best);
    }

  private:
    struct Node {
        int split_dim = -1;   // -1 marks a leaf
        double split_value = 0.0;
        int left = -1, right = -1;
        int begin = 0, end = 0;
    };

    int build(int begin, int end) {
        const int node_index = int(nodes_.size());
        nodes_.push_back(Node{});
        Node node;
        node.begin = begin;
        node.end = end;
        if (end - begin <= leaf_size_) {
            nodes_[std::size_t(node_index)] = node;
            return node_index;
        }
        // Widest-spread dimension; ties go to the lower dimension.
        int best_dim = 0;
        double best_spread = -1.0;
        for (Eigen::Index d = 0; d < pts_.cols(); ++d) {
            double lo = pts_(order_[std::size_t(begin)], d);
            double hi = lo;
            for (int i = begin + 1; i < end; ++i) {
                const double v = pts_(order_[std::size_t(i)], d);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (hi - lo > best_spread) {
                best_spread = hi - lo;
                best_dim = int(d);
            }
        }
        if (best_spread <= 0.0) {
            // All points identical within this node; keep it a leaf.
            nodes_[std::size_t(node_index)] = node;
            return node_index;
        }
        const int mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid,
                         order_.begin() + end, [&](int a, int b) {
                             const double va = pts_(a, best_dim);
                             const double vb = pts_(b, best_dim);
                             return va < vb || (va == vb && a < b);
                         });
        node.split_dim = best_dim;
        node.split_value = pts_(order_[std::size_t(mid)], best_dim);
        nodes_[std::size_t(node_index)] = node;
        const int left = build(begin, mid);
        const int right = build(mid, end);
        nodes_[std::size_t(node_index)].left = left;
        nodes_[std::size_t(node_index)].right = right;
        return node_index;
    }

    void search(int node_index, int query_index, detail::BestList& best) const {
        const Node& node = nodes_[std::size_t(node_index)];
        if (node.split_dim < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                const int candidate = order_[std::size_t(i)];
                if (candidate == query_index) continue;
                best.insert(detail::squared_distance(pts_, query_index, candidate),
                            candidate);
            }
            return;
        }
        const double delta =
            pts_(query_index, node.split_dim) - node.split_value;
        const int near = delta < 0.0 ? node.left : node.right;
        const int far = delta < 0.0 ? node.right : node.left;
        search(near, query_index, best);
        // Visit the far side unless the splitting plane is strictly farther
        // than the current worst candidate (equal distance may still hide a
        // lower-index tie).
        if (!best.full() || delta * delta <= best.worst_d2())
            search(far, query_index, best);
    }

    const RowMatrix& pts_;
    int leaf_size_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
};

enum class KnnMethod { automatic, kdtree, brute };

struct KnnOptions {
    KnnMethod method = KnnMethod::automatic;
    int n_threads = 0;  // 0 = hardware default
};

/// Exact Euclidean k nearest neighbors for every point.
/// kd-tree is used below `kKdTreeMaxDim` dimensions, where it wins over the
/// scan; both paths produce identical tables.
inline NeighborTable knn(const PointCloud& cloud, int k, KnnOptions opts = {}) {
    constexpr int kKdTreeMaxDim = 24;
    const int n = cloud.size();
    if (k < 1) throw UsageError("knn: k must be >= 1");
    if (k >= n)
        throw UsageError("knn: k = " + std::to_string(k) +
                         " must be smaller than the number of points " +
                         std::to_string(n));
    NeighborTable table;
    table.k = k;
    table.indices.resize(n, k);
    table.distances.resize(n, k);
    const int n_threads =
        opts.n_threads > 0 ? opts.n_threads : default_thread_count();

    const bool use_tree = opts.method == KnnMethod::kdtree ||
                          (opts.method == KnnMethod::automatic &&
                           cloud.dim() <= kKdTreeMaxDim);
    if (use_tree) {
        KdTree tree(cloud.points);
        parallel_for(n, n_threads, [&](std::int64_t i) {
            detail::BestList best(k);
            tree.query(int(i), best);
            for (int j = 0; j < k; ++j) {
                table.indices(i, j) = best.entries()[std::size_t(j)].second;
                table.distances(i, j) =
                    std::sqrt(best.entries()[std::size_t(j)].first);
            }
        });
    } else {
        parallel_for(n, n_threads, [&](std::int64_t i) {
            detail::BestList best(k);
            for (int j = 0; j < n; ++j) {
                if (j == int(i)) continue;
                const double d2 = detail::squared_distance(cloud.points, int(i), j);
                best.insert(d2, j);
            }
            for (int j = 0; j < k; ++j) {
                table.indices(i, j) = best.entries()[std::size_t(j)].second;
                table.distances(i, j) =
                    std::sqrt(best.entries()[std::size_t(j)].first);
            }
        });
    }
    return table;
}

// ---------------------------------------------------------------------------
// Symmetrized k-NN graph and shortest paths.
// ---------------------------------------------------------------------------

/// Undirected weighted graph in CSR form. Edge (i,j) exists if j appears in
/// i's neighbor list or vice versa; weight is the Euclidean distance.
struct KnnGraph {
    int n = 0;
    std::vector<int> offsets;   // size n+1
    std::vector<int> targets;   // size 2 * edge count
    std::vector<double> weights;

    int degree(int v) const { return offsets[std::size_t(v) + 1] - offsets[std::size_t(v)]; }
    std::size_t edge_count() const { return targets.size() / 2; }
};

inline KnnGraph knn_graph(const NeighborTable& table) {
    const int n = int(table.indices.rows());
    std::vector<std::tuple<int, int, double>> edges;
    edges.reserve(std::size_t(n) * std::size_t(table.k));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < table.k; ++j) {
            const int t = table.indices(i, j);
            const int lo = std::min(i, t);
            const int hi = std::max(i, t);
            edges.emplace_back(lo, hi, table.distances(i, j));
        }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end(),
                            [](const auto& a, const auto& b) {
                                return std::get<0>(a) == std::get<0>(b) &&
                                       std::get<1>(a) == std::get<1>(b);
                            }),
                edges.end());
    KnnGraph graph;
    graph.n = n;
    graph.offsets.assign(std::size_t(n) + 1, 0);
    for (const auto& [a, b, w] : edges) {
        (void)w;
        ++graph.offsets[std::size_t(a) + 1];
        ++graph.offsets[std::size_t(b) + 1];
    }
    for (int v = 0; v < n; ++v)
        graph.offsets[std::size_t(v) + 1] += graph.offsets[std::size_t(v)];
    graph.targets.resize(edges.size() * 2);
    graph.weights.resize(edges.size() * 2);
    std::vector<int> cursor(graph.offsets.begin(), graph.offsets.end() - 1);
    for (const auto& [a, b, w] : edges) {
        graph.targets[std::size_t(cursor[std::size_t(a)])] = b;
        graph.weights[std::size_t(cursor[std::size_t(a)]++)] = w;
        graph.targets[std::size_t(cursor[std::size_t(b)])] = a;
        graph.weights[std::size_t(cursor[std::size_t(b)]++)] = w;
    }
    return graph;
}

/// Single-source shortest path lengths (Dijkstra, lazy-deletion binary heap).
/// Unreachable nodes get NaN.
inline void dijkstra(const KnnGraph& graph, int source, double* out) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(std::size_t(graph.n), kInf);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
    dist[std::size_t(source)] = 0.0;
    heap.emplace(0.0, source);
    while (!heap.empty()) {
        const auto [d, v] = heap.top();
        heap.pop();
        if (d > dist[std::size_t(v)]) continue;
        const int begin = graph.offsets[std::size_t(v)];
        const int end = graph.offsets[std::size_t(v) + 1];
        for (int e = begin; e < end; ++e) {
            const int u = graph.targets[std::size_t(e)];
            const double nd = d + graph.weights[std::size_t(e)];
            if (nd < dist[std::size_t(u)]) {
                dist[std::size_t(u)] = nd;
                heap.emplace(nd, u);
            }
        }
    }
    for (int v = 0; v < graph.n; ++v)
        out[v] = dist[std::size_t(v)] == kInf
                     ? std::numeric_limits<double>::quiet_NaN()
                     : dist[std::size_t(v)];
}

/// All-pairs shortest path lengths. Pairs with no connecting path are
/// flagged unreachable (query with `reachable`), never 0 or infinity.
struct GeodesicDistances {
    int source_count = 0;
    RowMatrix values;

    bool reachable(int i, int j) const { return !std::isnan(values(i, j)); }
};

inline GeodesicDistances geodesics_all_pairs(const KnnGraph& graph,
                                             int n_threads = 0) {
    GeodesicDistances geo;
    geo.source_count = graph.n;
    geo.values.resize(graph.n, graph.n);
    if (n_threads <= 0) n_threads = default_thread_count();
    parallel_for(graph.n, n_threads, [&](std::int64_t source) {
        dijkstra(graph, int(source),
                 geo.values.data() + source * graph.n);
    });
    return geo;
}

/// Connected components by BFS; returns a label per node, labels counted
/// upward from 0 in order of the smallest node of each component.
inline std::vector<int> component_labels(const KnnGraph& graph) {
    std::vector<int> label(std::size_t(graph.n), -1);
    std::vector<int> stack;
    int next = 0;
    for (int root = 0; root < graph.n; ++root) {
        if (label[std::size_t(root)] != -1) continue;
        label[std::size_t(root)] = next;
        stack.push_back(root);
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            const int begin = graph.offsets[std::size_t(v)];
            const int end = graph.offsets[std::size_t(v) + 1];
            for (int e = begin; e < end; ++e) {
                const int u = graph.targets[std::size_t(e)];
                if (label[std::size_t(u)] == -1) {
                    label[std::size_t(u)] = next;
                    stack.push_back(u);
                }
            }
        }
        ++next;
    }
    return label;
}

/// Node set of the largest connected component, ascending. Size ties go to
/// the component containing the smallest node index.
inline std::vector<int> largest_component(const KnnGraph& graph) {
    if (graph.n == 0) return {};
    const std::vector<int> label = component_labels(graph);
    const int count = *std::max_element(label.begin(), label.end()) + 1;
    std::vector<int> size(std::size_t(count), 0);
    for (int l : label) ++size[std::size_t(l)];
    // Components are numbered by their smallest node, so the first maximum
    // is the tie-break winner.
    int best = 0;
    for (int c = 1; c < count; ++c)
        if (size[std::size_t(c)] > size[std::size_t(best)]) best = c;
    std::vector<int> nodes;
    nodes.reserve(std::size_t(size[std::size_t(best)]));
    for (int v = 0; v < graph.n; ++v)
        if (label[std::size_t(v)] == best) nodes.push_back(v);
    return nodes;
}

/// Subgraph induced by `nodes` (must be sorted ascending); node v becomes
/// index rank(v).
inline KnnGraph induced_subgraph(const KnnGraph& graph,
                                 const std::vector<int>& nodes) {
    std::vector<int> rank(std::size_t(graph.n), -1);
    for (std::size_t i = 0; i < nodes.size(); ++i)
        rank[std::size_t(nodes[i])] = int(i);
    KnnGraph sub;
    sub.n = int(nodes.size());
    sub.offsets.assign(nodes.size() + 1, 0);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const int v = nodes[i];
        const int begin = graph.offsets[std::size_t(v)];
        const int end = graph.offsets[std::size_t(v) + 1];
        for (int e = begin; e < end; ++e)
            if (rank[std::size_t(graph.targets[std::size_t(e)])] != -1)
                ++sub.offsets[i + 1];
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) sub.offsets[i + 1] += sub.offsets[i];
    sub.targets.resize(std::size_t(sub.offsets.back()));
    sub.weights.resize(std::size_t(sub.offsets.back()));
    std::vector<int> cursor(sub.offsets.begin(), sub.offsets.end() - 1);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const int v = nodes[i];
        const int begin = graph.offsets[std::size_t(v)];
        const int end = graph.offsets[std::size_t(v) + 1];
        for (int e = begin; e < end; ++e) {
            const int r = rank[std::size_t(graph.targets[std::size_t(e)])];
            if (r == -1) continue;
            sub.targets[std::size_t(cursor[i])] = r;
            sub.weights[std::size_t(cursor[i]++)] = graph.weights[std::size_t(e)];
        }
    }
    return sub;
}

}  // namespace idprobe
