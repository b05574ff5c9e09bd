#pragma once

// Labelled-tree and collision-sequence enumeration. These are test oracles
// for the closed-form cluster statistics, not production paths, so the
// enumeration caps are chosen to keep a full sweep under a second.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace cluskin::trees {

inline constexpr int max_enumeration_vertices = 9;
inline constexpr int max_sequence_length = 10;

/// Labelled tree on vertices 1..vertex_count: connected, acyclic, exactly
/// vertex_count - 1 edges. Each edge is stored with the smaller label first.
struct labelled_tree {
    int vertex_count = 0;
    std::vector<std::pair<int, int>> edges;

    friend bool operator==(const labelled_tree&, const labelled_tree&) = default;
};

/// k^{k-2}, the number of labelled trees on k vertices, as an exact integer.
inline std::uint64_t cayley_count(int k) {
    if (k < 1) throw std::invalid_argument("cayley_count requires k >= 1");
    if (k <= 2) return 1;  // empty product for k = 1; single edge for k = 2
    std::uint64_t r = 1;
    const auto base = static_cast<std::uint64_t>(k);
    for (int i = 0; i < k - 2; ++i) {
        if (r > std::numeric_limits<std::uint64_t>::max() / base) {
            throw std::overflow_error("cayley_count exceeds the exact integer range");
        }
        r *= base;
    }
    return r;
}

/// Decodes a Pruefer code (length vertex_count - 2, labels in 1..vertex_count)
/// into the unique labelled tree it represents.
inline labelled_tree pruefer_decode(std::span<const int> code, int vertex_count) {
    if (vertex_count < 1) throw std::invalid_argument("vertex count must be >= 1");
    if (static_cast<int>(code.size()) != std::max(0, vertex_count - 2)) {
        throw std::invalid_argument("code length must be vertex_count - 2");
    }
    labelled_tree tree;
    tree.vertex_count = vertex_count;
    if (vertex_count == 1) return tree;

    std::vector<int> degree(static_cast<std::size_t>(vertex_count) + 1, 1);
    for (int c : code) {
        if (c < 1 || c > vertex_count) throw std::invalid_argument("code label out of range");
        ++degree[static_cast<std::size_t>(c)];
    }
    int ptr = 1;
    while (degree[static_cast<std::size_t>(ptr)] != 1) ++ptr;
    int leaf = ptr;
    for (int c : code) {
        tree.edges.emplace_back(std::min(leaf, c), std::max(leaf, c));
        if (--degree[static_cast<std::size_t>(c)] == 1 && c < ptr) {
            leaf = c;
        } else {
            ++ptr;
            while (degree[static_cast<std::size_t>(ptr)] != 1) ++ptr;
            leaf = ptr;
        }
    }
    tree.edges.emplace_back(std::min(leaf, vertex_count), std::max(leaf, vertex_count));
    return tree;
}

/// Inverse of pruefer_decode: repeatedly strips the smallest leaf and records
/// its neighbour.
inline std::vector<int> pruefer_encode(const labelled_tree& tree) {
    const int k = tree.vertex_count;
    if (k < 1) throw std::invalid_argument("empty tree");
    if (static_cast<int>(tree.edges.size()) != k - 1) {
        throw std::invalid_argument("a tree on k vertices has k - 1 edges");
    }
    if (k <= 2) return {};

    std::vector<std::vector<int>> adj(static_cast<std::size_t>(k) + 1);
    for (const auto& [a, b] : tree.edges) {
        adj[static_cast<std::size_t>(a)].push_back(b);
        adj[static_cast<std::size_t>(b)].push_back(a);
    }
    std::vector<int> degree(static_cast<std::size_t>(k) + 1);
    std::priority_queue<int, std::vector<int>, std::greater<>> leaves;
    for (int v = 1; v <= k; ++v) {
        degree[static_cast<std::size_t>(v)] = static_cast<int>(adj[static_cast<std::size_t>(v)].size());
        if (degree[static_cast<std::size_t>(v)] == 1) leaves.push(v);
    }
    std::vector<bool> removed(static_cast<std::size_t>(k) + 1, false);
    std::vector<int> code;
    code.reserve(static_cast<std::size_t>(k - 2));
    while (static_cast<int>(code.size()) < k - 2) {
        const int leaf = leaves.top();
        leaves.pop();
        removed[static_cast<std::size_t>(leaf)] = true;
        int parent = -1;
        for (int w : adj[static_cast<std::size_t>(leaf)]) {
            if (!removed[static_cast<std::size_t>(w)]) parent = w;
        }
        if (parent < 0) throw std::invalid_argument("edges do not form a tree");
        code.push_back(parent);
        if (--degree[static_cast<std::size_t>(parent)] == 1) leaves.push(parent);
    }
    return code;
}

/// Visits every labelled tree on k vertices exactly once by decoding all
/// k^{k-2} Pruefer codes. Capped at k <= max_enumeration_vertices.
template <typename F>
void for_each_labelled_tree(int k, F&& visit) {
    if (k < 1 || k > max_enumeration_vertices) {
        throw std::invalid_argument("tree enumeration supports 1 <= k <= 9");
    }
    if (k <= 2) {
        visit(pruefer_decode({}, k));
        return;
    }
    std::vector<int> code(static_cast<std::size_t>(k - 2), 1);
    while (true) {
        visit(pruefer_decode(code, k));
        int pos = 0;
        while (pos < k - 2 && code[static_cast<std::size_t>(pos)] == k) {
            code[static_cast<std::size_t>(pos)] = 1;
            ++pos;
        }
        if (pos == k - 2) break;
        ++code[static_cast<std::size_t>(pos)];
    }
}

inline std::vector<labelled_tree> enumerate_labelled_trees(int k) {
    std::vector<labelled_tree> out;
    for_each_labelled_tree(k, [&](labelled_tree t) { out.push_back(std::move(t)); });
    return out;
}

/// Collision sequence (k_1, ..., k_n) with k_r in {1, ..., r}: the index of
/// the earlier participant hit by the r-th incoming particle. There are n!
/// such sequences, in bijection with binary collision trees.
struct collision_sequence {
    std::vector<int> entries;

    friend bool operator==(const collision_sequence&, const collision_sequence&) = default;
};

inline std::uint64_t collision_sequence_count(int n) {
    if (n < 0) throw std::invalid_argument("sequence length must be >= 0");
    std::uint64_t r = 1;
    for (int i = 2; i <= n; ++i) r *= static_cast<std::uint64_t>(i);
    return r;
}

/// Visits all n! collision sequences, n <= max_sequence_length.
template <typename F>
void for_each_collision_sequence(int n, F&& visit) {
    if (n < 0 || n > max_sequence_length) {
        throw std::invalid_argument("sequence enumeration supports 0 <= n <= 10");
    }
    collision_sequence seq;
    seq.entries.assign(static_cast<std::size_t>(n), 1);
    while (true) {
        visit(seq);
        int pos = 0;
        while (pos < n && seq.entries[static_cast<std::size_t>(pos)] == pos + 1) {
            seq.entries[static_cast<std::size_t>(pos)] = 1;
            ++pos;
        }
        if (pos == n) break;
        ++seq.entries[static_cast<std::size_t>(pos)];
    }
}

/// Gauss-Legendre nodes and weights on [0, 1].
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
    if (n < 1) throw std::invalid_argument("need at least one quadrature node");
    std::vector<double> nodes(static_cast<std::size_t>(n)), weights(static_cast<std::size_t>(n));
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(3.14159265358979323846 * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            // Legendre recurrence for P_n(x) and P'_n(x).
            double p0 = 1.0, p1 = x;
            for (int j = 2; j <= n; ++j) {
                const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[static_cast<std::size_t>(i)] = 0.5 * (1.0 - x);
        weights[static_cast<std::size_t>(i)] = 0.5 * w;
        nodes[static_cast<std::size_t>(n - 1 - i)] = 0.5 * (1.0 + x);
        weights[static_cast<std::size_t>(n - 1 - i)] = 0.5 * w;
    }
    return {nodes, weights};
}

/// Brute-force evaluation of the cluster mass fraction f_t(k) for the
/// Maxwell model: sum over all labelled trees on k vertices, numerical
/// integration of the free-flight weight over the (k-1)-cube of collision
/// times. With the unit kernel normalization every direction and velocity
/// integral equals 1, so the integrand is the product of per-interval flight
/// factors exp(-k (t_prev - t_next)) taken over the time-ordered collisions
/// with boundary conventions t_0 = t and t_k = 0. The time integration is
/// done numerically on purpose: the oracle exercises the ordering and
/// boundary conventions instead of reproducing the closed form.
inline double quadrature_mass_oracle(int k, double t, int nodes_per_axis = 12) {
    if (k < 2 || k > 5) throw std::invalid_argument("oracle supports 2 <= k <= 5");
    if (!(t >= 0.0)) throw std::invalid_argument("time must be nonnegative");
    if (t == 0.0) return 0.0;  // empty time domain

    const auto rule = gauss_legendre(nodes_per_axis);
    const std::vector<double>& nodes = rule.first;
    const std::vector<double>& weights = rule.second;
    const int dims = k - 1;

    auto integrand = [k](std::span<const double> times, double horizon) {
        std::array<double, 4> sorted{};
        std::copy(times.begin(), times.end(), sorted.begin());
        std::sort(sorted.begin(), sorted.begin() + times.size(), std::greater<>());
        double flight = 1.0;
        double prev = horizon;
        for (std::size_t r = 0; r < times.size(); ++r) {
            flight *= std::exp(-static_cast<double>(k) * (prev - sorted[r]));
            prev = sorted[r];
        }
        flight *= std::exp(-static_cast<double>(k) * prev);  // last interval down to 0
        return flight;
    };

    double tree_count_integral = 0.0;
    for_each_labelled_tree(k, [&](const labelled_tree&) {
        // The Maxwell weight of a tree depends only on the collision times,
        // but each tree is integrated separately to stay faithful to the sum.
        std::array<int, 4> idx{};
        std::array<double, 4> times{};
        double integral = 0.0;
        while (true) {
            double w = 1.0;
            for (int d = 0; d < dims; ++d) {
                times[static_cast<std::size_t>(d)] =
                    t * nodes[static_cast<std::size_t>(idx[static_cast<std::size_t>(d)])];
                w *= t * weights[static_cast<std::size_t>(idx[static_cast<std::size_t>(d)])];
            }
            integral += w * integrand(std::span<const double>(times.data(),
                                                              static_cast<std::size_t>(dims)),
                                      t);
            int d = 0;
            while (d < dims && ++idx[static_cast<std::size_t>(d)] == nodes_per_axis) {
                idx[static_cast<std::size_t>(d)] = 0;
                ++d;
            }
            if (d == dims) break;
        }
        tree_count_integral += integral;
    });

    double factorial = 1.0;
    for (int i = 2; i <= k - 1; ++i) factorial *= i;
    return tree_count_integral / factorial;
}

}  // namespace cluskin::trees
