#pragma once
// Brute-force reference implementations used only by tests.

#include <algorithm>
#include <bit>
#include <cmath>
#include <queue>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "memetrace/graph.hpp"
#include "memetrace/memes.hpp"
#include "memetrace/trends.hpp"

namespace oracle {

struct DpResult {
    std::vector<std::size_t> changepoints;
    double total_cost = 0.0;
};

/// Unpruned optimal partitioning over all last-changepoint positions.
inline DpResult optimal_partition(std::span<const double> values, double penalty) {
    const memetrace::trends::NormalMeanVarCost cost(values);
    const std::size_t n = values.size();
    constexpr std::size_t L = memetrace::trends::kMinSegmentLength;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> f(n + 1, inf);
    std::vector<std::size_t> last(n + 1, 0);
    f[0] = -penalty;
    for (std::size_t t = L; t <= n; ++t) {
        for (std::size_t tau = 0; tau + L <= t; ++tau) {
            if (!std::isfinite(f[tau])) continue;
            const double v = f[tau] + cost(tau, t) + penalty;
            if (v < f[t]) {
                f[t] = v;
                last[t] = tau;
            }
        }
    }
    DpResult r;
    r.total_cost = f[n];
    for (std::size_t t = n; t > 0; t = last[t])
        if (last[t] > 0) r.changepoints.push_back(last[t]);
    std::reverse(r.changepoints.begin(), r.changepoints.end());
    return r;
}

struct Pair {
    std::size_t u, v;
    double cosine;
};

/// Cosine of every word pair computed straight from the input vectors.
inline std::vector<Pair> all_pair_cosines(const memetrace::semantics::EmbeddingModel& m) {
    std::vector<Pair> out;
    for (std::size_t a = 0; a < m.size(); ++a) {
        for (std::size_t b = a + 1; b < m.size(); ++b) {
            const auto x = m.input_vector(a), y = m.input_vector(b);
            double dot = 0, nx = 0, ny = 0;
            for (std::size_t k = 0; k < m.dim(); ++k) {
                dot += double(x[k]) * y[k];
                nx += double(x[k]) * x[k];
                ny += double(y[k]) * y[k];
            }
            out.push_back({a, b, dot / std::sqrt(nx * ny)});
        }
    }
    return out;
}

/// Nodes within `hops` of `seed`, by BFS over a dense adjacency matrix.
inline std::vector<bool> within_hops(const std::vector<std::vector<bool>>& adj, std::size_t seed, std::size_t hops) {
    const std::size_t n = adj.size();
    std::vector<std::size_t> dist(n, n + 1);
    dist[seed] = 0;
    std::queue<std::size_t> q;
    q.push(seed);
    while (!q.empty()) {
        const auto u = q.front();
        q.pop();
        for (std::size_t v = 0; v < n; ++v) {
            if (adj[u][v] && dist[v] > dist[u] + 1) {
                dist[v] = dist[u] + 1;
                q.push(v);
            }
        }
    }
    std::vector<bool> in(n);
    for (std::size_t v = 0; v < n; ++v) in[v] = dist[v] <= hops;
    return in;
}

/// Modularity from the textbook double sum over node pairs.
inline double modularity(const memetrace::semantics::SimilarityGraph& g, const std::vector<int>& part) {
    const std::size_t n = g.size();
    std::vector<std::vector<double>> A(n, std::vector<double>(n, 0.0));
    for (const auto& e : g.edges) A[e.u][e.v] = A[e.v][e.u] = e.weight;
    std::vector<double> k(n, 0.0);
    double two_m = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            k[i] += A[i][j];
            two_m += A[i][j];
        }
    double q = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (part[i] == part[j]) q += A[i][j] - k[i] * k[j] / two_m;
    return q / two_m;
}

/// Best 2-partition by exhaustive enumeration (node 0 fixed on side 0).
inline std::vector<int> best_bipartition(const memetrace::semantics::SimilarityGraph& g) {
    const std::size_t n = g.size();
    std::vector<double> k(n, 0.0);
    double two_m = 0;
    for (const auto& e : g.edges) {
        k[e.u] += e.weight;
        k[e.v] += e.weight;
        two_m += 2 * e.weight;
    }
    double best = -std::numeric_limits<double>::infinity();
    std::uint64_t best_mask = 0;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << (n - 1)); ++mask) {
        const std::uint64_t side = mask << 1;
        double internal = 0, t1 = 0, t0 = 0;
        for (const auto& e : g.edges)
            if (((side >> e.u) & 1) == ((side >> e.v) & 1)) internal += 2 * e.weight;
        for (std::size_t i = 0; i < n; ++i) ((side >> i) & 1 ? t1 : t0) += k[i];
        const double q = internal / two_m - (t0 * t0 + t1 * t1) / (two_m * two_m);
        if (q > best) {
            best = q;
            best_mask = side;
        }
    }
    std::vector<int> part(n);
    for (std::size_t i = 0; i < n; ++i) part[i] = int((best_mask >> i) & 1);
    return part;
}

/// True when both labelings induce the same set partition.
inline bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return false;
    std::map<int, int> ab, ba;
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto [x, nx] = ab.try_emplace(a[i], b[i]);
        auto [y, ny] = ba.try_emplace(b[i], a[i]);
        if (x->second != b[i] || y->second != a[i]) return false;
    }
    return true;
}

/// Textbook DBSCAN over a full distance matrix. Cores are expanded in
/// (bits, ref) order so cluster k is the k-th cluster by smallest core key;
/// border points take the label of their nearest core, lower label on ties.
inline std::vector<int> naive_dbscan(std::span<const memetrace::memes::ImageHash> h, int eps, std::size_t min_pts) {
    const std::size_t n = h.size();
    std::vector<std::vector<int>> dist(n, std::vector<int>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) dist[i][j] = std::popcount(h[i].bits ^ h[j].bits);
    std::vector<bool> core(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t c = 0;
        for (std::size_t j = 0; j < n; ++j) c += dist[i][j] <= eps;
        core[i] = c >= min_pts;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return h[a].bits != h[b].bits ? h[a].bits < h[b].bits : h[a].image_ref < h[b].image_ref;
    });
    std::vector<int> label(n, -1);
    int next = 0;
    for (std::size_t s : order) {
        if (!core[s] || label[s] >= 0) continue;
        std::queue<std::size_t> q;
        label[s] = next;
        q.push(s);
        while (!q.empty()) {
            const auto u = q.front();
            q.pop();
            for (std::size_t v = 0; v < n; ++v)
                if (core[v] && label[v] < 0 && dist[u][v] <= eps) {
                    label[v] = next;
                    q.push(v);
                }
        }
        ++next;
    }
    std::vector<int> out = label;
    for (std::size_t i = 0; i < n; ++i) {
        if (core[i]) continue;
        int best = eps + 1;
        for (std::size_t j = 0; j < n; ++j) {
            if (!core[j]) continue;
            if (dist[i][j] < best || (dist[i][j] == best && label[j] < out[i])) {
                best = dist[i][j];
                out[i] = label[j];
            }
        }
    }
    return out;
}

// sup over every sample point of |F_a(x) - F_b(x)|, counting by direct scan.
inline double ks_statistic(std::span<const double> a, std::span<const double> b) {
    auto ecdf = [](std::span<const double> s, double x) {
        std::size_t c = 0;
        for (double v : s)
            if (v <= x) ++c;
        return static_cast<double>(c) / static_cast<double>(s.size());
    };
    double d = 0.0;
    for (auto s : {a, b})
        for (double x : s) d = std::max(d, std::abs(ecdf(a, x) - ecdf(b, x)));
    return d;
}

}  // namespace oracle
