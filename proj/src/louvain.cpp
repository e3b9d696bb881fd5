#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>

#include "memetrace/common.hpp"
#include "memetrace/graph.hpp"

namespace memetrace::semantics {

namespace {

// Weighted graph with self loops, as produced by aggregation.
struct Level {
    std::vector<std::vector<std::pair<std::size_t, double>>> adj;  // no self entries
    std::vector<double> self_loop;                                  // counted once per endpoint pair
    std::vector<double> strength;
    double total = 0.0;  // 2m
};

Level from_graph(const SimilarityGraph& g) {
    Level L;
    L.adj.resize(g.size());
    L.self_loop.assign(g.size(), 0.0);
    L.strength.assign(g.size(), 0.0);
    for (const auto& e : g.edges) {
        if (e.u == e.v) {
            L.self_loop[e.u] += 2 * e.weight;
            L.strength[e.u] += 2 * e.weight;
        } else {
            L.adj[e.u].push_back({e.v, e.weight});
            L.adj[e.v].push_back({e.u, e.weight});
            L.strength[e.u] += e.weight;
            L.strength[e.v] += e.weight;
        }
    }
    for (double s : L.strength) L.total += s;
    return L;
}

// One local-moving phase. Returns true if any node changed community.
bool local_moves(const Level& L, std::vector<std::size_t>& comm, std::mt19937_64& rng) {
    const std::size_t n = L.adj.size();
    std::vector<double> tot(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) tot[comm[i]] += L.strength[i];

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<double> link(n, 0.0);
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> touched;
    bool moved_any = false;
    for (bool improved = true; improved;) {
        improved = false;
        for (std::size_t i : order) {
            const std::size_t own = comm[i];
            touched.clear();
            touched.push_back(own);
            seen[own] = 1;
            for (const auto& [j, w] : L.adj[i]) {
                const std::size_t c = comm[j];
                if (!seen[c]) {
                    seen[c] = 1;
                    touched.push_back(c);
                }
                link[c] += w;
            }
            const double k = L.strength[i];
            tot[own] -= k;
            std::size_t best = own;
            double best_gain = link[own] - tot[own] * k / L.total;
            for (std::size_t c : touched) {
                const double gain = link[c] - tot[c] * k / L.total;
                // staying put wins near-ties so the phase terminates
                if (gain > best_gain + 1e-12 * (1.0 + std::abs(best_gain))) {
                    best = c;
                    best_gain = gain;
                }
            }
            tot[best] += k;
            for (std::size_t c : touched) {
                link[c] = 0.0;
                seen[c] = 0;
            }
            if (best != own) {
                comm[i] = best;
                improved = true;
                moved_any = true;
            }
        }
    }
    return moved_any;
}

// Renumbers labels to 0..k-1 in order of first appearance.
std::size_t compact(std::vector<std::size_t>& comm) {
    std::unordered_map<std::size_t, std::size_t> ids;
    for (auto& c : comm) {
        auto [it, inserted] = ids.try_emplace(c, ids.size());
        c = it->second;
    }
    return ids.size();
}

Level aggregate(const Level& L, const std::vector<std::size_t>& comm, std::size_t k) {
    Level A;
    A.adj.resize(k);
    A.self_loop.assign(k, 0.0);
    A.strength.assign(k, 0.0);
    std::vector<std::unordered_map<std::size_t, double>> acc(k);
    for (std::size_t i = 0; i < L.adj.size(); ++i) {
        A.self_loop[comm[i]] += L.self_loop[i];
        A.strength[comm[i]] += L.strength[i];
        for (const auto& [j, w] : L.adj[i]) {
            if (comm[i] == comm[j]) A.self_loop[comm[i]] += w;  // visited from both ends
            else acc[comm[i]][comm[j]] += w;
        }
    }
    for (std::size_t c = 0; c < k; ++c) {
        A.adj[c].assign(acc[c].begin(), acc[c].end());
        std::sort(A.adj[c].begin(), A.adj[c].end());
    }
    A.total = L.total;
    return A;
}

}  // namespace

std::vector<int> detect_communities(const SimilarityGraph& graph, std::uint64_t seed) {
    const std::size_t n = graph.size();
    std::vector<std::size_t> membership(n);
    std::iota(membership.begin(), membership.end(), 0);
    if (n == 0) return {};

    Level L = from_graph(graph);
    if (L.total > 0.0) {
        std::mt19937_64 rng(derive_seed(seed, "louvain"));
        for (;;) {
            std::vector<std::size_t> comm(L.adj.size());
            std::iota(comm.begin(), comm.end(), 0);
            const bool moved = local_moves(L, comm, rng);
            const std::size_t k = compact(comm);
            for (auto& m : membership) m = comm[m];
            if (!moved || k == L.adj.size()) break;
            L = aggregate(L, comm, k);
        }
    }

    // number communities by smallest member
    std::vector<int> label(n, -1), out(n);
    int next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (label[membership[i]] < 0) label[membership[i]] = next++;
        out[i] = label[membership[i]];
    }
    return out;
}

double modularity(const SimilarityGraph& graph, const std::vector<int>& partition) {
    if (partition.size() != graph.size()) throw InvalidArgument("partition size does not match graph");
    double two_m = 0.0;
    std::unordered_map<int, double> internal, tot;
    for (const auto& e : graph.edges) {
        two_m += 2 * e.weight;
        tot[partition[e.u]] += e.weight;
        tot[partition[e.v]] += e.weight;
        if (partition[e.u] == partition[e.v]) internal[partition[e.u]] += 2 * e.weight;
    }
    if (two_m == 0.0) return 0.0;
    double q = 0.0;
    for (const auto& [c, t] : tot) q += internal[c] / two_m - (t / two_m) * (t / two_m);
    return q;
}

}  // namespace memetrace::semantics
