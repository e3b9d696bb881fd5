#include <algorithm>
#include <limits>
#include <optional>
#include <numeric>
#include <tuple>

#include "memetrace/common.hpp"
#include "memetrace/memes.hpp"

namespace memetrace::memes {

namespace {

bool key_less(const ImageHash& a, const ImageHash& b) {
    return std::tie(a.bits, a.image_ref) < std::tie(b.bits, b.image_ref);
}

// Burkhard-Keller tree over distinct hash values.
class BkTree {
public:
    explicit BkTree(std::span<const ImageHash> hashes) {
        for (std::size_t i = 0; i < hashes.size(); ++i) insert(hashes[i].bits, i);
    }

    template <class F>
    void query(Hash q, int radius, F&& report) const {
        if (nodes_.empty()) return;
        std::vector<std::size_t> stack = {0};
        while (!stack.empty()) {
            const Node& n = nodes_[stack.back()];
            stack.pop_back();
            const int d = hamming(q, n.bits);
            if (d <= radius)
                for (std::size_t p : n.points) report(p, d);
            for (const auto& [edge, child] : n.children)
                if (edge >= d - radius && edge <= d + radius) stack.push_back(child);
        }
    }

private:
    struct Node {
        Hash bits;
        std::vector<std::size_t> points;
        std::vector<std::pair<int, std::size_t>> children;
    };

    void insert(Hash bits, std::size_t point) {
        if (nodes_.empty()) {
            nodes_.push_back({bits, {point}, {}});
            return;
        }
        std::size_t cur = 0;
        for (;;) {
            const int d = hamming(bits, nodes_[cur].bits);
            if (d == 0) {
                nodes_[cur].points.push_back(point);
                return;
            }
            auto& ch = nodes_[cur].children;
            const auto it = std::find_if(ch.begin(), ch.end(), [&](const auto& c) { return c.first == d; });
            if (it == ch.end()) {
                ch.emplace_back(d, nodes_.size());
                nodes_.push_back({bits, {point}, {}});
                return;
            }
            cur = it->second;
        }
    }

    std::vector<Node> nodes_;
};

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<std::size_t> parent_;
};

}  // namespace

std::size_t medoid_index(std::span<const ImageHash> members) {
    if (members.empty()) throw InvalidArgument("medoid of an empty cluster");
    std::size_t best = 0;
    long best_sum = std::numeric_limits<long>::max();
    for (std::size_t i = 0; i < members.size(); ++i) {
        long sum = 0;
        for (const auto& m : members) sum += hamming(members[i].bits, m.bits);
        if (sum < best_sum || (sum == best_sum && key_less(members[i], members[best]))) {
            best = i;
            best_sum = sum;
        }
    }
    return best;
}

Clustering cluster_hashes(std::span<const ImageHash> hashes, const ClusterOptions& options) {
    if (options.eps < 1 || options.eps > 32) throw InvalidArgument("eps must lie in [1, 32]");
    if (options.min_pts < 2) throw InvalidArgument("min_pts must be >= 2");
    const std::size_t n = hashes.size();

    std::optional<BkTree> tree;
    if (n >= options.index_threshold) tree.emplace(hashes);
    // Calls f(j, distance) for every j within eps of i, i itself included.
    auto for_neighbors = [&](std::size_t i, auto&& f) {
        if (tree) {
            tree->query(hashes[i].bits, options.eps, f);
        } else {
            for (std::size_t j = 0; j < n; ++j) {
                const int d = hamming(hashes[i].bits, hashes[j].bits);
                if (d <= options.eps) f(j, d);
            }
        }
    };

    std::vector<char> core(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t count = 0;
        for_neighbors(i, [&](std::size_t, int) { ++count; });
        core[i] = count >= options.min_pts;
    }

    UnionFind uf(n);
    for (std::size_t i = 0; i < n; ++i)
        if (core[i])
            for_neighbors(i, [&](std::size_t j, int) {
                if (core[j]) uf.unite(i, j);
            });

    // smallest core member of each component fixes its id
    std::vector<std::size_t> root_min(n, SIZE_MAX);
    for (std::size_t i = 0; i < n; ++i) {
        if (!core[i]) continue;
        auto& m = root_min[uf.find(i)];
        if (m == SIZE_MAX || key_less(hashes[i], hashes[m])) m = i;
    }
    std::vector<std::size_t> roots;
    for (std::size_t r = 0; r < n; ++r)
        if (root_min[r] != SIZE_MAX) roots.push_back(r);
    std::sort(roots.begin(), roots.end(),
              [&](std::size_t a, std::size_t b) { return key_less(hashes[root_min[a]], hashes[root_min[b]]); });
    std::vector<int> id_of_root(n, kNoise);
    for (std::size_t k = 0; k < roots.size(); ++k) id_of_root[roots[k]] = static_cast<int>(k);

    Clustering out;
    out.assignment.assign(n, kNoise);
    for (std::size_t i = 0; i < n; ++i) {
        if (core[i]) {
            out.assignment[i] = id_of_root[uf.find(i)];
            continue;
        }
        int best_d = options.eps + 1, best_id = kNoise;
        for_neighbors(i, [&](std::size_t j, int d) {
            if (!core[j]) return;
            const int id = id_of_root[uf.find(j)];
            if (d < best_d || (d == best_d && id < best_id)) {
                best_d = d;
                best_id = id;
            }
        });
        out.assignment[i] = best_id;
    }

    out.clusters.resize(roots.size());
    for (std::size_t k = 0; k < roots.size(); ++k) out.clusters[k].cluster_id = static_cast<int>(k);
    for (std::size_t i = 0; i < n; ++i) {
        if (out.assignment[i] == kNoise) out.noise.push_back(hashes[i]);
        else out.clusters[static_cast<std::size_t>(out.assignment[i])].members.push_back(hashes[i]);
    }
    std::sort(out.noise.begin(), out.noise.end(), key_less);
    for (auto& c : out.clusters) {
        std::sort(c.members.begin(), c.members.end(), key_less);
        c.medoid = c.members[medoid_index(c.members)];
    }
    return out;
}

}  // namespace memetrace::memes
