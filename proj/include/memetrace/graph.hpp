#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "memetrace/embedding.hpp"

namespace memetrace::semantics {

struct WeightedEdge {
    std::size_t u = 0;  // u < v
    std::size_t v = 0;
    double weight = 0.0;
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Undirected weighted word graph. `communities` and `positions` are empty
/// until detect_communities / layout results are attached.
struct SimilarityGraph {
    std::vector<std::string> nodes;
    std::vector<WeightedEdge> edges;
    double threshold = 0.0;
    std::vector<int> communities;
    std::vector<Point> positions;

    std::size_t size() const { return nodes.size(); }
    std::optional<std::size_t> find(std::string_view word) const;
    std::vector<std::size_t> degrees() const;

    struct Neighbor {
        std::size_t node;
        double weight;
    };
    std::vector<std::vector<Neighbor>> adjacency() const;
};

/// Edge (u, v) for every pair with cosine >= threshold. Threshold must lie in (0, 1).
SimilarityGraph build_similarity_graph(const EmbeddingModel& model, double threshold);

/// Induced subgraph on the nodes within `hops` edges of `seed_word`.
SimilarityGraph ego_network(const SimilarityGraph& graph, std::string_view seed_word, std::size_t hops = 2);

/// Multi-level Louvain on edge weights. Node visiting order is shuffled with
/// `seed`. Community ids are numbered by their smallest member.
std::vector<int> detect_communities(const SimilarityGraph& graph, std::uint64_t seed = 0);

/// Weighted Newman modularity of a partition.
double modularity(const SimilarityGraph& graph, const std::vector<int>& partition);

struct LayoutConfig {
    std::size_t iterations = 500;
    std::uint64_t seed = 1;
    double scaling = 2.0;
    double gravity = 1.0;
    double jitter_tolerance = 1.0;
    /// Barnes-Hut approximation above this node count.
    std::size_t barnes_hut_threshold = 2000;
    double barnes_hut_theta = 1.2;
};

/// Weighted ForceAtlas2-style layout: attraction proportional to edge weight
/// times distance, repulsion scaled by (degree+1) products, adaptive speed.
std::vector<Point> layout(const SimilarityGraph& graph, const LayoutConfig& config = {});

// Export / import. Both carry community id and position per node, weight per edge.
void write_gexf(std::ostream& out, const SimilarityGraph& graph);
SimilarityGraph read_gexf(std::istream& in);
void write_graph_json(std::ostream& out, const SimilarityGraph& graph);
SimilarityGraph read_graph_json(std::istream& in);

}  // namespace memetrace::semantics
