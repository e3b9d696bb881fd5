#include "memetrace/graph.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <queue>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "memetrace/common.hpp"

namespace memetrace::semantics {

std::optional<std::size_t> SimilarityGraph::find(std::string_view word) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i] == word) return i;
    return std::nullopt;
}

std::vector<std::size_t> SimilarityGraph::degrees() const {
    std::vector<std::size_t> deg(nodes.size(), 0);
    for (const auto& e : edges) {
        ++deg[e.u];
        ++deg[e.v];
    }
    return deg;
}

std::vector<std::vector<SimilarityGraph::Neighbor>> SimilarityGraph::adjacency() const {
    std::vector<std::vector<Neighbor>> adj(nodes.size());
    for (const auto& e : edges) {
        adj[e.u].push_back({e.v, e.weight});
        adj[e.v].push_back({e.u, e.weight});
    }
    return adj;
}

SimilarityGraph build_similarity_graph(const EmbeddingModel& model, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("graph threshold must lie in (0, 1)");
    SimilarityGraph g;
    g.threshold = threshold;
    g.nodes = model.words();
    for (std::size_t a = 0; a < model.size(); ++a) {
        for (std::size_t b = a + 1; b < model.size(); ++b) {
            const double w = model.cosine(a, b);
            if (w >= threshold) g.edges.push_back({a, b, w});
        }
    }
    return g;
}

SimilarityGraph ego_network(const SimilarityGraph& graph, std::string_view seed_word, std::size_t hops) {
    const auto seed = graph.find(seed_word);
    if (!seed) throw InvalidArgument("ego seed not in graph: '" + std::string(seed_word) + "'");

    const auto adj = graph.adjacency();
    std::vector<std::size_t> dist(graph.size(), SIZE_MAX);
    std::queue<std::size_t> frontier;
    dist[*seed] = 0;
    frontier.push(*seed);
    while (!frontier.empty()) {
        const auto u = frontier.front();
        frontier.pop();
        if (dist[u] == hops) continue;
        for (const auto& nb : adj[u]) {
            if (dist[nb.node] != SIZE_MAX) continue;
            dist[nb.node] = dist[u] + 1;
            frontier.push(nb.node);
        }
    }

    SimilarityGraph sub;
    sub.threshold = graph.threshold;
    std::vector<std::size_t> remap(graph.size(), SIZE_MAX);
    for (std::size_t i = 0; i < graph.size(); ++i) {
        if (dist[i] == SIZE_MAX) continue;
        remap[i] = sub.nodes.size();
        sub.nodes.push_back(graph.nodes[i]);
        if (!graph.communities.empty()) sub.communities.push_back(graph.communities[i]);
        if (!graph.positions.empty()) sub.positions.push_back(graph.positions[i]);
    }
    for (const auto& e : graph.edges)
        if (remap[e.u] != SIZE_MAX && remap[e.v] != SIZE_MAX) sub.edges.push_back({remap[e.u], remap[e.v], e.weight});
    return sub;
}

// ---------------------------------------------------------------------------
// GEXF

namespace {

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string xml_unescape(std::string_view s) {
    static const std::pair<std::string_view, char> entities[] = {
        {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&apos;", '\''}};
    std::string out;
    for (std::size_t i = 0; i < s.size();) {
        bool matched = false;
        if (s[i] == '&') {
            for (const auto& [ent, ch] : entities) {
                if (s.substr(i, ent.size()) == ent) {
                    out.push_back(ch);
                    i += ent.size();
                    matched = true;
                    break;
                }
            }
        }
        if (!matched) out.push_back(s[i++]);
    }
    return out;
}

// Value of attribute `name` inside one XML start tag.
std::optional<std::string> attribute(std::string_view tag, std::string_view name) {
    const std::string key = " " + std::string(name) + "=\"";
    const auto at = tag.find(key);
    if (at == std::string_view::npos) return std::nullopt;
    const auto begin = at + key.size();
    const auto end = tag.find('"', begin);
    if (end == std::string_view::npos) return std::nullopt;
    return xml_unescape(tag.substr(begin, end - begin));
}

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }

}  // namespace

void write_gexf(std::ostream& out, const SimilarityGraph& graph) {
    const auto deg = graph.degrees();
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
           "<gexf xmlns=\"http://gexf.net/1.3\" xmlns:viz=\"http://gexf.net/1.3/viz\" version=\"1.3\">\n"
           "  <graph defaultedgetype=\"undirected\" mode=\"static\">\n"
           "    <attributes class=\"node\">\n"
           "      <attribute id=\"community\" title=\"community\" type=\"integer\"/>\n"
           "      <attribute id=\"degree\" title=\"degree\" type=\"integer\"/>\n"
           "    </attributes>\n"
           "    <nodes>\n";
    for (std::size_t i = 0; i < graph.size(); ++i) {
        const int comm = graph.communities.empty() ? -1 : graph.communities[i];
        const Point p = graph.positions.empty() ? Point{} : graph.positions[i];
        out << fmt::format("      <node id=\"{}\" label=\"{}\">\n", i, xml_escape(graph.nodes[i]));
        out << fmt::format(
            "        <attvalues><attvalue for=\"community\" value=\"{}\"/>"
            "<attvalue for=\"degree\" value=\"{}\"/></attvalues>\n",
            comm, deg[i]);
        out << fmt::format("        <viz:position x=\"{}\" y=\"{}\" z=\"0\"/>\n", fmt_double(p.x), fmt_double(p.y));
        out << fmt::format("        <viz:size value=\"{}\"/>\n", 1 + deg[i]);
        out << "      </node>\n";
    }
    out << "    </nodes>\n    <edges>\n";
    for (std::size_t k = 0; k < graph.edges.size(); ++k) {
        const auto& e = graph.edges[k];
        out << fmt::format("      <edge id=\"{}\" source=\"{}\" target=\"{}\" weight=\"{}\"/>\n", k, e.u, e.v,
                           fmt_double(e.weight));
    }
    out << "    </edges>\n  </graph>\n</gexf>\n";
}

SimilarityGraph read_gexf(std::istream& in) {
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string doc = buf.str();

    SimilarityGraph g;
    std::map<std::string, std::size_t> ids;
    bool have_comm = false, have_pos = false;
    std::size_t pos = 0;
    auto next_tag = [&](std::string_view name) -> std::optional<std::string_view> {
        const std::string open = "<" + std::string(name) + " ";
        const auto at = doc.find(open, pos);
        if (at == std::string::npos) return std::nullopt;
        const auto end = doc.find('>', at);
        if (end == std::string::npos) throw IoError("truncated GEXF tag");
        pos = end + 1;
        return std::string_view(doc).substr(at, end - at + 1);
    };

    const auto nodes_end = doc.find("</nodes>");
    while (auto tag = next_tag("node")) {
        if (nodes_end != std::string::npos && pos > nodes_end) break;
        const auto id = attribute(*tag, "id");
        const auto label = attribute(*tag, "label");
        if (!id) throw IoError("GEXF node without id");
        ids[*id] = g.nodes.size();
        g.nodes.push_back(label ? *label : *id);
        // attributes of this node live until its closing tag
        const auto close = doc.find("</node>", pos);
        const std::string_view body = std::string_view(doc).substr(pos, close - pos);
        int comm = -1;
        if (auto a = body.find("for=\"community\""); a != std::string_view::npos) {
            const auto tag_start = body.rfind('<', a);
            const auto v = attribute(body.substr(tag_start, body.find('>', a) - tag_start + 1), "value");
            if (v) {
                comm = std::stoi(*v);
                have_comm = true;
            }
        }
        g.communities.push_back(comm);
        Point p;
        if (auto a = body.find("<viz:position "); a != std::string_view::npos) {
            const auto t = body.substr(a, body.find('>', a) - a + 1);
            p.x = std::stod(attribute(t, "x").value_or("0"));
            p.y = std::stod(attribute(t, "y").value_or("0"));
            have_pos = true;
        }
        g.positions.push_back(p);
        if (close != std::string::npos) pos = close;
    }
    while (auto tag = next_tag("edge")) {
        const auto s = attribute(*tag, "source"), t = attribute(*tag, "target");
        if (!s || !t || !ids.contains(*s) || !ids.contains(*t)) throw IoError("GEXF edge with unknown endpoint");
        std::size_t u = ids[*s], v = ids[*t];
        if (u > v) std::swap(u, v);
        g.edges.push_back({u, v, std::stod(attribute(*tag, "weight").value_or("1"))});
    }
    if (!have_comm) g.communities.clear();
    if (!have_pos) g.positions.clear();
    return g;
}

// ---------------------------------------------------------------------------
// JSON node-link

void write_graph_json(std::ostream& out, const SimilarityGraph& graph) {
    const auto deg = graph.degrees();
    nlohmann::json nodes = nlohmann::json::array(), links = nlohmann::json::array();
    for (std::size_t i = 0; i < graph.size(); ++i) {
        nlohmann::json n = {{"id", graph.nodes[i]}, {"degree", deg[i]}};
        n["community"] = graph.communities.empty() ? -1 : graph.communities[i];
        if (!graph.positions.empty()) {
            n["x"] = graph.positions[i].x;
            n["y"] = graph.positions[i].y;
        }
        nodes.push_back(std::move(n));
    }
    for (const auto& e : graph.edges)
        links.push_back({{"source", graph.nodes[e.u]}, {"target", graph.nodes[e.v]}, {"weight", e.weight}});
    const nlohmann::json doc = {
        {"directed", false}, {"threshold", graph.threshold}, {"nodes", nodes}, {"links", links}};
    out << doc.dump(1) << '\n';
}

SimilarityGraph read_graph_json(std::istream& in) {
    const auto doc = nlohmann::json::parse(in);
    SimilarityGraph g;
    g.threshold = doc.value("threshold", 0.0);
    std::unordered_map<std::string, std::size_t> ids;
    bool have_comm = false, have_pos = false;
    for (const auto& n : doc.at("nodes")) {
        ids[n.at("id").get<std::string>()] = g.nodes.size();
        g.nodes.push_back(n.at("id").get<std::string>());
        const int c = n.value("community", -1);
        have_comm |= c >= 0;
        g.communities.push_back(c);
        have_pos |= n.contains("x");
        g.positions.push_back({n.value("x", 0.0), n.value("y", 0.0)});
    }
    for (const auto& l : doc.at("links")) {
        std::size_t u = ids.at(l.at("source").get<std::string>());
        std::size_t v = ids.at(l.at("target").get<std::string>());
        if (u > v) std::swap(u, v);
        g.edges.push_back({u, v, l.at("weight").get<double>()});
    }
    if (!have_comm) g.communities.clear();
    if (!have_pos) g.positions.clear();
    return g;
}

}  // namespace memetrace::semantics
