#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "memetrace/common.hpp"
#include "memetrace/embedding.hpp"
#include "memetrace/graph.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace memetrace;
using namespace memetrace::semantics;

namespace {

EmbeddingConfig small_config(std::size_t min_count = 1) {
    EmbeddingConfig c;
    c.dim = 24;
    c.epochs = 3;
    c.min_count = min_count;
    c.seed = 11;
    return c;
}

double mean_cosine(const EmbeddingModel& m, const std::vector<std::string>& a, const std::vector<std::string>& b) {
    double s = 0;
    std::size_t n = 0;
    for (const auto& x : a)
        for (const auto& y : b) {
            if (x == y) continue;
            s += similarity(m, x, y);
            ++n;
        }
    return s / static_cast<double>(n);
}

}  // namespace

TEST_CASE("training keeps exactly the tokens that reach min_count") {
    std::vector<std::vector<std::string>> s = {
        {"a", "b", "c", "d"}, {"a", "b", "c", "e"}, {"a", "b", "c", "f"}, {"a", "b", "c", "d"}, {"a", "b", "c"}};
    const auto m = train_cbow(s, small_config(5));
    CHECK(m.size() == 3);
    CHECK(m.contains("a"));
    CHECK(m.contains("c"));
    CHECK_FALSE(m.contains("d"));
    CHECK_THROWS_AS(train_cbow(s, small_config(6)), InvalidArgument);
}

TEST_CASE("vocabulary filtering matches an exhaustive count") {
    std::mt19937_64 rng(3);
    std::geometric_distribution<int> g(0.15);
    std::vector<std::vector<std::string>> s(300);
    std::map<std::string, std::size_t> freq;
    for (auto& sent : s) {
        for (int k = 0; k < 8; ++k) {
            sent.push_back("t" + std::to_string(g(rng)));
            ++freq[sent.back()];
        }
    }
    const auto m = train_cbow(s, small_config(20));
    for (const auto& [w, c] : freq) CHECK(m.contains(w) == (c >= 20));
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(m.counts()[i] == freq[m.words()[i]]);
    for (float x : m.input_matrix()) REQUIRE(std::isfinite(x));
}

TEST_CASE("default min_count scales with corpus size") {
    CHECK(default_min_count(1000) == 5);
    CHECK(default_min_count(1'000'000'000) == 500);
    CHECK(default_min_count(100'000'000) == 50);
}

TEST_CASE("planted topics separate and training is deterministic") {
    const auto corpus = synth::planted_topics(5, 60'000, 20);
    EmbeddingConfig cfg = small_config(1);
    cfg.dim = 32;
    const auto m1 = train_cbow(corpus.sentences, cfg);
    const auto m2 = train_cbow(corpus.sentences, cfg);
    CHECK(m1.input_matrix() == m2.input_matrix());
    CHECK(m1.output_matrix() == m2.output_matrix());
    const double within = (mean_cosine(m1, corpus.topic_a, corpus.topic_a) + mean_cosine(m1, corpus.topic_b, corpus.topic_b)) / 2;
    const double cross = mean_cosine(m1, corpus.topic_a, corpus.topic_b);
    CHECK(within - cross >= 0.2);
}

TEST_CASE("multi-worker training yields a valid model") {
    const auto corpus = synth::planted_topics(6, 20'000, 10);
    EmbeddingConfig cfg = small_config(1);
    cfg.workers = 3;
    const auto m = train_cbow(corpus.sentences, cfg);
    CHECK(m.size() == 20);
    for (float x : m.input_matrix()) REQUIRE(std::isfinite(x));
}

TEST_CASE("similarity identities") {
    const auto m = synth::model_from_rows({{1, 2, 3}, {-1, -2, -3}, {0, 1, 0}});
    CHECK(similarity(m, "v0", "v0") == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(similarity(m, "v0", "v1") == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(similarity(m, "v0", "v2") == similarity(m, "v2", "v0"));
    try {
        similarity(m, "v0", "missing");
        FAIL("expected an error");
    } catch (const InvalidArgument& e) {
        CHECK(std::string(e.what()).find("missing") != std::string::npos);
    }
}

TEST_CASE("top_similar agrees with an exhaustive ranking") {
    const auto small = synth::model_from_rows({{1, 0}, {1, 1}, {0, 1}});
    const auto r = top_similar(small, "v0", 5);
    REQUIRE(r.size() == 2);
    CHECK(r[0].first == "v1");
    CHECK(r[1].first == "v2");
    CHECK_THROWS_AS(top_similar(small, "v0", 0), InvalidArgument);

    const auto m = synth::gaussian_model(9, 60, 8);
    const auto pairs = oracle::all_pair_cosines(m);
    for (std::size_t q = 0; q < m.size(); q += 7) {
        std::vector<std::pair<double, std::string>> expect;
        for (const auto& p : pairs)
            if (p.u == q || p.v == q) expect.emplace_back(-p.cosine, m.words()[p.u == q ? p.v : p.u]);
        std::sort(expect.begin(), expect.end());
        const auto got = top_similar(m, m.words()[q], 10);
        REQUIRE(got.size() == 10);
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].first == expect[i].second);
            CHECK(got[i].second == doctest::Approx(-expect[i].first).epsilon(1e-9));
            CHECK(got[i].first != m.words()[q]);
            if (i) CHECK(got[i - 1].second >= got[i].second);
        }
    }
}

TEST_CASE("ties in top_similar are broken lexicographically") {
    const auto m = synth::model_from_rows({{1, 0}, {1, 1}, {1, 1}, {1, 1}});
    const auto r = top_similar(m, "v0", 3);
    CHECK(r[0].first == "v1");
    CHECK(r[1].first == "v2");
    CHECK(r[2].first == "v3");
}

TEST_CASE("predict_context is a normalized distribution") {
    const auto one = synth::model_from_rows({{0.3f, -0.2f}});
    const std::vector<std::string> ctx1 = {"v0"};
    const auto r1 = predict_context(one, ctx1, 3);
    REQUIRE(r1.size() == 1);
    CHECK(r1[0].second == doctest::Approx(1.0));

    const auto m = synth::gaussian_model(4, 50, 6);
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::string> ctx = {m.words()[rng() % 50], m.words()[rng() % 50], "oov"};
        const auto p = context_distribution(m, ctx);
        double sum = 0;
        for (double x : p) {
            CHECK(x >= 0.0);
            sum += x;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-6);
        const auto top = predict_context(m, ctx, 5);
        CHECK(top[0].second == doctest::Approx(*std::max_element(p.begin(), p.end())));
    }
    const std::vector<std::string> none = {"nope"};
    CHECK_THROWS_AS(predict_context(m, none, 3), InvalidArgument);
}

TEST_CASE("similarity threshold estimation") {
    const auto same = synth::model_from_rows(std::vector<std::vector<float>>(50, {0.5f, 0.5f, 0.1f}));
    CHECK(threshold_for_fraction(same, 0.999, 1000, 1).threshold == doctest::Approx(1.0).epsilon(1e-6));

    const auto m = synth::gaussian_model(2, 300, 10);
    CHECK_THROWS_AS(threshold_for_fraction(m, 0.0, 5000, 1), InvalidArgument);
    CHECK_THROWS_AS(threshold_for_fraction(m, 1.0, 5000, 1), InvalidArgument);
    CHECK_THROWS_AS(threshold_for_fraction(m, 0.1, 999, 1), InvalidArgument);

    auto pairs = oracle::all_pair_cosines(m);
    std::vector<double> all;
    for (const auto& p : pairs) all.push_back(p.cosine);
    std::sort(all.begin(), all.end());
    for (double f : {0.01, 0.05, 0.2, 0.5}) {
        const double exact = all[all.size() - static_cast<std::size_t>(std::ceil(f * all.size()))];
        const auto est = threshold_for_fraction(m, f, 20000, 3);
        CHECK_FALSE(est.exhaustive);
        CHECK(std::abs(est.threshold - exact) <= 0.02);
        const auto full = threshold_for_fraction(m, f, all.size(), 3);
        CHECK(full.exhaustive);
        CHECK(full.threshold == doctest::Approx(exact).epsilon(1e-9));
    }
    const auto cdf = threshold_for_fraction(m, 0.1, 5000, 3).curve(11);
    REQUIRE(cdf.size() == 11);
    for (std::size_t i = 1; i < cdf.size(); ++i) {
        CHECK(cdf[i].first >= cdf[i - 1].first);
        CHECK(cdf[i].second >= cdf[i - 1].second);
    }
}

TEST_CASE("graph edges match all-pairs cosine and shrink with the threshold") {
    const auto m = synth::gaussian_model(8, 80, 4);
    const auto pairs = oracle::all_pair_cosines(m);
    std::size_t previous = SIZE_MAX;
    for (double t = 0.05; t < 1.0; t += 0.1) {
        const auto g = build_similarity_graph(m, t);
        std::set<std::pair<std::size_t, std::size_t>> got, expect;
        for (const auto& e : g.edges) {
            CHECK(e.u < e.v);
            CHECK(e.weight >= t);
            CHECK(e.weight <= 1.0 + 1e-9);
            got.insert({e.u, e.v});
        }
        for (const auto& p : pairs)
            if (p.cosine >= t) expect.insert({p.u, p.v});
        CHECK(got.size() == g.edges.size());
        CHECK(got == expect);
        CHECK(g.edges.size() <= previous);
        previous = g.edges.size();
    }
    CHECK_THROWS_AS(build_similarity_graph(m, 0.0), InvalidArgument);
    CHECK_THROWS_AS(build_similarity_graph(m, 1.0), InvalidArgument);

    const auto toy = synth::model_from_rows({{1, 0}, {0, 1}, {-1, 0}, {0, -1}});
    CHECK(build_similarity_graph(toy, 0.5).edges.empty());
}

TEST_CASE("ego network examples") {
    SimilarityGraph path;
    path.nodes = {"a", "b", "c", "d", "e"};
    path.edges = {{0, 1, 0.7}, {1, 2, 0.8}, {2, 3, 0.9}};
    const auto ego = ego_network(path, "a", 2);
    CHECK(ego.nodes == std::vector<std::string>{"a", "b", "c"});
    REQUIRE(ego.edges.size() == 2);
    CHECK(ego.edges[0].weight == 0.7);
    CHECK(ego.edges[1].weight == 0.8);
    const auto lone = ego_network(path, "e", 2);
    CHECK(lone.nodes == std::vector<std::string>{"e"});
    CHECK(lone.edges.empty());
    CHECK_THROWS_AS(ego_network(path, "zz", 2), InvalidArgument);
}

TEST_CASE("ego network equals BFS-then-induce on random graphs") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const auto g = synth::random_graph(seed, 60, 0.03 + 0.002 * static_cast<double>(seed));
        std::vector<std::vector<bool>> adj(g.size(), std::vector<bool>(g.size()));
        for (const auto& e : g.edges) adj[e.u][e.v] = adj[e.v][e.u] = true;
        const std::size_t s = seed % g.size();
        const auto in = oracle::within_hops(adj, s, 2);
        const auto ego = ego_network(g, g.nodes[s], 2);
        std::set<std::string> expect_nodes;
        for (std::size_t v = 0; v < g.size(); ++v)
            if (in[v]) expect_nodes.insert(g.nodes[v]);
        CHECK(std::set<std::string>(ego.nodes.begin(), ego.nodes.end()) == expect_nodes);
        std::set<std::pair<std::string, std::string>> expect_edges, got_edges;
        for (const auto& e : g.edges)
            if (in[e.u] && in[e.v]) expect_edges.insert({g.nodes[e.u], g.nodes[e.v]});
        for (const auto& e : ego.edges) got_edges.insert({ego.nodes[e.u], ego.nodes[e.v]});
        CHECK(got_edges == expect_edges);
    }
}

TEST_CASE("louvain splits two weakly bridged cliques") {
    const auto g = synth::two_cliques();
    const auto best = oracle::best_bipartition(g);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto part = detect_communities(g, seed);
        CHECK(*std::max_element(part.begin(), part.end()) == 1);
        CHECK(oracle::same_partition(part, best));
        CHECK(part[0] == 0);
    }
}

TEST_CASE("louvain contracts") {
    SimilarityGraph empty;
    empty.nodes = {"x", "y", "z"};
    CHECK(detect_communities(empty, 1) == std::vector<int>{0, 1, 2});

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto g = synth::random_graph(seed, 40, 0.1);
        const auto part = detect_communities(g, seed);
        REQUIRE(part.size() == g.size());
        // labels are numbered by smallest member
        int next = 0;
        for (int c : part) {
            CHECK(c <= next);
            if (c == next) ++next;
        }
        const std::vector<int> one(g.size(), 0);
        CHECK(modularity(g, part) >= modularity(g, one) - 1e-12);
        CHECK(modularity(g, part) == doctest::Approx(oracle::modularity(g, part)).epsilon(1e-9));
        CHECK(detect_communities(g, seed) == part);
    }
}

TEST_CASE("layout contracts") {
    SimilarityGraph single;
    single.nodes = {"solo"};
    const auto p = layout(single);
    REQUIRE(p.size() == 1);
    CHECK(p[0].x == 0.0);
    CHECK(p[0].y == 0.0);

    SimilarityGraph four;
    four.nodes = {"a", "b", "c", "d"};
    four.edges = {{0, 1, 0.95}, {2, 3, 0.6}};
    double heavy = 0, light = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        LayoutConfig cfg;
        cfg.seed = seed;
        const auto pos = layout(four, cfg);
        for (const auto& q : pos) REQUIRE((std::isfinite(q.x) && std::isfinite(q.y)));
        heavy += std::hypot(pos[0].x - pos[1].x, pos[0].y - pos[1].y);
        light += std::hypot(pos[2].x - pos[3].x, pos[2].y - pos[3].y);
    }
    CHECK(heavy < light);

    const auto g = synth::random_graph(3, 80, 0.05);
    LayoutConfig cfg;
    cfg.seed = 4;
    cfg.iterations = 100;
    const auto a = layout(g, cfg), b = layout(g, cfg);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].x == b[i].x);
        CHECK(a[i].y == b[i].y);
    }
}

TEST_CASE("barnes-hut layout stays finite and keeps clusters apart") {
    const auto g = synth::two_cliques(15);
    LayoutConfig exact, approx;
    approx.barnes_hut_threshold = 1;
    for (const auto* cfg : {&exact, &approx}) {
        const auto pos = layout(g, *cfg);
        double within = 0, across = 0;
        for (std::size_t i = 0; i < 15; ++i) {
            within += std::hypot(pos[i].x - pos[(i + 1) % 15].x, pos[i].y - pos[(i + 1) % 15].y);
            across += std::hypot(pos[i].x - pos[i + 15].x, pos[i].y - pos[i + 15].y);
        }
        for (const auto& q : pos) REQUIRE((std::isfinite(q.x) && std::isfinite(q.y)));
        CHECK(within < across);
    }
}

TEST_CASE("graph export round trips") {
    auto g = synth::random_graph(12, 30, 0.2);
    g.nodes[3] = "quote\"&<amp>";
    g.nodes[4] = "(((echo)))";
    g.communities = detect_communities(g, 1);
    g.positions = layout(g, {});

    auto check_same = [&](const SimilarityGraph& r) {
        REQUIRE(r.nodes == g.nodes);
        REQUIRE(r.edges.size() == g.edges.size());
        for (std::size_t k = 0; k < g.edges.size(); ++k) {
            CHECK(r.edges[k].u == g.edges[k].u);
            CHECK(r.edges[k].v == g.edges[k].v);
            CHECK(std::abs(r.edges[k].weight - g.edges[k].weight) <= 1e-9);
        }
        CHECK(r.communities == g.communities);
        REQUIRE(r.positions.size() == g.positions.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            CHECK(std::abs(r.positions[i].x - g.positions[i].x) <= 1e-9);
            CHECK(std::abs(r.positions[i].y - g.positions[i].y) <= 1e-9);
        }
    };
    std::stringstream gexf, json;
    write_gexf(gexf, g);
    check_same(read_gexf(gexf));
    write_graph_json(json, g);
    check_same(read_graph_json(json));
}

TEST_CASE("model files round trip") {
    const auto corpus = synth::planted_topics(2, 5000, 8);
    const auto m = train_cbow(corpus.sentences, small_config(1));
    const auto dir = std::filesystem::temp_directory_path() / "memetrace_model_test";
    std::filesystem::create_directories(dir);
    save_model(m, dir / "model");
    const auto r = load_model(dir / "model");
    CHECK(r.words() == m.words());
    CHECK(r.counts() == m.counts());
    CHECK(r.input_matrix() == m.input_matrix());
    CHECK(r.output_matrix() == m.output_matrix());
    CHECK(r.config().min_count == m.config().min_count);
    std::filesystem::remove_all(dir);
}
