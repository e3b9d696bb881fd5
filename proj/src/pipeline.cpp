#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "memetrace/common.hpp"
#include "memetrace/corpus.hpp"
#include "memetrace/csv.hpp"
#include "memetrace/pipeline.hpp"
#include "memetrace/text.hpp"
#include "memetrace/trends.hpp"

namespace memetrace::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& path) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

void write_json(const fs::path& path, const json& j) { open_out(path) << j.dump(2) << '\n'; }

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    return json::parse(in);
}

std::string file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Regular files below `dir`, as sorted generic relative paths.
std::vector<std::string> list_files(const fs::path& dir) {
    std::vector<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out.push_back(e.path().lexically_relative(dir).generic_string());
    std::sort(out.begin(), out.end());
    return out;
}

std::string safe_name(std::string_view s) {
    std::string out;
    for (char c : s) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_');
    if (out.empty()) out = "_";
    return out;
}

std::string number(double v) {
    if (std::isnan(v)) return "";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return fmt::format("{:.10g}", v);
}

/// Runs f(i) for i in [0, n) on up to `workers` threads; rethrows the first failure by index.
template <class F>
void parallel_for(std::size_t n, std::size_t workers, F f) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < std::min(workers, n); ++w)
        threads.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    f(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct StageOutput {
    std::vector<fs::path> artifacts;
    json summary = json::object();
};

class Runner {
public:
    Runner(const PipelineConfig& cfg, const RunOptions& opts) : cfg_(cfg), opts_(opts), out_(cfg.output_dir) {}

    RunResult run();

private:
    const PipelineConfig& cfg_;
    const RunOptions& opts_;
    fs::path out_;
    json manifest_;
    json timings_ = json::object();
    std::optional<corpus::Corpus> corpus_;

    void progress(json event) const {
        if (opts_.progress) opts_.progress(event);
    }
    fs::path dir(Stage s) const { return out_ / stage_name(s); }
    const json& entry(Stage s) const {
        static const json none;
        const auto& st = manifest_["stages"];
        const auto it = st.find(stage_name(s));
        return it == st.end() ? none : *it;
    }
    bool completed(Stage s) const {
        const auto& e = entry(s);
        return e.is_object() && e.value("status", "") == "ok";
    }
    std::string fingerprint(Stage s) const;
    bool up_to_date(Stage s, const std::string& fp) const;
    void save_manifest() const;

    const corpus::Corpus& corpus();
    std::vector<std::string> normalized_terms(const std::vector<std::string>& raw, const std::string& field) const;

    StageOutput ingest();
    StageOutput trends();
    StageOutput embed();
    StageOutput graph();
    StageOutput memes();
    StageOutput hawkes();
    StageOutput report();
};

std::string Runner::fingerprint(Stage s) const {
    const json sem = cfg_.semantic_json();
    json parts = {{"stage", stage_name(s)}, {"version", kToolVersion}};
    for (Stage d : dependencies(s)) parts["upstream"][stage_name(d)] = entry(d).value("fingerprint", "");
    switch (s) {
        case Stage::ingest: {
            json src = json::array();
            for (const auto& x : cfg_.sources)
                src.push_back({hex64(fnv1a64(file_bytes(x.path))), x.community ? *x.community : "", x.format ? *x.format : ""});
            parts["sources"] = src;
            // missing-image counts depend on which files exist
            parts["images"] = cfg_.image_dir ? hex64(fnv1a64(json(list_files(*cfg_.image_dir)).dump())) : "";
            break;
        }
        case Stage::trends: parts["config"] = {sem["terms"], sem["trends"]}; break;
        case Stage::embed: parts["config"] = {sem["seed"], sem["embedding"]}; break;
        case Stage::graph: parts["config"] = {sem["seed"], sem["graph"], sem["terms"]}; break;
        case Stage::memes: {
            parts["config"] = sem["memes"];
            std::string content;
            if (cfg_.image_dir)
                for (const auto& f : list_files(*cfg_.image_dir))
                    content += f + '\0' + hex64(fnv1a64(file_bytes(*cfg_.image_dir / f))) + '\n';
            parts["images"] = hex64(fnv1a64(content));
            parts["reference"] = cfg_.memes.reference ? hex64(fnv1a64(file_bytes(*cfg_.memes.reference))) : "";
            break;
        }
        case Stage::hawkes: parts["config"] = {sem["seed"], sem["hawkes"]}; break;
        case Stage::report:
            for (Stage o : all_stages())
                if (o != Stage::report && completed(o)) parts["inputs"][stage_name(o)] = entry(o).value("fingerprint", "");
            break;
    }
    return hex64(fnv1a64(parts.dump()));
}

bool Runner::up_to_date(Stage s, const std::string& fp) const {
    const auto& e = entry(s);
    if (!completed(s) || e.value("fingerprint", "") != fp) return false;
    for (const auto& a : e.value("artifacts", json::array())) {
        const fs::path p = out_ / a.get<std::string>();
        std::error_code ec;
        if (!fs::is_regular_file(p, ec) || fs::file_size(p, ec) == 0) return false;
    }
    return true;
}

void Runner::save_manifest() const {
    write_json(out_ / "manifest.json", manifest_);
    write_json(out_ / "timings.json", timings_);
}

const corpus::Corpus& Runner::corpus() {
    if (corpus_) return *corpus_;
    const auto fp = parse_hex64(entry(Stage::ingest).at("summary").at("source_fingerprint").get<std::string>());
    auto cached = corpus::read_cache(dir(Stage::ingest) / "corpus.cache", fp);
    if (!cached) throw IoError("ingest artifacts are missing or stale; rerun stage ingest");
    corpus_ = std::move(cached->corpus);
    return *corpus_;
}

std::vector<std::string> Runner::normalized_terms(const std::vector<std::string>& raw, const std::string& field) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const auto tok = text::tokenize(raw[i]);
        if (tok.size() != 1)
            throw InvalidArgument(fmt::format("{}[{}]: '{}' does not normalize to a single token", field, i, raw[i]));
        if (std::find(out.begin(), out.end(), tok[0]) == out.end()) out.push_back(tok[0]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stages

StageOutput Runner::ingest() {
    std::unordered_set<std::string> store;
    corpus::IngestOptions options;
    if (cfg_.image_dir) {
        for (auto& f : list_files(*cfg_.image_dir)) store.insert(std::move(f));
        options.image_store = &store;
    }
    corpus::Ingestor ingestor(options);
    std::string fp_bytes;
    for (const auto& src : cfg_.sources) {
        ingestor.set_community_override(src.community);
        const auto format = src.format ? corpus::parse_format(*src.format) : corpus::format_from_extension(src.path);
        ingestor.add_file(src.path, format);
        fp_bytes += hex64(fnv1a64(file_bytes(src.path))) + (src.community ? *src.community : "") + '\n';
    }
    auto result = std::move(ingestor).finish();
    const std::uint64_t source_fp = fnv1a64(fp_bytes);
    const auto& c = result.corpus;
    if (c.size() == 0) throw InvalidArgument("no post was accepted from the corpus sources");

    StageOutput out;
    const fs::path d = dir(Stage::ingest);
    json report = result.report.to_json();
    report["stopword_list"] = text::stopword_list_id();
    write_json(d / "report.json", report);

    json comms = json::object();
    std::map<std::string, std::pair<std::int64_t, std::int64_t>> span;
    for (const auto& [day, per] : c.date_index())
        for (const auto& [comm, n] : per) {
            auto [it, fresh] = span.emplace(comm, std::make_pair(day, day));
            if (!fresh) it->second.second = day;
        }
    for (const auto& comm : c.communities())
        comms[comm] = {{"posts", c.community_size(comm)},
                       {"first_day", format_day(span[comm].first)},
                       {"last_day", format_day(span[comm].second)}};
    write_json(d / "corpus_stats.json", {{"posts", c.size()}, {"tokens", c.token_count()}, {"communities", comms}});

    {
        auto csv_out = open_out(d / "daily_counts.csv");
        csv::write_record(csv_out, {"day", "community", "posts"});
        for (const auto& [day, per] : c.date_index())
            for (const auto& [comm, n] : per) csv::write_record(csv_out, {format_day(day), comm, std::to_string(n)});
    }
    corpus::write_cache(c, result.report, source_fp, d / "corpus.cache");
    out.artifacts = {d / "report.json", d / "corpus_stats.json", d / "daily_counts.csv", d / "corpus.cache"};
    out.summary = {{"posts", c.size()},
                   {"skipped", result.report.skipped()},
                   {"missing_images", result.report.missing_images},
                   {"communities", c.communities()},
                   {"source_fingerprint", hex64(source_fp)}};
    spdlog::info("ingest: {} posts accepted, {} skipped", c.size(), result.report.skipped());
    corpus_ = std::move(result.corpus);
    return out;
}

StageOutput Runner::trends() {
    const auto& c = corpus();
    const auto terms = normalized_terms(cfg_.terms, "config.terms");
    const auto communities = c.communities();
    struct Task {
        std::string term, community;
        std::vector<std::string> row;
        std::vector<fs::path> files;
    };
    std::vector<Task> tasks;
    for (const auto& t : terms)
        for (const auto& comm : communities) tasks.push_back({t, comm, {}, {}});
    const fs::path d = dir(Stage::trends);

    parallel_for(tasks.size(), cfg_.effective_workers(), [&](std::size_t i) {
        auto& task = tasks[i];
        const auto series = trends::build_term_series(c, task.term, task.community);
        const auto smoothed = trends::rolling_mean(series, cfg_.trends.window);
        const fs::path stem = d / safe_name(task.term) / safe_name(task.community);
        auto series_path = stem;
        series_path += ".csv";
        {
            auto o = open_out(series_path);
            trends::write_series_csv(o, series, smoothed);
        }
        task.files.push_back(series_path);

        std::size_t matching = 0;
        for (auto n : series.counts) matching += n;
        std::string ratio, count, top;
        if (series.size() >= 2 * cfg_.trends.edge_window) ratio = number(trends::increase_ratio(series, cfg_.trends.edge_window));
        if (series.size() >= 4) {
            const auto penalties =
                cfg_.trends.penalties.empty() ? trends::default_penalty_schedule(series.size()) : cfg_.trends.penalties;
            const auto set = trends::rank_changepoints(series.fraction, penalties);
            auto cp_path = stem;
            cp_path += ".changepoints.json";
            write_json(cp_path, trends::changepoints_to_json(set, series));
            task.files.push_back(cp_path);
            count = std::to_string(set.indices.size());
            if (!set.ranked.empty()) top = format_day(series.days[set.ranked.front().index]);
        }
        task.row = {task.term, task.community, std::to_string(series.size()), std::to_string(matching), ratio, count, top};
    });

    StageOutput out;
    auto summary = open_out(d / "summary.csv");
    csv::write_record(summary, {"term", "community", "days", "matching_posts", "increase_ratio", "changepoints", "top_changepoint"});
    json rows = json::array();
    for (auto& t : tasks) {
        csv::write_record(summary, t.row);
        rows.push_back({{"term", t.term}, {"community", t.community}, {"increase_ratio", t.row[4]}, {"changepoints", t.row[5]},
                        {"top_changepoint", t.row[6]}});
        out.artifacts.insert(out.artifacts.end(), t.files.begin(), t.files.end());
    }
    out.artifacts.push_back(d / "summary.csv");
    out.summary = {{"terms", terms}, {"series", tasks.size()}, {"rows", rows}};
    spdlog::info("trends: {} series over {} terms", tasks.size(), terms.size());
    return out;
}

StageOutput Runner::embed() {
    const auto& c = corpus();
    auto config = cfg_.embedding;
    config.seed = derive_seed(cfg_.seed, "embed");
    config.workers = cfg_.effective_workers();
    const auto model = semantics::train_cbow(c, config);
    const fs::path d = dir(Stage::embed);
    fs::create_directories(d);
    semantics::save_model(model, d / "model");

    json similar = json::object();
    for (const auto& t : normalized_terms(cfg_.terms, "config.terms")) {
        if (!model.contains(t)) continue;
        json list = json::array();
        for (const auto& [w, s] : semantics::top_similar(model, t, 20)) list.push_back({{"word", w}, {"similarity", s}});
        similar[t] = list;
    }
    write_json(d / "similar.json", similar);
    StageOutput out;
    out.artifacts = {d / "model.vec", d / "model.ctx.vec", d / "model.json", d / "similar.json"};
    out.summary = {{"vocabulary", model.size()},
                   {"dim", model.dim()},
                   {"min_count", model.min_count()},
                   {"corpus_tokens", c.token_count()}};
    spdlog::info("embed: {} words, dim {}", model.size(), model.dim());
    return out;
}

StageOutput Runner::graph() {
    const auto model = semantics::load_model(dir(Stage::embed) / "model");
    const fs::path d = dir(Stage::graph);
    StageOutput out;
    double threshold = 0.0;
    if (cfg_.graph.threshold) {
        threshold = *cfg_.graph.threshold;
    } else {
        const auto cdf = semantics::threshold_for_fraction(model, cfg_.graph.edge_fraction, cfg_.graph.sample_pairs,
                                                           derive_seed(cfg_.seed, "threshold"));
        threshold = cdf.threshold;
        auto o = open_out(d / "similarity_cdf.csv");
        csv::write_record(o, {"similarity", "cumulative_fraction"});
        for (const auto& [s, f] : cdf.curve()) csv::write_record(o, {number(s), number(f)});
        out.artifacts.push_back(d / "similarity_cdf.csv");
    }
    auto layout_cfg = cfg_.graph.layout;
    layout_cfg.seed = derive_seed(cfg_.seed, "layout");
    const std::uint64_t louvain_seed = derive_seed(cfg_.seed, "louvain");

    auto g = semantics::build_similarity_graph(model, threshold);
    g.communities = semantics::detect_communities(g, louvain_seed);
    g.positions = semantics::layout(g, layout_cfg);
    auto emit = [&](const semantics::SimilarityGraph& graph, const std::string& stem) {
        {
            auto o = open_out(d / (stem + ".gexf"));
            semantics::write_gexf(o, graph);
        }
        {
            auto o = open_out(d / (stem + ".json"));
            semantics::write_graph_json(o, graph);
        }
        out.artifacts.push_back(d / (stem + ".gexf"));
        out.artifacts.push_back(d / (stem + ".json"));
    };
    emit(g, "graph");

    const auto V = static_cast<double>(g.size());
    const int n_comm = g.communities.empty() ? 0 : *std::max_element(g.communities.begin(), g.communities.end()) + 1;
    json ego = json::object();
    json missing = json::array();
    for (const auto& seed : normalized_terms(cfg_.graph.ego_seeds, "config.graph.ego_seeds")) {
        if (!g.find(seed)) {
            spdlog::warn("graph: ego seed '{}' is not in the vocabulary", seed);
            missing.push_back(seed);
            continue;
        }
        auto e = semantics::ego_network(g, seed, cfg_.graph.hops);
        e.communities = semantics::detect_communities(e, louvain_seed);
        e.positions = semantics::layout(e, layout_cfg);
        emit(e, "ego_" + safe_name(seed));
        ego[seed] = {{"nodes", e.size()}, {"edges", e.edges.size()}};
    }
    out.summary = {{"nodes", g.size()},
                   {"edges", g.edges.size()},
                   {"threshold", threshold},
                   {"realized_fraction", V > 1 ? static_cast<double>(g.edges.size()) / (V * (V - 1) / 2) : 0.0},
                   {"communities", n_comm},
                   {"modularity", semantics::modularity(g, g.communities)},
                   {"ego_networks", ego},
                   {"missing_ego_seeds", missing}};
    spdlog::info("graph: {} nodes, {} edges at threshold {:.4f}", g.size(), g.edges.size(), threshold);
    return out;
}

StageOutput Runner::memes() {
    if (!cfg_.image_dir) throw InvalidArgument("config.corpus.image_dir: required by stage memes");
    const auto& c = corpus();
    const fs::path d = dir(Stage::memes);
    const fs::path cache_path = out_ / "cache" / "hash_cache.csv";
    auto cache = memes::HashCache::load(cache_path);
    memes::HashReport report;
    const auto hashes = memes::hash_corpus_images(c, *cfg_.image_dir, &cache, report, cfg_.effective_workers());
    fs::create_directories(cache_path.parent_path());
    cache.save(cache_path);
    auto clustering = memes::cluster_hashes(hashes, cfg_.memes.cluster);
    if (cfg_.memes.reference) {
        const auto ref = memes::read_reference_set(*cfg_.memes.reference);
        memes::annotate_clusters(clustering.clusters, ref, cfg_.memes.max_distance);
    }

    {
        auto o = open_out(d / "hashes.csv");
        csv::write_record(o, {"image_ref", "hash_hex", "community", "timestamp", "cluster_id"});
        for (std::size_t i = 0; i < hashes.size(); ++i)
            csv::write_record(o, {hashes[i].image_ref, memes::hash_hex(hashes[i].bits), hashes[i].community,
                                  std::to_string(hashes[i].timestamp), std::to_string(clustering.assignment[i])});
    }
    write_json(d / "clusters.json", memes::clusters_to_json(c, clustering));
    write_json(d / "hash_report.json", report.to_json());
    {
        auto o = open_out(d / "cluster_daily.csv");
        csv::write_record(o, {"cluster_id", "label", "day", "community", "posts"});
        for (const auto& cl : clustering.clusters)
            for (const auto& comm : c.communities()) {
                const auto s = memes::cluster_series(c, cl, comm);
                for (std::size_t k = 0; k < s.size(); ++k)
                    if (s.counts[k])
                        csv::write_record(o, {std::to_string(cl.cluster_id), cl.label.value_or(""), format_day(s.days[k]), comm,
                                              std::to_string(s.counts[k])});
            }
    }
    std::size_t annotated = 0;
    for (const auto& cl : clustering.clusters) annotated += cl.label.has_value();
    StageOutput out;
    out.artifacts = {d / "hashes.csv", d / "clusters.json", d / "hash_report.json", d / "cluster_daily.csv"};
    out.summary = {{"images", hashes.size()},
                   {"clusters", clustering.clusters.size()},
                   {"noise", clustering.noise.size()},
                   {"annotated", annotated},
                   {"missing", report.missing},
                   {"undecodable", report.undecodable}};
    spdlog::info("memes: {} images, {} clusters, {} noise", hashes.size(), clustering.clusters.size(), clustering.noise.size());
    return out;
}

StageOutput Runner::hawkes() {
    const auto& c = corpus();
    const fs::path md = dir(Stage::memes);
    std::map<int, memes::MemeCluster> by_id;
    {
        std::ifstream in(md / "hashes.csv");
        if (!in) throw IoError("memes artifacts are missing; rerun stage memes");
        std::vector<std::string> f;
        while (csv::read_record(in, f)) {
            if (f.size() != 5 || f[0] == "image_ref") continue;
            const int id = std::stoi(f[4]);
            if (id == memes::kNoise) continue;
            by_id[id].cluster_id = id;
            by_id[id].members.push_back({f[0], memes::parse_hash(f[1]), f[2], std::stoll(f[3])});
        }
    }
    const json cluster_meta = read_json(md / "clusters.json");
    for (const auto& j : cluster_meta.at("clusters")) {
        const int id = j.at("cluster_id").get<int>();
        if (j.contains("label") && by_id.contains(id)) by_id[id].label = j["label"].get<std::string>();
    }
    std::vector<memes::MemeCluster> clusters;
    for (auto& [id, cl] : by_id) clusters.push_back(std::move(cl));

    const auto processes = cfg_.hawkes.communities.empty() ? c.communities() : cfg_.hawkes.communities;
    for (const auto& p : processes)
        if (!c.has_community(p)) spdlog::warn("hawkes: community '{}' has no posts", p);
    std::int64_t first = c.post(0).timestamp, last = first;
    for (const auto& p : c.posts()) {
        first = std::min(first, p.timestamp);
        last = std::max(last, p.timestamp);
    }
    const std::int64_t origin = utc_day(first) * kSecondsPerDay;
    const double horizon = static_cast<double>(utc_day(last) - utc_day(first) + 1);

    struct Fitted {
        influence::EventLog log;
        std::optional<influence::HawkesFit> fit;
        std::optional<influence::InfluenceMatrix> pct, norm;
    };
    std::vector<Fitted> fitted(clusters.size());
    const fs::path d = dir(Stage::hawkes);
    std::mutex artifacts_mu;
    StageOutput out;
    parallel_for(clusters.size(), cfg_.effective_workers(), [&](std::size_t i) {
        const auto& cl = clusters[i];
        const auto posts = memes::cluster_posts(c, cl);
        auto& r = fitted[i];
        r.log = influence::events_from_posts(c, posts, processes, origin, horizon,
                                             derive_seed(cfg_.seed, fmt::format("events/{}", cl.cluster_id)),
                                             cfg_.hawkes.resolution_seconds);
        if (r.log.events.size() < cfg_.hawkes.min_events) return;
        auto gibbs = cfg_.hawkes.gibbs;
        gibbs.seed = derive_seed(cfg_.seed, fmt::format("hawkes/{}", cl.cluster_id));
        r.fit = influence::fit_gibbs(r.log, gibbs);
        r.pct = influence::attribution_matrix(*r.fit, r.log, influence::Normalization::dest_percent);
        r.norm = influence::attribution_matrix(*r.fit, r.log, influence::Normalization::source_normalized);

        const fs::path cd = d / fmt::format("cluster_{}", cl.cluster_id);
        fs::create_directories(cd);
        influence::write_event_log(r.log, cd / "events");
        write_json(cd / "fit.json", influence::fit_to_json(*r.fit));
        {
            auto o = open_out(cd / "influence_dest_percent.csv");
            influence::write_influence_csv(o, *r.pct);
        }
        {
            auto o = open_out(cd / "influence_source_normalized.csv");
            influence::write_influence_csv(o, *r.norm);
        }
        std::lock_guard lock(artifacts_mu);
        for (const char* name : {"events.csv", "events.json", "fit.json", "influence_dest_percent.csv",
                                 "influence_source_normalized.csv"})
            out.artifacts.push_back(cd / name);
    });

    json per_cluster = json::array(), skipped = json::array();
    std::vector<influence::InfluenceMatrix> pct_a, pct_b, norm_a, norm_b, pct_all;
    std::size_t unconverged = 0;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        const auto& cl = clusters[i];
        const auto& r = fitted[i];
        if (!r.fit) {
            skipped.push_back({{"cluster_id", cl.cluster_id}, {"events", r.log.events.size()}});
            continue;
        }
        unconverged += !r.fit->converged;
        json w = json::array();
        for (std::size_t s = 0; s < processes.size(); ++s) {
            json row = json::array();
            for (std::size_t t = 0; t < processes.size(); ++t) row.push_back(r.fit->W_mean(s, t));
            w.push_back(row);
        }
        per_cluster.push_back({{"cluster_id", cl.cluster_id},
                               {"label", cl.label ? json(*cl.label) : json()},
                               {"events", r.log.events.size()},
                               {"event_counts", r.log.counts()},
                               {"W_mean", w},
                               {"lambda0_mean", r.fit->lambda0_mean},
                               {"spectral_radius", r.fit->spectral_radius},
                               {"split_chain_gap", r.fit->split_chain_gap},
                               {"converged", r.fit->converged}});
        pct_all.push_back(*r.pct);
        const bool in_group = cfg_.hawkes.compare_label && cl.label == cfg_.hawkes.compare_label;
        (in_group ? pct_a : pct_b).push_back(*r.pct);
        (in_group ? norm_a : norm_b).push_back(*r.norm);
    }

    // mean dest_percent matrix over fitted clusters, undefined entries skipped
    {
        auto o = open_out(d / "mean_dest_percent.csv");
        std::vector<std::string> header = {"source"};
        header.insert(header.end(), processes.begin(), processes.end());
        csv::write_record(o, header);
        auto mean_of = [&](auto get) {
            double sum = 0;
            std::size_t n = 0;
            for (const auto& m : pct_all) {
                const double v = get(m);
                if (!std::isnan(v)) sum += v, ++n;
            }
            return n ? sum / static_cast<double>(n) : std::nan("");
        };
        for (std::size_t s = 0; s < processes.size(); ++s) {
            std::vector<std::string> row = {processes[s]};
            for (std::size_t t = 0; t < processes.size(); ++t)
                row.push_back(number(mean_of([&](const influence::InfluenceMatrix& m) { return m.values(s, t); })));
            csv::write_record(o, row);
        }
        std::vector<std::string> row = {"background"};
        for (std::size_t t = 0; t < processes.size(); ++t)
            row.push_back(number(mean_of([&](const influence::InfluenceMatrix& m) { return m.background[t]; })));
        csv::write_record(o, row);
    }

    json ks_summary = json::object();
    auto compare = [&](const std::vector<influence::InfluenceMatrix>& a, const std::vector<influence::InfluenceMatrix>& b,
                       const std::string& mode) {
        std::vector<influence::InfluenceComparison> rows;
        std::size_t untestable = 0;
        if (!a.empty() && !b.empty())
            for (std::size_t s = 0; s < processes.size(); ++s)
                for (std::size_t t = 0; t < processes.size(); ++t) {
                    try {
                        rows.push_back(influence::compare_influence(a, b, s, t));
                    } catch (const InvalidArgument&) {
                        ++untestable;
                    }
                }
        auto o = open_out(d / ("ks_" + mode + ".csv"));
        influence::write_ks_table(o, rows, processes);
        std::size_t significant = 0;
        for (const auto& r : rows) significant += r.significant;
        ks_summary[mode] = {{"tested", rows.size()}, {"untestable", untestable}, {"significant", significant}};
    };
    compare(pct_a, pct_b, "dest_percent");
    compare(norm_a, norm_b, "source_normalized");

    write_json(d / "summary.json", {{"processes", processes},
                                    {"origin_day", format_day(utc_day(first))},
                                    {"horizon_days", horizon},
                                    {"clusters", per_cluster},
                                    {"skipped", skipped}});
    out.artifacts.push_back(d / "mean_dest_percent.csv");
    out.artifacts.push_back(d / "ks_dest_percent.csv");
    out.artifacts.push_back(d / "ks_source_normalized.csv");
    out.artifacts.push_back(d / "summary.json");
    out.summary = {{"fitted", per_cluster.size()},
                   {"skipped", skipped.size()},
                   {"unconverged", unconverged},
                   {"compare_label", cfg_.hawkes.compare_label ? json(*cfg_.hawkes.compare_label) : json()},
                   {"group_sizes", {pct_a.size(), pct_b.size()}},
                   {"ks", ks_summary}};
    if (unconverged) spdlog::warn("hawkes: {} fits did not pass the split-chain check", unconverged);
    spdlog::info("hawkes: {} clusters fitted, {} skipped", per_cluster.size(), skipped.size());
    return out;
}

StageOutput Runner::report() {
    const fs::path d = dir(Stage::report);
    json rep = {{"config_hash", manifest_["config_hash"]}, {"seed", cfg_.seed}, {"stages", json::object()}};
    std::string md = "# memetrace report\n\n";
    md += fmt::format("Config hash `{}`, seed {}.\n", manifest_["config_hash"].get<std::string>(), cfg_.seed);
    for (Stage s : all_stages()) {
        if (s == Stage::report || !completed(s)) continue;
        rep["stages"][stage_name(s)] = entry(s)["summary"];
    }

    const auto stats = read_json(dir(Stage::ingest) / "corpus_stats.json");
    md += fmt::format("\n## Corpus\n\n{} posts, {} tokens.\n\n| community | posts | first day | last day |\n|---|---|---|---|\n",
                      stats["posts"].get<std::size_t>(), stats["tokens"].get<std::size_t>());
    for (const auto& [name, v] : stats["communities"].items())
        md += fmt::format("| {} | {} | {} | {} |\n", name, v["posts"].get<std::size_t>(), v["first_day"].get<std::string>(),
                          v["last_day"].get<std::string>());

    if (completed(Stage::trends)) {
        md += "\n## Term trends\n\n| term | community | increase ratio | changepoints | top changepoint |\n|---|---|---|---|---|\n";
        for (const auto& r : entry(Stage::trends)["summary"]["rows"])
            md += fmt::format("| {} | {} | {} | {} | {} |\n", r["term"].get<std::string>(), r["community"].get<std::string>(),
                              r["increase_ratio"].get<std::string>(), r["changepoints"].get<std::string>(),
                              r["top_changepoint"].get<std::string>());
    }
    if (completed(Stage::embed)) {
        const auto sim = read_json(dir(Stage::embed) / "similar.json");
        md += fmt::format("\n## Embedding\n\n{} words in the vocabulary.\n", entry(Stage::embed)["summary"]["vocabulary"].get<std::size_t>());
        for (const auto& [term, list] : sim.items()) {
            md += fmt::format("\nMost similar to `{}`:", term);
            std::size_t k = 0;
            for (const auto& e : list) {
                if (k++ == 10) break;
                md += fmt::format(" {} ({:.3f})", e["word"].get<std::string>(), e["similarity"].get<double>());
            }
            md += "\n";
        }
    }
    if (completed(Stage::graph)) {
        const auto& g = entry(Stage::graph)["summary"];
        md += fmt::format("\n## Similarity graph\n\n{} nodes, {} edges, threshold {:.4f}, {} communities, modularity {:.3f}.\n",
                          g["nodes"].get<std::size_t>(), g["edges"].get<std::size_t>(), g["threshold"].get<double>(),
                          g["communities"].get<int>(), g["modularity"].get<double>());
    }
    if (completed(Stage::memes)) {
        const auto& m = entry(Stage::memes)["summary"];
        md += fmt::format("\n## Memes\n\n{} hashed images, {} clusters ({} annotated), {} noise images.\n",
                          m["images"].get<std::size_t>(), m["clusters"].get<std::size_t>(), m["annotated"].get<std::size_t>(),
                          m["noise"].get<std::size_t>());
        const auto clusters = read_json(dir(Stage::memes) / "clusters.json")["clusters"];
        if (!clusters.empty()) {
            md += "\n| cluster | size | label | medoid |\n|---|---|---|---|\n";
            for (const auto& cl : clusters)
                md += fmt::format("| {} | {} | {} | {} |\n", cl["cluster_id"].get<int>(), cl["size"].get<std::size_t>(),
                                  cl.value("label", ""), cl["medoid_hash_hex"].get<std::string>());
        }
    }
    if (completed(Stage::hawkes)) {
        const auto& h = entry(Stage::hawkes)["summary"];
        md += fmt::format("\n## Influence\n\n{} clusters fitted, {} skipped, {} without split-chain convergence.\n",
                          h["fitted"].get<std::size_t>(), h["skipped"].get<std::size_t>(), h["unconverged"].get<std::size_t>());
        md += "\nMean percent of destination events attributed to each source (rows) across fitted clusters:\n\n```\n";
        md += file_bytes(dir(Stage::hawkes) / "mean_dest_percent.csv");
        md += "```\n";
        if (!h["compare_label"].is_null()) {
            md += fmt::format("\nKS comparison of '{}' clusters ({}) against the rest ({}), dest_percent:\n\n```\n",
                              h["compare_label"].get<std::string>(), h["group_sizes"][0].get<std::size_t>(),
                              h["group_sizes"][1].get<std::size_t>());
            md += file_bytes(dir(Stage::hawkes) / "ks_dest_percent.csv");
            md += "```\n";
        }
    }
    write_json(d / "report.json", rep);
    open_out(d / "report.md") << md;
    StageOutput out;
    out.artifacts = {d / "report.json", d / "report.md"};
    out.summary = {{"sections", rep["stages"].size()}};
    return out;
}

RunResult Runner::run() {
    RunResult result;
    fs::create_directories(out_);
    const fs::path manifest_path = out_ / "manifest.json";
    if (fs::exists(manifest_path)) {
        try {
            manifest_ = read_json(manifest_path);
        } catch (const std::exception& e) {
            spdlog::warn("ignoring unreadable manifest: {}", e.what());
        }
    }
    if (!manifest_.is_object() || !manifest_.contains("stages") || !manifest_["stages"].is_object())
        manifest_ = {{"stages", json::object()}};
    manifest_["tool"] = "memetrace";
    manifest_["version"] = kToolVersion;
    manifest_["config_hash"] = cfg_.hash();
    manifest_["seed"] = cfg_.seed;
    manifest_["deterministic"] = cfg_.deterministic;
    manifest_["stopword_list"] = text::stopword_list_id();
    try {
        const auto t = read_json(out_ / "timings.json");
        if (t.is_object()) timings_ = t;
    } catch (const std::exception&) {
    }

    std::vector<Stage> requested;
    for (Stage s : all_stages())
        if (opts_.stages.empty() || std::find(opts_.stages.begin(), opts_.stages.end(), s) != opts_.stages.end())
            requested.push_back(s);

    for (Stage s : requested)
        for (Stage dep : dependencies(s)) {
            const bool scheduled = std::find(requested.begin(), requested.end(), dep) != requested.end();
            if (!scheduled && !completed(dep)) {
                const auto msg = fmt::format("stage {} requires stage: {}", stage_name(s), stage_name(dep));
                spdlog::error("{}", msg);
                result.errors.push_back(msg);
                result.exit_code = 2;
                result.manifest = manifest_;
                return result;
            }
        }

    for (Stage s : requested) {
        const auto name = stage_name(s);
        std::string fp;
        try {
            fp = fingerprint(s);
        } catch (const std::exception& e) {
            fp = "";
        }
        if (!opts_.force && !fp.empty() && up_to_date(s, fp)) {
            spdlog::info("{}: up to date", name);
            progress({{"event", "stage_skipped"}, {"stage", name}});
            continue;
        }
        progress({{"event", "stage_start"}, {"stage", name}});
        spdlog::info("{}: running", name);
        const auto t0 = std::chrono::steady_clock::now();
        try {
            fs::remove_all(dir(s));
            StageOutput o;
            switch (s) {
                case Stage::ingest: o = ingest(); break;
                case Stage::trends: o = trends(); break;
                case Stage::embed: o = embed(); break;
                case Stage::graph: o = graph(); break;
                case Stage::memes: o = memes(); break;
                case Stage::hawkes: o = hawkes(); break;
                case Stage::report: o = report(); break;
            }
            std::vector<std::string> rel;
            for (const auto& a : o.artifacts) rel.push_back(a.lexically_relative(out_).generic_string());
            std::sort(rel.begin(), rel.end());
            manifest_["stages"][name] = {{"status", "ok"}, {"fingerprint", fp}, {"artifacts", rel}, {"summary", o.summary}};
        } catch (const std::exception& e) {
            spdlog::error("{}: {}", name, e.what());
            manifest_["stages"][name] = {{"status", "failed"}, {"fingerprint", fp}, {"error", e.what()}};
            result.errors.push_back(name + ": " + e.what());
            result.exit_code = 1;
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        timings_[name] = secs;
        save_manifest();
        progress({{"event", result.exit_code ? "stage_failed" : "stage_done"}, {"stage", name}, {"seconds", secs}});
        if (result.exit_code) break;
    }
    save_manifest();
    result.manifest = manifest_;
    return result;
}

}  // namespace

RunResult execute(const PipelineConfig& config, const RunOptions& options) {
    config.validate();
    Runner runner(config, options);
    return runner.run();
}

}  // namespace memetrace::pipeline
