#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>

#include <fmt/format.h>

#include "memetrace/common.hpp"
#include "memetrace/pipeline.hpp"

namespace memetrace::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<Stage>& all_stages() {
    static const std::vector<Stage> stages = {Stage::ingest, Stage::trends, Stage::embed, Stage::graph,
                                              Stage::memes,  Stage::hawkes, Stage::report};
    return stages;
}

std::string stage_name(Stage s) {
    switch (s) {
        case Stage::ingest: return "ingest";
        case Stage::trends: return "trends";
        case Stage::embed: return "embed";
        case Stage::graph: return "graph";
        case Stage::memes: return "memes";
        case Stage::hawkes: return "hawkes";
        case Stage::report: return "report";
    }
    return "?";
}

Stage parse_stage(std::string_view name) {
    for (Stage s : all_stages())
        if (stage_name(s) == name) return s;
    throw InvalidArgument(fmt::format("unknown stage '{}'", name));
}

std::vector<Stage> parse_stage_list(std::string_view list) {
    std::vector<Stage> out;
    std::size_t pos = 0;
    while (pos <= list.size()) {
        const auto comma = std::min(list.find(',', pos), list.size());
        auto item = list.substr(pos, comma - pos);
        while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
        while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
        if (!item.empty()) {
            const Stage s = parse_stage(item);
            if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
        }
        pos = comma + 1;
    }
    if (out.empty()) throw InvalidArgument("empty stage list");
    return out;
}

std::vector<Stage> dependencies(Stage s) {
    switch (s) {
        case Stage::ingest: return {};
        case Stage::trends:
        case Stage::embed:
        case Stage::memes:
        case Stage::report: return {Stage::ingest};
        case Stage::graph: return {Stage::embed};
        case Stage::hawkes: return {Stage::memes};
    }
    return {};
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw InvalidArgument(path + ": " + what); }

void check_keys(const json& obj, const std::string& path, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) fail(path, "expected an object");
    for (const auto& [key, _] : obj.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) fail(path + "." + key, "unknown field");
}

template <class T>
void read(const json& obj, std::string_view key, const std::string& path, T& out) {
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return;
    const std::string field = path + "." + std::string(key);
    if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) fail(field, "expected true or false");
        out = it->get<bool>();
    } else if constexpr (std::is_unsigned_v<T>) {
        if (!it->is_number_integer() || (it->is_number_integer() && !it->is_number_unsigned() && it->get<std::int64_t>() < 0))
            fail(field, "expected a nonnegative integer");
        out = it->get<T>();
    } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) fail(field, "expected an integer");
        out = it->get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) fail(field, "expected a number");
        out = it->get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) fail(field, "expected a string");
        out = it->get<std::string>();
    } else {
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            fail(field, "has the wrong type");
        }
    }
}

template <class T>
void read_optional(const json& obj, std::string_view key, const std::string& path, std::optional<T>& out) {
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return;
    T value{};
    read(obj, key, path, value);
    out = std::move(value);
}

void read_path(const json& obj, std::string_view key, const std::string& path, const fs::path& base,
               std::optional<fs::path>& out) {
    std::optional<std::string> s;
    read_optional(obj, key, path, s);
    if (s) out = (base / *s).lexically_normal();
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base) {
    PipelineConfig c;
    const std::string root = "config";
    check_keys(j, root,
               {"seed", "workers", "deterministic", "output_dir", "corpus", "terms", "trends", "embedding", "graph", "memes",
                "hawkes"});
    read(j, "seed", root, c.seed);
    read(j, "workers", root, c.workers);
    read(j, "deterministic", root, c.deterministic);
    std::optional<fs::path> out;
    read_path(j, "output_dir", root, base, out);
    if (out) c.output_dir = *out;
    read(j, "terms", root, c.terms);

    if (j.contains("corpus")) {
        const auto& cj = j["corpus"];
        const std::string p = root + ".corpus";
        check_keys(cj, p, {"sources", "image_dir"});
        read_path(cj, "image_dir", p, base, c.image_dir);
        if (cj.contains("sources")) {
            if (!cj["sources"].is_array()) fail(p + ".sources", "expected an array");
            for (std::size_t i = 0; i < cj["sources"].size(); ++i) {
                const auto& sj = cj["sources"][i];
                const std::string sp = fmt::format("{}.sources[{}]", p, i);
                CorpusSource src;
                if (sj.is_string()) {
                    src.path = (base / sj.get<std::string>()).lexically_normal();
                } else {
                    check_keys(sj, sp, {"path", "community", "format"});
                    std::optional<fs::path> path;
                    read_path(sj, "path", sp, base, path);
                    if (!path) fail(sp + ".path", "required");
                    src.path = *path;
                    read_optional(sj, "community", sp, src.community);
                    read_optional(sj, "format", sp, src.format);
                }
                c.sources.push_back(std::move(src));
            }
        }
    }

    if (j.contains("trends")) {
        const auto& tj = j["trends"];
        const std::string p = root + ".trends";
        check_keys(tj, p, {"window", "edge_window", "penalties"});
        read(tj, "window", p, c.trends.window);
        read(tj, "edge_window", p, c.trends.edge_window);
        read(tj, "penalties", p, c.trends.penalties);
    }

    if (j.contains("embedding")) {
        const auto& ej = j["embedding"];
        const std::string p = root + ".embedding";
        check_keys(ej, p, {"dim", "window", "min_count", "epochs", "negative", "learning_rate"});
        auto& e = c.embedding;
        read(ej, "dim", p, e.dim);
        read(ej, "window", p, e.window);
        read(ej, "min_count", p, e.min_count);
        read(ej, "epochs", p, e.epochs);
        read(ej, "negative", p, e.negative);
        read(ej, "learning_rate", p, e.learning_rate);
    }

    if (j.contains("graph")) {
        const auto& gj = j["graph"];
        const std::string p = root + ".graph";
        check_keys(gj, p, {"threshold", "edge_fraction", "sample_pairs", "ego_seeds", "hops", "layout"});
        read_optional(gj, "threshold", p, c.graph.threshold);
        read(gj, "edge_fraction", p, c.graph.edge_fraction);
        read(gj, "sample_pairs", p, c.graph.sample_pairs);
        read(gj, "ego_seeds", p, c.graph.ego_seeds);
        read(gj, "hops", p, c.graph.hops);
        if (gj.contains("layout")) {
            const auto& lj = gj["layout"];
            const std::string lp = p + ".layout";
            check_keys(lj, lp,
                       {"iterations", "scaling", "gravity", "jitter_tolerance", "barnes_hut_threshold", "barnes_hut_theta"});
            auto& l = c.graph.layout;
            read(lj, "iterations", lp, l.iterations);
            read(lj, "scaling", lp, l.scaling);
            read(lj, "gravity", lp, l.gravity);
            read(lj, "jitter_tolerance", lp, l.jitter_tolerance);
            read(lj, "barnes_hut_threshold", lp, l.barnes_hut_threshold);
            read(lj, "barnes_hut_theta", lp, l.barnes_hut_theta);
        }
    }

    if (j.contains("memes")) {
        const auto& mj = j["memes"];
        const std::string p = root + ".memes";
        check_keys(mj, p, {"eps", "min_pts", "index_threshold", "reference", "max_distance"});
        read(mj, "eps", p, c.memes.cluster.eps);
        read(mj, "min_pts", p, c.memes.cluster.min_pts);
        read(mj, "index_threshold", p, c.memes.cluster.index_threshold);
        read_path(mj, "reference", p, base, c.memes.reference);
        read(mj, "max_distance", p, c.memes.max_distance);
    }

    if (j.contains("hawkes")) {
        const auto& hj = j["hawkes"];
        const std::string p = root + ".hawkes";
        check_keys(hj, p,
                   {"draws", "burn_in", "background_only", "kernel", "prior", "communities", "resolution_seconds",
                    "min_events", "compare_label"});
        auto& g = c.hawkes.gibbs;
        read(hj, "draws", p, g.draws);
        read(hj, "burn_in", p, g.burn_in);
        read(hj, "background_only", p, g.background_only);
        if (hj.contains("kernel")) {
            const std::string kp = p + ".kernel";
            check_keys(hj["kernel"], kp, {"tau", "max_lag"});
            read(hj["kernel"], "tau", kp, g.kernel.tau);
            read(hj["kernel"], "max_lag", kp, g.kernel.max_lag);
        }
        if (hj.contains("prior")) {
            const std::string pp = p + ".prior";
            check_keys(hj["prior"], pp, {"lambda_shape", "lambda_rate", "w_shape", "w_rate"});
            read(hj["prior"], "lambda_shape", pp, g.prior.lambda_shape);
            read(hj["prior"], "lambda_rate", pp, g.prior.lambda_rate);
            read(hj["prior"], "w_shape", pp, g.prior.w_shape);
            read(hj["prior"], "w_rate", pp, g.prior.w_rate);
        }
        read(hj, "communities", p, c.hawkes.communities);
        read(hj, "resolution_seconds", p, c.hawkes.resolution_seconds);
        read(hj, "min_events", p, c.hawkes.min_events);
        read_optional(hj, "compare_label", p, c.hawkes.compare_label);
    }
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw InvalidArgument(fmt::format("config: {}: {}", path.string(), e.what()));
    }
    return from_json(j, fs::absolute(path).parent_path());
}

json PipelineConfig::semantic_json() const {
    json sources = json::array();
    for (const auto& s : this->sources)
        sources.push_back({{"path", s.path.generic_string()},
                           {"community", s.community ? json(*s.community) : json()},
                           {"format", s.format ? json(*s.format) : json()}});
    const auto& e = embedding;
    const auto& l = graph.layout;
    const auto& g = hawkes.gibbs;
    return {
        {"seed", seed},
        {"corpus", {{"sources", sources}, {"image_dir", image_dir ? json(image_dir->generic_string()) : json()}}},
        {"terms", terms},
        {"trends", {{"window", trends.window}, {"edge_window", trends.edge_window}, {"penalties", trends.penalties}}},
        {"embedding",
         {{"dim", e.dim},
          {"window", e.window},
          {"min_count", e.min_count},
          {"epochs", e.epochs},
          {"negative", e.negative},
          {"learning_rate", e.learning_rate},
          // lock-free training depends on the worker count
          {"workers", effective_workers()}}},
        {"graph",
         {{"threshold", graph.threshold ? json(*graph.threshold) : json()},
          {"edge_fraction", graph.edge_fraction},
          {"sample_pairs", graph.sample_pairs},
          {"ego_seeds", graph.ego_seeds},
          {"hops", graph.hops},
          {"layout",
           {{"iterations", l.iterations},
            {"scaling", l.scaling},
            {"gravity", l.gravity},
            {"jitter_tolerance", l.jitter_tolerance},
            {"barnes_hut_threshold", l.barnes_hut_threshold},
            {"barnes_hut_theta", l.barnes_hut_theta}}}}},
        {"memes",
         {{"eps", memes.cluster.eps},
          {"min_pts", memes.cluster.min_pts},
          {"index_threshold", memes.cluster.index_threshold},
          {"reference", memes.reference ? json(memes.reference->generic_string()) : json()},
          {"max_distance", memes.max_distance}}},
        {"hawkes",
         {{"draws", g.draws},
          {"burn_in", g.burn_in},
          {"background_only", g.background_only},
          {"kernel", {{"tau", g.kernel.tau}, {"max_lag", g.kernel.max_lag}}},
          {"prior",
           {{"lambda_shape", g.prior.lambda_shape},
            {"lambda_rate", g.prior.lambda_rate},
            {"w_shape", g.prior.w_shape},
            {"w_rate", g.prior.w_rate}}},
          {"communities", hawkes.communities},
          {"resolution_seconds", hawkes.resolution_seconds},
          {"min_events", hawkes.min_events},
          {"compare_label", hawkes.compare_label ? json(*hawkes.compare_label) : json()}}},
    };
}

std::string PipelineConfig::hash() const { return hex64(fnv1a64(semantic_json().dump())); }

void PipelineConfig::validate() const {
    const std::string root = "config";
    if (sources.empty()) fail(root + ".corpus.sources", "at least one corpus file is required");
    for (std::size_t i = 0; i < sources.size(); ++i) {
        const std::string p = fmt::format("{}.corpus.sources[{}]", root, i);
        if (!fs::is_regular_file(sources[i].path)) fail(p + ".path", "no such file: " + sources[i].path.string());
        if (sources[i].format && *sources[i].format != "jsonl" && *sources[i].format != "csv")
            fail(p + ".format", "must be jsonl or csv");
        if (sources[i].community && sources[i].community->empty()) fail(p + ".community", "must not be empty");
    }
    if (image_dir && !fs::is_directory(*image_dir)) fail(root + ".corpus.image_dir", "no such directory: " + image_dir->string());
    for (std::size_t i = 0; i < terms.size(); ++i)
        if (terms[i].empty()) fail(fmt::format("{}.terms[{}]", root, i), "must not be empty");
    if (workers < 1) fail(root + ".workers", "must be at least 1");

    if (trends.window < 1 || trends.window % 2 == 0) fail(root + ".trends.window", "must be a positive odd day count");
    if (trends.edge_window < 1) fail(root + ".trends.edge_window", "must be at least 1");
    if (trends.penalties.size() == 1) fail(root + ".trends.penalties", "needs at least 2 entries or none");
    for (std::size_t i = 0; i < trends.penalties.size(); ++i) {
        const std::string p = fmt::format("{}.trends.penalties[{}]", root, i);
        if (!(trends.penalties[i] > 0) || !std::isfinite(trends.penalties[i])) fail(p, "must be positive");
        if (i && !(trends.penalties[i] < trends.penalties[i - 1])) fail(p, "penalties must be strictly decreasing");
    }

    const auto& e = embedding;
    if (e.dim < 1) fail(root + ".embedding.dim", "must be at least 1");
    if (e.window < 1) fail(root + ".embedding.window", "must be at least 1");
    if (e.epochs < 1) fail(root + ".embedding.epochs", "must be at least 1");
    if (e.negative < 1) fail(root + ".embedding.negative", "must be at least 1");
    if (!(e.learning_rate > 0)) fail(root + ".embedding.learning_rate", "must be positive");

    if (graph.threshold && !(*graph.threshold > 0 && *graph.threshold < 1)) fail(root + ".graph.threshold", "must lie in (0, 1)");
    if (!(graph.edge_fraction > 0 && graph.edge_fraction < 1)) fail(root + ".graph.edge_fraction", "must lie in (0, 1)");
    if (graph.sample_pairs < 1000) fail(root + ".graph.sample_pairs", "must be at least 1000");
    if (graph.layout.iterations < 1) fail(root + ".graph.layout.iterations", "must be at least 1");
    if (!(graph.layout.scaling > 0)) fail(root + ".graph.layout.scaling", "must be positive");
    if (!(graph.layout.gravity >= 0)) fail(root + ".graph.layout.gravity", "must be nonnegative");
    if (!(graph.layout.barnes_hut_theta > 0)) fail(root + ".graph.layout.barnes_hut_theta", "must be positive");

    if (memes.cluster.eps < 1 || memes.cluster.eps > 32) fail(root + ".memes.eps", "must lie in [1, 32]");
    if (memes.cluster.min_pts < 2) fail(root + ".memes.min_pts", "must be at least 2");
    if (memes.max_distance < 0 || memes.max_distance > 64) fail(root + ".memes.max_distance", "must lie in [0, 64]");
    if (memes.reference && !fs::is_regular_file(*memes.reference))
        fail(root + ".memes.reference", "no such file: " + memes.reference->string());

    const auto& g = hawkes.gibbs;
    if (g.draws <= g.burn_in) fail(root + ".hawkes.draws", "must exceed burn_in");
    if (!(g.kernel.tau > 0) || !std::isfinite(g.kernel.tau)) fail(root + ".hawkes.kernel.tau", "must be positive");
    if (!(g.kernel.max_lag > 0) || !std::isfinite(g.kernel.max_lag)) fail(root + ".hawkes.kernel.max_lag", "must be positive");
    if (!(g.prior.lambda_shape > 0)) fail(root + ".hawkes.prior.lambda_shape", "must be positive");
    if (!(g.prior.lambda_rate > 0)) fail(root + ".hawkes.prior.lambda_rate", "must be positive");
    if (!(g.prior.w_shape > 0)) fail(root + ".hawkes.prior.w_shape", "must be positive");
    if (!(g.prior.w_rate > 0)) fail(root + ".hawkes.prior.w_rate", "must be positive");
    if (!(hawkes.resolution_seconds > 0)) fail(root + ".hawkes.resolution_seconds", "must be positive");
    if (hawkes.min_events < 1) fail(root + ".hawkes.min_events", "must be at least 1");
    if (std::set<std::string>(hawkes.communities.begin(), hawkes.communities.end()).size() != hawkes.communities.size())
        fail(root + ".hawkes.communities", "must be unique");
}

}  // namespace memetrace::pipeline
