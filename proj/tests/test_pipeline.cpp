#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <algorithm>
#include <map>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <sys/wait.h>

#include "memetrace/common.hpp"
#include "memetrace/pipeline.hpp"

using namespace memetrace;
using namespace memetrace::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("memetrace_test_pipeline_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Small two-community text corpus over 40 days, no images.
fs::path write_corpus(const fs::path& dir) {
    const auto path = dir / "posts.jsonl";
    std::ofstream out(path);
    std::mt19937_64 rng(11);
    const std::vector<std::string> words = {"cat", "dog", "bird", "fish", "tree", "rock", "lake", "hill", "road"};
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
    const std::int64_t origin = 1483228800;  // 2017-01-01
    int id = 0;
    for (int day = 0; day < 40; ++day)
        for (const char* community : {"alpha", "beta"})
            for (int i = 0; i < 25; ++i) {
                std::string text = day >= 20 && std::string(community) == "alpha" && i < 12 ? "signal" : "noise";
                for (int w = 0; w < 8; ++w) text += " " + words[pick(rng)];
                json rec = {{"id", fmt::format("p{}", id++)},
                            {"community", community},
                            {"ts", origin + day * kSecondsPerDay + i * 3000},
                            {"text", text}};
                out << rec.dump() << "\n";
            }
    return path;
}

json small_config_json() {
    return {{"corpus", {{"sources", {"posts.jsonl"}}}},
            {"terms", {"signal"}},
            {"embedding", {{"dim", 16}, {"epochs", 2}, {"min_count", 1}}},
            {"graph", {{"edge_fraction", 0.2}, {"sample_pairs", 1000}, {"ego_seeds", {"cat"}}, {"hops", 1}}},
            {"seed", 3}};
}

PipelineConfig small_config(const fs::path& dir) {
    write_corpus(dir);
    auto cfg = PipelineConfig::from_json(small_config_json(), dir);
    cfg.output_dir = dir / "out";
    return cfg;
}

std::string config_error(const json& j) {
    try {
        PipelineConfig::from_json(j, fs::path(MEMETRACE_SOURCE_DIR) / "data" / "synthetic").validate();
    } catch (const InvalidArgument& e) {
        return e.what();
    }
    return {};
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

TEST_CASE("stage names and lists") {
    CHECK(all_stages().size() == 7);
    for (Stage s : all_stages()) CHECK(parse_stage(stage_name(s)) == s);
    CHECK_THROWS_AS(parse_stage("bogus"), InvalidArgument);
    const auto list = parse_stage_list("ingest, trends,embed");
    REQUIRE(list.size() == 3);
    CHECK(list[2] == Stage::embed);
    CHECK(parse_stage_list("ingest,,trends").size() == 2);
    CHECK_THROWS_AS(parse_stage_list(" , "), InvalidArgument);
    CHECK_THROWS_AS(parse_stage_list("ingest,bogus"), InvalidArgument);
    CHECK(dependencies(Stage::graph) == std::vector<Stage>{Stage::embed});
    CHECK(dependencies(Stage::hawkes) == std::vector<Stage>{Stage::memes});
    CHECK(dependencies(Stage::ingest).empty());
}

TEST_CASE("config errors name the field") {
    auto base = json::parse(slurp(fs::path(MEMETRACE_SOURCE_DIR) / "data" / "synthetic" / "config.json"));
    CHECK(config_error(base).empty());

    auto j = base;
    j["trends"]["window"] = 6;
    CHECK(starts_with(config_error(j), "config.trends.window"));

    j = base;
    j["trends"]["window"] = "seven";
    CHECK(starts_with(config_error(j), "config.trends.window"));

    j = base;
    j["memes"]["eps"] = 40;
    CHECK(starts_with(config_error(j), "config.memes.eps"));

    j = base;
    j["graph"]["colour"] = "red";
    CHECK(starts_with(config_error(j), "config.graph.colour"));

    j = base;
    j["extra"] = 1;
    CHECK(starts_with(config_error(j), "config.extra"));

    j = base;
    j["trends"]["penalties"] = {5.0, 10.0};
    CHECK(starts_with(config_error(j), "config.trends.penalties"));

    j = base;
    j["corpus"]["sources"] = {"does_not_exist.jsonl"};
    CHECK(starts_with(config_error(j), "config.corpus.sources"));
}

TEST_CASE("config hash tracks semantic fields only") {
    const auto dir = scratch("hash");
    auto a = small_config(dir);
    auto b = a;
    b.output_dir = dir / "elsewhere";
    CHECK(a.hash() == b.hash());
    b.seed = 4;
    CHECK(a.hash() != b.hash());
    b = a;
    b.trends.window = 9;
    CHECK(a.hash() != b.hash());
    b = a;
    b.graph.edge_fraction = 0.3;
    CHECK(a.hash() != b.hash());
    b = a;
    b.deterministic = !a.deterministic;
    CHECK(a.hash() == b.hash());  // workers already 1
}

TEST_CASE("missing dependency exits 2") {
    const auto dir = scratch("deps");
    const auto cfg = small_config(dir);
    RunOptions opt;
    opt.stages = {Stage::graph};
    const auto r = execute(cfg, opt);
    CHECK(r.exit_code == 2);
    REQUIRE(!r.errors.empty());
    CHECK(r.errors.front().find("stage graph requires stage: embed") != std::string::npos);
}

TEST_CASE("ingest only run, rerun skip and force") {
    const auto dir = scratch("rerun");
    const auto cfg = small_config(dir);
    RunOptions opt;
    opt.stages = {Stage::ingest, Stage::trends};
    auto r = execute(cfg, opt);
    REQUIRE(r.exit_code == 0);
    const auto manifest = json::parse(slurp(cfg.output_dir / "manifest.json"));
    CHECK(manifest.at("config_hash") == cfg.hash());
    CHECK(manifest.at("stages").size() == 2);
    CHECK(manifest.at("stages").at("ingest").at("status") == "ok");
    CHECK(manifest.at("stages").at("ingest").at("summary").at("posts") == 2000);
    for (const auto& [name, entry] : manifest.at("stages").items())
        for (const auto& a : entry.at("artifacts")) {
            const auto p = cfg.output_dir / a.get<std::string>();
            CHECK_MESSAGE(fs::exists(p), p.string());
            CHECK(fs::file_size(p) > 0);
        }

    const auto before = fs::last_write_time(cfg.output_dir / "ingest" / "corpus_stats.json");
    std::vector<std::string> statuses;
    opt.progress = [&](const json& e) {
        statuses.push_back(e.at("event").get<std::string>());
    };
    r = execute(cfg, opt);
    REQUIRE(r.exit_code == 0);
    CHECK(fs::last_write_time(cfg.output_dir / "ingest" / "corpus_stats.json") == before);
    CHECK(std::count(statuses.begin(), statuses.end(), "stage_skipped") == 2);
    CHECK(slurp(cfg.output_dir / "manifest.json") == manifest.dump(2) + "\n");

    statuses.clear();
    opt.force = true;
    r = execute(cfg, opt);
    REQUIRE(r.exit_code == 0);
    CHECK(std::count(statuses.begin(), statuses.end(), "stage_skipped") == 0);

    // a changed trends setting reruns trends but not ingest
    statuses.clear();
    opt.force = false;
    auto changed = cfg;
    changed.trends.window = 3;
    r = execute(changed, opt);
    REQUIRE(r.exit_code == 0);
    CHECK(std::count(statuses.begin(), statuses.end(), "stage_skipped") == 1);
}

TEST_CASE("missing artifact forces rerun") {
    const auto dir = scratch("missing");
    const auto cfg = small_config(dir);
    RunOptions opt;
    opt.stages = {Stage::ingest};
    REQUIRE(execute(cfg, opt).exit_code == 0);
    fs::remove(cfg.output_dir / "ingest" / "corpus_stats.json");
    REQUIRE(execute(cfg, opt).exit_code == 0);
    CHECK(fs::exists(cfg.output_dir / "ingest" / "corpus_stats.json"));
}

TEST_CASE("stage failure exits 1 and marks the manifest") {
    const auto dir = scratch("failure");
    auto cfg = small_config(dir);
    cfg.terms = {"two words"};
    RunOptions opt;
    opt.stages = {Stage::ingest, Stage::trends};
    const auto r = execute(cfg, opt);
    CHECK(r.exit_code == 1);
    const auto manifest = json::parse(slurp(cfg.output_dir / "manifest.json"));
    CHECK(manifest.at("stages").at("ingest").at("status") == "ok");
    CHECK(manifest.at("stages").at("trends").at("status") == "failed");
    CHECK(manifest.at("stages").at("trends").contains("error"));
}

TEST_CASE("text-only run on a small corpus writes every artifact") {
    const auto dir = scratch("full");
    const auto cfg = small_config(dir);
    RunOptions opt;
    opt.stages = {Stage::ingest, Stage::trends, Stage::embed, Stage::graph, Stage::report};
    const auto r = execute(cfg, opt);
    REQUIRE(r.exit_code == 0);
    const auto manifest = json::parse(slurp(cfg.output_dir / "manifest.json"));
    CHECK(manifest.at("stages").size() == 5);
    for (const auto& [name, entry] : manifest.at("stages").items()) {
        CHECK_MESSAGE(entry.at("status") == "ok", name);
        for (const auto& a : entry.at("artifacts")) {
            const auto p = cfg.output_dir / a.get<std::string>();
            CHECK_MESSAGE(fs::exists(p), p.string());
            if (fs::exists(p)) CHECK(fs::file_size(p) > 0);
        }
    }
    CHECK(fs::exists(cfg.output_dir / "timings.json"));
    // the planted term doubles its share in alpha
    const auto trends = slurp(cfg.output_dir / "trends" / "summary.csv");
    CHECK(trends.find("signal,alpha") != std::string::npos);
    const auto changepoints = json::parse(slurp(cfg.output_dir / "trends" / "signal" / "alpha.changepoints.json"));
    REQUIRE(!changepoints.empty());
    CHECK(changepoints.at(0).at("date") == "2017-01-21");
}

TEST_CASE("bundled corpus daily counts match an independent tally") {
    const auto data = fs::path(MEMETRACE_SOURCE_DIR) / "data" / "synthetic";
    const auto dir = scratch("bundled");
    auto cfg = PipelineConfig::load(data / "config.json");
    cfg.output_dir = dir / "out";
    RunOptions opt;
    opt.stages = {Stage::ingest};
    REQUIRE(execute(cfg, opt).exit_code == 0);

    std::map<std::pair<std::string, std::string>, long> tally;
    std::ifstream in(data / "corpus.jsonl");
    std::string line;
    long total = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto rec = json::parse(line);
        const auto ts = rec.at("ts").get<std::int64_t>();
        ++tally[{format_day(utc_day(ts)), rec.at("community").get<std::string>()}];
        ++total;
    }

    std::map<std::pair<std::string, std::string>, long> reported;
    std::ifstream csv(cfg.output_dir / "ingest" / "daily_counts.csv");
    std::getline(csv, line);
    CHECK(line == "day,community,posts");
    long reported_total = 0;
    while (std::getline(csv, line)) {
        const auto c1 = line.find(','), c2 = line.rfind(',');
        const long n = std::stol(line.substr(c2 + 1));
        reported[{line.substr(0, c1), line.substr(c1 + 1, c2 - c1 - 1)}] = n;
        reported_total += n;
    }
    CHECK(total > 50000);
    CHECK(reported_total == total);
    CHECK(reported == tally);
}

TEST_CASE("cli honours the output directory override") {
    const auto dir = scratch("cli");
    write_corpus(dir);
    auto j = small_config_json();
    j["output_dir"] = "from_config";
    std::ofstream(dir / "config.json") << j.dump(2);

    const std::string cli = MEMETRACE_CLI;
    const auto cmd = [&](const std::string& env, const std::string& args) {
        const auto full = fmt::format("{} '{}' ingest --config '{}' --log-level off {}", env, cli,
                                      (dir / "config.json").string(), args);
        const int rc = std::system(full.c_str());
        return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    };

    CHECK(cmd("", "") == 0);
    CHECK(fs::exists(dir / "from_config" / "manifest.json"));
    CHECK(cmd(fmt::format("{}='{}'", kOutDirEnv, (dir / "from_env").string()), "") == 0);
    CHECK(fs::exists(dir / "from_env" / "manifest.json"));
    CHECK(cmd(fmt::format("{}='{}'", kOutDirEnv, (dir / "from_env2").string()),
              fmt::format("--out '{}'", (dir / "from_flag").string())) == 0);
    CHECK(fs::exists(dir / "from_flag" / "manifest.json"));
    CHECK(!fs::exists(dir / "from_env2"));

    CHECK(cmd("", "--stages ingest") == 2);
    std::ofstream(dir / "bad.json") << R"({"corpus": {"sources": ["posts.jsonl"]}, "seed": -1})";
    const auto bad = fmt::format("'{}' run --config '{}' --log-level off", cli, (dir / "bad.json").string());
    const int rc = std::system(bad.c_str());
    CHECK(WEXITSTATUS(rc) == 2);
}
