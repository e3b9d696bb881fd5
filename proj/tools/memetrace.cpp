// memetrace command line: runs pipeline stages from a JSON config.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "memetrace/common.hpp"
#include "memetrace/pipeline.hpp"

using namespace memetrace;

int main(int argc, char** argv) {
    CLI::App app{"memetrace: term trends, semantic graphs, meme clusters and cross-community influence"};
    app.require_subcommand(1);

    std::string config_path, out_dir, stages, log_level = "info";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    bool deterministic = false, force = false, progress_json = false;
    app.add_option("--config", config_path, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, std::string("output directory; overrides $") + pipeline::kOutDirEnv + " and the config");
    app.add_option("--seed", seed, "global seed");
    app.add_flag("--deterministic", deterministic, "single worker wherever ordering affects results");
    app.add_flag("--force", force, "rerun stages even when their inputs are unchanged");
    app.add_option("--stages", stages, "comma separated stages for `run`");
    app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--progress-json", progress_json, "print one JSON progress event per line on stdout");
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

    struct Sub {
        const char* name;
        const char* help;
    };
    const Sub subs[] = {{"ingest", "load and index the corpus"},
                        {"trends", "term series and ranked changepoints"},
                        {"embed", "train word embeddings"},
                        {"graph", "similarity graph, communities, layout and ego networks"},
                        {"memes", "hash images and cluster them into memes"},
                        {"hawkes", "per-cluster influence estimation"},
                        {"report", "summary report over finished stages"},
                        {"run", "run all stages, or those given by --stages"}};
    for (const auto& s : subs) app.add_subcommand(s.name, s.help)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    auto logger = spdlog::stderr_color_mt("memetrace");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    spdlog::set_level(spdlog::level::from_str(log_level));

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        auto config = pipeline::PipelineConfig::load(config_path);
        if (const char* env = std::getenv(pipeline::kOutDirEnv); env && *env) config.output_dir = env;
        if (!out_dir.empty()) config.output_dir = out_dir;
        if (seed) config.seed = *seed;
        if (workers) config.workers = *workers;
        if (deterministic) config.deterministic = true;

        pipeline::RunOptions options;
        options.force = force;
        if (command == "run") {
            if (!stages.empty()) options.stages = pipeline::parse_stage_list(stages);
        } else {
            if (!stages.empty()) throw InvalidArgument("--stages is only valid with `run`");
            options.stages = {pipeline::parse_stage(command)};
        }
        if (progress_json)
            options.progress = [](const nlohmann::json& event) { std::cout << event.dump() << std::endl; };

        const auto result = pipeline::execute(config, options);
        if (result.exit_code == 0) spdlog::info("artifacts in {}", config.output_dir.string());
        return result.exit_code;
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
}
