#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memetrace/embedding.hpp"
#include "memetrace/graph.hpp"
#include "memetrace/influence.hpp"
#include "memetrace/memes.hpp"

namespace memetrace::pipeline {

inline constexpr const char* kToolVersion = "0.1.0";
/// Overrides the output directory of every run.
inline constexpr const char* kOutDirEnv = "MEMETRACE_OUT_DIR";

enum class Stage { ingest, trends, embed, graph, memes, hawkes, report };

const std::vector<Stage>& all_stages();
std::string stage_name(Stage s);
Stage parse_stage(std::string_view name);
/// Comma separated stage names.
std::vector<Stage> parse_stage_list(std::string_view list);
std::vector<Stage> dependencies(Stage s);

struct CorpusSource {
    std::filesystem::path path;
    std::optional<std::string> community;  // overrides the record field
    std::optional<std::string> format;     // jsonl | csv, else by extension
};

struct TrendsParams {
    int window = 7;
    std::size_t edge_window = 14;
    /// Empty selects the default geometric schedule per series.
    std::vector<double> penalties;
};

struct GraphParams {
    std::optional<double> threshold;
    double edge_fraction = 0.002;
    std::size_t sample_pairs = 1'000'000;
    std::vector<std::string> ego_seeds;
    std::size_t hops = 2;
    semantics::LayoutConfig layout;
};

struct MemeParams {
    memes::ClusterOptions cluster;
    std::optional<std::filesystem::path> reference;
    int max_distance = 8;
};

struct HawkesParams {
    influence::GibbsConfig gibbs;
    /// Processes, in order. Empty selects every corpus community.
    std::vector<std::string> communities;
    double resolution_seconds = 1.0;
    /// Clusters with fewer events are not fitted.
    std::size_t min_events = 10;
    /// Clusters carrying this label are compared against all other fitted clusters.
    std::optional<std::string> compare_label;
};

struct PipelineConfig {
    std::vector<CorpusSource> sources;
    std::optional<std::filesystem::path> image_dir;
    std::vector<std::string> terms;
    TrendsParams trends;
    semantics::EmbeddingConfig embedding;
    GraphParams graph;
    MemeParams memes;
    HawkesParams hawkes;
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    bool deterministic = false;

    /// Parses a JSON config. Relative paths resolve against `base_dir`.
    /// Throws InvalidArgument whose message starts with the offending field path.
    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    static PipelineConfig load(const std::filesystem::path& path);

    /// Every field that can change a result; output location and logging excluded.
    nlohmann::json semantic_json() const;
    std::string hash() const;
    /// Checks values and that referenced paths exist.
    void validate() const;
    std::size_t effective_workers() const { return deterministic ? 1 : workers; }
};

struct RunOptions {
    std::vector<Stage> stages;  // empty: all
    bool force = false;
    /// Receives one JSON object per progress event.
    std::function<void(const nlohmann::json&)> progress;
};

struct RunResult {
    int exit_code = 0;
    nlohmann::json manifest;
    std::vector<std::string> errors;
};

/// Runs the requested stages in pipeline order, writing <out>/manifest.json
/// after every stage. Exit code 0 on success, 1 on stage failure, 2 when a
/// dependency is missing.
RunResult execute(const PipelineConfig& config, const RunOptions& options);

}  // namespace memetrace::pipeline
