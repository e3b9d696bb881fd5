#include <algorithm>
#include <fstream>
#include <map>
#include <random>

#include <fmt/format.h>

#include "memetrace/common.hpp"
#include "memetrace/csv.hpp"
#include "memetrace/influence.hpp"

namespace memetrace::influence {

EventLog events_from_posts(const corpus::Corpus& corpus, std::span<const std::size_t> posts,
                           const std::vector<std::string>& communities, std::int64_t origin_ts, double t_end,
                           std::uint64_t seed, double resolution_seconds) {
    if (!(resolution_seconds > 0.0)) throw InvalidArgument("time resolution must be positive");
    std::map<std::string, std::size_t, std::less<>> process;
    for (std::size_t k = 0; k < communities.size(); ++k) process.emplace(communities[k], k);

    struct Raw {
        std::int64_t ts;
        std::size_t post;
        std::size_t k;
    };
    std::vector<Raw> raw;
    for (std::size_t p : posts) {
        const auto& post = corpus.post(p);
        const auto it = process.find(post.community);
        if (it != process.end()) raw.push_back({post.timestamp, p, it->second});
    }
    std::sort(raw.begin(), raw.end(), [](const Raw& a, const Raw& b) { return std::tie(a.ts, a.post) < std::tie(b.ts, b.post); });

    std::mt19937_64 rng(derive_seed(seed, "jitter"));
    std::uniform_real_distribution<double> jitter(-0.5 * resolution_seconds, 0.5 * resolution_seconds);
    EventLog log;
    log.process_names = communities;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const bool tied = (i > 0 && raw[i - 1].ts == raw[i].ts) || (i + 1 < raw.size() && raw[i + 1].ts == raw[i].ts);
        const double offset = tied ? jitter(rng) : 0.0;
        log.events.push_back({(static_cast<double>(raw[i].ts - origin_ts) + offset) / static_cast<double>(kSecondsPerDay), raw[i].k});
    }
    std::stable_sort(log.events.begin(), log.events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });

    const double pad = resolution_seconds / static_cast<double>(kSecondsPerDay);
    log.t_start = 0.0;
    log.t_end = t_end;
    if (!log.events.empty()) {
        log.t_start = std::min(0.0, log.events.front().t - pad);
        log.t_end = std::max(t_end, log.events.back().t + pad);
    }
    return log;
}

void write_event_log(const EventLog& log, const std::filesystem::path& stem) {
    auto csv_path = stem, json_path = stem;
    csv_path += ".csv";
    json_path += ".json";
    std::ofstream out(csv_path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + csv_path.string());
    out << "t_days,process_index\n";
    for (const auto& e : log.events) out << fmt::format("{:.17g},{}\n", e.t, e.k);
    std::ofstream meta(json_path, std::ios::trunc);
    if (!meta) throw IoError("cannot write " + json_path.string());
    meta << nlohmann::json{{"process_names", log.process_names},
                           {"t_start", log.t_start},
                           {"t_end", log.t_end},
                           {"event_count", log.events.size()}}
                .dump(1)
         << '\n';
}

EventLog read_event_log(const std::filesystem::path& stem) {
    auto csv_path = stem, json_path = stem;
    csv_path += ".csv";
    json_path += ".json";
    std::ifstream meta(json_path);
    if (!meta) throw IoError("cannot read " + json_path.string());
    EventLog log;
    try {
        const auto j = nlohmann::json::parse(meta);
        log.process_names = j.at("process_names").get<std::vector<std::string>>();
        log.t_start = j.at("t_start").get<double>();
        log.t_end = j.at("t_end").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(json_path.string() + ": " + e.what());
    }
    std::ifstream in(csv_path);
    if (!in) throw IoError("cannot read " + csv_path.string());
    std::vector<std::string> f;
    std::size_t row = 0;
    while (csv::read_record(in, f)) {
        if (row++ == 0 && !f.empty() && f[0] == "t_days") continue;
        if (f.size() == 1 && f[0].empty()) continue;
        if (f.size() != 2) throw IoError(fmt::format("{}: row {} needs 2 fields", csv_path.string(), row));
        try {
            log.events.push_back({std::stod(f[0]), static_cast<std::size_t>(std::stoull(f[1]))});
        } catch (const std::exception&) {
            throw IoError(fmt::format("{}: row {} is not numeric", csv_path.string(), row));
        }
    }
    log.validate();
    return log;
}

}  // namespace memetrace::influence
