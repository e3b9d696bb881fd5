#include "memetrace/memes.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <thread>
#include <unordered_set>

#include "memetrace/common.hpp"
#include "memetrace/csv.hpp"

#include <fmt/format.h>

namespace memetrace::memes {

// ---------------------------------------------------------------------------
// Reference set

ReferenceSet parse_reference_set(std::istream& in) {
    ReferenceSet set;
    std::vector<std::string> fields;
    std::size_t line = 0;
    while (csv::read_record(in, fields)) {
        ++line;
        if (fields.size() == 1 && fields[0].empty()) continue;
        if (line == 1 && fields.size() == 2 && fields[0] == "label") continue;
        if (fields.size() != 2) throw InvalidArgument(fmt::format("reference row {}: expected label,hash_hex", line));
        if (fields[0].empty()) throw InvalidArgument(fmt::format("reference row {}: empty label", line));
        set.entries.push_back({fields[0], parse_hash(fields[1])});
    }
    return set;
}

ReferenceSet read_reference_set(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read reference set " + path.string());
    auto set = parse_reference_set(in);
    set.source = path;
    return set;
}

void write_reference_set(std::ostream& out, const ReferenceSet& set) {
    csv::write_record(out, {"label", "hash_hex"});
    for (const auto& e : set.entries) csv::write_record(out, {e.label, hash_hex(e.bits)});
}

void annotate_clusters(std::vector<MemeCluster>& clusters, const ReferenceSet& reference, int max_distance) {
    if (reference.entries.empty()) throw InvalidArgument("reference set is empty");
    for (auto& c : clusters) {
        c.label.reset();
        c.match_distance.reset();
        const ReferenceEntry* best = nullptr;
        int best_d = 65;
        for (const auto& e : reference.entries) {
            const int d = hamming(c.medoid.bits, e.bits);
            if (d < best_d || (d == best_d && e.label < best->label)) {
                best = &e;
                best_d = d;
            }
        }
        if (best && best_d <= max_distance) {
            c.label = best->label;
            c.match_distance = best_d;
        }
    }
}

// ---------------------------------------------------------------------------
// Series and export

std::vector<std::size_t> cluster_posts(const corpus::Corpus& corpus, const MemeCluster& cluster) {
    std::unordered_set<std::string> refs;
    for (const auto& m : cluster.members) refs.insert(m.image_ref);
    std::vector<std::size_t> out;
    if (refs.empty()) return out;
    for (std::size_t i = 0; i < corpus.size(); ++i)
        for (const auto& r : corpus.post(i).image_refs)
            if (refs.contains(r)) {
                out.push_back(i);
                break;
            }
    return out;
}

trends::TermSeries cluster_series(const corpus::Corpus& corpus, const MemeCluster& cluster,
                                  std::string_view community) {
    const auto posts = cluster_posts(corpus, cluster);
    const std::string label = cluster.label ? *cluster.label : fmt::format("cluster_{}", cluster.cluster_id);
    return trends::build_series_from_posts(corpus, posts, label, community);
}

nlohmann::json clusters_to_json(const corpus::Corpus& corpus, const Clustering& clustering) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : clustering.clusters) {
        nlohmann::json counts = nlohmann::json::object();
        for (const auto& comm : corpus.communities()) counts[comm] = 0;
        for (std::size_t p : cluster_posts(corpus, c)) counts[corpus.post(p).community] = counts[corpus.post(p).community].get<std::size_t>() + 1;
        nlohmann::json j = {{"cluster_id", c.cluster_id},
                            {"size", c.members.size()},
                            {"medoid_hash_hex", hash_hex(c.medoid.bits)},
                            {"medoid_ref", c.medoid.image_ref},
                            {"per_community_counts", counts}};
        if (c.label) j["label"] = *c.label;
        if (c.match_distance) j["match_distance"] = *c.match_distance;
        nlohmann::json members = nlohmann::json::array();
        for (const auto& m : c.members) members.push_back(m.image_ref);
        j["members"] = members;
        arr.push_back(std::move(j));
    }
    nlohmann::json noise = nlohmann::json::array();
    for (const auto& m : clustering.noise) noise.push_back(m.image_ref);
    return {{"clusters", arr}, {"noise", noise}};
}

// ---------------------------------------------------------------------------
// Hash cache

std::optional<Hash> HashCache::find(const std::string& content_id) const {
    const auto it = entries_.find(content_id);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

HashCache HashCache::load(const std::filesystem::path& path) {
    HashCache cache;
    std::ifstream in(path);
    if (!in) return cache;
    std::vector<std::string> fields;
    while (csv::read_record(in, fields)) {
        if (fields.size() != 2 || fields[0] == "content_id") continue;
        try {
            cache.entries_[fields[0]] = parse_hash(fields[1]);
        } catch (const InvalidArgument&) {
            // corrupt row: recompute that image
        }
    }
    return cache;
}

void HashCache::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write hash cache " + path.string());
    csv::write_record(out, {"content_id", "hash_hex"});
    for (const auto& [id, h] : entries_) csv::write_record(out, {id, hash_hex(h)});
}

nlohmann::json HashReport::to_json() const {
    return {{"referenced", referenced}, {"hashed", hashed},       {"cache_hits", cache_hits},
            {"missing", missing},       {"undecodable", undecodable}};
}

std::vector<ImageHash> hash_corpus_images(const corpus::Corpus& corpus, const std::filesystem::path& image_dir,
                                          HashCache* cache, HashReport& report, std::size_t workers) {
    // earliest post per image
    std::map<std::string, ImageHash> first;
    for (const auto& p : corpus.posts()) {
        for (const auto& r : p.image_refs) {
            auto [it, inserted] = first.try_emplace(r, ImageHash{r, 0, p.community, p.timestamp});
            if (!inserted && p.timestamp < it->second.timestamp) {
                it->second.community = p.community;
                it->second.timestamp = p.timestamp;
            }
        }
    }
    std::vector<ImageHash> items;
    for (auto& [ref, h] : first) items.push_back(std::move(h));
    report.referenced = items.size();

    enum class Status : char { ok, cached, missing, undecodable };
    std::vector<Status> status(items.size());
    std::vector<std::string> content_ids(items.size());
    auto work = [&](std::size_t begin, std::size_t step) {
        for (std::size_t i = begin; i < items.size(); i += step) {
            const auto path = image_dir / items[i].image_ref;
            std::error_code ec;
            if (!std::filesystem::is_regular_file(path, ec)) {
                status[i] = Status::missing;
                continue;
            }
            try {
                const auto bytes = read_file(path);
                content_ids[i] = hex64(fnv1a64({reinterpret_cast<const char*>(bytes.data()), bytes.size()}));
                if (cache) {
                    if (auto h = cache->find(content_ids[i])) {
                        items[i].bits = *h;
                        status[i] = Status::cached;
                        continue;
                    }
                }
                items[i].bits = phash(decode_image(bytes));
                status[i] = Status::ok;
            } catch (const Error&) {
                status[i] = Status::undecodable;
            }
        }
    };
    workers = std::max<std::size_t>(1, std::min(workers, items.size()));
    if (workers == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
        for (auto& t : pool) t.join();
    }

    std::vector<ImageHash> out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        switch (status[i]) {
            case Status::missing: ++report.missing; continue;
            case Status::undecodable: ++report.undecodable; continue;
            case Status::cached: ++report.cache_hits; break;
            case Status::ok:
                ++report.hashed;
                if (cache) cache->put(content_ids[i], items[i].bits);
                break;
        }
        out.push_back(std::move(items[i]));
    }
    return out;
}

}  // namespace memetrace::memes
