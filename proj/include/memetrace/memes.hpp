#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "memetrace/corpus.hpp"
#include "memetrace/image.hpp"
#include "memetrace/trends.hpp"

namespace memetrace::memes {

using Hash = std::uint64_t;

/// DCT perceptual hash: area-resize to 32x32, orthonormal 2-D DCT-II, take the
/// 8x8 block of coefficients (1..8, 1..8) so the DC row and column are skipped,
/// set each bit when the coefficient exceeds the block median. Bit 63 is (1, 1),
/// row-major.
Hash phash(const GrayImage& image);
Hash phash(const RgbImage& image);

inline int hamming(Hash a, Hash b) { return __builtin_popcountll(a ^ b); }

std::string hash_hex(Hash h);
/// Throws InvalidArgument unless `text` is 1-16 hex digits (optional 0x).
Hash parse_hash(std::string_view text);

struct ImageHash {
    std::string image_ref;
    Hash bits = 0;
    /// Community and time of the earliest post that carries the image.
    std::string community;
    std::int64_t timestamp = 0;
};

inline constexpr int kNoise = -1;

struct MemeCluster {
    int cluster_id = 0;
    std::vector<ImageHash> members;  // sorted by (bits, image_ref)
    ImageHash medoid;
    std::optional<std::string> label;
    std::optional<int> match_distance;
};

struct ClusterOptions {
    int eps = 8;
    std::size_t min_pts = 5;
    /// Neighbour queries use a BK-tree at or above this many hashes.
    std::size_t index_threshold = 50'000;
};

struct Clustering {
    std::vector<MemeCluster> clusters;  // cluster_id == position
    std::vector<ImageHash> noise;
    /// Cluster id (or kNoise) of each input hash, in input order.
    std::vector<int> assignment;
};

/// DBSCAN over Hamming distance; a point is core when at least min_pts hashes
/// (itself included) lie within eps. Border points join the cluster of their
/// nearest core point, ties going to the lower cluster id. Clusters are
/// numbered by their smallest (bits, image_ref) core member, which makes the
/// result independent of input order.
Clustering cluster_hashes(std::span<const ImageHash> hashes, const ClusterOptions& options = {});

/// Index of the member with the least summed Hamming distance to the others;
/// ties go to the smallest (bits, image_ref).
std::size_t medoid_index(std::span<const ImageHash> members);

struct ReferenceEntry {
    std::string label;
    Hash bits = 0;
};

struct ReferenceSet {
    std::vector<ReferenceEntry> entries;
    std::filesystem::path source;
};

/// CSV `label,hash_hex` with an optional header row.
ReferenceSet read_reference_set(const std::filesystem::path& path);
ReferenceSet parse_reference_set(std::istream& in);
void write_reference_set(std::ostream& out, const ReferenceSet& set);

/// Labels each cluster with the reference nearest its medoid when that distance
/// is <= max_distance. Equal distances go to the lexicographically smaller label.
void annotate_clusters(std::vector<MemeCluster>& clusters, const ReferenceSet& reference, int max_distance = 8);

/// Daily counts of posts in `community` with at least one member image.
trends::TermSeries cluster_series(const corpus::Corpus& corpus, const MemeCluster& cluster,
                                  std::string_view community);

/// Posts (indices) with at least one member image, ascending.
std::vector<std::size_t> cluster_posts(const corpus::Corpus& corpus, const MemeCluster& cluster);

nlohmann::json clusters_to_json(const corpus::Corpus& corpus, const Clustering& clustering);

// ---------------------------------------------------------------------------
// Hashing a directory of images referenced by a corpus.

/// Maps content id (FNV-1a of the file bytes, hex) to hash.
class HashCache {
public:
    std::optional<Hash> find(const std::string& content_id) const;
    void put(const std::string& content_id, Hash h) { entries_[content_id] = h; }
    std::size_t size() const { return entries_.size(); }

    /// Missing file gives an empty cache.
    static HashCache load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

private:
    std::map<std::string, Hash> entries_;
};

struct HashReport {
    std::size_t referenced = 0;
    std::size_t hashed = 0;
    std::size_t cache_hits = 0;
    std::size_t missing = 0;
    std::size_t undecodable = 0;

    nlohmann::json to_json() const;
};

/// Hashes every distinct image ref in the corpus found under `image_dir`,
/// skipping missing or undecodable files with a tally.
std::vector<ImageHash> hash_corpus_images(const corpus::Corpus& corpus, const std::filesystem::path& image_dir,
                                          HashCache* cache, HashReport& report, std::size_t workers = 1);

}  // namespace memetrace::memes
