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
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

namespace memetrace::corpus {

struct Post {
    std::string id;
    std::string community;
    std::int64_t timestamp = 0;  // UTC seconds
    std::string text;
    std::vector<std::string> image_refs;
};

enum class Format { jsonl, csv };

Format parse_format(std::string_view name);
Format format_from_extension(const std::filesystem::path& path);

/// Tally of what ingestion accepted and rejected.
struct IngestReport {
    std::size_t records = 0;
    std::size_t accepted = 0;
    std::size_t skipped_malformed = 0;
    std::size_t skipped_missing_field = 0;
    std::size_t skipped_invalid_field = 0;
    std::size_t skipped_duplicate = 0;
    std::size_t missing_images = 0;

    std::size_t skipped() const {
        return skipped_malformed + skipped_missing_field + skipped_invalid_field + skipped_duplicate;
    }
    nlohmann::json to_json() const;
};

/// Immutable, indexed post collection. Safe for concurrent readers.
class Corpus {
public:
    using PostIndex = std::size_t;
    /// day -> community -> post count
    using DateIndex = std::map<std::int64_t, std::map<std::string, std::size_t>>;

    Corpus() = default;

    /// Tokenizes and indexes already-validated posts.
    static Corpus build(std::vector<Post> posts);

    const std::vector<Post>& posts() const { return posts_; }
    std::size_t size() const { return posts_.size(); }
    const Post& post(PostIndex i) const { return posts_.at(i); }
    const std::vector<std::string>& tokens(PostIndex i) const { return tokens_.at(i); }

    /// Sorted indices of posts whose token stream contains `term`.
    std::span<const PostIndex> posts_with(std::string_view term) const;
    const std::unordered_map<std::string, std::vector<PostIndex>>& term_index() const { return term_index_; }

    const DateIndex& date_index() const { return date_index_; }
    /// Community ids in lexicographic order.
    std::vector<std::string> communities() const;
    bool has_community(std::string_view community) const;
    std::size_t community_size(std::string_view community) const;
    std::size_t token_count() const { return token_count_; }

private:
    friend Corpus read_cache_body(std::istream&);

    std::vector<Post> posts_;
    std::vector<std::vector<std::string>> tokens_;
    std::unordered_map<std::string, std::vector<PostIndex>> term_index_;
    DateIndex date_index_;
    std::map<std::string, std::size_t, std::less<>> community_sizes_;
    std::size_t token_count_ = 0;

    void index();
};

struct IngestResult {
    Corpus corpus;
    IngestReport report;
};

struct IngestOptions {
    /// When set, image refs not in this set are counted as missing.
    const std::unordered_set<std::string>* image_store = nullptr;
    /// Overrides the "community" field of every record (per-community files).
    std::optional<std::string> community_override;
};

/// Accumulates records from one or more sources; duplicates across sources
/// are detected on (community, id).
class Ingestor {
public:
    explicit Ingestor(IngestOptions options = {}) : options_(std::move(options)) {}

    void add_file(const std::filesystem::path& path, Format format);
    void add_stream(std::istream& in, Format format);
    /// Applies to sources added afterwards.
    void set_community_override(std::optional<std::string> community) { options_.community_override = std::move(community); }
    IngestResult finish() &&;

private:
    IngestOptions options_;
    IngestReport report_;
    std::vector<Post> posts_;
    std::unordered_set<std::string> seen_;

    void accept(Post post);
    void add_jsonl(std::istream& in);
    void add_csv(std::istream& in);
};

/// Reads one file. Throws IoError when it cannot be opened.
IngestResult ingest_posts(const std::filesystem::path& path, Format format, IngestOptions options = {});

/// Indices of posts containing `term` (already tokenizer-normalized).
std::vector<Corpus::PostIndex> filter_by_term(const Corpus& corpus, std::string_view term);

/// Uniform sample without replacement of posts containing `term`.
std::vector<Post> sample_for_annotation(const Corpus& corpus, std::string_view term, std::size_t n,
                                        std::uint64_t seed);

/// Versioned on-disk index cache.
inline constexpr std::uint32_t kCacheVersion = 1;
void write_cache(const Corpus& corpus, const IngestReport& report, std::uint64_t source_fingerprint,
                 const std::filesystem::path& path);
/// Returns nullopt when the file is missing, has another version, or was built
/// from different sources.
std::optional<IngestResult> read_cache(const std::filesystem::path& path, std::uint64_t source_fingerprint);

void write_post_jsonl(std::ostream& out, const Post& post);

}  // namespace memetrace::corpus
