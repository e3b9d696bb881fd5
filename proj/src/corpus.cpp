#include "memetrace/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <random>

#include "memetrace/common.hpp"
#include "memetrace/csv.hpp"
#include "memetrace/text.hpp"

namespace memetrace::corpus {

Format parse_format(std::string_view name) {
    if (name == "jsonl" || name == "json") return Format::jsonl;
    if (name == "csv") return Format::csv;
    throw InvalidArgument("unknown corpus format '" + std::string(name) + "' (expected jsonl or csv)");
}

Format format_from_extension(const std::filesystem::path& path) {
    return path.extension() == ".csv" ? Format::csv : Format::jsonl;
}

nlohmann::json IngestReport::to_json() const {
    return {
        {"records", records},
        {"accepted", accepted},
        {"skipped",
         {{"total", skipped()},
          {"malformed", skipped_malformed},
          {"missing_field", skipped_missing_field},
          {"invalid_field", skipped_invalid_field},
          {"duplicate", skipped_duplicate}}},
        {"missing_images", missing_images},
        {"tokenizer", {{"stemmer", "porter-fixpoint"}, {"stopwords", text::stopword_list_id()}}},
    };
}

// ---------------------------------------------------------------------------
// Corpus

Corpus Corpus::build(std::vector<Post> posts) {
    Corpus c;
    c.posts_ = std::move(posts);
    c.tokens_.reserve(c.posts_.size());
    for (const auto& p : c.posts_) c.tokens_.push_back(text::tokenize(p.text));
    c.index();
    return c;
}

void Corpus::index() {
    term_index_.clear();
    date_index_.clear();
    community_sizes_.clear();
    token_count_ = 0;
    for (PostIndex i = 0; i < posts_.size(); ++i) {
        const auto& p = posts_[i];
        ++date_index_[utc_day(p.timestamp)][p.community];
        ++community_sizes_[p.community];
        token_count_ += tokens_[i].size();
        for (const auto& tok : tokens_[i]) {
            auto& list = term_index_[tok];
            if (list.empty() || list.back() != i) list.push_back(i);
        }
    }
}

std::span<const Corpus::PostIndex> Corpus::posts_with(std::string_view term) const {
    auto it = term_index_.find(std::string(term));
    if (it == term_index_.end()) return {};
    return it->second;
}

std::vector<std::string> Corpus::communities() const {
    std::vector<std::string> out;
    for (const auto& [name, n] : community_sizes_) out.push_back(name);
    return out;
}

bool Corpus::has_community(std::string_view community) const {
    return community_sizes_.find(community) != community_sizes_.end();
}

std::size_t Corpus::community_size(std::string_view community) const {
    auto it = community_sizes_.find(community);
    return it == community_sizes_.end() ? 0 : it->second;
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

enum class RecordStatus { ok, missing_field, invalid_field };

RecordStatus post_from_json(const nlohmann::json& rec, Post& post) {
    if (!rec.is_object()) return RecordStatus::invalid_field;
    for (const char* key : {"id", "community", "ts"})
        if (!rec.contains(key) || rec[key].is_null()) return RecordStatus::missing_field;

    const auto& id = rec["id"];
    if (id.is_string()) post.id = id.get<std::string>();
    else if (id.is_number_integer()) post.id = std::to_string(id.get<std::int64_t>());
    else return RecordStatus::invalid_field;

    if (!rec["community"].is_string()) return RecordStatus::invalid_field;
    post.community = rec["community"].get<std::string>();

    const auto& ts = rec["ts"];
    if (!ts.is_number_integer()) return RecordStatus::invalid_field;
    post.timestamp = ts.get<std::int64_t>();

    if (rec.contains("text") && !rec["text"].is_null()) {
        if (!rec["text"].is_string()) return RecordStatus::invalid_field;
        post.text = rec["text"].get<std::string>();
    }
    if (rec.contains("images") && !rec["images"].is_null()) {
        if (!rec["images"].is_array()) return RecordStatus::invalid_field;
        for (const auto& ref : rec["images"]) {
            if (!ref.is_string()) return RecordStatus::invalid_field;
            post.image_refs.push_back(ref.get<std::string>());
        }
    }
    if (post.id.empty() || post.community.empty()) return RecordStatus::missing_field;
    if (post.timestamp <= 0) return RecordStatus::invalid_field;
    return RecordStatus::ok;
}

bool parse_int64(std::string_view s, std::int64_t& out) {
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

bool is_blank(std::string_view line) {
    return line.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

}  // namespace

void Ingestor::accept(Post post) {
    if (options_.community_override) post.community = *options_.community_override;
    std::string key = post.community;
    key.push_back('\0');
    key += post.id;
    if (!seen_.insert(std::move(key)).second) {
        ++report_.skipped_duplicate;
        return;
    }
    if (options_.image_store) {
        for (const auto& ref : post.image_refs)
            if (!options_.image_store->contains(ref)) ++report_.missing_images;
    }
    ++report_.accepted;
    posts_.push_back(std::move(post));
}

void Ingestor::add_jsonl(std::istream& in) {
    std::string line;
    while (std::getline(in, line)) {
        if (is_blank(line)) continue;
        ++report_.records;
        auto rec = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (rec.is_discarded()) {
            ++report_.skipped_malformed;
            continue;
        }
        Post post;
        if (options_.community_override && !rec.contains("community") && rec.is_object())
            rec["community"] = *options_.community_override;
        switch (post_from_json(rec, post)) {
            case RecordStatus::ok: accept(std::move(post)); break;
            case RecordStatus::missing_field: ++report_.skipped_missing_field; break;
            case RecordStatus::invalid_field: ++report_.skipped_invalid_field; break;
        }
    }
}

void Ingestor::add_csv(std::istream& in) {
    std::vector<std::string> header;
    if (!csv::read_record(in, header)) return;
    auto column = [&](std::string_view name) -> int {
        auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : static_cast<int>(it - header.begin());
    };
    const int c_id = column("id"), c_comm = column("community"), c_ts = column("ts");
    const int c_text = column("text"), c_images = column("images");

    std::vector<std::string> row;
    while (true) {
        try {
            if (!csv::read_record(in, row)) break;
        } catch (const Error&) {
            ++report_.records;
            ++report_.skipped_malformed;
            break;
        }
        if (row.size() == 1 && is_blank(row[0])) continue;
        ++report_.records;
        if (row.size() != header.size()) {
            ++report_.skipped_malformed;
            continue;
        }
        auto field = [&](int col) -> const std::string* {
            return col < 0 ? nullptr : &row[static_cast<std::size_t>(col)];
        };
        const std::string* community = field(c_comm);
        const bool have_community = (community && !community->empty()) || options_.community_override;
        if (!field(c_id) || field(c_id)->empty() || !have_community || !field(c_ts) || field(c_ts)->empty()) {
            ++report_.skipped_missing_field;
            continue;
        }
        Post post;
        post.id = *field(c_id);
        post.community = community ? *community : std::string{};
        if (!parse_int64(*field(c_ts), post.timestamp) || post.timestamp <= 0) {
            ++report_.skipped_invalid_field;
            continue;
        }
        if (const auto* t = field(c_text)) post.text = *t;
        if (const auto* imgs = field(c_images); imgs && !imgs->empty()) {
            std::string_view rest = *imgs;
            while (!rest.empty()) {
                const auto cut = rest.find(';');
                auto ref = rest.substr(0, cut);
                if (!ref.empty()) post.image_refs.emplace_back(ref);
                if (cut == std::string_view::npos) break;
                rest.remove_prefix(cut + 1);
            }
        }
        accept(std::move(post));
    }
}

void Ingestor::add_stream(std::istream& in, Format format) {
    if (format == Format::jsonl) add_jsonl(in);
    else add_csv(in);
}

void Ingestor::add_file(const std::filesystem::path& path, Format format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file: " + path.string());
    add_stream(in, format);
    if (in.bad()) throw IoError("read error in corpus file: " + path.string());
}

IngestResult Ingestor::finish() && {
    return IngestResult{Corpus::build(std::move(posts_)), report_};
}

IngestResult ingest_posts(const std::filesystem::path& path, Format format, IngestOptions options) {
    Ingestor ing(std::move(options));
    ing.add_file(path, format);
    return std::move(ing).finish();
}

// ---------------------------------------------------------------------------
// Queries

std::vector<Corpus::PostIndex> filter_by_term(const Corpus& corpus, std::string_view term) {
    auto span = corpus.posts_with(term);
    return {span.begin(), span.end()};
}

std::vector<Post> sample_for_annotation(const Corpus& corpus, std::string_view term, std::size_t n,
                                        std::uint64_t seed) {
    if (n < 1) throw InvalidArgument("sample size must be >= 1");
    std::vector<Corpus::PostIndex> matches = filter_by_term(corpus, term);
    std::mt19937_64 rng(seed);
    // partial Fisher-Yates over the sorted match list
    const std::size_t take = std::min(n, matches.size());
    for (std::size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, matches.size() - 1);
        std::swap(matches[i], matches[pick(rng)]);
    }
    std::vector<Post> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back(corpus.post(matches[i]));
    return out;
}

void write_post_jsonl(std::ostream& out, const Post& post) {
    nlohmann::json j = {{"id", post.id}, {"community", post.community}, {"ts", post.timestamp},
                        {"text", post.text}, {"images", post.image_refs}};
    out << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
}

// ---------------------------------------------------------------------------
// Cache: magic, version, fingerprint, report, posts with their token streams.

namespace {

constexpr char kMagic[8] = {'M', 'T', 'C', 'O', 'R', 'P', 'U', 'S'};

void put_u64(std::ostream& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(buf, 8);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char buf[8];
    if (!in.read(reinterpret_cast<char*>(buf), 8)) throw IoError("truncated corpus cache");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
    return v;
}

void put_str(std::ostream& out, std::string_view s) {
    put_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::istream& in) {
    const auto n = get_u64(in);
    if (n > (1ULL << 32)) throw IoError("corrupt corpus cache");
    std::string s(n, '\0');
    if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw IoError("truncated corpus cache");
    return s;
}

}  // namespace

Corpus read_cache_body(std::istream& in) {
    Corpus c;
    const auto n = get_u64(in);
    c.posts_.resize(n);
    c.tokens_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& p = c.posts_[i];
        p.id = get_str(in);
        p.community = get_str(in);
        p.timestamp = static_cast<std::int64_t>(get_u64(in));
        p.text = get_str(in);
        const auto nimg = get_u64(in);
        for (std::size_t k = 0; k < nimg; ++k) p.image_refs.push_back(get_str(in));
        const auto ntok = get_u64(in);
        for (std::size_t k = 0; k < ntok; ++k) c.tokens_[i].push_back(get_str(in));
    }
    c.index();
    return c;
}

void write_cache(const Corpus& corpus, const IngestReport& report, std::uint64_t source_fingerprint,
                 const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write corpus cache: " + path.string());
    out.write(kMagic, sizeof kMagic);
    put_u64(out, kCacheVersion);
    put_u64(out, source_fingerprint);
    put_str(out, report.to_json().dump());
    put_u64(out, corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& p = corpus.post(i);
        put_str(out, p.id);
        put_str(out, p.community);
        put_u64(out, static_cast<std::uint64_t>(p.timestamp));
        put_str(out, p.text);
        put_u64(out, p.image_refs.size());
        for (const auto& r : p.image_refs) put_str(out, r);
        const auto& toks = corpus.tokens(i);
        put_u64(out, toks.size());
        for (const auto& t : toks) put_str(out, t);
    }
    if (!out) throw IoError("write error on corpus cache: " + path.string());
}

std::optional<IngestResult> read_cache(const std::filesystem::path& path, std::uint64_t source_fingerprint) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    char magic[8];
    if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kMagic)) return std::nullopt;
    try {
        if (get_u64(in) != kCacheVersion) return std::nullopt;
        if (get_u64(in) != source_fingerprint) return std::nullopt;
        const auto rj = nlohmann::json::parse(get_str(in));
        IngestReport report;
        report.records = rj.at("records");
        report.accepted = rj.at("accepted");
        const auto& sk = rj.at("skipped");
        report.skipped_malformed = sk.at("malformed");
        report.skipped_missing_field = sk.at("missing_field");
        report.skipped_invalid_field = sk.at("invalid_field");
        report.skipped_duplicate = sk.at("duplicate");
        report.missing_images = rj.at("missing_images");
        return IngestResult{read_cache_body(in), report};
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

}  // namespace memetrace::corpus
