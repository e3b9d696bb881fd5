#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "memetrace/common.hpp"
#include "memetrace/corpus.hpp"
#include "memetrace/text.hpp"

using namespace memetrace;
using namespace memetrace::corpus;

namespace {

IngestResult ingest_string(const std::string& data, Format fmt, IngestOptions opts = {}) {
    std::istringstream in(data);
    Ingestor ing(std::move(opts));
    ing.add_stream(in, fmt);
    return std::move(ing).finish();
}

Corpus five_post_corpus() {
    std::vector<Post> posts = {
        {"1", "pol", 1480000000, "The jews did this", {}},
        {"2", "pol", 1480000100, "nothing to see", {}},
        {"3", "gab", 1480090000, "Jews everywhere, jews!", {}},
        {"4", "gab", 1480090100, "white people", {}},
        {"5", "pol", 1480200000, "jewish is not the stem of jew", {}},
    };
    return Corpus::build(std::move(posts));
}

}  // namespace

TEST_CASE("ingest: empty input") {
    auto r = ingest_string("", Format::jsonl);
    CHECK(r.corpus.size() == 0);
    CHECK(r.report.records == 0);
    CHECK(r.report.skipped() == 0);
}

TEST_CASE("ingest: record missing ts is skipped and tallied") {
    const std::string data =
        R"({"id":"a","community":"pol","ts":1500000000,"text":"hello world","images":[]})"
        "\n"
        R"({"id":"b","community":"pol","text":"no timestamp"})"
        "\n"
        R"({"id":"c","community":"gab","ts":1500000500,"text":"third"})"
        "\n";
    auto r = ingest_string(data, Format::jsonl);
    CHECK(r.corpus.size() == 2);
    CHECK(r.report.skipped() == 1);
    CHECK(r.report.skipped_missing_field == 1);
    CHECK(r.report.accepted + r.report.skipped() == r.report.records);
}

TEST_CASE("ingest: duplicates, malformed lines, invalid fields") {
    const std::string data =
        R"({"id":"a","community":"pol","ts":1500000000,"text":"x"})"
        "\n"
        R"({"id":"a","community":"pol","ts":1500000009,"text":"later duplicate"})"
        "\n"
        R"({"id":"a","community":"gab","ts":1500000009,"text":"same id other community"})"
        "\n"
        "{not json\n"
        "\n"
        R"({"id":"z","community":"pol","ts":-5})"
        "\n"
        R"({"id":"y","community":"pol","ts":"1500000000"})"
        "\n";
    auto r = ingest_string(data, Format::jsonl);
    CHECK(r.report.records == 6);
    CHECK(r.corpus.size() == 2);
    CHECK(r.report.skipped_duplicate == 1);
    CHECK(r.report.skipped_malformed == 1);
    CHECK(r.report.skipped_invalid_field == 2);
    CHECK(r.corpus.post(0).text == "x");  // first record wins
    CHECK(r.report.accepted + r.report.skipped() == r.report.records);
}

TEST_CASE("ingest: csv with quoting and image lists") {
    const std::string data =
        "id,community,ts,text,images\n"
        "1,pol,1500000000,\"hello, \"\"world\"\"\",img1;img2\n"
        "2,gab,1500086400,\"multi\nline\",\n"
        "3,gab,,missing ts,\n";
    std::unordered_set<std::string> store = {"img1"};
    auto r = ingest_string(data, Format::csv, IngestOptions{&store, std::nullopt});
    REQUIRE(r.corpus.size() == 2);
    CHECK(r.corpus.post(0).text == "hello, \"world\"");
    CHECK(r.corpus.post(0).image_refs == std::vector<std::string>{"img1", "img2"});
    CHECK(r.corpus.post(1).text == "multi\nline");
    CHECK(r.report.missing_images == 1);
    CHECK(r.report.skipped_missing_field == 1);
}

TEST_CASE("ingest: unreadable file is fatal") {
    CHECK_THROWS_AS(ingest_posts("/nonexistent/dir/file.jsonl", Format::jsonl), IoError);
}

TEST_CASE("corpus indexes: date index sums to community sizes, term index is exact") {
    const Corpus c = five_post_corpus();
    std::map<std::string, std::size_t> sums;
    for (const auto& [day, per] : c.date_index())
        for (const auto& [comm, n] : per) sums[comm] += n;
    for (const auto& comm : c.communities()) CHECK(sums[comm] == c.community_size(comm));

    // term_index holds exactly the tokens produced by the tokenizer
    std::set<std::string> all;
    for (std::size_t i = 0; i < c.size(); ++i)
        for (const auto& t : text::tokenize(c.post(i).text)) all.insert(t);
    std::set<std::string> indexed;
    for (const auto& [tok, posts] : c.term_index()) indexed.insert(tok);
    CHECK(all == indexed);
}

TEST_CASE("filter_by_term") {
    const Corpus c = five_post_corpus();
    CHECK(filter_by_term(c, "absentterm").empty());
    const auto jews = filter_by_term(c, "jew");
    // linear-scan oracle over tokenized posts
    std::vector<std::size_t> oracle;
    for (std::size_t i = 0; i < c.size(); ++i) {
        const auto toks = text::tokenize(c.post(i).text);
        if (std::find(toks.begin(), toks.end(), "jew") != toks.end()) oracle.push_back(i);
    }
    CHECK(jews == oracle);
    CHECK(jews == std::vector<std::size_t>{0, 2, 4});
    CHECK(filter_by_term(c, "jew") == jews);
}

TEST_CASE("filter_by_term equals brute force on random corpora") {
    std::mt19937_64 rng(3);
    const std::vector<std::string> words = {"jews", "white", "black", "memes", "the", "and", "(((jews)))", "cats",
                                            "running", "runs", "happy"};
    std::vector<Post> posts;
    for (int i = 0; i < 400; ++i) {
        std::string text;
        const int len = static_cast<int>(rng() % 9);
        for (int k = 0; k < len; ++k) text += words[rng() % words.size()] + " ";
        posts.push_back({std::to_string(i), i % 2 ? "pol" : "gab", 1500000000 + i * 3000, text, {}});
    }
    const Corpus c = Corpus::build(posts);
    for (const auto& [term, list] : c.term_index()) {
        std::size_t brute = 0;
        for (const auto& p : posts) {
            const auto toks = text::tokenize(p.text);
            brute += std::find(toks.begin(), toks.end(), term) != toks.end();
        }
        CHECK(filter_by_term(c, term).size() == brute);
    }
}

TEST_CASE("sample_for_annotation") {
    std::vector<Post> posts;
    for (int i = 0; i < 10000; ++i)
        posts.push_back({std::to_string(i), "pol", 1500000000 + i, i < 40 || i >= 200 ? "jew" : "other", {}});
    const Corpus c = Corpus::build(posts);

    SUBCASE("fewer matches than requested returns all") {
        std::vector<Post> few(posts.begin(), posts.begin() + 100);
        const Corpus small = Corpus::build(few);
        CHECK(sample_for_annotation(small, "jew", 100, 1).size() == 40);
    }
    SUBCASE("deterministic under seed, distinct, all match") {
        const auto a = sample_for_annotation(c, "jew", 100, 42);
        const auto b = sample_for_annotation(c, "jew", 100, 42);
        REQUIRE(a.size() == 100);
        std::set<std::string> ids;
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].id == b[i].id);
            ids.insert(a[i].id);
        }
        CHECK(ids.size() == 100);
        const auto members = filter_by_term(c, "jew");
        for (const auto& p : a) {
            const auto idx = static_cast<std::size_t>(std::stoul(p.id));
            CHECK(std::binary_search(members.begin(), members.end(), idx));
        }
        CHECK(sample_for_annotation(c, "jew", 100, 43)[0].id != a[0].id);
    }
    CHECK_THROWS_AS(sample_for_annotation(c, "jew", 0, 1), InvalidArgument);
}

TEST_CASE("cache round trip and version invalidation") {
    const auto dir = std::filesystem::temp_directory_path() / "memetrace_test_cache";
    std::filesystem::create_directories(dir);
    const auto path = dir / "corpus.cache";
    const Corpus c = five_post_corpus();
    IngestReport rep;
    rep.records = 6;
    rep.accepted = 5;
    rep.skipped_duplicate = 1;
    write_cache(c, rep, 1234, path);

    auto back = read_cache(path, 1234);
    REQUIRE(back.has_value());
    CHECK(back->corpus.size() == c.size());
    CHECK(back->report.skipped_duplicate == 1);
    for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(back->corpus.post(i).text == c.post(i).text);
        CHECK(back->corpus.tokens(i) == c.tokens(i));
    }
    CHECK_FALSE(read_cache(path, 999).has_value());

    // bump the version field in place: must be rejected
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(8);
        const char v = static_cast<char>(kCacheVersion + 1);
        f.write(&v, 1);
    }
    CHECK_FALSE(read_cache(path, 1234).has_value());
    std::filesystem::remove_all(dir);
}
