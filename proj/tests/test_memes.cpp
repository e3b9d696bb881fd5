#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "memetrace/common.hpp"
#include "memetrace/corpus.hpp"
#include "memetrace/memes.hpp"
#include "oracles.hpp"
#include "synth_images.hpp"

using namespace memetrace;
using namespace memetrace::memes;

namespace {

ImageHash ih(std::string ref, Hash bits, std::string community = "pol", std::int64_t ts = 1'500'000'000) {
    return {std::move(ref), bits, std::move(community), ts};
}

// Clusters of bit-flipped copies around random centres plus uniform noise.
std::vector<ImageHash> random_hash_set(std::mt19937_64& rng, std::size_t n) {
    std::vector<Hash> centres(1 + rng() % 6);
    for (auto& c : centres) c = rng();
    std::vector<ImageHash> out;
    for (std::size_t i = 0; i < n; ++i) {
        Hash h;
        if (rng() % 5 == 0) {
            h = rng();
        } else if (rng() % 10 == 0 && !out.empty()) {
            h = out[rng() % out.size()].bits;  // exact duplicate
        } else {
            h = centres[rng() % centres.size()];
            const int flips = static_cast<int>(rng() % 12);
            for (int f = 0; f < flips; ++f) h ^= Hash{1} << (rng() % 64);
        }
        out.push_back(ih("img" + std::to_string(i), h));
    }
    return out;
}

RgbImage solid(std::size_t w, std::size_t h, std::uint8_t v) {
    RgbImage img;
    img.width = w;
    img.height = h;
    img.rgb.assign(w * h * 3, v);
    return img;
}

}  // namespace

TEST_CASE("hamming distance") {
    const Hash h = 0x0123456789abcdefULL;
    CHECK(hamming(h, h) == 0);
    CHECK(hamming(h, ~h) == 64);
    CHECK(hamming(0x0F, 0xF0) == 8);
}

TEST_CASE("hash hex round trip") {
    CHECK(hash_hex(0x0F) == "000000000000000f");
    CHECK(parse_hash("0x00000000000000ff") == 0xFF);
    CHECK(parse_hash(hash_hex(0xdeadbeefcafef00dULL)) == 0xdeadbeefcafef00dULL);
    CHECK_THROWS_AS(parse_hash("xyz"), InvalidArgument);
    CHECK_THROWS_AS(parse_hash("00000000000000000"), InvalidArgument);
}

TEST_CASE("image codecs round trip") {
    const auto img = synth_images::shapes(3, 48, 40);
    const auto png = decode_image(encode_png(img));
    CHECK(png.width == 48);
    CHECK(png.height == 40);
    CHECK(png.rgb == img.rgb);

    const auto jpg = decode_image(encode_jpeg(img, 90));
    CHECK(jpg.width == 48);
    long err = 0;
    for (std::size_t i = 0; i < img.rgb.size(); ++i) err += std::abs(int(jpg.rgb[i]) - int(img.rgb[i]));
    CHECK(double(err) / img.rgb.size() < 8.0);

    std::string ppm = "P6\n# comment\n2 1\n255\n";
    ppm += std::string("\x10\x20\x30\x40\x50\x60", 6);
    const auto p = decode_image({reinterpret_cast<const std::uint8_t*>(ppm.data()), ppm.size()});
    CHECK(p.width == 2);
    CHECK(p.rgb[3] == 0x40);
    std::string pgm = "P5 1 1 255\n\x80";
    const auto g = decode_image({reinterpret_cast<const std::uint8_t*>(pgm.data()), pgm.size()});
    CHECK(g.rgb == std::vector<std::uint8_t>{0x80, 0x80, 0x80});

    const std::string junk = "GIF89a....";
    CHECK_THROWS_AS(decode_image({reinterpret_cast<const std::uint8_t*>(junk.data()), junk.size()}), IoError);
    auto truncated = encode_jpeg(img, 80);
    truncated.resize(20);
    CHECK_THROWS_AS(decode_image(truncated), IoError);
    auto bad_png = encode_png(img);
    bad_png.resize(30);
    CHECK_THROWS_AS(decode_image(bad_png), IoError);
}

TEST_CASE("area resize averages exactly") {
    GrayImage g;
    g.width = 4;
    g.height = 2;
    g.pixels = {0, 2, 4, 6, 8, 10, 12, 14};
    const auto r = resize_area(g, 2, 1);
    CHECK(r.pixels[0] == doctest::Approx((0 + 2 + 8 + 10) / 4.0));
    CHECK(r.pixels[1] == doctest::Approx((4 + 6 + 12 + 14) / 4.0));
    const auto up = resize_area(g, 8, 4);
    CHECK(up.pixels[0] == doctest::Approx(0));
    CHECK(up.pixels[3] == doctest::Approx(2));
    GrayImage odd;
    odd.width = 3;
    odd.height = 1;
    odd.pixels = {3, 6, 9};
    const auto o = resize_area(odd, 2, 1);
    CHECK(o.pixels[0] == doctest::Approx((3 * 1.0 + 6 * 0.5) / 1.5));
    CHECK(o.pixels[1] == doctest::Approx((6 * 0.5 + 9 * 1.0) / 1.5));
}

TEST_CASE("phash is deterministic and stable under mild perturbation") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto img = synth_images::shapes(seed);
        const Hash h = phash(img);
        CHECK(phash(img) == h);
        CHECK(phash(decode_image(encode_png(img))) == h);
        CHECK(hamming(h, phash(decode_image(encode_jpeg(img, 80)))) <= 10);
        CHECK(hamming(h, phash(synth_images::scale_brightness(img, 1.1))) <= 10);
        CHECK(hamming(h, phash(synth_images::scale_brightness(img, 0.9))) <= 10);
    }
    // a flat image has no structure: all coefficients tie at the median
    CHECK(phash(solid(40, 40, 128)) == 0);
}

TEST_CASE("phash of independent noise images is far apart") {
    int total = 0, close = 0;
    for (std::uint64_t i = 0; i < 200; ++i) {
        const int d = hamming(phash(synth_images::noise(2 * i)), phash(synth_images::noise(2 * i + 1)));
        total += d;
        close += d < 20;
    }
    CHECK(close <= 2);
    CHECK(std::abs(total / 200.0 - 32.0) < 2.0);
}

TEST_CASE("dbscan small examples") {
    const std::vector<ImageHash> one = {ih("a", 1)};
    const auto r1 = cluster_hashes(one, {8, 2});
    CHECK(r1.clusters.empty());
    CHECK(r1.assignment == std::vector<int>{kNoise});

    std::vector<ImageHash> six;
    for (int i = 0; i < 5; ++i) six.push_back(ih("m" + std::to_string(i), Hash{1} << i));
    six.push_back(ih("far", ~Hash{0}));
    const auto r = cluster_hashes(six, {8, 5});
    REQUIRE(r.clusters.size() == 1);
    CHECK(r.clusters[0].members.size() == 5);
    REQUIRE(r.noise.size() == 1);
    CHECK(r.noise[0].image_ref == "far");

    CHECK_THROWS_AS(cluster_hashes(six, {0, 5}), InvalidArgument);
    CHECK_THROWS_AS(cluster_hashes(six, {33, 5}), InvalidArgument);
    CHECK_THROWS_AS(cluster_hashes(six, {8, 1}), InvalidArgument);
}

TEST_CASE("dbscan border points join the nearest core") {
    // two 4-point core groups 6 bits apart; the border sees one core of each
    auto groups = [](Hash border) {
        std::vector<ImageHash> h;
        for (int i = 0; i < 4; ++i) h.push_back(ih("a" + std::to_string(i), i ? Hash{1} << (39 + i) : 0));
        for (int i = 0; i < 4; ++i) h.push_back(ih("b" + std::to_string(i), 0x3F | (i ? Hash{1} << (49 + i) : 0)));
        h.push_back(ih("x", border));
        return h;
    };
    const auto tie = groups(0x07);
    const auto r = cluster_hashes(tie, {3, 4});
    REQUIRE(r.clusters.size() == 2);
    CHECK(r.assignment[8] == 0);
    CHECK(r.assignment[0] == 0);
    CHECK(r.assignment == oracle::naive_dbscan(tie, 3, 4));

    const auto nearer_b = groups(0x1F);
    const auto r2 = cluster_hashes(nearer_b, {3, 4});
    CHECK(r2.assignment[8] == r2.assignment[4]);
    CHECK(r2.assignment == oracle::naive_dbscan(nearer_b, 3, 4));
}

TEST_CASE("dbscan equals the quadratic reference and ignores input order") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 1 + rng() % 300;
        auto hashes = random_hash_set(rng, n);
        const int eps = 1 + static_cast<int>(rng() % 12);
        const std::size_t min_pts = 2 + rng() % 5;
        const auto expect = oracle::naive_dbscan(hashes, eps, min_pts);
        const auto got = cluster_hashes(hashes, {eps, min_pts});
        CHECK(got.assignment == expect);
        ClusterOptions indexed{eps, min_pts, 1};
        CHECK(cluster_hashes(hashes, indexed).assignment == expect);

        // shuffled input: same clusters by member set
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<ImageHash> shuffled;
        for (auto p : perm) shuffled.push_back(hashes[p]);
        const auto again = cluster_hashes(shuffled, {eps, min_pts});
        for (std::size_t k = 0; k < n; ++k) CHECK(again.assignment[k] == got.assignment[perm[k]]);

        for (const auto& c : got.clusters) {
            REQUIRE_FALSE(c.members.empty());
            CHECK(std::any_of(c.members.begin(), c.members.end(), [&](const ImageHash& m) {
                return m.image_ref == c.medoid.image_ref;
            }));
        }
    }
}

TEST_CASE("medoid minimizes summed distance with a deterministic tie break") {
    std::vector<ImageHash> m = {ih("x", 0b000), ih("y", 0b001), ih("z", 0b011)};
    CHECK(m[medoid_index(m)].image_ref == "y");
    std::vector<ImageHash> tie = {ih("q", 0b01), ih("p", 0b10)};
    CHECK(tie[medoid_index(tie)].image_ref == "q");
    std::vector<ImageHash> same = {ih("q", 5), ih("p", 5)};
    CHECK(same[medoid_index(same)].image_ref == "p");
    CHECK_THROWS_AS(medoid_index({}), InvalidArgument);
}

TEST_CASE("reference set parsing and annotation") {
    std::istringstream in("label,hash_hex\nhappy_merchant,0000000000000000\nother,ffffffffffffffff\n");
    const auto ref = parse_reference_set(in);
    REQUIRE(ref.entries.size() == 2);
    std::ostringstream out;
    write_reference_set(out, ref);
    std::istringstream back(out.str());
    CHECK(parse_reference_set(back).entries.size() == 2);

    std::istringstream bad("x,nothex\n");
    CHECK_THROWS_AS(parse_reference_set(bad), InvalidArgument);
    std::istringstream nolabel(",00\n");
    CHECK_THROWS_AS(parse_reference_set(nolabel), InvalidArgument);

    std::vector<MemeCluster> none;
    annotate_clusters(none, ref, 8);
    CHECK(none.empty());

    MemeCluster near, far;
    near.medoid = ih("n", 0b111);
    near.members = {near.medoid};
    far.medoid = ih("f", 0x00000000000FFFFFULL);
    far.members = {far.medoid};
    std::vector<MemeCluster> cs = {near, far};
    annotate_clusters(cs, ref, 8);
    CHECK(cs[0].label == "happy_merchant");
    CHECK(cs[0].match_distance == 3);
    CHECK_FALSE(cs[1].label.has_value());
    CHECK_THROWS_AS(annotate_clusters(cs, ReferenceSet{}, 8), InvalidArgument);

    // exhaustive nearest-reference check
    std::mt19937_64 rng(2);
    ReferenceSet many;
    for (int i = 0; i < 30; ++i) many.entries.push_back({"r" + std::to_string(i), rng()});
    for (int t = 0; t < 200; ++t) {
        MemeCluster c;
        c.medoid = ih("m", many.entries[rng() % 30].bits ^ (rng() & rng() & rng()));
        c.members = {c.medoid};
        std::vector<MemeCluster> v = {c};
        annotate_clusters(v, many, 8);
        int best = 65;
        std::string label;
        for (const auto& e : many.entries) {
            const int d = hamming(e.bits, c.medoid.bits);
            if (d < best || (d == best && e.label < label)) {
                best = d;
                label = e.label;
            }
        }
        if (best <= 8) {
            CHECK(v[0].label == label);
            CHECK(v[0].match_distance == best);
        } else {
            CHECK_FALSE(v[0].label.has_value());
        }
    }
}

TEST_CASE("cluster series counts posts carrying member images") {
    using corpus::Post;
    const std::int64_t d0 = 1'600'000'000 - 1'600'000'000 % kSecondsPerDay;
    std::vector<Post> posts = {
        {"1", "pol", d0 + 10, "", {"a.png"}},
        {"2", "pol", d0 + 20, "", {"b.png", "a.png"}},
        {"3", "pol", d0 + kSecondsPerDay, "", {"c.png"}},
        {"4", "gab", d0 + kSecondsPerDay, "", {"a.png"}},
        {"5", "pol", d0 + 2 * kSecondsPerDay, "", {"z.png"}},
    };
    const auto c = corpus::Corpus::build(posts);
    MemeCluster cl;
    cl.members = {ih("a.png", 1), ih("b.png", 2), ih("c.png", 3)};
    const auto s = cluster_series(c, cl, "pol");
    CHECK(s.counts == std::vector<std::size_t>{2, 1, 0});
    CHECK(cluster_series(c, cl, "gab").counts == std::vector<std::size_t>{1});
    MemeCluster empty;
    const auto e = cluster_series(c, empty, "pol");
    CHECK(std::all_of(e.counts.begin(), e.counts.end(), [](auto x) { return x == 0; }));

    // brute-force join on a random corpus
    std::mt19937_64 rng(8);
    std::vector<Post> many;
    for (int i = 0; i < 400; ++i) {
        Post p{std::to_string(i), rng() % 2 ? "pol" : "gab", d0 + static_cast<std::int64_t>(rng() % (20 * kSecondsPerDay)), "", {}};
        for (int k = static_cast<int>(rng() % 3); k > 0; --k) p.image_refs.push_back("i" + std::to_string(rng() % 30));
        many.push_back(p);
    }
    const auto big = corpus::Corpus::build(many);
    MemeCluster mc;
    for (int k = 0; k < 30; k += 3) mc.members.push_back(ih("i" + std::to_string(k), 0));
    for (const auto* comm : {"pol", "gab"}) {
        const auto series = cluster_series(big, mc, comm);
        std::map<std::int64_t, std::size_t> expect;
        std::size_t incidences = 0;
        for (const auto& p : many) {
            if (p.community != comm) continue;
            bool hit = false;
            for (const auto& r : p.image_refs)
                for (const auto& m : mc.members) hit |= r == m.image_ref;
            if (hit) {
                ++expect[utc_day(p.timestamp)];
                ++incidences;
            }
        }
        std::size_t sum = 0;
        for (std::size_t i = 0; i < series.size(); ++i) {
            CHECK(series.counts[i] == expect[series.days[i]]);
            sum += series.counts[i];
        }
        CHECK(sum == incidences);
    }
}

TEST_CASE("hashing a corpus directory uses and fills the cache") {
    const auto dir = std::filesystem::temp_directory_path() / "memetrace_memes_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    write_file(dir / "a.png", encode_png(synth_images::shapes(1, 40, 40)));
    write_file(dir / "b.jpg", encode_jpeg(synth_images::shapes(2, 40, 40), 90));
    const std::string junk = "not an image";
    write_file(dir / "bad.png", {reinterpret_cast<const std::uint8_t*>(junk.data()), junk.size()});

    const std::int64_t t = 1'600'000'000;
    const auto c = corpus::Corpus::build({{"1", "pol", t + 50, "", {"a.png", "b.jpg"}},
                                          {"2", "gab", t, "", {"a.png", "gone.png", "bad.png"}}});
    HashCache cache;
    HashReport rep;
    const auto hashes = hash_corpus_images(c, dir, &cache, rep, 2);
    CHECK(rep.referenced == 4);
    CHECK(rep.hashed == 2);
    CHECK(rep.missing == 1);
    CHECK(rep.undecodable == 1);
    REQUIRE(hashes.size() == 2);
    CHECK(hashes[0].image_ref == "a.png");
    CHECK(hashes[0].community == "gab");
    CHECK(hashes[0].timestamp == t);
    CHECK(hashes[0].bits == phash(synth_images::shapes(1, 40, 40)));

    cache.save(dir / "cache.csv");
    auto loaded = HashCache::load(dir / "cache.csv");
    CHECK(loaded.size() == 2);
    HashReport rep2;
    const auto again = hash_corpus_images(c, dir, &loaded, rep2, 1);
    CHECK(rep2.cache_hits == 2);
    CHECK(rep2.hashed == 0);
    CHECK(again[1].bits == hashes[1].bits);
    CHECK(HashCache::load(dir / "absent.csv").size() == 0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("cluster export carries the documented fields") {
    const std::int64_t t = 1'600'000'000;
    const auto c = corpus::Corpus::build({{"1", "pol", t, "", {"a"}}, {"2", "gab", t, "", {"b"}}, {"3", "gab", t, "", {"x"}}});
    std::vector<ImageHash> h = {ih("a", 0), ih("b", 1), ih("x", ~Hash{0})};
    auto cl = cluster_hashes(h, {4, 2});
    ReferenceSet ref;
    ref.entries = {{"zero", 0}};
    annotate_clusters(cl.clusters, ref, 8);
    const auto j = clusters_to_json(c, cl);
    REQUIRE(j["clusters"].size() == 1);
    const auto& k = j["clusters"][0];
    CHECK(k["cluster_id"] == 0);
    CHECK(k["size"] == 2);
    CHECK(k["medoid_hash_hex"] == "0000000000000000");
    CHECK(k["label"] == "zero");
    CHECK(k["match_distance"] == 0);
    CHECK(k["per_community_counts"]["pol"] == 1);
    CHECK(k["per_community_counts"]["gab"] == 1);
    CHECK(j["noise"] == nlohmann::json::array({"x"}));
}
