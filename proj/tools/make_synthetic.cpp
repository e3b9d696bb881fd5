// Generates the bundled synthetic dataset: a multi-community corpus with
// planted term trends, meme images whose posting times follow per-cluster
// Hawkes processes, a reference set and a pipeline config. Also writes the
// pHash robustness fixtures.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "memetrace/common.hpp"
#include "memetrace/corpus.hpp"
#include "memetrace/image.hpp"
#include "memetrace/influence.hpp"
#include "memetrace/memes.hpp"
#include "synth_images.hpp"

namespace fs = std::filesystem;
using namespace memetrace;
using nlohmann::json;

namespace {

const std::vector<std::string> kCommunities = {"pol", "gab", "reddit", "the_donald", "twitter"};
constexpr std::int64_t kOrigin = 1467331200;  // 2016-07-01 00:00 UTC
constexpr int kDays = 180;

const std::vector<std::vector<std::string>> kTopics = {
    {"merchant", "globalist", "bank", "zionist", "shekel", "banker", "israel", "conspiracy", "media", "control", "money", "elite"},
    {"race", "nation", "european", "heritage", "pride", "ethnic", "nationalist", "identity", "ancestry", "border", "culture", "western"},
    {"trump", "hillary", "election", "vote", "campaign", "debate", "president", "senate", "poll", "maga", "democrat", "republican"},
    {"phone", "app", "update", "battery", "screen", "android", "laptop", "software", "wifi", "download", "keyboard", "server"},
    {"game", "team", "score", "season", "coach", "player", "league", "match", "goal", "stadium", "referee", "playoff"},
    {"pizza", "coffee", "burger", "recipe", "dinner", "cheese", "bacon", "taco", "salad", "snack", "noodle", "sandwich"},
};
const std::vector<std::string> kFiller = {"people", "today", "think", "know", "really", "time", "good", "thing", "year", "look",
                                          "the",    "and",   "is",    "of",   "to",     "like", "just", "that"};
// topic mixture per community, same order as kCommunities
const std::vector<std::vector<double>> kTopicMix = {
    {0.20, 0.20, 0.30, 0.10, 0.10, 0.10}, {0.15, 0.20, 0.35, 0.10, 0.10, 0.10}, {0.05, 0.05, 0.25, 0.25, 0.20, 0.20},
    {0.05, 0.10, 0.55, 0.10, 0.10, 0.10}, {0.05, 0.05, 0.30, 0.20, 0.20, 0.20},
};
// mean text posts per day, same order as kCommunities
const std::vector<double> kDailyPosts = {100, 60, 60, 60, 80};

// probability a post of the community contains the planted term on `day`
double planted_rate(const std::string& term, std::size_t community, int day) {
    if (term == "jew") {
        if (community == 0) return day < 90 ? 0.06 : 0.15;
        if (community == 1) return day < 120 ? 0.05 : 0.14;
        return 0.05;
    }
    if (community == 3) return day < 60 ? 0.06 : 0.15;
    return community == 0 ? 0.10 : 0.05;
}

class TextGen {
public:
    explicit TextGen(std::uint64_t seed) : rng_(seed) {}

    std::string sentence(std::size_t topic, std::size_t length) {
        std::string out;
        for (std::size_t i = 0; i < length; ++i) {
            const auto& pool = unit_() < 0.75 ? kTopics[topic] : kFiller;
            append(out, pool[rng_() % pool.size()]);
        }
        return out;
    }
    std::size_t topic_for(std::size_t community) {
        std::discrete_distribution<std::size_t> d(kTopicMix[community].begin(), kTopicMix[community].end());
        return d(rng_);
    }
    std::string post(std::size_t community, int day) {
        std::size_t topic = topic_for(community);
        std::vector<std::string> extra;
        if (unit_() < planted_rate("jew", community, day)) {
            topic = 0;
            extra.push_back(unit_() < 0.2 ? "(((jew)))" : (unit_() < 0.5 ? "jews" : "jew"));
        }
        if (unit_() < planted_rate("white", community, day)) {
            if (extra.empty()) topic = 1;
            extra.push_back(unit_() < 0.5 ? "white" : "whites");
        }
        std::string text = sentence(topic, 6 + rng_() % 8);
        for (const auto& w : extra) {
            // put the planted word in the middle of topic context
            const auto words = sentence(topic, 4);
            append(text, w);
            append(text, words);
        }
        return text;
    }
    std::mt19937_64& rng() { return rng_; }

private:
    std::mt19937_64 rng_;
    std::uniform_real_distribution<double> unit_dist_{0.0, 1.0};
    double unit_() { return unit_dist_(rng_); }
    static void append(std::string& out, const std::string& w) {
        if (!out.empty()) out.push_back(' ');
        out += w;
    }
};

struct Meme {
    std::string label;
    memes::RgbImage base;
    memes::Hash hash = 0;
    std::vector<std::string> refs;  // base first
    bool merchant = false;
};

influence::HawkesModel cluster_model(bool merchant, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> jitter(0.7, 1.3);
    influence::HawkesModel m;
    m.lambda0 = {0.3, 0.06, 0.1, 0.08, 0.16};
    for (auto& l : m.lambda0) l *= jitter(rng);
    m.W = influence::Matrix(5, 0.03);
    if (merchant) {
        for (std::size_t d = 0; d < 5; ++d) m.W(0, d) = 0.22 * jitter(rng);
        m.W(1, 1) = 0.15;
    } else {
        for (std::size_t d = 0; d < 5; ++d) m.W(4, d) = 0.18 * jitter(rng);
        m.W(2, 2) = 0.15;
    }
    while (influence::spectral_radius(m.W) >= 0.8)
        for (auto& w : m.W.data) w *= 0.9;
    return m;
}

void write_fixtures(const fs::path& dir, std::size_t count) {
    fs::create_directories(dir);
    for (std::size_t i = 0; i < count; ++i) {
        const auto img = synth_images::shapes(5000 + i);
        memes::write_file(dir / fmt::format("fixture_{:02}.png", i), memes::encode_png(img));
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"generate the synthetic demo dataset"};
    std::string out_dir = "data/synthetic", fixtures;
    std::uint64_t seed = 2017;
    double volume = 1.0;
    std::size_t noise_images = 150, variants = 14, fixture_count = 50;
    app.add_option("--out", out_dir, "dataset directory");
    app.add_option("--seed", seed, "generator seed");
    app.add_option("--volume", volume, "scale of the daily text post volume");
    app.add_option("--noise-images", noise_images, "one-off images outside any meme");
    app.add_option("--variants", variants, "near-duplicate variants per meme");
    app.add_option("--fixtures", fixtures, "also write the pHash fixture images here");
    app.add_option("--fixture-count", fixture_count, "number of fixture images");
    CLI11_PARSE(app, argc, argv);

    try {
        if (!fixtures.empty()) write_fixtures(fixtures, fixture_count);

        const fs::path root(out_dir);
        const fs::path images = root / "images";
        fs::remove_all(images);
        fs::create_directories(images);
        std::mt19937_64 rng(derive_seed(seed, "dataset"));
        TextGen text(derive_seed(seed, "text"));

        // meme bases, pairwise far apart
        std::vector<std::string> labels(12, "happy_merchant");
        for (int round = 0; round < 2; ++round)
            for (const char* other : {"pepe", "smug_frog", "wojak", "doge", "trollface", "kek"}) labels.push_back(other);
        std::vector<Meme> bases;
        std::vector<memes::Hash> taken;
        for (std::uint64_t s = 0; bases.size() < labels.size(); ++s) {
            auto img = synth_images::shapes(derive_seed(seed, fmt::format("base/{}", s)));
            const auto h = memes::phash(img);
            if (std::any_of(taken.begin(), taken.end(), [&](memes::Hash o) { return memes::hamming(o, h) < 24; })) continue;
            taken.push_back(h);
            Meme m;
            m.label = labels[bases.size()];
            m.merchant = m.label == "happy_merchant";
            m.base = std::move(img);
            m.hash = h;
            bases.push_back(std::move(m));
        }
        std::vector<memes::Hash> all_hashes;
        for (std::size_t b = 0; b < bases.size(); ++b) {
            auto& m = bases[b];
            const auto ref = fmt::format("meme{:02}_base.png", b);
            memes::write_file(images / ref, memes::encode_png(m.base));
            m.refs.push_back(ref);
            all_hashes.push_back(m.hash);
            for (std::uint64_t v = 0; m.refs.size() <= variants; ++v) {
                const auto img = synth_images::variant(m.base, derive_seed(seed, fmt::format("variant/{}/{}", b, v)));
                const auto h = memes::phash(img);
                if (memes::hamming(h, m.hash) > 6) continue;
                const auto vref = fmt::format("meme{:02}_v{:02}.png", b, m.refs.size());
                memes::write_file(images / vref, memes::encode_png(img));
                m.refs.push_back(vref);
                all_hashes.push_back(h);
            }
        }

        std::vector<corpus::Post> posts;
        auto add_post = [&](std::size_t community, std::int64_t ts, std::vector<std::string> imgs) {
            const int day = static_cast<int>((ts - kOrigin) / kSecondsPerDay);
            corpus::Post p;
            p.community = kCommunities[community];
            p.timestamp = ts;
            p.text = text.post(community, day);
            p.image_refs = std::move(imgs);
            posts.push_back(std::move(p));
        };

        // meme posts: one Hawkes process per meme over the communities
        json truth = json::array();
        for (std::size_t b = 0; b < bases.size(); ++b) {
            const auto model = cluster_model(bases[b].merchant, rng);
            const auto log = influence::simulate(model, 0.0, kDays, derive_seed(seed, fmt::format("hawkes/{}", b)), kCommunities);
            std::vector<double> ref_weight(bases[b].refs.size(), 1.0);
            ref_weight[0] = 4.0;
            std::discrete_distribution<std::size_t> pick_ref(ref_weight.begin(), ref_weight.end());
            for (const auto& e : log.events) {
                const auto ts = kOrigin + static_cast<std::int64_t>(std::floor(e.t * kSecondsPerDay));
                add_post(e.k, ts, {bases[b].refs[pick_ref(rng)]});
            }
            truth.push_back({{"meme", b}, {"label", bases[b].label}, {"events", log.events.size()}, {"W", model.W.data},
                             {"lambda0", model.lambda0}});
        }

        // one-off images
        std::discrete_distribution<std::size_t> pick_comm(kDailyPosts.begin(), kDailyPosts.end());
        std::uniform_int_distribution<std::int64_t> pick_ts(kOrigin, kOrigin + kDays * kSecondsPerDay - 1);
        std::size_t made = 0;
        for (std::uint64_t s = 0; made < noise_images; ++s) {
            const auto img = synth_images::noise(derive_seed(seed, fmt::format("noise/{}", s)));
            const auto h = memes::phash(img);
            if (std::any_of(all_hashes.begin(), all_hashes.end(), [&](memes::Hash o) { return memes::hamming(o, h) < 16; }))
                continue;
            all_hashes.push_back(h);
            const auto ref = fmt::format("noise{:03}.png", made++);
            memes::write_file(images / ref, memes::encode_png(img));
            add_post(pick_comm(rng), pick_ts(rng), {ref});
        }

        std::uniform_int_distribution<std::int64_t> pick_second(0, kSecondsPerDay - 1);
        for (int day = 0; day < kDays; ++day)
            for (std::size_t c = 0; c < kCommunities.size(); ++c) {
                const auto n = std::poisson_distribution<int>(kDailyPosts[c] * volume)(rng);
                for (int i = 0; i < n; ++i) add_post(c, kOrigin + day * kSecondsPerDay + pick_second(rng), {});
            }

        std::stable_sort(posts.begin(), posts.end(), [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
        std::ofstream corpus_out(root / "corpus.jsonl", std::ios::binary | std::ios::trunc);
        if (!corpus_out) throw IoError("cannot write corpus");
        for (std::size_t i = 0; i < posts.size(); ++i) {
            posts[i].id = fmt::format("{}-{:05}", posts[i].community, i);
            corpus::write_post_jsonl(corpus_out, posts[i]);
        }

        std::ofstream ref_out(root / "reference.csv", std::ios::trunc);
        memes::ReferenceSet ref;
        for (const auto& m : bases) ref.entries.push_back({m.label, m.hash});
        memes::write_reference_set(ref_out, ref);

        std::ofstream truth_out(root / "truth.json", std::ios::trunc);
        truth_out << json{{"seed", seed}, {"communities", kCommunities}, {"memes", truth}}.dump(1) << '\n';

        const json config = {
            {"seed", 7},
            {"output_dir", "out"},
            {"corpus", {{"sources", {"corpus.jsonl"}}, {"image_dir", "images"}}},
            {"terms", {"jew", "white"}},
            {"trends", {{"window", 7}, {"edge_window", 14}}},
            {"embedding", {{"dim", 50}, {"window", 7}, {"epochs", 5}}},
            {"graph", {{"edge_fraction", 0.08}, {"ego_seeds", {"jew", "white"}}, {"hops", 1}}},
            {"memes", {{"eps", 8}, {"min_pts", 5}, {"reference", "reference.csv"}, {"max_distance", 8}}},
            {"hawkes", {{"draws", 24000}, {"burn_in", 4000}, {"communities", kCommunities}, {"compare_label", "happy_merchant"}}},
        };
        std::ofstream cfg_out(root / "config.json", std::ios::trunc);
        cfg_out << config.dump(2) << '\n';
        std::cout << fmt::format("{} posts, {} images written to {}\n", posts.size(), all_hashes.size(), root.string());
    } catch (const std::exception& e) {
        std::cerr << "make_synthetic: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
