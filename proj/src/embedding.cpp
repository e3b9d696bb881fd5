#include "memetrace/embedding.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "memetrace/common.hpp"

namespace memetrace::semantics {

nlohmann::json EmbeddingConfig::to_json() const {
    return {{"dim", dim},           {"window", window},   {"min_count", min_count},
            {"epochs", epochs},     {"negative", negative}, {"learning_rate", learning_rate},
            {"seed", seed},         {"workers", workers},  {"subsampling", false},
            {"objective", "cbow-negative-sampling"}};
}

EmbeddingConfig EmbeddingConfig::from_json(const nlohmann::json& j) {
    EmbeddingConfig c;
    c.dim = j.value("dim", c.dim);
    c.window = j.value("window", c.window);
    c.min_count = j.value("min_count", c.min_count);
    c.epochs = j.value("epochs", c.epochs);
    c.negative = j.value("negative", c.negative);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    return c;
}

std::size_t default_min_count(std::size_t corpus_tokens) {
    const double scaled = 500.0 * static_cast<double>(corpus_tokens) / 1e9;
    return std::max<std::size_t>(5, static_cast<std::size_t>(std::ceil(scaled)));
}

// ---------------------------------------------------------------------------
// Model

EmbeddingModel::EmbeddingModel(std::vector<std::string> words, std::vector<std::size_t> counts, std::size_t dim,
                               std::vector<float> input, std::vector<float> output, EmbeddingConfig config)
    : words_(std::move(words)),
      counts_(std::move(counts)),
      dim_(dim),
      input_(std::move(input)),
      output_(std::move(output)),
      config_(config) {
    if (counts_.size() != words_.size() || input_.size() != words_.size() * dim_ ||
        output_.size() != words_.size() * dim_)
        throw InvalidArgument("embedding model dimensions are inconsistent");
    for (std::size_t i = 0; i < words_.size(); ++i) {
        if (!index_.emplace(words_[i], i).second) throw InvalidArgument("duplicate vocabulary word: " + words_[i]);
    }
    norms_.resize(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) {
        double s = 0.0;
        for (float x : input_vector(i)) {
            if (!std::isfinite(x)) throw InvalidArgument("non-finite vector entry for word: " + words_[i]);
            s += static_cast<double>(x) * x;
        }
        norms_[i] = std::sqrt(s);
    }
    config_.dim = dim_;
}

std::size_t EmbeddingModel::index_of(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) throw InvalidArgument("word not in vocabulary: '" + std::string(word) + "'");
    return it->second;
}

double EmbeddingModel::cosine(std::size_t a, std::size_t b) const {
    const double denom = norms_[a] * norms_[b];
    if (denom == 0.0) return 0.0;
    const auto va = input_vector(a), vb = input_vector(b);
    double dot = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) dot += static_cast<double>(va[k]) * vb[k];
    return std::clamp(dot / denom, -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Vocab {
    std::vector<std::string> words;
    std::vector<std::size_t> counts;
    std::unordered_map<std::string, std::uint32_t> index;
};

Vocab build_vocab(std::span<const std::vector<std::string>> sentences, std::size_t min_count) {
    std::unordered_map<std::string, std::size_t> freq;
    for (const auto& s : sentences)
        for (const auto& w : s) ++freq[w];
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [w, c] : freq)
        if (c >= min_count) kept.emplace_back(w, c);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    Vocab v;
    for (auto& [w, c] : kept) {
        v.index.emplace(w, static_cast<std::uint32_t>(v.words.size()));
        v.words.push_back(w);
        v.counts.push_back(c);
    }
    return v;
}

// Cumulative unigram^0.75 distribution for negative sampling.
class NegativeSampler {
public:
    explicit NegativeSampler(const std::vector<std::size_t>& counts) : cdf_(counts.size()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            acc += std::pow(static_cast<double>(counts[i]), 0.75);
            cdf_[i] = acc;
        }
        for (auto& x : cdf_) x /= acc;
    }
    template <class Rng>
    std::uint32_t operator()(Rng& rng) const {
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        return static_cast<std::uint32_t>(std::min<std::size_t>(it - cdf_.begin(), cdf_.size() - 1));
    }

private:
    std::vector<double> cdf_;
};

// Element access for the shared weight matrices. The lock-free variant uses
// relaxed atomics so concurrent workers may interleave updates.
template <bool Shared>
struct Cell {
    static float load(float& x) {
        if constexpr (Shared) return std::atomic_ref<float>(x).load(std::memory_order_relaxed);
        else return x;
    }
    static void add(float& x, float d) {
        if constexpr (Shared) {
            std::atomic_ref<float> r(x);
            r.store(r.load(std::memory_order_relaxed) + d, std::memory_order_relaxed);
        } else {
            x += d;
        }
    }
};

struct TrainState {
    const EmbeddingConfig& cfg;
    const std::vector<std::vector<std::uint32_t>>& sentences;
    const NegativeSampler& sampler;
    std::vector<float>& input;
    std::vector<float>& output;
    std::size_t total_words;
    std::atomic<std::size_t> processed{0};
};

template <bool Shared>
void train_shard(TrainState& st, std::size_t first, std::size_t last, std::uint64_t seed) {
    using C = Cell<Shared>;
    const std::size_t d = st.cfg.dim;
    const auto window = static_cast<std::ptrdiff_t>(st.cfg.window);
    const double total = static_cast<double>(st.cfg.epochs * st.total_words) + 1.0;
    std::mt19937_64 rng(seed);
    std::vector<float> hidden(d), grad(d);
    std::size_t local = 0;

    for (std::size_t epoch = 0; epoch < st.cfg.epochs; ++epoch) {
        for (std::size_t si = first; si < last; ++si) {
            const auto& sent = st.sentences[si];
            const auto len = static_cast<std::ptrdiff_t>(sent.size());
            const double done = static_cast<double>(st.processed.load(std::memory_order_relaxed) + local);
            const auto alpha = static_cast<float>(
                std::max(st.cfg.learning_rate * 1e-4, st.cfg.learning_rate * (1.0 - done / total)));
            for (std::ptrdiff_t pos = 0; pos < len; ++pos) {
                const auto shrink = static_cast<std::ptrdiff_t>(rng() % static_cast<std::uint64_t>(window));
                const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, pos - window + shrink);
                const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(len - 1, pos + window - shrink);
                std::fill(hidden.begin(), hidden.end(), 0.0f);
                std::size_t ctx = 0;
                for (auto c = lo; c <= hi; ++c) {
                    if (c == pos) continue;
                    float* row = &st.input[sent[static_cast<std::size_t>(c)] * d];
                    for (std::size_t k = 0; k < d; ++k) hidden[k] += C::load(row[k]);
                    ++ctx;
                }
                if (ctx == 0) continue;
                const float inv = 1.0f / static_cast<float>(ctx);
                for (auto& h : hidden) h *= inv;
                std::fill(grad.begin(), grad.end(), 0.0f);

                const std::uint32_t center = sent[static_cast<std::size_t>(pos)];
                for (std::size_t n = 0; n <= st.cfg.negative; ++n) {
                    std::uint32_t target = center;
                    float label = 1.0f;
                    if (n > 0) {
                        target = st.sampler(rng);
                        if (target == center) continue;
                        label = 0.0f;
                    }
                    float* out = &st.output[target * d];
                    float dot = 0.0f;
                    for (std::size_t k = 0; k < d; ++k) dot += hidden[k] * C::load(out[k]);
                    const float sig = 1.0f / (1.0f + std::exp(-dot));
                    const float g = (label - sig) * alpha;
                    for (std::size_t k = 0; k < d; ++k) grad[k] += g * C::load(out[k]);
                    for (std::size_t k = 0; k < d; ++k) C::add(out[k], g * hidden[k]);
                }
                for (auto c = lo; c <= hi; ++c) {
                    if (c == pos) continue;
                    float* row = &st.input[sent[static_cast<std::size_t>(c)] * d];
                    for (std::size_t k = 0; k < d; ++k) C::add(row[k], grad[k]);
                }
            }
            local += sent.size();
            if (local >= 10000) {
                st.processed.fetch_add(local, std::memory_order_relaxed);
                local = 0;
            }
        }
    }
    st.processed.fetch_add(local, std::memory_order_relaxed);
}

}  // namespace

EmbeddingModel train_cbow(std::span<const std::vector<std::string>> sentences, EmbeddingConfig config) {
    if (config.dim == 0 || config.window == 0 || config.epochs == 0)
        throw InvalidArgument("embedding dim, window and epochs must be >= 1");
    if (config.min_count == 0) {
        std::size_t tokens = 0;
        for (const auto& s : sentences) tokens += s.size();
        config.min_count = default_min_count(tokens);
    }
    config.workers = std::max<std::size_t>(1, config.workers);

    Vocab vocab = build_vocab(sentences, config.min_count);
    if (vocab.words.empty())
        throw InvalidArgument(fmt::format("no token occurs at least min_count={} times", config.min_count));

    std::vector<std::vector<std::uint32_t>> encoded;
    encoded.reserve(sentences.size());
    std::size_t total_words = 0;
    for (const auto& s : sentences) {
        std::vector<std::uint32_t> ids;
        for (const auto& w : s) {
            auto it = vocab.index.find(w);
            if (it != vocab.index.end()) ids.push_back(it->second);
        }
        if (ids.size() >= 2) {
            total_words += ids.size();
            encoded.push_back(std::move(ids));
        }
    }

    const std::size_t V = vocab.words.size(), d = config.dim;
    std::vector<float> input(V * d), output(V * d, 0.0f);
    {
        std::mt19937_64 init(derive_seed(config.seed, "init"));
        std::uniform_real_distribution<float> u(-0.5f / static_cast<float>(d), 0.5f / static_cast<float>(d));
        for (auto& x : input) x = u(init);
    }

    NegativeSampler sampler(vocab.counts);
    TrainState st{config, encoded, sampler, input, output, total_words};
    if (config.workers == 1 || encoded.size() < config.workers) {
        train_shard<false>(st, 0, encoded.size(), derive_seed(config.seed, "worker0"));
    } else {
        std::vector<std::thread> pool;
        const std::size_t per = (encoded.size() + config.workers - 1) / config.workers;
        for (std::size_t w = 0; w < config.workers; ++w) {
            const std::size_t first = std::min(encoded.size(), w * per);
            const std::size_t last = std::min(encoded.size(), first + per);
            pool.emplace_back([&, first, last, w] {
                train_shard<true>(st, first, last, derive_seed(config.seed, fmt::format("worker{}", w)));
            });
        }
        for (auto& t : pool) t.join();
    }

    return EmbeddingModel(std::move(vocab.words), std::move(vocab.counts), d, std::move(input), std::move(output),
                          config);
}

EmbeddingModel train_cbow(const corpus::Corpus& corpus, EmbeddingConfig config) {
    std::vector<std::vector<std::string>> sentences;
    sentences.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) sentences.push_back(corpus.tokens(i));
    return train_cbow(sentences, config);
}

// ---------------------------------------------------------------------------
// Queries

double similarity(const EmbeddingModel& model, std::string_view a, std::string_view b) {
    return model.cosine(model.index_of(a), model.index_of(b));
}

std::vector<ScoredWord> top_similar(const EmbeddingModel& model, std::string_view word, std::size_t k) {
    if (k < 1) throw InvalidArgument("k must be >= 1");
    const std::size_t q = model.index_of(word);
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(model.size());
    for (std::size_t i = 0; i < model.size(); ++i)
        if (i != q) scored.emplace_back(model.cosine(q, i), i);
    const auto& words = model.words();
    auto better = [&](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : words[a.second] < words[b.second];
    };
    const std::size_t take = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), better);
    std::vector<ScoredWord> out;
    for (std::size_t i = 0; i < take; ++i) out.emplace_back(words[scored[i].second], scored[i].first);
    return out;
}

std::vector<double> context_distribution(const EmbeddingModel& model, std::span<const std::string> context) {
    const std::size_t d = model.dim();
    std::vector<double> hidden(d, 0.0);
    std::size_t used = 0;
    for (const auto& w : context) {
        if (!model.contains(w)) continue;
        const auto v = model.input_vector(model.index_of(w));
        for (std::size_t k = 0; k < d; ++k) hidden[k] += v[k];
        ++used;
    }
    if (used == 0) throw InvalidArgument("no context word is in the vocabulary");
    for (auto& h : hidden) h /= static_cast<double>(used);

    std::vector<double> logits(model.size());
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto o = model.output_vector(i);
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += hidden[k] * o[k];
        logits[i] = s;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (auto& l : logits) {
        l = std::exp(l - mx);
        z += l;
    }
    for (auto& l : logits) l /= z;
    return logits;
}

std::vector<ScoredWord> predict_context(const EmbeddingModel& model, std::span<const std::string> context,
                                        std::size_t k) {
    if (k < 1) throw InvalidArgument("k must be >= 1");
    const auto probs = context_distribution(model, context);
    std::vector<std::size_t> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    const auto& words = model.words();
    const std::size_t take = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          return probs[a] != probs[b] ? probs[a] > probs[b] : words[a] < words[b];
                      });
    std::vector<ScoredWord> out;
    for (std::size_t i = 0; i < take; ++i) out.emplace_back(words[order[i]], probs[order[i]]);
    return out;
}

// ---------------------------------------------------------------------------
// Similarity distribution

std::vector<std::pair<double, double>> SimilarityCdf::curve(std::size_t points) const {
    std::vector<std::pair<double, double>> rows;
    if (sorted_samples.empty() || points < 2) return rows;
    const std::size_t n = sorted_samples.size();
    for (std::size_t i = 0; i < points; ++i) {
        const double q = static_cast<double>(i) / static_cast<double>(points - 1);
        const auto idx = std::min(n - 1, static_cast<std::size_t>(q * static_cast<double>(n - 1) + 0.5));
        rows.emplace_back(sorted_samples[idx], static_cast<double>(idx + 1) / static_cast<double>(n));
    }
    return rows;
}

SimilarityCdf threshold_for_fraction(const EmbeddingModel& model, double fraction, std::size_t sample_pairs,
                                     std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidArgument("edge fraction must lie in (0, 1)");
    if (sample_pairs < 1000) throw InvalidArgument("at least 1000 sampled pairs are required");
    const std::size_t V = model.size();
    if (V < 2) throw InvalidArgument("similarity distribution needs at least 2 words");

    SimilarityCdf out;
    out.fraction = fraction;
    const std::size_t all_pairs = V * (V - 1) / 2;
    if (sample_pairs >= all_pairs) {
        out.exhaustive = true;
        out.sorted_samples.reserve(all_pairs);
        for (std::size_t a = 0; a < V; ++a)
            for (std::size_t b = a + 1; b < V; ++b) out.sorted_samples.push_back(model.cosine(a, b));
    } else {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<std::size_t> pick(0, V - 1), pick_other(0, V - 2);
        out.sorted_samples.reserve(sample_pairs);
        for (std::size_t s = 0; s < sample_pairs; ++s) {
            const std::size_t a = pick(rng);
            std::size_t b = pick_other(rng);
            if (b >= a) ++b;
            out.sorted_samples.push_back(model.cosine(a, b));
        }
    }
    std::sort(out.sorted_samples.begin(), out.sorted_samples.end());
    out.sample_count = out.sorted_samples.size();
    // smallest value such that about `fraction` of samples are >= it
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(out.sample_count))));
    out.threshold = out.sorted_samples[out.sample_count - std::min(keep, out.sample_count)];
    return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

void write_vectors(const std::filesystem::path& path, const EmbeddingModel& model, const std::vector<float>& m) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write vectors: " + path.string());
    out << model.size() << ' ' << model.dim() << '\n';
    for (std::size_t i = 0; i < model.size(); ++i) {
        out << model.words()[i];
        for (std::size_t k = 0; k < model.dim(); ++k) out << ' ' << fmt::format("{:.9g}", m[i * model.dim() + k]);
        out << '\n';
    }
}

std::vector<float> read_vectors(const std::filesystem::path& path, const std::vector<std::string>& words,
                                std::size_t dim) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read vectors: " + path.string());
    std::size_t V = 0, d = 0;
    in >> V >> d;
    if (V != words.size() || d != dim) throw IoError("vector file header disagrees with metadata: " + path.string());
    std::vector<float> m(V * d);
    std::string w;
    for (std::size_t i = 0; i < V; ++i) {
        if (!(in >> w) || w != words[i]) throw IoError("vector file word order disagrees with metadata");
        for (std::size_t k = 0; k < d; ++k)
            if (!(in >> m[i * d + k])) throw IoError("truncated vector file: " + path.string());
    }
    return m;
}

std::filesystem::path with_suffix(std::filesystem::path stem, const char* suffix) {
    stem += suffix;
    return stem;
}

}  // namespace

void save_model(const EmbeddingModel& model, const std::filesystem::path& stem) {
    write_vectors(with_suffix(stem, ".vec"), model, model.input_matrix());
    write_vectors(with_suffix(stem, ".ctx.vec"), model, model.output_matrix());
    nlohmann::json vocab = nlohmann::json::array();
    for (std::size_t i = 0; i < model.size(); ++i) vocab.push_back({model.words()[i], model.counts()[i]});
    const nlohmann::json meta = {{"format_version", kModelFormatVersion},
                                 {"config", model.config().to_json()},
                                 {"vocab_size", model.size()},
                                 {"vocab", vocab}};
    std::ofstream out(with_suffix(stem, ".json"), std::ios::trunc);
    if (!out) throw IoError("cannot write model metadata for " + stem.string());
    out << meta.dump(1) << '\n';
}

EmbeddingModel load_model(const std::filesystem::path& stem) {
    std::ifstream in(with_suffix(stem, ".json"));
    if (!in) throw IoError("cannot read model metadata for " + stem.string());
    const auto meta = nlohmann::json::parse(in);
    if (meta.value("format_version", -1) != kModelFormatVersion)
        throw IoError("unsupported model format version in " + stem.string());
    const auto config = EmbeddingConfig::from_json(meta.at("config"));
    std::vector<std::string> words;
    std::vector<std::size_t> counts;
    for (const auto& e : meta.at("vocab")) {
        words.push_back(e.at(0).get<std::string>());
        counts.push_back(e.at(1).get<std::size_t>());
    }
    auto input = read_vectors(with_suffix(stem, ".vec"), words, config.dim);
    auto output = read_vectors(with_suffix(stem, ".ctx.vec"), words, config.dim);
    return EmbeddingModel(std::move(words), std::move(counts), config.dim, std::move(input), std::move(output), config);
}

}  // namespace memetrace::semantics
