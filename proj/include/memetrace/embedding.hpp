#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "memetrace/corpus.hpp"

namespace memetrace::semantics {

struct EmbeddingConfig {
    std::size_t dim = 100;
    std::size_t window = 7;
    /// 0 selects max(5, 500 * corpus_tokens / 1e9).
    std::size_t min_count = 0;
    std::size_t epochs = 5;
    std::size_t negative = 5;
    double learning_rate = 0.025;
    std::uint64_t seed = 1;
    /// 1 = deterministic. More workers train lock-free and are not reproducible.
    std::size_t workers = 1;

    nlohmann::json to_json() const;
    static EmbeddingConfig from_json(const nlohmann::json& j);
};

std::size_t default_min_count(std::size_t corpus_tokens);

/// Trained CBOW model. Immutable after training; safe for concurrent queries.
class EmbeddingModel {
public:
    EmbeddingModel() = default;
    EmbeddingModel(std::vector<std::string> words, std::vector<std::size_t> counts, std::size_t dim,
                   std::vector<float> input, std::vector<float> output, EmbeddingConfig config);

    std::size_t size() const { return words_.size(); }
    std::size_t dim() const { return dim_; }
    const std::vector<std::string>& words() const { return words_; }
    const std::vector<std::size_t>& counts() const { return counts_; }
    const EmbeddingConfig& config() const { return config_; }
    std::size_t min_count() const { return config_.min_count; }

    bool contains(std::string_view word) const { return index_.contains(std::string(word)); }
    /// Throws InvalidArgument naming the word when it is out of vocabulary.
    std::size_t index_of(std::string_view word) const;

    std::span<const float> input_vector(std::size_t i) const { return {input_.data() + i * dim_, dim_}; }
    std::span<const float> output_vector(std::size_t i) const { return {output_.data() + i * dim_, dim_}; }
    const std::vector<float>& input_matrix() const { return input_; }
    const std::vector<float>& output_matrix() const { return output_; }

    /// Cosine of two rows of the input matrix.
    double cosine(std::size_t a, std::size_t b) const;

private:
    std::vector<std::string> words_;
    std::vector<std::size_t> counts_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t dim_ = 0;
    std::vector<float> input_;
    std::vector<float> output_;
    std::vector<double> norms_;
    EmbeddingConfig config_;
};

/// Trains CBOW with negative sampling over token sentences. Throws
/// InvalidArgument when no token reaches min_count.
EmbeddingModel train_cbow(std::span<const std::vector<std::string>> sentences, EmbeddingConfig config);
EmbeddingModel train_cbow(const corpus::Corpus& corpus, EmbeddingConfig config);

double similarity(const EmbeddingModel& model, std::string_view a, std::string_view b);

using ScoredWord = std::pair<std::string, double>;

/// k most similar words to `word`, excluding it; ties broken lexicographically.
std::vector<ScoredWord> top_similar(const EmbeddingModel& model, std::string_view word, std::size_t k);

/// Full softmax over output vectors given the mean of the in-vocabulary context
/// input vectors. Returns the k most probable words.
std::vector<ScoredWord> predict_context(const EmbeddingModel& model, std::span<const std::string> context,
                                        std::size_t k);
/// The full probability vector, indexed like model.words().
std::vector<double> context_distribution(const EmbeddingModel& model, std::span<const std::string> context);

/// Sampled distribution of pairwise cosine similarities.
struct SimilarityCdf {
    double fraction = 0.0;
    double threshold = 0.0;
    std::size_t sample_count = 0;
    bool exhaustive = false;
    std::vector<double> sorted_samples;  // ascending

    /// rows of (similarity, cumulative fraction) on a uniform quantile grid
    std::vector<std::pair<double, double>> curve(std::size_t points = 201) const;
};

/// Estimates the (1 - f) quantile of pairwise cosine similarity from uniform
/// random pairs (all pairs when sample_pairs covers them).
SimilarityCdf threshold_for_fraction(const EmbeddingModel& model, double fraction, std::size_t sample_pairs,
                                     std::uint64_t seed);

// Model files: <stem>.vec (input vectors), <stem>.ctx.vec (output vectors),
// <stem>.json (metadata). Vector files use the word2vec text layout.
inline constexpr int kModelFormatVersion = 1;
void save_model(const EmbeddingModel& model, const std::filesystem::path& stem);
EmbeddingModel load_model(const std::filesystem::path& stem);

}  // namespace memetrace::semantics
