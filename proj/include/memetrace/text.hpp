#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace memetrace::text {

/// One pass of the classic Porter (1980) stemmer over a lowercase ASCII word.
/// Words that contain non [a-z] bytes are returned unchanged.
std::string porter_stem(std::string_view word);

/// Applies porter_stem until the word stops changing, so the result w
/// satisfies porter_stem(w) == w.
std::string stem(std::string_view word);

/// The bundled English stopword list (sorted, lowercase).
std::span<const std::string_view> stopwords();
bool is_stopword(std::string_view word);

/// Identifier of the bundled stopword list, recorded in run metadata.
std::string stopword_list_id();

/// Lowercases, strips punctuation, drops stopwords and stems. Tokens are split
/// on Unicode whitespace. A word wrapped in runs of at least three parentheses,
/// e.g. "(((word)))", keeps a "(((" / ")))" wrapper around its stem.
std::vector<std::string> tokenize(std::string_view text);

}  // namespace memetrace::text
