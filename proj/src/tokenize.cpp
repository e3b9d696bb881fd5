#include <algorithm>
#include <iterator>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "memetrace/common.hpp"
#include "memetrace/text.hpp"

namespace memetrace::text {
namespace {

// NLTK "english" stopwords with apostrophes removed, plus "like".
// Sorted on first use for binary search.
constexpr std::string_view kStopwords[] = {
    "a",       "about",   "above",      "after",   "again",   "against", "ain",     "all",
    "am",      "an",      "and",        "any",     "are",     "aren",    "arent",   "as",
    "at",      "be",      "because",    "been",    "before",  "being",   "below",   "between",
    "both",    "but",     "by",         "can",     "couldn",  "couldnt", "d",       "did",
    "didn",    "didnt",   "do",         "does",    "doesn",   "doesnt",  "doing",   "don",
    "dont",    "down",    "during",     "each",    "few",     "for",     "from",    "further",
    "had",     "hadn",    "hadnt",      "has",     "hasn",    "hasnt",   "have",    "haven",
    "havent",  "having",  "he",         "her",     "here",    "hers",    "herself", "him",
    "himself", "his",     "how",        "i",       "if",      "in",      "into",    "is",
    "isn",     "isnt",    "it",         "its",     "itself",  "just",    "like",    "ll",
    "m",       "ma",      "me",         "mightn",  "more",    "most",    "mustn",   "my",
    "myself",  "needn",   "no",         "nor",     "not",     "now",     "o",       "of",
    "off",     "on",      "once",       "only",    "or",      "other",   "our",     "ours",
    "ourselves", "out",   "over",       "own",     "re",      "s",       "same",    "shan",
    "she",     "shes",    "should",     "shouldn", "so",      "some",    "such",    "t",
    "than",    "that",    "the",        "their",   "theirs",  "them",    "themselves", "then",
    "there",   "these",   "they",       "this",    "those",   "through", "to",      "too",
    "under",   "until",   "up",         "ve",      "very",    "was",     "wasn",    "we",
    "were",    "weren",   "what",       "when",    "where",   "which",   "while",   "who",
    "whom",    "why",     "will",       "with",    "won",     "wouldn",  "y",       "you",
    "your",    "yours",   "yourself",   "yourselves"};

const std::vector<std::string_view>& sorted_stopwords() {
    static const std::vector<std::string_view> words = [] {
        std::vector<std::string_view> w(std::begin(kStopwords), std::end(kStopwords));
        std::sort(w.begin(), w.end());
        w.erase(std::unique(w.begin(), w.end()), w.end());
        return w;
    }();
    return words;
}

// Decodes one UTF-8 code point starting at s[i]; advances i. Invalid bytes
// decode as themselves so no input is lost.
char32_t next_code_point(std::string_view s, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int len = 1;
    char32_t cp = b0;
    if (b0 >= 0xF0 && b0 < 0xF8) { len = 4; cp = b0 & 0x07; }
    else if (b0 >= 0xE0) { len = 3; cp = b0 & 0x0F; }
    else if (b0 >= 0xC0) { len = 2; cp = b0 & 0x1F; }
    if (len > 1) {
        if (i + len > s.size()) { ++i; return b0; }
        for (int k = 1; k < len; ++k) {
            const auto bk = static_cast<unsigned char>(s[i + k]);
            if ((bk & 0xC0) != 0x80) { ++i; return b0; }
            cp = (cp << 6) | (bk & 0x3F);
        }
    }
    i += static_cast<std::size_t>(len);
    return cp;
}

bool is_unicode_space(char32_t c) {
    return c == ' ' || (c >= 0x09 && c <= 0x0D) || c == 0x85 || c == 0xA0 || c == 0x1680 ||
           (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
           c == 0x205F || c == 0x3000;
}

bool is_punct(char32_t c) {
    if (c < 0x80) {
        return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
               (c >= 0x7B && c <= 0x7E);
    }
    // Latin-1 punctuation, general punctuation, CJK symbols and fullwidth forms.
    return (c >= 0xA1 && c <= 0xBF && c != 0xAA && c != 0xB5 && c != 0xBA) || c == 0xD7 ||
           c == 0xF7 || (c >= 0x2010 && c <= 0x205E) || (c >= 0x3001 && c <= 0x3003) ||
           (c >= 0xFF01 && c <= 0xFF0F);
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

// Normalizes one whitespace-delimited chunk; returns "" when nothing survives.
std::string normalize_word(const std::vector<char32_t>& chunk) {
    std::size_t lead = 0;
    while (lead < chunk.size() && chunk[lead] == U'(') ++lead;
    std::size_t trail = 0;
    while (trail < chunk.size() - lead && chunk[chunk.size() - 1 - trail] == U')') ++trail;
    const bool echo = lead >= 3 && trail >= 3;

    std::string core;
    for (std::size_t i = 0; i < chunk.size(); ++i) {
        char32_t c = chunk[i];
        if (is_punct(c)) continue;
        if (c >= U'A' && c <= U'Z') c = c - U'A' + U'a';
        append_utf8(core, c);
    }
    if (core.empty() || is_stopword(core)) return {};
    std::string stemmed = stem(core);
    if (stemmed.empty() || is_stopword(stemmed)) return {};
    if (echo) return "(((" + stemmed + ")))";
    return stemmed;
}

}  // namespace

std::span<const std::string_view> stopwords() { return sorted_stopwords(); }

bool is_stopword(std::string_view word) {
    const auto& w = sorted_stopwords();
    return std::binary_search(w.begin(), w.end(), word);
}

std::string stopword_list_id() {
    std::string joined;
    for (auto w : sorted_stopwords()) {
        joined += w;
        joined += '\n';
    }
    return "nltk-english-ascii/" + hex64(fnv1a64(joined)).substr(0, 8);
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::vector<char32_t> chunk;
    auto flush = [&] {
        if (chunk.empty()) return;
        std::string tok = normalize_word(chunk);
        if (!tok.empty()) tokens.push_back(std::move(tok));
        chunk.clear();
    };
    std::size_t i = 0;
    while (i < text.size()) {
        const char32_t cp = next_code_point(text, i);
        if (is_unicode_space(cp)) flush();
        else chunk.push_back(cp);
    }
    flush();
    return tokens;
}

}  // namespace memetrace::text
