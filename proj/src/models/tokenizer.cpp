#include "qeye/models/tokenizer.hpp"

#include <cctype>
#include <cstdint>
#include <stdexcept>

namespace qeye::models {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

HashingTokenizer::HashingTokenizer(int vocab_size, int piece_length)
    : vocab_size_(vocab_size), piece_length_(piece_length) {
  if (vocab_size <= kFirstHashedId) throw std::invalid_argument("tokenizer vocabulary too small");
  if (piece_length < 1) throw std::invalid_argument("tokenizer piece length must be positive");
}

std::vector<int> HashingTokenizer::tokenize_word(std::string_view word) const {
  std::string lower;
  lower.reserve(word.size());
  for (char c : word) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower.empty()) return {kUnkId};
  const auto buckets = static_cast<std::uint64_t>(vocab_size_ - kFirstHashedId);
  std::vector<int> ids;
  for (std::size_t start = 0; start < lower.size(); start += static_cast<std::size_t>(piece_length_)) {
    std::string piece = lower.substr(start, static_cast<std::size_t>(piece_length_));
    if (start > 0) piece = "##" + piece;
    ids.push_back(kFirstHashedId + static_cast<int>(fnv1a(piece) % buckets));
  }
  return ids;
}

HashingTokenizer::Encoded HashingTokenizer::tokenize_words(const std::vector<std::string>& words) const {
  Encoded out;
  for (std::size_t w = 0; w < words.size(); ++w) {
    out.first_token_of_word.push_back(static_cast<int>(out.ids.size()));
    for (int id : tokenize_word(words[w])) {
      out.ids.push_back(id);
      out.word_of_token.push_back(static_cast<int>(w));
    }
  }
  return out;
}

HashingTokenizer::Encoded HashingTokenizer::tokenize_text(std::string_view text) const {
  return tokenize_words(split_words(text));
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

}  // namespace qeye::models
