#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace qeye::models {

/// Reserved token ids shared by every encoder.
inline constexpr int kPadId = 0;
inline constexpr int kClsId = 1;
inline constexpr int kSepId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kFirstHashedId = 8;

/// Deterministic sub-word tokenizer: words are lower-cased and cut into
/// pieces of at most `piece_length` characters; each piece hashes into the
/// vocabulary. Continuation pieces hash with a "##" prefix.
class HashingTokenizer {
 public:
  explicit HashingTokenizer(int vocab_size, int piece_length = 4);

  int vocab_size() const { return vocab_size_; }
  std::vector<int> tokenize_word(std::string_view word) const;

  struct Encoded {
    std::vector<int> ids;
    /// Word index (in whitespace order) of every produced token.
    std::vector<int> word_of_token;
    /// Index of each word's first token.
    std::vector<int> first_token_of_word;
  };
  Encoded tokenize_words(const std::vector<std::string>& words) const;
  Encoded tokenize_text(std::string_view text) const;

 private:
  int vocab_size_;
  int piece_length_;
};

std::vector<std::string> split_words(std::string_view text);

}  // namespace qeye::models
