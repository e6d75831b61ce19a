// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fgrnn::data {

/// True when `token` contains at least one ASCII letter or digit (bytes
/// >= 0x80 also count, so UTF-8 words are never treated as punctuation).
bool has_word_char(std::string_view token);

/// Splits one presented word into task tokens: runs of word characters,
/// runs of punctuation ("..." stays whole), and English clitics
/// ("I'm" -> "I" "'m", "don't" -> "do" "n't").
std::vector<std::string> tokenize_word(std::string_view word);

/// Whitespace split followed by tokenize_word.
std::vector<std::string> tokenize_text(std::string_view text);

/// Token <-> id map. Id 0 is the unknown token.
class Vocab {
 public:
  static constexpr std::int32_t kUnk = 0;
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocab();
  /// Keeps tokens seen at least `min_frequency` times, ordered by frequency
  /// (descending), ties broken lexicographically.
  static Vocab build(std::span<const std::string> tokens, std::size_t min_frequency = 2);
  /// Exact list of tokens after the unknown token.
  static Vocab from_tokens(std::span<const std::string> tokens);

  std::int32_t id(std::string_view token) const;
  const std::string& token(std::int32_t id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::vector<std::int32_t> encode(std::span<const std::string> tokens) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

/// Token frequency table, e.g. counted over an eye-tracking corpus.
using FrequencyTable = std::map<std::string, std::size_t>;
FrequencyTable count_tokens(std::span<const std::string> tokens);

}  // namespace fgrnn::data
