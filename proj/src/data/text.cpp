// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/data/text.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace fgrnn::data {

namespace {

bool is_word_byte(unsigned char ch) { return std::isalnum(ch) != 0 || ch >= 0x80; }

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

}  // namespace

bool has_word_char(std::string_view token) {
  return std::any_of(token.begin(), token.end(), [](char c) { return is_word_byte(static_cast<unsigned char>(c)); });
}

std::vector<std::string> tokenize_word(std::string_view word) {
  std::vector<std::string> runs;
  std::size_t i = 0;
  while (i < word.size()) {
    const bool word_run = is_word_byte(static_cast<unsigned char>(word[i]));
    std::size_t j = i;
    while (j < word.size() && is_word_byte(static_cast<unsigned char>(word[j])) == word_run &&
           !std::isspace(static_cast<unsigned char>(word[j]))) {
      ++j;
    }
    if (j == i) {  // whitespace
      ++i;
      continue;
    }
    runs.emplace_back(word.substr(i, j - i));
    i = j;
  }

  // Clitics: a lone apostrophe glues onto the following word run, and a
  // trailing "n" before "'t" moves over ("don't" -> "do" "n't").
  std::vector<std::string> out;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const bool apostrophe = runs[r] == "'" || runs[r] == "\xE2\x80\x99";
    if (apostrophe && r + 1 < runs.size() && has_word_char(runs[r + 1]) && !out.empty() && has_word_char(out.back())) {
      std::string clitic = runs[r] + runs[r + 1];
      if (iequals(runs[r + 1], "t") && out.back().size() > 1 &&
          std::tolower(static_cast<unsigned char>(out.back().back())) == 'n') {
        clitic = out.back().substr(out.back().size() - 1) + clitic;
        out.back().pop_back();
      }
      out.push_back(std::move(clitic));
      ++r;
      continue;
    }
    out.push_back(runs[r]);
  }
  return out;
}

std::vector<std::string> tokenize_text(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) {
      for (auto& t : tokenize_word(text.substr(i, j - i))) out.push_back(std::move(t));
    }
    i = j;
  }
  return out;
}

Vocab::Vocab() {
  tokens_.emplace_back(kUnkToken);
  index_.emplace(std::string(kUnkToken), kUnk);
}

Vocab Vocab::build(std::span<const std::string> tokens, std::size_t min_frequency) {
  const auto counts = count_tokens(tokens);
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, n] : counts) {
    if (n >= min_frequency && tok != kUnkToken) kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> ordered;
  for (auto& [tok, n] : kept) ordered.push_back(tok);
  return from_tokens(ordered);
}

Vocab Vocab::from_tokens(std::span<const std::string> tokens) {
  Vocab v;
  for (const auto& t : tokens) {
    if (v.index_.count(t)) throw std::invalid_argument("duplicate vocabulary token '" + t + "'");
    v.index_.emplace(t, static_cast<std::int32_t>(v.tokens_.size()));
    v.tokens_.push_back(t);
  }
  return v;
}

std::int32_t Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::int32_t> Vocab::encode(std::span<const std::string> tokens) const {
  std::vector<std::int32_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

FrequencyTable count_tokens(std::span<const std::string> tokens) {
  FrequencyTable counts;
  for (const auto& t : tokens) ++counts[t];
  return counts;
}

}  // namespace fgrnn::data
