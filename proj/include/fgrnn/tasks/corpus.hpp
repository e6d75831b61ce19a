// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fgrnn::tasks {

inline constexpr std::string_view kEos = "<eos>";

/// Token streams of a language-modeling corpus; every sentence ends with <eos>.
struct LmCorpus {
  std::vector<std::string> train;
  std::vector<std::string> valid;
  std::vector<std::string> test;
};

/// Plain text, one sentence per line, tokenized with tokenize_text.
std::vector<std::string> read_lm_text(const std::filesystem::path& path);
std::vector<std::string> lm_tokens(std::string_view text);
void write_lm_text(const std::filesystem::path& path, const std::vector<std::string>& stream);

/// First-order Markov text over types "w0".."w<vocab-2>" plus <eos>. Every
/// type has `successors` preferred followers with Zipf weights; with
/// probability `noise` the next word is uniform instead.
struct SynthLmSpec {
  std::size_t vocab_size = 500;
  std::size_t tokens = 100000;
  std::size_t successors = 10;
  double zipf = 1.1;
  double noise = 0.05;
  std::size_t min_sentence = 8;
  std::size_t max_sentence = 30;
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;
};

LmCorpus synth_lm_corpus(const SynthLmSpec& spec);

struct SentimentExample {
  std::vector<std::string> tokens;
  int label = 0;
};

struct SentimentCorpus {
  std::vector<SentimentExample> train;
  std::vector<SentimentExample> valid;
  std::vector<SentimentExample> test;
};

/// JSON lines {"text": str, "label": 0|1}.
std::vector<SentimentExample> read_sentiment(const std::filesystem::path& path);
void write_sentiment(const std::filesystem::path& path, const std::vector<SentimentExample>& examples);

/// Neutral filler words plus positive and negative cue words; the label is
/// the majority polarity of the cues (never tied).
struct SynthSentimentSpec {
  std::size_t sentences = 600;
  std::size_t neutral_words = 80;
  std::size_t cue_words = 10;  // per polarity
  std::size_t min_length = 6;
  std::size_t max_length = 16;
  double valid_fraction = 0.15;
  double test_fraction = 0.15;
  std::uint64_t seed = 0;
};

SentimentCorpus synth_sentiment_corpus(const SynthSentimentSpec& spec);

}  // namespace fgrnn::tasks
