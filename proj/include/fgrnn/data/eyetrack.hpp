// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fgrnn/data/text.hpp"
#include "fgrnn/rng.hpp"

namespace fgrnn::data {

/// One presented sentence with total reading times (ms) per subject and
/// word. Zero means the subject skipped the word.
struct RawSentence {
  std::string corpus_id;
  std::string sentence_id;
  std::vector<std::string> words;
  std::vector<std::vector<double>> trt_ms;  // [subject][word]
};

struct RawFixationCorpus {
  std::vector<RawSentence> sentences;
  /// Distinct corpus ids in first-seen order.
  std::vector<std::string> corpus_ids() const;
  void validate() const;
};

class CorpusFormatError : public std::runtime_error {
 public:
  CorpusFormatError(const std::string& message, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + message : message), line(line) {}
  std::size_t line;
};

/// Line-delimited JSON, one sentence per line:
/// {"corpus_id": str, "sentence_id": str, "words": [str], "trt_ms": [[num]]}.
/// null durations load as 0.
RawFixationCorpus load_corpus(const std::filesystem::path& path);
RawFixationCorpus parse_corpus(std::string_view text);
void save_corpus(const std::filesystem::path& path, const RawFixationCorpus& corpus);
std::string format_corpus(const RawFixationCorpus& corpus);

inline constexpr double kInfiniteVariance = std::numeric_limits<double>::infinity();

/// One token with its aggregated, corpus-normalized duration statistics.
/// `bin` is 0 until quantile_discretize assigns 1..K.
struct FixationRecord {
  std::string token;
  double mean = 0.0;
  double variance = 0.0;
  int bin = 0;
  std::string corpus_id;
};

struct FixationSentence {
  std::string corpus_id;
  std::string sentence_id;
  std::vector<FixationRecord> records;
};

enum class NormalizationOrder {
  kSubjectsFirst,  // divide each subject's durations by the corpus mean, then average
  kAverageFirst,   // average raw durations, then divide by the corpus mean
};

/// Per-corpus mean normalization followed by per-word mean and population
/// variance across subjects. Throws if a corpus has only zero durations.
std::vector<FixationSentence> aggregate_subjects(const RawFixationCorpus& corpus,
                                                 NormalizationOrder order = NormalizationOrder::kSubjectsFirst);

/// Assigns K-quantile bins over every record of every sentence. Equal means
/// always share a bin. Throws if K < 2 or there are fewer records than K.
void quantile_discretize(std::vector<FixationSentence>& sentences, int levels);
/// Flat-list form: returns bins in input order.
std::vector<int> quantile_bins(const std::vector<double>& means, int levels);

using Tokenizer = std::function<std::vector<std::string>(std::string_view)>;

/// Splits a word record into task tokens. Sub-tokens with a word character
/// inherit mean, variance and bin; punctuation sub-tokens get mean 1,
/// infinite variance and bin 1.
std::vector<FixationRecord> align_tokens(const FixationRecord& word, const Tokenizer& tokenizer = tokenize_word);
std::vector<FixationSentence> align_sentences(const std::vector<FixationSentence>& sentences,
                                              const Tokenizer& tokenizer = tokenize_word);

struct SplitSpec {
  double train_fraction = 0.75;
  std::uint64_t seed = 0;
};

template <typename Item>
struct Split {
  std::vector<Item> train;
  std::vector<Item> test;
};

/// Deterministic shuffled partition; train gets round(n * fraction) items.
std::vector<std::size_t> split_indices(std::size_t n, const SplitSpec& spec, std::size_t* train_count);

template <typename Item>
Split<Item> split_train_test(const std::vector<Item>& items, const SplitSpec& spec) {
  std::size_t n_train = 0;
  const auto order = split_indices(items.size(), spec, &n_train);
  Split<Item> out;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_train ? out.train : out.test).push_back(items[order[i]]);
  return out;
}

/// Output of the `prep` pipeline: aligned, discretized sentences split into
/// train and test. Stored as JSON lines with per-token arrays; infinite
/// variance is written as the string "inf".
struct ProcessedCorpus {
  int levels = 0;
  std::vector<FixationSentence> train;
  std::vector<FixationSentence> test;
};

std::string format_processed(const ProcessedCorpus& corpus);
ProcessedCorpus parse_processed(std::string_view text);
void save_processed(const std::filesystem::path& path, const ProcessedCorpus& corpus);
ProcessedCorpus load_processed(const std::filesystem::path& path);

struct PrepOptions {
  int levels = 4;
  SplitSpec split;
  NormalizationOrder order = NormalizationOrder::kSubjectsFirst;
  Tokenizer tokenizer = tokenize_word;
};

/// normalize -> aggregate -> discretize -> align -> split.
ProcessedCorpus prepare_corpus(const RawFixationCorpus& corpus, const PrepOptions& options);

struct SynthFixationSpec {
  std::size_t vocab_size = 60;
  std::size_t sentence_count = 200;
  std::size_t subject_count = 3;
  double noise = 0.1;  // relative per-subject noise on each TRT
  std::uint64_t seed = 0;
  int levels = 4;      // number of latent duration classes
  std::size_t min_length = 5;
  std::size_t max_length = 15;
  std::string corpus_id = "synthetic";
  std::string token_prefix = "w";
};

/// Latent class of synthetic token type `type` (class = type mod levels).
int synth_token_class(std::size_t type, int levels);
/// Latent duration in ms of a class.
double synth_class_duration(int cls);

/// Sentences over tokens "<prefix><type>"; every token's TRT is its class
/// duration times (1 + noise * N(0,1)), clipped at 0. Classes occur in
/// counts that differ by at most one.
RawFixationCorpus synth_fixation_corpus(const SynthFixationSpec& spec);

}  // namespace fgrnn::data
