// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "fgrnn/data/eyetrack.hpp"

using namespace fgrnn;
using namespace fgrnn::data;

namespace {

std::filesystem::path temp_file(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> tokens_of(const std::vector<FixationRecord>& records) {
  std::vector<std::string> out;
  for (const auto& r : records) out.push_back(r.token);
  return out;
}

}  // namespace

TEST(LoadCorpus, EmptyFileIsAnError) {
  const auto path = temp_file("fgrnn_empty.jsonl");
  std::ofstream(path).close();
  EXPECT_THROW(load_corpus(path), CorpusFormatError);
  std::filesystem::remove(path);
}

TEST(LoadCorpus, RoundTripIsBitwise) {
  RawFixationCorpus corpus;
  corpus.sentences.push_back({"dundee", "s1", {"The", "cat."}, {{213.25, 0.1 + 0.2}}});
  const auto path = temp_file("fgrnn_roundtrip.jsonl");
  save_corpus(path, corpus);
  const auto loaded = load_corpus(path);
  ASSERT_EQ(loaded.sentences.size(), 1u);
  EXPECT_EQ(loaded.sentences[0].words, corpus.sentences[0].words);
  EXPECT_EQ(loaded.sentences[0].trt_ms, corpus.sentences[0].trt_ms);  // exact doubles
  const auto first = read_all(path);
  save_corpus(path, loaded);
  EXPECT_EQ(read_all(path), first);
  std::filesystem::remove(path);
}

TEST(LoadCorpus, SkippedWordKeepsZero) {
  const auto corpus = parse_corpus(
      R"({"corpus_id":"c","sentence_id":"1","words":["the","dog"],"trt_ms":[[0,250],[180,null]]})");
  EXPECT_EQ(corpus.sentences[0].trt_ms[0][0], 0.0);
  EXPECT_EQ(corpus.sentences[0].trt_ms[1][1], 0.0);
  EXPECT_EQ(corpus.sentences[0].trt_ms[1][0], 180.0);
}

TEST(LoadCorpus, SchemaViolationsReportLine) {
  const std::string good = R"({"corpus_id":"c","sentence_id":"1","words":["a"],"trt_ms":[[1]]})";
  const std::vector<std::string> bad = {
      R"({"corpus_id":"c","sentence_id":"2","words":["a","b"],"trt_ms":[[1]]})",
      R"({"corpus_id":"c","sentence_id":"2","words":["a"]})",
      R"({"corpus_id":"c","sentence_id":"2","words":["a"],"trt_ms":[[-4]]})",
      R"({"corpus_id":"c","sentence_id":"2","words":["a"],"trt_ms":[["x"]]})",
      R"(not json)",
  };
  for (const auto& line : bad) {
    try {
      parse_corpus(good + "\n" + line + "\n");
      FAIL() << line;
    } catch (const CorpusFormatError& e) {
      EXPECT_EQ(e.line, 2u) << e.what();
    }
  }
}

TEST(Aggregate, SingleSubjectHasZeroVariance) {
  const auto corpus = synth_fixation_corpus({.vocab_size = 20, .sentence_count = 10, .subject_count = 1, .seed = 3});
  for (const auto& s : aggregate_subjects(corpus)) {
    for (const auto& r : s.records) EXPECT_EQ(r.variance, 0.0);
  }
}

TEST(Aggregate, HandComputedTwoSubjects) {
  RawFixationCorpus corpus;
  corpus.sentences.push_back({"c", "1", {"word", "other"}, {{100, 200}, {300, 200}}});
  const auto out = aggregate_subjects(corpus);
  const auto& r = out[0].records[0];
  EXPECT_DOUBLE_EQ(r.mean, 1.0);
  EXPECT_DOUBLE_EQ(r.variance, 0.25);
}

TEST(Aggregate, UniformCorpusNormalizesToOne) {
  RawFixationCorpus corpus;
  corpus.sentences.push_back({"c", "1", {"a", "b", "c"}, {{150, 150, 150}, {150, 150, 150}}});
  for (const auto& r : aggregate_subjects(corpus)[0].records) EXPECT_DOUBLE_EQ(r.mean, 1.0);
}

TEST(Aggregate, AllZeroDurationsRejected) {
  RawFixationCorpus corpus;
  corpus.sentences.push_back({"c", "1", {"a"}, {{0.0}}});
  EXPECT_THROW(aggregate_subjects(corpus), std::invalid_argument);
}

TEST(Aggregate, GrandMeanIsOnePerCorpus) {
  auto a = synth_fixation_corpus({.sentence_count = 40, .subject_count = 4, .noise = 0.3, .seed = 1, .corpus_id = "a"});
  auto b = synth_fixation_corpus({.sentence_count = 30, .subject_count = 2, .noise = 0.2, .seed = 2, .corpus_id = "b"});
  for (auto& s : b.sentences) {
    for (auto& row : s.trt_ms) {
      for (auto& v : row) v *= 3.0;
    }
    a.sentences.push_back(s);
  }
  // With equal subjects per sentence, the mean of per-word means equals the
  // mean over all normalized subject durations.
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& s : aggregate_subjects(a)) {
    for (const auto& r : s.records) {
      acc[s.corpus_id].first += r.mean;
      ++acc[s.corpus_id].second;
    }
  }
  for (const auto& [id, sc] : acc) EXPECT_NEAR(sc.first / static_cast<double>(sc.second), 1.0, 1e-9) << id;
}

TEST(Quantiles, SortAndSplitOracles) {
  EXPECT_EQ(quantile_bins({10, 20, 30, 40}, 2), (std::vector<int>{1, 1, 2, 2}));
  EXPECT_EQ(quantile_bins({10, 20, 30, 40}, 4), (std::vector<int>{1, 2, 3, 4}));
  EXPECT_EQ(quantile_bins({40, 10, 30, 20}, 2), (std::vector<int>{2, 1, 2, 1}));
  EXPECT_EQ(quantile_bins({5, 5, 5, 5}, 2), (std::vector<int>{1, 1, 1, 1}));
}

TEST(Quantiles, TiesShareABin) {
  const auto bins = quantile_bins({1, 2, 2, 2, 3, 4}, 3);
  EXPECT_EQ(bins[1], bins[2]);
  EXPECT_EQ(bins[2], bins[3]);
}

TEST(Quantiles, ErrorsOnTooFewRecordsOrLevels) {
  EXPECT_THROW(quantile_bins({1, 2}, 3), std::invalid_argument);
  EXPECT_THROW(quantile_bins({1, 2, 3}, 1), std::invalid_argument);
}

TEST(Quantiles, BalancedAndMonotoneOnDistinctInputs) {
  CounterRng rng(9, "quantile");
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(12, 300));
    const int k = static_cast<int>(rng.uniform_int(2, 12));
    std::vector<double> means;
    for (std::size_t i = 0; i < n; ++i) means.push_back(rng.uniform(0.0, 5.0) + 1e-9 * static_cast<double>(i));
    const auto bins = quantile_bins(means, k);
    std::vector<std::size_t> counts(static_cast<std::size_t>(k));
    for (int b : bins) {
      ASSERT_GE(b, 1);
      ASSERT_LE(b, k);
      ++counts[static_cast<std::size_t>(b - 1)];
    }
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    EXPECT_LE(*hi - *lo, 1u);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (means[i] <= means[j]) ASSERT_LE(bins[i], bins[j]);
      }
    }
  }
}

TEST(Tokenize, PunctuationAndClitics) {
  EXPECT_EQ(tokenize_word("hello!"), (std::vector<std::string>{"hello", "!"}));
  EXPECT_EQ(tokenize_word("I'm"), (std::vector<std::string>{"I", "'m"}));
  EXPECT_EQ(tokenize_word("don't"), (std::vector<std::string>{"do", "n't"}));
  EXPECT_EQ(tokenize_word("..."), (std::vector<std::string>{"..."}));
  EXPECT_EQ(tokenize_word("(yes),"), (std::vector<std::string>{"(", "yes", "),"}));
  EXPECT_EQ(tokenize_text("It's  fine."), (std::vector<std::string>{"It", "'s", "fine", "."}));
}

TEST(Align, HelloBangFixture) {
  const auto out = align_tokens({"hello!", 1.2, 0.3, 3, "c"});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].token, "hello");
  EXPECT_EQ(out[0].mean, 1.2);
  EXPECT_EQ(out[0].variance, 0.3);
  EXPECT_EQ(out[0].bin, 3);
  EXPECT_EQ(out[1].token, "!");
  EXPECT_EQ(out[1].mean, 1.0);
  EXPECT_TRUE(std::isinf(out[1].variance));
  EXPECT_EQ(out[1].bin, 1);
}

TEST(Align, CliticInheritsDuration) {
  const auto out = align_tokens({"I'm", 0.8, 0.1, 2, "c"});
  EXPECT_EQ(tokens_of(out), (std::vector<std::string>{"I", "'m"}));
  EXPECT_EQ(out[1].mean, 0.8);
  EXPECT_EQ(out[1].bin, 2);
}

TEST(Align, EllipsisIsOnePunctuationToken) {
  const auto out = align_tokens({"...", 0.4, 0.0, 2, "c"});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].mean, 1.0);
  EXPECT_TRUE(std::isinf(out[0].variance));
}

TEST(Align, ZeroTokensIsAnError) {
  EXPECT_THROW(align_tokens({"", 1.0, 0.0, 1, "c"}), std::invalid_argument);
  auto none = [](std::string_view) { return std::vector<std::string>{}; };
  EXPECT_THROW(align_tokens({"word", 1.0, 0.0, 1, "c"}, none), std::invalid_argument);
}

TEST(Align, EveryWordMapsToAtLeastOneToken) {
  const std::vector<std::string> words = {"a", "b.", "\"quoted\"", "x-ray", "can't", "!?", "U.S."};
  for (const auto& w : words) EXPECT_GE(align_tokens({w, 1.0, 0.0, 1, "c"}).size(), 1u) << w;
}

TEST(Split, SeventyFiveTwentyFiveDeterministicPartition) {
  std::vector<int> items(100);
  std::iota(items.begin(), items.end(), 0);
  const auto a = split_train_test(items, {0.75, 5});
  const auto b = split_train_test(items, {0.75, 5});
  EXPECT_EQ(a.train.size(), 75u);
  EXPECT_EQ(a.test.size(), 25u);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  std::set<int> all(a.train.begin(), a.train.end());
  for (int v : a.test) EXPECT_TRUE(all.insert(v).second);
  EXPECT_EQ(all.size(), 100u);
  EXPECT_THROW(split_train_test(items, {1.0, 5}), std::invalid_argument);
}

TEST(Synth, NoiselessCorpusHasZeroVariance) {
  const auto corpus = synth_fixation_corpus({.subject_count = 4, .noise = 0.0, .seed = 2});
  for (const auto& s : aggregate_subjects(corpus)) {
    for (const auto& r : s.records) EXPECT_EQ(r.variance, 0.0);
  }
}

TEST(Synth, BinsNearUniform) {
  const int k = 4;
  const auto corpus = synth_fixation_corpus({.sentence_count = 123, .noise = 0.0, .seed = 4, .levels = k});
  auto sentences = aggregate_subjects(corpus);
  quantile_discretize(sentences, k);
  std::vector<std::size_t> counts(k);
  for (const auto& s : sentences) {
    for (const auto& r : s.records) ++counts[static_cast<std::size_t>(r.bin - 1)];
  }
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  EXPECT_LE(*hi - *lo, 1u);
}

TEST(Synth, FixedSeedIsDeterministic) {
  const SynthFixationSpec spec{.seed = 77};
  EXPECT_EQ(format_corpus(synth_fixation_corpus(spec)), format_corpus(synth_fixation_corpus(spec)));
  EXPECT_NE(format_corpus(synth_fixation_corpus(spec)), format_corpus(synth_fixation_corpus({.seed = 78})));
}

TEST(Prep, ProcessedRoundTripKeepsInfiniteVariance) {
  const auto corpus = synth_fixation_corpus({.sentence_count = 20, .seed = 5});
  auto raw = corpus;
  raw.sentences[0].words[0] += ",";
  const auto processed = prepare_corpus(raw, {.levels = 3, .split = {0.75, 1}});
  EXPECT_EQ(processed.train.size(), 15u);
  const auto text = format_processed(processed);
  EXPECT_NE(text.find("\"inf\""), std::string::npos);
  EXPECT_EQ(format_processed(parse_processed(text)), text);
}

TEST(Vocab, MinFrequencyAndUnknown) {
  const std::vector<std::string> tokens = {"a", "b", "a", "c", "b", "a"};
  const auto v = Vocab::build(tokens, 2);
  EXPECT_EQ(v.size(), 3u);
  EXPECT_EQ(v.token(1), "a");
  EXPECT_EQ(v.token(2), "b");
  EXPECT_EQ(v.id("c"), Vocab::kUnk);
  EXPECT_EQ(v.id("zzz"), Vocab::kUnk);
}
