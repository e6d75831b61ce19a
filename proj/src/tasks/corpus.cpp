// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/tasks/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fgrnn/data/text.hpp"
#include "fgrnn/rng.hpp"

namespace fgrnn::tasks {

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

/// Index drawn from unnormalized weights.
std::size_t draw(CounterRng& rng, const std::vector<double>& cumulative) {
  const double u = rng.uniform() * cumulative.back();
  return static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
}

template <typename Item>
void split_three(std::vector<Item> items, double valid_fraction, double test_fraction, std::vector<Item>& train,
                 std::vector<Item>& valid, std::vector<Item>& test) {
  const auto n = items.size();
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  const auto n_valid = static_cast<std::size_t>(std::llround(static_cast<double>(n) * valid_fraction));
  if (n_test + n_valid >= n) throw std::invalid_argument("synthetic corpus too small for its splits");
  train.assign(items.begin(), items.end() - static_cast<std::ptrdiff_t>(n_test + n_valid));
  valid.assign(items.end() - static_cast<std::ptrdiff_t>(n_test + n_valid), items.end() - static_cast<std::ptrdiff_t>(n_test));
  test.assign(items.end() - static_cast<std::ptrdiff_t>(n_test), items.end());
}

}  // namespace

std::vector<std::string> lm_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find('\n', start), text.size());
    const auto line = text.substr(start, end - start);
    auto toks = data::tokenize_text(line);
    if (!toks.empty()) {
      out.insert(out.end(), toks.begin(), toks.end());
      out.emplace_back(kEos);
    }
    start = end + 1;
  }
  return out;
}

std::vector<std::string> read_lm_text(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  auto out = lm_tokens(ss.str());
  if (out.empty()) throw std::runtime_error(path.string() + ": no tokens");
  return out;
}

void write_lm_text(const std::filesystem::path& path, const std::vector<std::string>& stream) {
  auto out = open_out(path);
  bool first = true;
  for (const auto& tok : stream) {
    if (tok == kEos) {
      out << '\n';
      first = true;
      continue;
    }
    if (!first) out << ' ';
    out << tok;
    first = false;
  }
  if (!first) out << '\n';
}

LmCorpus synth_lm_corpus(const SynthLmSpec& spec) {
  if (spec.vocab_size < 3 || spec.successors == 0 || spec.min_sentence == 0 || spec.max_sentence < spec.min_sentence) {
    throw std::invalid_argument("synthetic LM spec is degenerate");
  }
  const std::size_t words = spec.vocab_size - 1;
  CounterRng rng(spec.seed, "synth_lm");
  std::vector<std::vector<std::size_t>> next(words);
  std::vector<double> zipf_cdf;
  double acc = 0.0;
  for (std::size_t r = 1; r <= spec.successors; ++r) {
    acc += 1.0 / std::pow(static_cast<double>(r), spec.zipf);
    zipf_cdf.push_back(acc);
  }
  for (auto& succ : next) {
    for (std::size_t r = 0; r < spec.successors; ++r) succ.push_back(static_cast<std::size_t>(rng.uniform_int(0, words - 1)));
  }
  std::vector<std::vector<std::string>> sentences;
  std::size_t total = 0;
  while (total < spec.tokens) {
    const auto len = static_cast<std::size_t>(rng.uniform_int(spec.min_sentence, spec.max_sentence));
    std::vector<std::string> s;
    auto w = static_cast<std::size_t>(rng.uniform_int(0, words - 1));
    for (std::size_t i = 0; i < len; ++i) {
      s.push_back("w" + std::to_string(w));
      w = rng.bernoulli(spec.noise) ? static_cast<std::size_t>(rng.uniform_int(0, words - 1))
                                    : next[w][draw(rng, zipf_cdf)];
    }
    s.emplace_back(kEos);
    total += s.size();
    sentences.push_back(std::move(s));
  }
  std::vector<std::vector<std::string>> tr, va, te;
  split_three(std::move(sentences), spec.valid_fraction, spec.test_fraction, tr, va, te);
  LmCorpus out;
  auto join = [](const std::vector<std::vector<std::string>>& from, std::vector<std::string>& to) {
    for (const auto& s : from) to.insert(to.end(), s.begin(), s.end());
  };
  join(tr, out.train);
  join(va, out.valid);
  join(te, out.test);
  return out;
}

std::vector<SentimentExample> read_sentiment(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<SentimentExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(where + e.what());
    }
    if (!j.contains("text") || !j.contains("label")) throw std::runtime_error(where + "needs 'text' and 'label'");
    SentimentExample ex;
    ex.tokens = data::tokenize_text(j["text"].get<std::string>());
    ex.label = j["label"].get<int>();
    if (ex.label != 0 && ex.label != 1) throw std::runtime_error(where + "label must be 0 or 1");
    if (ex.tokens.empty()) throw std::runtime_error(where + "empty text");
    out.push_back(std::move(ex));
  }
  if (out.empty()) throw std::runtime_error(path.string() + ": no examples");
  return out;
}

void write_sentiment(const std::filesystem::path& path, const std::vector<SentimentExample>& examples) {
  auto out = open_out(path);
  for (const auto& ex : examples) {
    std::string text;
    for (const auto& t : ex.tokens) text += (text.empty() ? "" : " ") + t;
    nlohmann::ordered_json j;
    j["text"] = text;
    j["label"] = ex.label;
    out << j.dump() << '\n';
  }
}

SentimentCorpus synth_sentiment_corpus(const SynthSentimentSpec& spec) {
  if (spec.neutral_words == 0 || spec.cue_words == 0 || spec.min_length < 2 || spec.max_length < spec.min_length) {
    throw std::invalid_argument("synthetic sentiment spec is degenerate");
  }
  CounterRng rng(spec.seed, "synth_sentiment");
  std::vector<SentimentExample> all;
  for (std::size_t i = 0; i < spec.sentences; ++i) {
    SentimentExample ex;
    ex.label = static_cast<int>(i % 2);
    const auto len = static_cast<std::size_t>(rng.uniform_int(spec.min_length, spec.max_length));
    // An odd number of cues with a strict majority for the label.
    const auto cues = static_cast<std::size_t>(rng.uniform_int(0, 1)) * 2 + 1;
    const std::size_t majority = cues / 2 + 1 + static_cast<std::size_t>(rng.uniform_int(0, cues / 2));
    std::vector<std::string> toks;
    for (std::size_t c = 0; c < cues; ++c) {
      const bool positive = (c < majority) == (ex.label == 1);
      toks.push_back((positive ? "pos" : "neg") + std::to_string(rng.uniform_int(0, spec.cue_words - 1)));
    }
    while (toks.size() < len) toks.push_back("n" + std::to_string(rng.uniform_int(0, spec.neutral_words - 1)));
    shuffle(toks.begin(), toks.end(), rng);
    ex.tokens = std::move(toks);
    all.push_back(std::move(ex));
  }
  shuffle(all.begin(), all.end(), rng);
  SentimentCorpus out;
  split_three(std::move(all), spec.valid_fraction, spec.test_fraction, out.train, out.valid, out.test);
  return out;
}

}  // namespace fgrnn::tasks
