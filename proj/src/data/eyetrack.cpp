// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/data/eyetrack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace fgrnn::data {

using Json = nlohmann::ordered_json;

std::vector<std::string> RawFixationCorpus::corpus_ids() const {
  std::vector<std::string> ids;
  for (const auto& s : sentences) {
    if (std::find(ids.begin(), ids.end(), s.corpus_id) == ids.end()) ids.push_back(s.corpus_id);
  }
  return ids;
}

void RawFixationCorpus::validate() const {
  for (const auto& s : sentences) {
    if (s.words.empty()) throw std::invalid_argument("sentence '" + s.sentence_id + "' has no words");
    if (s.trt_ms.empty()) throw std::invalid_argument("sentence '" + s.sentence_id + "' has no subjects");
    for (const auto& subject : s.trt_ms) {
      if (subject.size() != s.words.size()) {
        throw std::invalid_argument("sentence '" + s.sentence_id + "': subject array of length " +
                                    std::to_string(subject.size()) + " for " + std::to_string(s.words.size()) +
                                    " words");
      }
      for (double v : subject) {
        if (!std::isfinite(v) || v < 0.0) {
          throw std::invalid_argument("sentence '" + s.sentence_id + "': durations must be finite and >= 0");
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Interchange format

namespace {

RawSentence parse_line(const std::string& line, std::size_t line_no) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw CorpusFormatError(std::string("malformed JSON: ") + e.what(), line_no);
  }
  if (!j.is_object()) throw CorpusFormatError("record must be an object", line_no);
  auto require = [&](const char* key) -> const Json& {
    auto it = j.find(key);
    if (it == j.end()) throw CorpusFormatError(std::string("missing field '") + key + "'", line_no);
    return *it;
  };
  RawSentence s;
  const auto& corpus = require("corpus_id");
  const auto& sid = require("sentence_id");
  if (!corpus.is_string()) throw CorpusFormatError("corpus_id must be a string", line_no);
  if (!sid.is_string()) throw CorpusFormatError("sentence_id must be a string", line_no);
  s.corpus_id = corpus.get<std::string>();
  s.sentence_id = sid.get<std::string>();

  const auto& words = require("words");
  if (!words.is_array() || words.empty()) throw CorpusFormatError("words must be a non-empty array", line_no);
  for (const auto& w : words) {
    if (!w.is_string()) throw CorpusFormatError("words must hold strings", line_no);
    s.words.push_back(w.get<std::string>());
  }

  const auto& trt = require("trt_ms");
  if (!trt.is_array() || trt.empty()) throw CorpusFormatError("trt_ms must be a non-empty array of subjects", line_no);
  for (std::size_t subj = 0; subj < trt.size(); ++subj) {
    const auto& row = trt[subj];
    if (!row.is_array()) throw CorpusFormatError("trt_ms entries must be arrays", line_no);
    if (row.size() != s.words.size()) {
      throw CorpusFormatError("subject " + std::to_string(subj) + " has " + std::to_string(row.size()) +
                                  " durations for " + std::to_string(s.words.size()) + " words",
                              line_no);
    }
    std::vector<double> values;
    for (const auto& v : row) {
      if (v.is_null()) {
        values.push_back(0.0);
        continue;
      }
      if (!v.is_number()) throw CorpusFormatError("durations must be numbers", line_no);
      const double d = v.get<double>();
      if (!std::isfinite(d) || d < 0.0) throw CorpusFormatError("durations must be finite and >= 0", line_no);
      values.push_back(d);
    }
    s.trt_ms.push_back(std::move(values));
  }
  return s;
}

}  // namespace

RawFixationCorpus parse_corpus(std::string_view text) {
  RawFixationCorpus corpus;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    corpus.sentences.push_back(parse_line(line, line_no));
  }
  if (corpus.sentences.empty()) throw CorpusFormatError("corpus contains no sentences", 0);
  return corpus;
}

RawFixationCorpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str());
}

std::string format_corpus(const RawFixationCorpus& corpus) {
  std::string out;
  for (const auto& s : corpus.sentences) {
    Json j;
    j["corpus_id"] = s.corpus_id;
    j["sentence_id"] = s.sentence_id;
    j["words"] = s.words;
    j["trt_ms"] = s.trt_ms;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_corpus(const std::filesystem::path& path, const RawFixationCorpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write corpus '" + path.string() + "'");
  out << format_corpus(corpus);
}

// ---------------------------------------------------------------------------
// Aggregation

std::vector<FixationSentence> aggregate_subjects(const RawFixationCorpus& corpus, NormalizationOrder order) {
  corpus.validate();
  std::map<std::string, double> corpus_mean;
  {
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (const auto& s : corpus.sentences) {
      auto& [total, count] = acc[s.corpus_id];
      for (const auto& subject : s.trt_ms) {
        for (double v : subject) total += v;
        count += subject.size();
      }
    }
    for (const auto& [id, tc] : acc) {
      if (tc.first <= 0.0) throw std::invalid_argument("corpus '" + id + "' has only zero durations");
      corpus_mean[id] = tc.first / static_cast<double>(tc.second);
    }
  }

  std::vector<FixationSentence> out;
  for (const auto& s : corpus.sentences) {
    const double scale = corpus_mean.at(s.corpus_id);
    const double n = static_cast<double>(s.trt_ms.size());
    FixationSentence fs{s.corpus_id, s.sentence_id, {}};
    for (std::size_t w = 0; w < s.words.size(); ++w) {
      double mean = 0.0;
      for (const auto& subject : s.trt_ms) {
        mean += order == NormalizationOrder::kSubjectsFirst ? subject[w] / scale : subject[w];
      }
      mean /= n;
      double var = 0.0;
      for (const auto& subject : s.trt_ms) {
        const double v = order == NormalizationOrder::kSubjectsFirst ? subject[w] / scale : subject[w];
        var += (v - mean) * (v - mean);
      }
      var /= n;
      if (order == NormalizationOrder::kAverageFirst) {
        mean /= scale;
        var /= scale * scale;
      }
      fs.records.push_back({s.words[w], mean, var, 0, s.corpus_id});
    }
    out.push_back(std::move(fs));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Quantiles

std::vector<int> quantile_bins(const std::vector<double>& means, int levels) {
  if (levels < 2) throw std::invalid_argument("quantile_discretize: K must be at least 2");
  const std::size_t n = means.size();
  if (n < static_cast<std::size_t>(levels)) {
    throw std::invalid_argument("quantile_discretize: " + std::to_string(n) + " records for K=" +
                                std::to_string(levels));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return means[a] < means[b]; });
  std::vector<int> bins(n);
  int group_bin = 1;
  for (std::size_t rank = 0; rank < n; ++rank) {
    if (rank == 0 || means[order[rank]] != means[order[rank - 1]]) {
      group_bin = static_cast<int>(rank * static_cast<std::size_t>(levels) / n) + 1;
    }
    bins[order[rank]] = group_bin;
  }
  return bins;
}

void quantile_discretize(std::vector<FixationSentence>& sentences, int levels) {
  std::vector<double> means;
  for (const auto& s : sentences) {
    for (const auto& r : s.records) means.push_back(r.mean);
  }
  const auto bins = quantile_bins(means, levels);
  std::size_t i = 0;
  for (auto& s : sentences) {
    for (auto& r : s.records) r.bin = bins[i++];
  }
}

// ---------------------------------------------------------------------------
// Alignment

std::vector<FixationRecord> align_tokens(const FixationRecord& word, const Tokenizer& tokenizer) {
  const auto pieces = tokenizer(word.token);
  if (pieces.empty()) throw std::invalid_argument("tokenizer produced no tokens for '" + word.token + "'");
  std::vector<FixationRecord> out;
  for (const auto& piece : pieces) {
    FixationRecord r = word;
    r.token = piece;
    if (!has_word_char(piece)) {
      r.mean = 1.0;
      r.variance = kInfiniteVariance;
      r.bin = 1;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<FixationSentence> align_sentences(const std::vector<FixationSentence>& sentences,
                                              const Tokenizer& tokenizer) {
  std::vector<FixationSentence> out;
  for (const auto& s : sentences) {
    FixationSentence fs{s.corpus_id, s.sentence_id, {}};
    for (const auto& r : s.records) {
      for (auto& t : align_tokens(r, tokenizer)) fs.records.push_back(std::move(t));
    }
    out.push_back(std::move(fs));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Split

std::vector<std::size_t> split_indices(std::size_t n, const SplitSpec& spec, std::size_t* train_count) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw std::invalid_argument("train fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng(spec.seed, "split");
  shuffle(order.begin(), order.end(), rng);
  *train_count = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.train_fraction));
  return order;
}

// ---------------------------------------------------------------------------
// Processed corpus

std::string format_processed(const ProcessedCorpus& corpus) {
  std::string out;
  auto emit = [&](const FixationSentence& s, const char* split) {
    Json j;
    j["split"] = split;
    j["k"] = corpus.levels;
    j["corpus_id"] = s.corpus_id;
    j["sentence_id"] = s.sentence_id;
    Json tokens = Json::array(), mean = Json::array(), var = Json::array(), bin = Json::array();
    for (const auto& r : s.records) {
      tokens.push_back(r.token);
      mean.push_back(r.mean);
      if (std::isinf(r.variance)) {
        var.push_back("inf");
      } else {
        var.push_back(r.variance);
      }
      bin.push_back(r.bin);
    }
    j["tokens"] = std::move(tokens);
    j["mean"] = std::move(mean);
    j["variance"] = std::move(var);
    j["bin"] = std::move(bin);
    out += j.dump();
    out += '\n';
  };
  for (const auto& s : corpus.train) emit(s, "train");
  for (const auto& s : corpus.test) emit(s, "test");
  return out;
}

ProcessedCorpus parse_processed(std::string_view text) {
  ProcessedCorpus corpus;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const Json j = Json::parse(line);
      FixationSentence s;
      s.corpus_id = j.at("corpus_id").get<std::string>();
      s.sentence_id = j.at("sentence_id").get<std::string>();
      const auto& tokens = j.at("tokens");
      const auto& mean = j.at("mean");
      const auto& var = j.at("variance");
      const auto& bin = j.at("bin");
      if (mean.size() != tokens.size() || var.size() != tokens.size() || bin.size() != tokens.size()) {
        throw CorpusFormatError("per-token arrays differ in length", line_no);
      }
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        FixationRecord r;
        r.token = tokens[i].get<std::string>();
        r.mean = mean[i].get<double>();
        if (var[i].is_string()) {
          if (var[i].get<std::string>() != "inf") throw CorpusFormatError("variance must be a number or \"inf\"", line_no);
          r.variance = kInfiniteVariance;
        } else {
          r.variance = var[i].get<double>();
        }
        r.bin = bin[i].get<int>();
        r.corpus_id = s.corpus_id;
        s.records.push_back(std::move(r));
      }
      corpus.levels = j.at("k").get<int>();
      const auto split = j.at("split").get<std::string>();
      if (split == "train") {
        corpus.train.push_back(std::move(s));
      } else if (split == "test") {
        corpus.test.push_back(std::move(s));
      } else {
        throw CorpusFormatError("split must be \"train\" or \"test\"", line_no);
      }
    } catch (const Json::exception& e) {
      throw CorpusFormatError(e.what(), line_no);
    }
  }
  if (corpus.train.empty() && corpus.test.empty()) throw CorpusFormatError("processed corpus is empty", 0);
  return corpus;
}

void save_processed(const std::filesystem::path& path, const ProcessedCorpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << format_processed(corpus);
}

ProcessedCorpus load_processed(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_processed(buf.str());
}

ProcessedCorpus prepare_corpus(const RawFixationCorpus& corpus, const PrepOptions& options) {
  auto sentences = aggregate_subjects(corpus, options.order);
  quantile_discretize(sentences, options.levels);
  auto aligned = align_sentences(sentences, options.tokenizer);
  auto split = split_train_test(aligned, options.split);
  return ProcessedCorpus{options.levels, std::move(split.train), std::move(split.test)};
}

// ---------------------------------------------------------------------------
// Synthetic corpus

int synth_token_class(std::size_t type, int levels) { return static_cast<int>(type % static_cast<std::size_t>(levels)); }

double synth_class_duration(int cls) { return 120.0 + 80.0 * cls; }

RawFixationCorpus synth_fixation_corpus(const SynthFixationSpec& spec) {
  if (spec.vocab_size == 0 || spec.sentence_count == 0 || spec.subject_count == 0 || spec.levels < 1 ||
      spec.min_length == 0 || spec.max_length < spec.min_length) {
    throw std::invalid_argument("synth_fixation_corpus: counts must be positive");
  }
  if (spec.vocab_size < static_cast<std::size_t>(spec.levels)) {
    throw std::invalid_argument("synth_fixation_corpus: vocabulary smaller than class count");
  }
  CounterRng len_rng(spec.seed, "synth.length");
  CounterRng class_rng(spec.seed, "synth.class");
  CounterRng type_rng(spec.seed, "synth.type");
  CounterRng noise_rng(spec.seed, "synth.noise");

  std::vector<std::size_t> lengths;
  std::size_t total = 0;
  for (std::size_t s = 0; s < spec.sentence_count; ++s) {
    lengths.push_back(static_cast<std::size_t>(len_rng.uniform_int(static_cast<std::int64_t>(spec.min_length),
                                                                    static_cast<std::int64_t>(spec.max_length))));
    total += lengths.back();
  }
  // Balanced class pool, shuffled.
  std::vector<int> classes(total);
  for (std::size_t i = 0; i < total; ++i) classes[i] = static_cast<int>(i % static_cast<std::size_t>(spec.levels));
  shuffle(classes.begin(), classes.end(), class_rng);

  // Types grouped by class.
  std::vector<std::vector<std::size_t>> types_of(static_cast<std::size_t>(spec.levels));
  for (std::size_t t = 0; t < spec.vocab_size; ++t) {
    types_of[static_cast<std::size_t>(synth_token_class(t, spec.levels))].push_back(t);
  }

  RawFixationCorpus corpus;
  std::size_t pos = 0;
  for (std::size_t s = 0; s < spec.sentence_count; ++s) {
    RawSentence sent;
    sent.corpus_id = spec.corpus_id;
    sent.sentence_id = spec.corpus_id + "-" + std::to_string(s);
    std::vector<double> latent;
    for (std::size_t w = 0; w < lengths[s]; ++w) {
      const int cls = classes[pos++];
      const auto& pool = types_of[static_cast<std::size_t>(cls)];
      const auto type = pool[static_cast<std::size_t>(type_rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
      sent.words.push_back(spec.token_prefix + std::to_string(type));
      latent.push_back(synth_class_duration(cls));
    }
    for (std::size_t subj = 0; subj < spec.subject_count; ++subj) {
      std::vector<double> row;
      for (double d : latent) row.push_back(std::max(0.0, d * (1.0 + spec.noise * noise_rng.normal())));
      sent.trt_ms.push_back(std::move(row));
    }
    corpus.sentences.push_back(std::move(sent));
  }
  return corpus;
}

}  // namespace fgrnn::data
