// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/tasks/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <sstream>

#include "fgrnn/autodiff/checkpoint.hpp"
#include "fgrnn/autodiff/optim.hpp"
#include "fgrnn/data/batch.hpp"
#include "fgrnn/data/eyetrack.hpp"
#include "fgrnn/tasks/batching.hpp"
#include "fgrnn/tasks/fixations.hpp"

namespace fgrnn::tasks {

using ad::Tensor;
using json = nlohmann::ordered_json;

namespace {

constexpr std::size_t kFpChunk = 64;

// Gate schedules -------------------------------------------------------------

struct GateContext {
  const TaskConfig& config;
  int levels = 1;
  std::optional<data::FrequencyTable> frequencies;
  std::optional<fp::FixedFpModel<float>> fixed;
};

GateContext make_gate_context(const TaskConfig& config) {
  GateContext ctx{config, config.model_spec().levels(), std::nullopt, std::nullopt};
  if (config.gate_source == GateSource::kFreq) {
    const auto processed = data::load_processed(config.fixation_corpus);
    std::vector<std::string> toks;
    for (const auto* split : {&processed.train, &processed.test}) {
      for (const auto& s : *split) {
        for (const auto& r : s.records) toks.push_back(r.token);
      }
    }
    ctx.frequencies = data::count_tokens(toks);
  }
  if (config.gate_source == GateSource::kFixedFp) ctx.fixed = fp::FixedFpModel<float>::load(config.fp_checkpoint);
  return ctx;
}

/// Sentences of a stream (cut after <eos>, and every kFpChunk tokens).
std::vector<std::vector<std::string>> chunk_stream(const std::vector<std::string>& tokens) {
  std::vector<std::vector<std::string>> out(1);
  for (const auto& t : tokens) {
    out.back().push_back(t);
    if (t == kEos || out.back().size() == kFpChunk) out.emplace_back();
  }
  if (out.back().empty()) out.pop_back();
  return out;
}

std::vector<int> schedule_for(const GateContext& ctx, const std::vector<std::string>& tokens, std::string_view split) {
  const auto& c = ctx.config;
  switch (c.gate_source) {
    case GateSource::kNone:
    case GateSource::kAdaptive:
    case GateSource::kHuman:
      return {};
    case GateSource::kRandom:
      return artificial_fixations(ArtificialKind::kRandom, tokens, ctx.levels, c.seed ^ fnv1a64(split));
    case GateSource::kRandomBt:
      return artificial_fixations(ArtificialKind::kRandomBt, tokens, ctx.levels, c.seed);
    case GateSource::kFull:
      return artificial_fixations(ArtificialKind::kFull, tokens, ctx.levels, c.seed);
    case GateSource::kFreq:
      return artificial_fixations(ArtificialKind::kFreq, tokens, ctx.levels, c.seed, &*ctx.frequencies);
    case GateSource::kFixedFp: {
      std::vector<int> out;
      const auto chunks = chunk_stream(tokens);
      const auto pred = ctx.fixed->predict(chunks);
      for (const auto& p : pred) {
        const auto g = fp::to_hard_gates(p, ctx.levels);
        out.insert(out.end(), g.begin(), g.end());
      }
      return out;
    }
  }
  return {};
}

std::vector<std::string> flatten(const std::vector<data::FixationSentence>& sentences, std::vector<int>* bins) {
  std::vector<std::string> out;
  for (const auto& s : sentences) {
    for (const auto& r : s.records) {
      out.push_back(r.token);
      if (bins) bins->push_back(r.bin);
    }
    out.emplace_back(kEos);
    if (bins) bins->push_back(1);
  }
  return out;
}

// Metrics I/O ----------------------------------------------------------------

void put(json& j, const char* key, const std::optional<double>& v) {
  if (v) j[key] = *v;
}

std::optional<double> get(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

json header(const RunMetrics& m, const char* kind) {
  json j;
  j["kind"] = kind;
  j["run_id"] = m.run_id;
  j["task"] = std::string(task_name(m.task));
  j["variant"] = m.variant;
  j["gate_source"] = m.gate_source;
  j["seed"] = m.seed;
  j["params"] = m.params;
  j["hidden_dim"] = m.hidden_dim;
  return j;
}

std::string epoch_line(const RunMetrics& m, const EpochMetrics& e) {
  json j = header(m, "epoch");
  j["epoch"] = e.epoch;
  j["train_loss"] = e.train_loss;
  j["train_nll"] = e.train_nll;
  put(j, "fixation_loss", e.fixation_loss);
  j["valid_nll"] = e.valid_nll;
  put(j, "valid_ppl", e.valid_ppl);
  put(j, "valid_acc", e.valid_acc);
  put(j, "test_acc", e.test_acc);
  return j.dump();
}

std::string final_line(const RunMetrics& m) {
  json j = header(m, "final");
  j["epochs"] = m.epochs.size();
  j["best_epoch"] = m.best_epoch;
  put(j, "test_nll", m.test_nll);
  put(j, "test_ppl", m.test_ppl);
  put(j, "test_acc", m.test_acc);
  j["test_tokens"] = m.test_tokens;
  j["diverged"] = m.diverged;
  if (m.fixed_fp_checksum_before || m.fixed_fp_checksum_after) {
    j["fixed_fp_checksum_before"] = m.fixed_fp_checksum_before;
    j["fixed_fp_checksum_after"] = m.fixed_fp_checksum_after;
  }
  return j.dump();
}

// Training helpers -------------------------------------------------------------

/// Row b of the result is outputs[lengths[b] - 1] row b.
Var gather_last(Graph<float>& g, const std::vector<Var>& outputs, const std::vector<std::size_t>& lengths) {
  Var out = outputs.front();
  for (std::size_t t = 1; t < outputs.size(); ++t) {
    std::vector<std::uint8_t> take(lengths.size());
    for (std::size_t b = 0; b < lengths.size(); ++b) take[b] = lengths[b] == t + 1;
    out = g.row_select(take, outputs[t], out);
  }
  return out;
}

std::vector<int> gather_gates(const std::vector<int>& schedule, const BatchPlan& plan, std::size_t i) {
  if (schedule.empty()) return {};
  const auto len = plan.segments[i].length;
  std::vector<int> out(len * plan.batch);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t b = 0; b < plan.batch; ++b) out[t * plan.batch + b] = schedule[plan.stream_position(i, t, b)];
  }
  return out;
}

std::vector<int> padded_gates(const std::vector<const std::vector<int>*>& rows, const data::TokenBatch& batch) {
  if (rows.empty() || rows.front()->empty()) return {};
  std::vector<int> out(batch.ids.size(), 1);
  for (std::size_t b = 0; b < rows.size(); ++b) {
    for (std::size_t t = 0; t < rows[b]->size(); ++t) out[batch.index(t, b)] = (*rows[b])[t];
  }
  return out;
}

/// Disables gradient recording while evaluating.
class NoGrad {
 public:
  explicit NoGrad(ParameterSet<float>& params) : params_(params) {
    for (const auto& p : params_.all()) {
      flags_.push_back(p->trainable);
      p->trainable = false;
    }
  }
  ~NoGrad() {
    for (std::size_t i = 0; i < flags_.size(); ++i) params_.all()[i]->trainable = flags_[i];
  }
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  ParameterSet<float>& params_;
  std::vector<bool> flags_;
};

struct EvalResult {
  double nll = 0.0;
  std::size_t tokens = 0;
  std::optional<double> acc;
};

EvalResult eval_lm(TaskModel<float>& model, const TaskConfig& config, const std::vector<std::int32_t>& stream,
                   const std::vector<int>& gates) {
  NoGrad guard(model.params());
  const auto plan = make_fixed_batches(stream, config.eval_batch_size, static_cast<std::size_t>(std::lround(config.seq_len)));
  const auto* afp = model.adaptive();
  gated::CarriedState<float> carried, fp_carried;
  EvalResult r;
  double sum = 0.0;
  for (std::size_t i = 0; i < plan.segments.size(); ++i) {
    Graph<float> g;
    auto state = i == 0 ? model.rnn().zero_state(g, plan.batch) : model.rnn().bind(g, carried);
    std::optional<gated::ModelState<float>> fp_state;
    if (afp) fp_state = i == 0 ? afp->zero_state(g, plan.batch) : afp->trunk().bind(g, fp_carried);
    const auto ids = plan.inputs(i);
    const auto tg = plan.segment_targets(i);
    const auto hard = gather_gates(gates, plan, i);
    const auto seg = model.forward(g, state, fp_state ? &*fp_state : nullptr, ids, plan.batch, hard, {}, {}, {});
    const Var nll = g.nll(model.lm_log_probs(g, seg.outputs, {}), tg);
    sum += static_cast<double>(g.value(nll).item()) * static_cast<double>(tg.size());
    r.tokens += tg.size();
    carried = model.rnn().detach(g, state);
    if (afp) fp_carried = afp->trunk().detach(g, *fp_state);
  }
  r.nll = sum / static_cast<double>(r.tokens);
  return r;
}

EvalResult eval_sentiment(TaskModel<float>& model, const TaskConfig& config,
                          const std::vector<std::vector<std::int32_t>>& sents, const std::vector<int>& labels,
                          const std::vector<std::vector<int>>& gates) {
  NoGrad guard(model.params());
  const auto* afp = model.adaptive();
  EvalResult r;
  double sum = 0.0;
  std::size_t hit = 0;
  for (std::size_t start = 0; start < sents.size(); start += config.eval_batch_size) {
    const std::size_t end = std::min(sents.size(), start + config.eval_batch_size);
    const auto batch = data::pack_sequences(std::span(sents).subspan(start, end - start));
    std::vector<const std::vector<int>*> grow;
    for (std::size_t i = start; i < end; ++i) grow.push_back(gates.empty() ? nullptr : &gates[i]);
    const auto hard = gates.empty() ? std::vector<int>{} : padded_gates(grow, batch);
    Graph<float> g;
    auto state = model.rnn().zero_state(g, batch.batch);
    std::optional<gated::ModelState<float>> fp_state;
    if (afp) fp_state = afp->zero_state(g, batch.batch);
    const auto seg = model.forward(g, state, fp_state ? &*fp_state : nullptr, batch.ids, batch.batch, hard, {},
                                   batch.mask, {});
    const Var logits = model.sentiment_logits(g, gather_last(g, seg.outputs, batch.lengths), {});
    const std::vector<std::int32_t> y(labels.begin() + static_cast<std::ptrdiff_t>(start),
                                      labels.begin() + static_cast<std::ptrdiff_t>(end));
    sum += static_cast<double>(g.value(g.nll(g.log_softmax(logits), y)).item()) * static_cast<double>(y.size());
    const auto& lv = g.value(logits);
    for (std::size_t b = 0; b < y.size(); ++b) hit += (lv.at(b, 1) > lv.at(b, 0) ? 1 : 0) == y[b];
    r.tokens += y.size();
  }
  r.nll = sum / static_cast<double>(r.tokens);
  r.acc = static_cast<double>(hit) / static_cast<double>(r.tokens);
  return r;
}

std::vector<Tensor<float>> snapshot(const ParameterSet<float>& params) {
  std::vector<Tensor<float>> out;
  for (const auto& p : params.all()) out.push_back(p->value);
  return out;
}

void restore(ParameterSet<float>& params, const std::vector<Tensor<float>>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) params.all()[i]->value = values[i];
}

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  return seed ^ fnv1a64("epoch:" + std::to_string(epoch));
}

}  // namespace

std::optional<double> RunMetrics::final_metric() const { return task == Task::kLm ? test_ppl : test_acc; }

std::string format_metrics(const RunMetrics& m) {
  std::string out;
  for (const auto& e : m.epochs) out += epoch_line(m, e) + "\n";
  out += final_line(m) + "\n";
  return out;
}

RunMetrics parse_metrics(std::string_view text) {
  RunMetrics m;
  bool any = false;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("metrics line " + std::to_string(line_no) + ": " + e.what());
    }
    any = true;
    m.run_id = j.value("run_id", "");
    m.task = parse_task(j.value("task", "lm"));
    m.variant = j.value("variant", "");
    m.gate_source = j.value("gate_source", "");
    m.seed = j.value("seed", std::uint64_t{0});
    m.params = j.value("params", std::size_t{0});
    m.hidden_dim = j.value("hidden_dim", std::size_t{0});
    if (j.value("kind", "") == "epoch") {
      EpochMetrics e;
      e.epoch = j.value("epoch", std::size_t{0});
      e.train_loss = j.value("train_loss", 0.0);
      e.train_nll = j.value("train_nll", 0.0);
      e.fixation_loss = get(j, "fixation_loss");
      e.valid_nll = j.value("valid_nll", 0.0);
      e.valid_ppl = get(j, "valid_ppl");
      e.valid_acc = get(j, "valid_acc");
      e.test_acc = get(j, "test_acc");
      m.epochs.push_back(e);
    } else {
      m.best_epoch = j.value("best_epoch", std::size_t{0});
      m.test_nll = get(j, "test_nll");
      m.test_ppl = get(j, "test_ppl");
      m.test_acc = get(j, "test_acc");
      m.test_tokens = j.value("test_tokens", std::size_t{0});
      m.diverged = j.value("diverged", false);
      m.fixed_fp_checksum_before = j.value("fixed_fp_checksum_before", std::uint64_t{0});
      m.fixed_fp_checksum_after = j.value("fixed_fp_checksum_after", std::uint64_t{0});
    }
  }
  if (!any) throw std::runtime_error("metrics: no records");
  return m;
}

RunMetrics load_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_metrics(ss.str());
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

PreparedTask prepare_task(const TaskConfig& config) {
  config.validate();
  PreparedTask p;
  const auto ctx = make_gate_context(config);
  if (ctx.fixed) p.fixed_fp_checksum = ad::checksum(ctx.fixed->params());

  if (config.task == Task::kLm) {
    LmCorpus corpus;
    std::vector<int> train_bins, test_bins;
    if (config.corpus == CorpusSource::kSynthetic) {
      SynthLmSpec spec;
      spec.vocab_size = config.synth_vocab;
      spec.tokens = config.synth_tokens;
      spec.successors = config.synth_successors;
      spec.seed = config.synth_seed;
      corpus = synth_lm_corpus(spec);
    } else if (config.corpus == CorpusSource::kFiles) {
      corpus.train = read_lm_text(config.train_path);
      corpus.valid = read_lm_text(config.valid_path);
      corpus.test = read_lm_text(config.test_path);
    } else {
      const auto processed = data::load_processed(config.fixation_corpus);
      corpus.train = flatten(processed.train, &train_bins);
      corpus.test = flatten(processed.test, &test_bins);
      corpus.valid = corpus.test;
    }
    p.vocab = data::Vocab::build(corpus.train, config.min_freq);
    p.train_ids = p.vocab.encode(corpus.train);
    p.valid_ids = p.vocab.encode(corpus.valid);
    p.test_ids = p.vocab.encode(corpus.test);
    if (config.gate_source == GateSource::kHuman) {
      const int levels = ctx.levels;
      for (auto* bins : {&train_bins, &test_bins}) {
        for (int& b : *bins) b = std::clamp(b, 1, levels);
      }
      p.train_gates = train_bins;
      p.valid_gates = test_bins;
      p.test_gates = test_bins;
    } else {
      p.train_gates = schedule_for(ctx, corpus.train, "train");
      p.valid_gates = schedule_for(ctx, corpus.valid, "valid");
      p.test_gates = schedule_for(ctx, corpus.test, "test");
    }
  } else {
    SentimentCorpus corpus;
    if (config.corpus == CorpusSource::kSynthetic) {
      SynthSentimentSpec spec;
      spec.sentences = config.synth_sentences;
      spec.seed = config.synth_seed;
      corpus = synth_sentiment_corpus(spec);
    } else {
      corpus.train = read_sentiment(config.train_path);
      corpus.valid = read_sentiment(config.valid_path);
      corpus.test = read_sentiment(config.test_path);
    }
    std::vector<std::string> all;
    for (const auto& ex : corpus.train) all.insert(all.end(), ex.tokens.begin(), ex.tokens.end());
    p.vocab = data::Vocab::build(all, config.min_freq);
    auto fill = [&](const std::vector<SentimentExample>& src, std::string_view split,
                    std::vector<std::vector<std::int32_t>>& ids, std::vector<int>& labels,
                    std::vector<std::vector<int>>& gates) {
      for (const auto& ex : src) {
        ids.push_back(p.vocab.encode(ex.tokens));
        labels.push_back(ex.label);
        auto sched = schedule_for(ctx, ex.tokens, std::string(split) + ":" + std::to_string(ids.size()));
        if (!sched.empty()) gates.push_back(std::move(sched));
      }
    };
    fill(corpus.train, "train", p.train_sents, p.train_labels, p.train_sent_gates);
    fill(corpus.valid, "valid", p.valid_sents, p.valid_labels, p.valid_sent_gates);
    fill(corpus.test, "test", p.test_sents, p.test_labels, p.test_sent_gates);
  }

  const bool multitask = config.gate_source == GateSource::kAdaptive && !config.fixation_corpus.empty() &&
                         config.effective_lambda() > 0.0;
  if (multitask) {
    const auto processed = data::load_processed(config.fixation_corpus);
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const auto& s : processed.train) {
      for (const auto& r : s.records) {
        if (std::isinf(r.variance)) continue;
        sum += r.mean;
        sq += r.mean * r.mean;
        ++n;
      }
    }
    if (n == 0) throw ConfigError("fixation_corpus", "no supervised tokens in the training split");
    const double mu = sum / static_cast<double>(n);
    const double sd = std::max(std::sqrt(std::max(sq / static_cast<double>(n) - mu * mu, 0.0)), 1e-5);
    for (const auto& s : processed.train) {
      if (s.records.empty()) continue;
      std::vector<std::string> toks;
      fp::FixationTarget t;
      for (const auto& r : s.records) {
        toks.push_back(r.token);
        t.expectation.push_back((r.mean - mu) / sd);
        t.variance.push_back(std::isinf(r.variance) ? r.variance : r.variance / (sd * sd));
      }
      p.fixation_ids.push_back(p.vocab.encode(toks));
      p.fixation_targets.push_back(std::move(t));
    }
  }
  return p;
}

std::size_t resolve_hidden_dim(const TaskConfig& config, std::size_t vocab_size) {
  if (config.hidden_dim) return config.hidden_dim;
  auto spec = config.task_spec(vocab_size);
  spec.rnn.hidden_dim = 1;
  return fit_hidden_dim(spec, config.param_budget);
}

RunMetrics train(const TaskConfig& config, const TrainOptions& options) {
  const auto prepared = prepare_task(config);
  auto spec = config.task_spec(prepared.vocab.size());
  spec.rnn.hidden_dim = resolve_hidden_dim(config, prepared.vocab.size());
  auto model = TaskModel<float>::create(spec, config.seed);
  if (options.on_model) options.on_model(model);
  const auto* afp = model.adaptive();

  RunMetrics m;
  m.run_id = run_id(config);
  m.task = config.task;
  m.variant = std::string(gated::variant_name(config.variant));
  m.gate_source = std::string(gate_source_name(config.gate_source));
  m.seed = config.seed;
  m.params = model.counted_parameters();
  m.hidden_dim = spec.rnn.hidden_dim;
  m.fixed_fp_checksum_before = prepared.fixed_fp_checksum;

  std::ofstream metrics_out, timing_out;
  const bool to_disk = !options.out_dir.empty();
  const auto ckpt_path = options.out_dir / "model.ckpt";
  if (to_disk) {
    std::filesystem::create_directories(options.out_dir);
    std::ofstream(options.out_dir / "config.txt") << format_config(config);
    std::ofstream vocab_out(options.out_dir / "vocab.txt");
    for (const auto& t : prepared.vocab.tokens()) vocab_out << t << '\n';
    metrics_out.open(options.out_dir / "metrics.jsonl", std::ios::trunc);
    timing_out.open(options.out_dir / "timing.jsonl", std::ios::trunc);
    if (!metrics_out || !timing_out) throw std::runtime_error("cannot write metrics under " + options.out_dir.string());
  }

  ad::AdamState<float> adam;
  adam.config.learning_rate = config.lr;
  CounterRng dropout_rng(config.seed, "train.dropout");
  CounterRng order_rng(config.seed, "train.order");
  CounterRng fixation_rng(config.seed, "train.multitask");
  const ForwardOptions train_opts{true, config.dropout_embed, config.dropout_other, &dropout_rng};
  const bool multitask = afp && !prepared.fixation_ids.empty();
  const float lambda = static_cast<float>(config.effective_lambda());
  const std::size_t fix_batch = config.fixation_batch_size ? config.fixation_batch_size : config.batch_size;

  auto diverge = [&](const std::string& why) {
    m.diverged = true;
    if (to_disk) metrics_out << final_line(m) << '\n' << std::flush;
    throw TrainingDiverged(why, m);
  };

  // Returns (joint loss, fixation loss) after one optimizer update.
  auto update = [&](Graph<float>& g, Var task_loss) -> std::pair<double, double> {
    Var loss = task_loss;
    double l2 = 0.0;
    if (multitask) {
      std::vector<std::vector<std::int32_t>> rows;
      std::vector<const fp::FixationTarget*> targets;
      for (std::size_t i = 0; i < fix_batch; ++i) {
        const auto k = static_cast<std::size_t>(fixation_rng.uniform_int(0, prepared.fixation_ids.size() - 1));
        rows.push_back(prepared.fixation_ids[k]);
        targets.push_back(&prepared.fixation_targets[k]);
      }
      const auto batch = data::pack_sequences(rows);
      fp::FixationTarget target;
      target.expectation.assign(batch.ids.size(), 0.0);
      target.variance.assign(batch.ids.size(), 0.0);
      target.mask = batch.mask;
      for (std::size_t b = 0; b < rows.size(); ++b) {
        for (std::size_t t = 0; t < rows[b].size(); ++t) {
          target.expectation[batch.index(t, b)] = targets[b]->expectation[t];
          target.variance[batch.index(t, b)] = targets[b]->variance[t];
        }
      }
      const Var table = g.parameter(model.embedding());
      std::vector<Var> xs;
      for (std::size_t t = 0; t < batch.length; ++t) {
        Var x = g.embedding(table, batch.step_ids(t));
        if (config.dropout_embed > 0) {
          x = g.dropout(x, ad::sample_dropout_mask<float>(g.shape(x), config.dropout_embed, dropout_rng));
        }
        xs.push_back(x);
      }
      auto fp_state = afp->zero_state(g, batch.batch);
      const gated::LayerDropout<float> ld{config.dropout_other, &dropout_rng, true};
      const Var dhat = afp->durations(g, fp_state, xs, ld);
      const Var l2v = fp::variance_weighted_mse(g, dhat, target, static_cast<float>(config.epsilon), fp::Reduction::kMean);
      l2 = g.value(l2v).item();
      loss = fp::joint_loss(g, task_loss, l2v, lambda);
    }
    const double value = g.value(loss).item();
    if (!std::isfinite(value)) diverge("non-finite training loss");
    model.params().zero_grad();
    g.backward(loss);
    try {
      if (config.clip > 0) ad::clip_global_norm(model.params(), config.clip);
      ad::adam_step(adam, model.params());
    } catch (const ad::NonFiniteGradient& e) {
      diverge(e.what());
    }
    return {value, l2};
  };

  auto track_stats = [&](Graph<float>& g, const SegmentOutput& seg, std::span<const std::uint8_t> mask) {
    if (!afp || config.stats_scope != StatsScope::kRunning) return;
    const auto& v = g.value(seg.dhat);
    std::vector<double> d(v.values().begin(), v.values().end());
    const auto st = fp::duration_stats(d, mask, model.spec().rnn.levels());
    model.update_running_stats(st.mean, st.stddev);
  };

  double best = std::numeric_limits<double>::infinity();
  std::vector<Tensor<float>> best_values = snapshot(model.params());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochMetrics em;
    em.epoch = epoch;
    double loss_sum = 0.0, nll_sum = 0.0, l2_sum = 0.0;
    std::size_t steps = 0, tokens = 0;

    if (config.task == Task::kLm) {
      const auto plan = make_batches(prepared.train_ids, config.batch_size, config.seq_len, epoch_seed(config.seed, epoch));
      gated::CarriedState<float> carried, fp_carried;
      for (std::size_t i = 0; i < plan.segments.size(); ++i) {
        Graph<float> g;
        auto state = i == 0 ? model.rnn().zero_state(g, plan.batch) : model.rnn().bind(g, carried);
        std::optional<gated::ModelState<float>> fp_state;
        if (afp) fp_state = i == 0 ? afp->zero_state(g, plan.batch) : afp->trunk().bind(g, fp_carried);
        const auto ids = plan.inputs(i);
        const auto tg = plan.segment_targets(i);
        const auto hard = gather_gates(prepared.train_gates, plan, i);
        const auto seg =
            model.forward(g, state, fp_state ? &*fp_state : nullptr, ids, plan.batch, hard, {}, {}, train_opts);
        const Var nll = g.nll(model.lm_log_probs(g, seg.outputs, train_opts), tg);
        const double nll_v = g.value(nll).item();
        const auto [loss_v, l2_v] = update(g, nll);
        track_stats(g, seg, {});
        carried = model.rnn().detach(g, state);
        if (afp) fp_carried = afp->trunk().detach(g, *fp_state);
        nll_sum += nll_v * static_cast<double>(tg.size());
        loss_sum += loss_v * static_cast<double>(tg.size());
        l2_sum += l2_v * static_cast<double>(tg.size());
        tokens += tg.size();
        ++steps;
      }
    } else {
      std::vector<std::size_t> order(prepared.train_sents.size());
      std::iota(order.begin(), order.end(), 0);
      shuffle(order.begin(), order.end(), order_rng);
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t end = std::min(order.size(), start + config.batch_size);
        std::vector<std::vector<std::int32_t>> rows;
        std::vector<std::int32_t> y;
        std::vector<const std::vector<int>*> grow;
        for (std::size_t k = start; k < end; ++k) {
          rows.push_back(prepared.train_sents[order[k]]);
          y.push_back(prepared.train_labels[order[k]]);
          grow.push_back(prepared.train_sent_gates.empty() ? nullptr : &prepared.train_sent_gates[order[k]]);
        }
        const auto batch = data::pack_sequences(rows);
        const auto hard = prepared.train_sent_gates.empty() ? std::vector<int>{} : padded_gates(grow, batch);
        Graph<float> g;
        auto state = model.rnn().zero_state(g, batch.batch);
        std::optional<gated::ModelState<float>> fp_state;
        if (afp) fp_state = afp->zero_state(g, batch.batch);
        const auto seg = model.forward(g, state, fp_state ? &*fp_state : nullptr, batch.ids, batch.batch, hard, {},
                                       batch.mask, train_opts);
        const Var logits = model.sentiment_logits(g, gather_last(g, seg.outputs, batch.lengths), train_opts);
        const Var nll = g.nll(g.log_softmax(logits), y);
        const double nll_v = g.value(nll).item();
        const auto [loss_v, l2_v] = update(g, nll);
        track_stats(g, seg, batch.mask);
        nll_sum += nll_v * static_cast<double>(y.size());
        loss_sum += loss_v * static_cast<double>(y.size());
        l2_sum += l2_v * static_cast<double>(y.size());
        tokens += y.size();
        ++steps;
      }
    }
    em.train_nll = nll_sum / static_cast<double>(tokens);
    em.train_loss = loss_sum / static_cast<double>(tokens);
    if (multitask) em.fixation_loss = l2_sum / static_cast<double>(tokens);

    double score = 0.0;  // lower is better
    if (config.task == Task::kLm) {
      const auto v = eval_lm(model, config, prepared.valid_ids, prepared.valid_gates);
      em.valid_nll = v.nll;
      em.valid_ppl = std::exp(v.nll);
      score = v.nll;
    } else {
      const auto v = eval_sentiment(model, config, prepared.valid_sents, prepared.valid_labels, prepared.valid_sent_gates);
      const auto t = eval_sentiment(model, config, prepared.test_sents, prepared.test_labels, prepared.test_sent_gates);
      em.valid_nll = v.nll;
      em.valid_acc = v.acc;
      em.test_acc = t.acc;
      score = -*v.acc;
    }
    if (!std::isfinite(em.valid_nll)) diverge("non-finite validation loss");
    if (score < best) {
      best = score;
      m.best_epoch = epoch;
      best_values = snapshot(model.params());
      if (to_disk) ad::save_checkpoint(ckpt_path, model.params(), {{"seed", config.seed}, {"epoch", epoch}});
    }
    m.epochs.push_back(em);
    if (to_disk) {
      metrics_out << epoch_line(m, em) << '\n' << std::flush;
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      json tj;
      tj["run_id"] = m.run_id;
      tj["epoch"] = epoch;
      tj["seconds"] = secs;
      timing_out << tj.dump() << '\n' << std::flush;
    }
    if (options.on_epoch) options.on_epoch(em);
  }

  if (config.task == Task::kLm) {
    const auto last = snapshot(model.params());
    restore(model.params(), best_values);
    const auto t = eval_lm(model, config, prepared.test_ids, prepared.test_gates);
    m.test_nll = t.nll;
    m.test_ppl = std::exp(t.nll);
    m.test_tokens = t.tokens;
  } else {
    double acc = 0.0;
    for (const auto& e : m.epochs) acc = std::max(acc, *e.test_acc);
    m.test_acc = acc;
    m.test_tokens = prepared.test_sents.size();
  }
  if (config.gate_source == GateSource::kFixedFp) {
    m.fixed_fp_checksum_after = ad::checksum(fp::FixedFpModel<float>::load(config.fp_checkpoint).params());
  }
  if (to_disk) metrics_out << final_line(m) << '\n' << std::flush;
  return m;
}

RunMetrics evaluate_checkpoint(const TaskConfig& config, const std::filesystem::path& checkpoint) {
  const auto prepared = prepare_task(config);
  auto spec = config.task_spec(prepared.vocab.size());
  spec.rnn.hidden_dim = resolve_hidden_dim(config, prepared.vocab.size());
  auto model = TaskModel<float>::create(spec, config.seed);
  ad::load_checkpoint(ad::read_checkpoint(checkpoint), model.params());
  RunMetrics m;
  m.run_id = run_id(config);
  m.task = config.task;
  m.variant = std::string(gated::variant_name(config.variant));
  m.gate_source = std::string(gate_source_name(config.gate_source));
  m.seed = config.seed;
  m.params = model.counted_parameters();
  m.hidden_dim = spec.rnn.hidden_dim;
  if (config.task == Task::kLm) {
    const auto t = eval_lm(model, config, prepared.test_ids, prepared.test_gates);
    m.test_nll = t.nll;
    m.test_ppl = std::exp(t.nll);
    m.test_tokens = t.tokens;
  } else {
    const auto t = eval_sentiment(model, config, prepared.test_sents, prepared.test_labels, prepared.test_sent_gates);
    m.test_nll = t.nll;
    m.test_acc = t.acc;
    m.test_tokens = t.tokens;
  }
  return m;
}

std::vector<double> model_fixations(const TaskConfig& config, const PreparedTask& prepared,
                                    const TaskModel<float>& model, const std::vector<std::string>& tokens) {
  if (tokens.empty()) return {};
  if (model.adaptive()) {
    const auto ids = prepared.vocab.encode(tokens);
    Graph<float> g;
    auto state = model.rnn().zero_state(g, 1);
    auto fp_state = model.adaptive()->zero_state(g, 1);
    const auto seg = model.forward(g, state, &fp_state, ids, 1, {}, {}, {}, {});
    const auto& v = g.value(seg.dbar);
    return {v.values().begin(), v.values().end()};
  }
  if (config.gate_source == GateSource::kHuman) {
    throw std::invalid_argument("human gates exist only for corpus sentences");
  }
  const auto ctx = make_gate_context(config);
  auto sched = schedule_for(ctx, tokens, "heatmap");
  if (sched.empty()) sched.assign(tokens.size(), ctx.levels);
  return {sched.begin(), sched.end()};
}

}  // namespace fgrnn::tasks
