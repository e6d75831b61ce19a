// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/fp/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <stdexcept>

#include "fgrnn/autodiff/checkpoint.hpp"
#include "fgrnn/autodiff/optim.hpp"
#include "fgrnn/fp/fixation.hpp"

namespace fgrnn::fp {

using ad::Init;
using ad::Tensor;

namespace {

std::filesystem::path sidecar(const std::filesystem::path& path) { return path.string() + ".json"; }

struct EncodedSentences {
  std::vector<std::vector<std::int32_t>> ids;
  std::vector<std::vector<double>> bins;
};

EncodedSentences encode(const data::Vocab& vocab, const std::vector<data::FixationSentence>& sentences, int levels) {
  EncodedSentences out;
  for (const auto& s : sentences) {
    if (s.records.empty()) continue;
    std::vector<std::string> tokens;
    std::vector<double> bins;
    for (const auto& r : s.records) {
      if (r.bin < 1 || r.bin > levels) {
        throw std::invalid_argument("fixation record '" + r.token + "' in sentence " + s.sentence_id + " has bin " +
                                    std::to_string(r.bin) + ", expected 1.." + std::to_string(levels));
      }
      tokens.push_back(r.token);
      bins.push_back(r.bin);
    }
    out.ids.push_back(vocab.encode(tokens));
    out.bins.push_back(std::move(bins));
  }
  return out;
}

template <typename T>
FixationTarget batch_target(const data::TokenBatch& batch, const std::vector<const std::vector<double>*>& bins) {
  FixationTarget target;
  target.expectation.assign(batch.ids.size(), 0.0);
  target.variance.assign(batch.ids.size(), 0.0);
  target.mask = batch.mask;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    for (std::size_t t = 0; t < bins[b]->size(); ++t) target.expectation[batch.index(t, b)] = (*bins[b])[t];
  }
  return target;
}

}  // namespace

template <typename T>
FixedFpModel<T> FixedFpModel<T>::create(data::Vocab vocab, const FixedFpConfig& config) {
  if (config.levels < 1) throw std::invalid_argument("fixed FP: levels must be >= 1");
  FixedFpModel m;
  m.config_ = config;
  m.vocab_ = std::move(vocab);
  CounterRng rng(config.seed, "fixed_fp.init");
  m.embedding_ = m.params_.create("fp.embedding", {m.vocab_.size(), config.embed_dim}, Init::kUniformFanIn, rng);
  m.lstm_ = cells::LstmCell<T>::create(m.params_, "fp.lstm", config.embed_dim, config.hidden_dim, rng);
  m.fc1_w_ = m.params_.create("fp.fc1.w", {config.fc_dim, config.hidden_dim}, Init::kUniformFanIn, rng);
  m.fc1_b_ = m.params_.create("fp.fc1.b", {config.fc_dim}, Init::kZeros, rng);
  m.fc2_w_ = m.params_.create("fp.fc2.w", {1, config.fc_dim}, Init::kUniformFanIn, rng);
  m.fc2_b_ = m.params_.create("fp.fc2.b", {1}, Init::kZeros, rng);
  // Start the regressor at the middle of the bin range.
  m.fc2_b_->value[0] = static_cast<T>((config.levels + 1) / 2.0);
  return m;
}

template <typename T>
Var FixedFpModel<T>::forward(Graph<T>& g, const data::TokenBatch& batch) const {
  const Var table = g.parameter(embedding_);
  Var h = g.constant(Tensor<T>::matrix(batch.batch, config_.hidden_dim));
  Var c = h;
  std::vector<Var> hs;
  hs.reserve(batch.length);
  for (std::size_t t = 0; t < batch.length; ++t) {
    const Var x = g.embedding(table, batch.step_ids(t));
    auto next = cells::lstm_step(g, lstm_, x, h, c);
    h = next.h;
    c = next.c;
    hs.push_back(h);
  }
  const Var all = g.concat_rows(hs);
  const Var hidden = g.tanh(g.affine(all, g.parameter(fc1_w_), g.parameter(fc1_b_)));
  return g.affine(hidden, g.parameter(fc2_w_), g.parameter(fc2_b_));
}

template <typename T>
std::vector<double> FixedFpModel<T>::predict(std::span<const std::string> tokens) const {
  if (tokens.empty()) return {};
  std::vector<std::vector<std::string>> one{std::vector<std::string>(tokens.begin(), tokens.end())};
  return predict(one).front();
}

template <typename T>
std::vector<std::vector<double>> FixedFpModel<T>::predict(const std::vector<std::vector<std::string>>& sentences) const {
  std::vector<std::vector<std::int32_t>> rows;
  for (const auto& s : sentences) rows.push_back(vocab_.encode(s));
  const auto batch = data::pack_sequences(rows);
  if (batch.length == 0) return std::vector<std::vector<double>>(sentences.size());
  Graph<T> g;
  const auto& out = g.value(forward(g, batch));
  std::vector<double> flat(out.values().begin(), out.values().end());
  return data::unpack_rows<double>(batch, flat);
}

template <typename T>
void FixedFpModel<T>::save(const std::filesystem::path& path) const {
  ad::save_checkpoint(path, params_, {{"seed", config_.seed}});
  nlohmann::ordered_json meta;
  meta["embed_dim"] = config_.embed_dim;
  meta["hidden_dim"] = config_.hidden_dim;
  meta["fc_dim"] = config_.fc_dim;
  meta["levels"] = config_.levels;
  meta["seed"] = config_.seed;
  std::vector<std::string> tokens(vocab_.tokens().begin() + 1, vocab_.tokens().end());
  meta["vocab"] = tokens;
  std::ofstream out(sidecar(path));
  if (!out) throw std::runtime_error("cannot write " + sidecar(path).string());
  out << meta.dump(1) << '\n';
}

template <typename T>
FixedFpModel<T> FixedFpModel<T>::load(const std::filesystem::path& path) {
  std::ifstream in(sidecar(path));
  if (!in) throw std::runtime_error("cannot read " + sidecar(path).string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(sidecar(path).string() + ": " + e.what());
  }
  FixedFpConfig config;
  config.embed_dim = meta.at("embed_dim").get<std::size_t>();
  config.hidden_dim = meta.at("hidden_dim").get<std::size_t>();
  config.fc_dim = meta.at("fc_dim").get<std::size_t>();
  config.levels = meta.at("levels").get<int>();
  config.seed = meta.at("seed").get<std::uint64_t>();
  const auto tokens = meta.at("vocab").get<std::vector<std::string>>();
  auto model = create(data::Vocab::from_tokens(tokens), config);
  ad::load_checkpoint(ad::read_checkpoint(path), model.params_);
  return model;
}

template <typename T>
FpEvaluation evaluate_fixed_fp(const FixedFpModel<T>& model, const std::vector<data::FixationSentence>& sentences) {
  const auto enc = encode(model.vocab(), sentences, model.config().levels);
  std::vector<double> pred;
  std::vector<double> gold;
  const std::size_t bs = std::max<std::size_t>(1, model.config().batch_size);
  for (std::size_t start = 0; start < enc.ids.size(); start += bs) {
    const std::size_t end = std::min(enc.ids.size(), start + bs);
    const auto batch = data::pack_sequences(std::span(enc.ids).subspan(start, end - start));
    Graph<T> g;
    const auto& out = g.value(model.forward(g, batch));
    std::vector<double> flat(out.values().begin(), out.values().end());
    const auto rows = data::unpack_rows<double>(batch, flat);
    for (std::size_t b = 0; b < rows.size(); ++b) {
      pred.insert(pred.end(), rows[b].begin(), rows[b].end());
      gold.insert(gold.end(), enc.bins[start + b].begin(), enc.bins[start + b].end());
    }
  }
  FpEvaluation ev;
  ev.tokens = pred.size();
  if (pred.empty()) return ev;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ev.l1 += std::abs(pred[i] - gold[i]);
    ev.mse += (pred[i] - gold[i]) * (pred[i] - gold[i]);
  }
  ev.l1 /= static_cast<double>(pred.size());
  ev.mse /= static_cast<double>(pred.size());
  ev.pearson = pearson(pred, gold);
  return ev;
}

template <typename T>
FixedFpModel<T> pretrain_fixed_fp(const std::vector<data::FixationSentence>& train,
                                  const std::vector<data::FixationSentence>& test, const FixedFpConfig& config,
                                  FpPretrainReport* report) {
  std::vector<std::string> tokens;
  for (const auto& s : train) {
    for (const auto& r : s.records) tokens.push_back(r.token);
  }
  if (tokens.empty()) throw std::invalid_argument("pretrain_fixed_fp: empty training corpus");
  auto model = FixedFpModel<T>::create(data::Vocab::build(tokens, config.min_frequency), config);
  const auto enc = encode(model.vocab(), train, config.levels);

  ad::AdamState<T> adam;
  adam.config.learning_rate = config.learning_rate;
  CounterRng order_rng(config.seed, "fixed_fp.shuffle");
  std::vector<std::size_t> order(enc.ids.size());
  const std::size_t bs = std::max<std::size_t>(1, config.batch_size);
  FpPretrainReport local;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    shuffle(order.begin(), order.end(), order_rng);
    double sq = 0.0;
    std::size_t n = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      std::vector<std::vector<std::int32_t>> rows;
      std::vector<const std::vector<double>*> bins;
      for (std::size_t i = start; i < end; ++i) {
        rows.push_back(enc.ids[order[i]]);
        bins.push_back(&enc.bins[order[i]]);
      }
      const auto batch = data::pack_sequences(rows);
      Graph<T> g;
      const Var pred = model.forward(g, batch);
      const auto target = batch_target<T>(batch, bins);
      const Var loss = variance_weighted_mse(g, pred, target, T{1}, Reduction::kMean);
      const double count = static_cast<double>(batch.token_count());
      sq += static_cast<double>(g.value(loss).item()) * count;
      n += batch.token_count();
      model.params().zero_grad();
      g.backward(loss);
      if (config.clip_norm > 0) ad::clip_global_norm(model.params(), config.clip_norm);
      ad::adam_step(adam, model.params());
    }
    local.train_mse.push_back(n ? sq / static_cast<double>(n) : 0.0);
  }
  local.held_out = evaluate_fixed_fp(model, test);
  if (report) *report = std::move(local);
  return model;
}

std::vector<int> to_hard_gates(std::span<const double> durations, int levels) {
  if (levels < 1) throw std::invalid_argument("to_hard_gates: levels must be >= 1");
  std::vector<int> out;
  out.reserve(durations.size());
  for (double d : durations) {
    if (std::isnan(d)) throw std::invalid_argument("to_hard_gates: NaN duration");
    const double r = std::round(std::clamp(d, 1.0, static_cast<double>(levels)));
    out.push_back(static_cast<int>(r));
  }
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) throw std::invalid_argument("pearson: lengths differ or empty");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// Adaptive FP ---------------------------------------------------------------

template <typename T>
gated::ModelSpec AdaptiveFpModel<T>::trunk_spec(const gated::ModelSpec& host, std::size_t hidden_dim) {
  gated::ModelSpec spec;
  spec.variant = gated::cell_kind(host.variant) == cells::CellKind::kRnn ? gated::Variant::kRnn : gated::Variant::kLstm;
  spec.input_dim = host.input_dim;
  spec.hidden_dim = hidden_dim;
  spec.layers = gated::is_fgp(host.variant) && !gated::is_stacked(host.variant) ? 1 : host.layers;
  return spec;
}

template <typename T>
std::size_t AdaptiveFpModel<T>::parameter_count(const gated::ModelSpec& host, std::size_t hidden_dim) {
  return gated::recurrent_parameter_count(trunk_spec(host, hidden_dim)) + hidden_dim + 1;
}

template <typename T>
AdaptiveFpModel<T> AdaptiveFpModel<T>::create(ParameterSet<T>& params, const std::string& prefix,
                                              const gated::ModelSpec& host, std::size_t hidden_dim,
                                              ParamRef<T> shared_embedding, CounterRng& rng) {
  if (!shared_embedding || shared_embedding->value.cols() != host.input_dim) {
    throw ad::ShapeError("adaptive FP: shared embedding width must equal the host input dim " +
                         std::to_string(host.input_dim));
  }
  AdaptiveFpModel m;
  const std::size_t before = params.size();
  m.trunk_ = gated::RecurrentModel<T>::create(params, prefix + ".trunk", trunk_spec(host, hidden_dim), rng);
  m.head_w_ = params.create(prefix + ".head.w", {1, hidden_dim}, Init::kUniformFanIn, rng);
  m.head_b_ = params.create(prefix + ".head.b", {1}, Init::kZeros, rng);
  for (std::size_t i = before; i < params.size(); ++i) m.owned_.push_back(params.all()[i]->name);
  m.embedding_ = std::move(shared_embedding);
  return m;
}

template <typename T>
Var AdaptiveFpModel<T>::durations(Graph<T>& g, gated::ModelState<T>& state, std::span<const Var> inputs,
                                  const gated::LayerDropout<T>& dropout) const {
  if (inputs.empty()) throw std::invalid_argument("adaptive FP: empty segment");
  std::vector<Var> hs;
  hs.reserve(inputs.size());
  for (const Var x : inputs) hs.push_back(trunk_.step(g, state, x, gated::StepGate<T>::full(), dropout));
  return g.affine(g.concat_rows(hs), g.parameter(head_w_), g.parameter(head_b_));
}

template class FixedFpModel<float>;
template class FixedFpModel<double>;
template class AdaptiveFpModel<float>;
template class AdaptiveFpModel<double>;
template FixedFpModel<float> pretrain_fixed_fp(const std::vector<data::FixationSentence>&,
                                               const std::vector<data::FixationSentence>&, const FixedFpConfig&,
                                               FpPretrainReport*);
template FixedFpModel<double> pretrain_fixed_fp(const std::vector<data::FixationSentence>&,
                                                const std::vector<data::FixationSentence>&, const FixedFpConfig&,
                                                FpPretrainReport*);
template FpEvaluation evaluate_fixed_fp(const FixedFpModel<float>&, const std::vector<data::FixationSentence>&);
template FpEvaluation evaluate_fixed_fp(const FixedFpModel<double>&, const std::vector<data::FixationSentence>&);

}  // namespace fgrnn::fp
