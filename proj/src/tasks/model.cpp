// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/tasks/model.hpp"

#include <cmath>
#include <stdexcept>

#include "fgrnn/autodiff/optim.hpp"
#include "fgrnn/fp/fixation.hpp"

namespace fgrnn::tasks {

using ad::Init;
using ad::Tensor;

namespace {

constexpr std::string_view kEmbedding = "embedding";
constexpr std::string_view kOutBias = "lm.out_b";
constexpr std::string_view kRunning = "afp.running";

}  // namespace

std::string_view task_name(Task t) { return t == Task::kLm ? "lm" : "sentiment"; }

Task parse_task(std::string_view name) {
  if (name == "lm") return Task::kLm;
  if (name == "sentiment") return Task::kSentiment;
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

void TaskModelSpec::validate() const {
  rnn.validate();
  if (vocab_size == 0 || emb_dim == 0) throw std::invalid_argument("task model: vocab and embedding must be non-empty");
  if (rnn.input_dim != emb_dim) {
    throw std::invalid_argument("task model: recurrent input dim " + std::to_string(rnn.input_dim) +
                                " differs from embedding dim " + std::to_string(emb_dim));
  }
  if (adaptive_fp && gated::is_vanilla(rnn.variant)) {
    throw std::invalid_argument("task model: adaptive FP needs a fixation-guided variant");
  }
}

bool counts_toward_budget(const std::string& name) {
  return name != kEmbedding && name != kOutBias && name != kRunning;
}

std::size_t count_parameters(const TaskModelSpec& spec) {
  const std::size_t out = spec.rnn.output_dim();
  std::size_t n = gated::recurrent_parameter_count(spec.rnn) + spec.emb_dim * out + spec.emb_dim;
  if (spec.task == Task::kSentiment) n += 2 * spec.emb_dim + 2;
  if (spec.adaptive_fp) n += fp::AdaptiveFpModel<double>::parameter_count(spec.rnn, spec.fp_hidden());
  return n;
}

std::size_t fit_hidden_dim(TaskModelSpec spec, std::size_t budget) {
  auto count_at = [&](std::size_t h) {
    spec.rnn.hidden_dim = h;
    return count_parameters(spec);
  };
  if (count_at(1) > budget) {
    throw std::invalid_argument("parameter budget " + std::to_string(budget) + " is below the minimum " +
                                std::to_string(count_at(1)) + " for " + std::string(gated::variant_name(spec.rnn.variant)));
  }
  std::size_t lo = 1;  // fits
  std::size_t hi = 2;
  while (count_at(hi) <= budget) {
    lo = hi;
    hi *= 2;
  }
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    (count_at(mid) <= budget ? lo : hi) = mid;
  }
  return lo;
}

template <typename T>
TaskModel<T> TaskModel<T>::create(const TaskModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  TaskModel m;
  m.spec_ = spec;
  CounterRng rng(seed, "task.init");
  m.embedding_ = m.params_.create(std::string(kEmbedding), {spec.vocab_size, spec.emb_dim}, Init::kUniformFanIn, rng);
  m.rnn_ = gated::RecurrentModel<T>::create(m.params_, "rnn", spec.rnn, rng);
  const std::size_t out = spec.rnn.output_dim();
  if (spec.task == Task::kLm) {
    m.fc_w_ = m.params_.create("lm.fc.w", {spec.emb_dim, out}, Init::kUniformFanIn, rng);
    m.fc_b_ = m.params_.create("lm.fc.b", {spec.emb_dim}, Init::kZeros, rng);
    m.out_b_ = m.params_.create(std::string(kOutBias), {spec.vocab_size}, Init::kZeros, rng);
  } else {
    m.fc_w_ = m.params_.create("cls.fc.w", {spec.emb_dim, out}, Init::kUniformFanIn, rng);
    m.fc_b_ = m.params_.create("cls.fc.b", {spec.emb_dim}, Init::kZeros, rng);
    m.cls_w_ = m.params_.create("cls.out.w", {2, spec.emb_dim}, Init::kUniformFanIn, rng);
    m.cls_b_ = m.params_.create("cls.out.b", {2}, Init::kZeros, rng);
  }
  for (const auto& p : m.params_.all()) {
    if (p->name != kEmbedding) m.host_names_.push_back(p->name);
  }
  if (spec.adaptive_fp) {
    m.afp_ = fp::AdaptiveFpModel<T>::create(m.params_, "afp", spec.rnn, spec.fp_hidden(), m.embedding_, rng);
    if (spec.stats_scope == StatsScope::kRunning) {
      m.running_ = m.params_.create(std::string(kRunning), {3}, Init::kZeros, rng);
      m.running_->value[1] = T{1};
      m.running_->trainable = false;
    }
  }
  return m;
}

template <typename T>
std::size_t TaskModel<T>::counted_parameters() const {
  return params_.numel([](const ad::Parameter<T>& p) { return p.trainable && counts_toward_budget(p.name); });
}

template <typename T>
Var TaskModel<T>::dropout(Graph<T>& g, Var x, double rate, const ForwardOptions& options) const {
  if (!options.training || rate <= 0.0) return x;
  if (!options.rng) throw std::invalid_argument("dropout in training needs an rng");
  return g.dropout(x, ad::sample_dropout_mask<T>(g.shape(x), rate, *options.rng));
}

template <typename T>
Var TaskModel<T>::normalize(Graph<T>& g, Var dhat, std::span<const std::uint8_t> mask, bool training) const {
  const int k = spec_.rnn.levels();
  if (running_ && !training && running_->value[2] != T{0}) {
    const double mean = running_->value[0];
    const double sd = std::max(std::sqrt(static_cast<double>(running_->value[1])), fp::kDefaultStdFloor);
    const double scale = k / 3.92;
    return g.affine_scalar(dhat, static_cast<T>(scale / sd), static_cast<T>((1.96 - mean / sd) * scale));
  }
  return fp::normalize_durations(g, dhat, mask, k);
}

template <typename T>
void TaskModel<T>::update_running_stats(double mean, double stddev, double momentum) {
  if (!running_) return;
  auto& v = running_->value;
  if (v[2] == T{0}) {
    v[0] = static_cast<T>(mean);
    v[1] = static_cast<T>(stddev * stddev);
    v[2] = T{1};
    return;
  }
  v[0] = static_cast<T>(momentum * v[0] + (1 - momentum) * mean);
  v[1] = static_cast<T>(momentum * v[1] + (1 - momentum) * stddev * stddev);
}

template <typename T>
std::pair<double, double> TaskModel<T>::running_stats() const {
  if (!running_) return {0.0, 1.0};
  return {running_->value[0], std::sqrt(static_cast<double>(running_->value[1]))};
}

template <typename T>
SegmentOutput TaskModel<T>::forward(Graph<T>& g, gated::ModelState<T>& state, gated::ModelState<T>* fp_state,
                                    std::span<const std::int32_t> ids, std::size_t batch, std::span<const int> hard,
                                    std::span<const double> soft, std::span<const std::uint8_t> mask,
                                    const ForwardOptions& options) const {
  if (batch == 0 || ids.size() % batch != 0 || ids.empty()) {
    throw ad::ShapeError("task forward: " + std::to_string(ids.size()) + " ids do not fill batch " +
                         std::to_string(batch));
  }
  const std::size_t len = ids.size() / batch;
  if (!hard.empty() && hard.size() != ids.size()) throw ad::ShapeError("task forward: hard gate length mismatch");
  if (!soft.empty() && soft.size() != ids.size()) throw ad::ShapeError("task forward: soft gate length mismatch");

  const Var table = g.parameter(embedding_);
  std::vector<Var> xs;
  xs.reserve(len);
  for (std::size_t t = 0; t < len; ++t) {
    xs.push_back(dropout(g, g.embedding(table, ids.subspan(t * batch, batch)), options.dropout_embed, options));
  }
  const gated::LayerDropout<T> layer_dropout{options.dropout_other, options.rng, options.training};

  SegmentOutput out;
  if (!soft.empty()) {
    std::vector<T> v(soft.begin(), soft.end());
    out.dbar = g.constant(Tensor<T>({soft.size(), 1}, std::move(v)));
  } else if (afp_ && hard.empty()) {
    if (!fp_state) throw std::invalid_argument("task forward: adaptive model needs an FP state");
    out.dhat = afp_->durations(g, *fp_state, xs, layer_dropout);
    out.dbar = normalize(g, out.dhat, mask, options.training);
  }
  const T s = static_cast<T>(spec_.rnn.steepness);
  out.outputs.reserve(len);
  for (std::size_t t = 0; t < len; ++t) {
    gated::StepGate<T> gate;
    if (!hard.empty()) {
      gate = gated::StepGate<T>::hard(std::vector<int>(hard.begin() + t * batch, hard.begin() + (t + 1) * batch));
    } else if (out.dbar.valid()) {
      gate = gated::StepGate<T>::soft(g.slice_rows(out.dbar, t * batch, batch), s);
    }
    out.outputs.push_back(rnn_.step(g, state, xs[t], gate, layer_dropout));
  }
  return out;
}

template <typename T>
Var TaskModel<T>::lm_log_probs(Graph<T>& g, std::span<const Var> outputs, const ForwardOptions& options) const {
  if (spec_.task != Task::kLm) throw std::logic_error("lm_log_probs on a sentiment model");
  const Var h = dropout(g, g.concat_rows(outputs), options.dropout_other, options);
  const Var proj = g.tanh(g.affine(h, g.parameter(fc_w_), g.parameter(fc_b_)));
  return g.log_softmax(g.affine(proj, g.parameter(embedding_), g.parameter(out_b_)));
}

template <typename T>
Var TaskModel<T>::sentiment_logits(Graph<T>& g, Var last, const ForwardOptions& options) const {
  if (spec_.task != Task::kSentiment) throw std::logic_error("sentiment_logits on an LM model");
  const Var h = dropout(g, last, options.dropout_other, options);
  const Var proj = g.tanh(g.affine(h, g.parameter(fc_w_), g.parameter(fc_b_)));
  return g.affine(proj, g.parameter(cls_w_), g.parameter(cls_b_));
}

namespace {

template <typename T>
SegmentOutput eval_single(const TaskModel<T>& model, Graph<T>& g, std::span<const std::int32_t> ids,
                          const gated::GateSchedule* schedule) {
  if (ids.empty()) throw std::invalid_argument("forward: empty token sequence");
  std::span<const int> hard;
  std::span<const double> soft;
  if (schedule) {
    schedule->validate(ids.size());
    if (schedule->mode == gated::GateSchedule::Mode::kHard) {
      hard = schedule->hard;
    } else {
      soft = schedule->soft;
    }
  }
  auto state = model.rnn().zero_state(g, 1);
  std::optional<gated::ModelState<T>> fp_state;
  if (model.adaptive()) fp_state = model.adaptive()->zero_state(g, 1);
  return model.forward(g, state, fp_state ? &*fp_state : nullptr, ids, 1, hard, soft, {}, {});
}

}  // namespace

template <typename T>
std::vector<std::vector<double>> lm_forward(const TaskModel<T>& model, std::span<const std::int32_t> ids,
                                            const gated::GateSchedule* schedule) {
  Graph<T> g;
  const auto seg = eval_single(model, g, ids, schedule);
  const auto& lp = g.value(model.lm_log_probs(g, seg.outputs, {}));
  std::vector<std::vector<double>> out(lp.rows());
  for (std::size_t r = 0; r < lp.rows(); ++r) {
    out[r].resize(lp.cols());
    for (std::size_t c = 0; c < lp.cols(); ++c) out[r][c] = lp.at(r, c);
  }
  return out;
}

template <typename T>
std::vector<double> sentiment_forward(const TaskModel<T>& model, std::span<const std::int32_t> ids,
                                      const gated::GateSchedule* schedule) {
  Graph<T> g;
  const auto seg = eval_single(model, g, ids, schedule);
  const auto& p = g.value(g.softmax(model.sentiment_logits(g, seg.outputs.back(), {})));
  return {p[0], p[1]};
}

double mean_nll(const std::vector<std::vector<double>>& log_probs, std::span<const std::int32_t> targets) {
  if (targets.empty()) throw std::invalid_argument("perplexity: no targets");
  if (log_probs.size() != targets.size()) throw std::invalid_argument("perplexity: rows and targets differ in length");
  double nll = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) nll -= log_probs[i].at(static_cast<std::size_t>(targets[i]));
  return nll / static_cast<double>(targets.size());
}

double perplexity(const std::vector<std::vector<double>>& log_probs, std::span<const std::int32_t> targets) {
  return std::exp(mean_nll(log_probs, targets));
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size() || labels.empty()) {
    throw std::invalid_argument("accuracy: predictions and labels must be non-empty and aligned");
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("accuracy: label " + std::to_string(labels[i]));
    hit += predictions[i] == labels[i];
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

template class TaskModel<float>;
template class TaskModel<double>;
template std::vector<std::vector<double>> lm_forward(const TaskModel<float>&, std::span<const std::int32_t>,
                                                     const gated::GateSchedule*);
template std::vector<std::vector<double>> lm_forward(const TaskModel<double>&, std::span<const std::int32_t>,
                                                     const gated::GateSchedule*);
template std::vector<double> sentiment_forward(const TaskModel<float>&, std::span<const std::int32_t>,
                                               const gated::GateSchedule*);
template std::vector<double> sentiment_forward(const TaskModel<double>&, std::span<const std::int32_t>,
                                               const gated::GateSchedule*);

}  // namespace fgrnn::tasks
