// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fgrnn/fp/models.hpp"
#include "fgrnn/gated/model.hpp"

namespace fgrnn::tasks {

using ad::Graph;
using ad::ParamRef;
using ad::ParameterSet;
using ad::Var;

enum class Task { kLm, kSentiment };
std::string_view task_name(Task t);
Task parse_task(std::string_view name);

/// Scope of the mean/std used to normalize adaptive durations. kBatch uses
/// the current segment's non-padding positions; kRunning does the same in
/// training but evaluates with an exponential moving average.
enum class StatsScope { kBatch, kRunning };

struct TaskModelSpec {
  Task task = Task::kLm;
  gated::ModelSpec rnn;  // rnn.input_dim must equal emb_dim
  std::size_t vocab_size = 0;
  std::size_t emb_dim = 0;
  bool adaptive_fp = false;
  std::size_t fp_hidden_dim = 0;  // 0: follow rnn.hidden_dim
  StatsScope stats_scope = StatsScope::kBatch;

  std::size_t fp_hidden() const { return fp_hidden_dim ? fp_hidden_dim : rnn.hidden_dim; }
  void validate() const;
};

/// Parameters excluded from the budget: the embedding table and the bias of
/// the tied output layer. Non-trainable buffers are not parameters either.
bool counts_toward_budget(const std::string& name);

/// Budgeted parameter count: recurrent part, head (FC-tanh plus the
/// classifier for sentiment), and the adaptive FP trunk and head.
std::size_t count_parameters(const TaskModelSpec& spec);

/// Largest rnn.hidden_dim (and fp hidden, when it follows) whose count is
/// <= budget. Throws when even hidden dim 1 exceeds the budget.
std::size_t fit_hidden_dim(TaskModelSpec spec, std::size_t budget);

struct ForwardOptions {
  bool training = false;
  double dropout_embed = 0.0;
  double dropout_other = 0.0;
  CounterRng* rng = nullptr;  // required when training with dropout
};

struct SegmentOutput {
  std::vector<Var> outputs;  // per step [B, output_dim]
  Var dhat;                  // adaptive only: [len*B, 1]
  Var dbar;
};

/// Embedding, recurrent model, optional adaptive FP model, and task head.
/// LM head: FC -> tanh -> tied output (embedding as weight, own bias).
/// Sentiment head: FC -> tanh -> FC(2).
template <typename T>
class TaskModel {
 public:
  static TaskModel create(const TaskModelSpec& spec, std::uint64_t seed);

  const TaskModelSpec& spec() const { return spec_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  const ParamRef<T>& embedding() const { return embedding_; }
  const gated::RecurrentModel<T>& rnn() const { return rnn_; }
  const fp::AdaptiveFpModel<T>* adaptive() const { return afp_ ? &*afp_ : nullptr; }
  /// Names of recurrent and head parameters (theta_m, without the embedding).
  const std::vector<std::string>& host_parameters() const { return host_names_; }

  /// Budgeted count over the actual tensors.
  std::size_t counted_parameters() const;

  /// One segment. `ids` and `hard` are time-major [len * batch]; `hard` is
  /// empty unless the gates are hard. `soft` (time-major, optional) feeds
  /// explicit normalized gate values instead of the adaptive model. `mask`
  /// marks non-padding positions for the duration statistics.
  SegmentOutput forward(Graph<T>& g, gated::ModelState<T>& state, gated::ModelState<T>* fp_state,
                        std::span<const std::int32_t> ids, std::size_t batch, std::span<const int> hard,
                        std::span<const double> soft, std::span<const std::uint8_t> mask,
                        const ForwardOptions& options) const;

  /// Log-probabilities [len*B, V] from stacked outputs.
  Var lm_log_probs(Graph<T>& g, std::span<const Var> outputs, const ForwardOptions& options) const;
  /// Class logits [B, 2].
  Var sentiment_logits(Graph<T>& g, Var last, const ForwardOptions& options) const;

  /// Running duration statistics (kRunning scope only).
  void update_running_stats(double mean, double stddev, double momentum = 0.99);
  std::pair<double, double> running_stats() const;

 private:
  Var normalize(Graph<T>& g, Var dhat, std::span<const std::uint8_t> mask, bool training) const;
  Var dropout(Graph<T>& g, Var x, double rate, const ForwardOptions& options) const;

  TaskModelSpec spec_;
  ParameterSet<T> params_;
  ParamRef<T> embedding_;
  gated::RecurrentModel<T> rnn_;
  std::optional<fp::AdaptiveFpModel<T>> afp_;
  ParamRef<T> fc_w_, fc_b_, out_b_, cls_w_, cls_b_;
  ParamRef<T> running_;  // [mean, variance, initialized]
  std::vector<std::string> host_names_;
};

/// Single-sequence LM forward in evaluation mode from a zero state:
/// row t is log p(. | ids[0..t]). `schedule` must have ids.size() entries
/// when given; without one, adaptive models use their own predictor and
/// the others run with full gates.
template <typename T>
std::vector<std::vector<double>> lm_forward(const TaskModel<T>& model, std::span<const std::int32_t> ids,
                                            const gated::GateSchedule* schedule = nullptr);

/// Class probabilities of one sentence in evaluation mode.
template <typename T>
std::vector<double> sentiment_forward(const TaskModel<T>& model, std::span<const std::int32_t> ids,
                                      const gated::GateSchedule* schedule = nullptr);

/// exp(mean NLL) and the mean NLL itself over aligned rows.
double mean_nll(const std::vector<std::vector<double>>& log_probs, std::span<const std::int32_t> targets);
double perplexity(const std::vector<std::vector<double>>& log_probs, std::span<const std::int32_t> targets);

/// Fraction of equal entries; labels must be 0 or 1.
double accuracy(std::span<const int> predictions, std::span<const int> labels);

}  // namespace fgrnn::tasks
