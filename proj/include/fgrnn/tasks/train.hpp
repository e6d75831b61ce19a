// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fgrnn/data/text.hpp"
#include "fgrnn/fp/fixation.hpp"
#include "fgrnn/tasks/config.hpp"
#include "fgrnn/tasks/corpus.hpp"
#include "fgrnn/tasks/model.hpp"

namespace fgrnn::tasks {

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // joint loss when multi-task
  double train_nll = 0.0;   // task loss only
  std::optional<double> fixation_loss;
  double valid_nll = 0.0;
  std::optional<double> valid_ppl;  // LM
  std::optional<double> valid_acc;  // sentiment
  std::optional<double> test_acc;   // sentiment
};

/// Everything here is a deterministic function of the config; wall-clock
/// time is kept in a separate timing file.
struct RunMetrics {
  std::string run_id;
  Task task = Task::kLm;
  std::string variant;
  std::string gate_source;
  std::uint64_t seed = 0;
  std::size_t params = 0;  // embedding and tied output excluded
  std::size_t hidden_dim = 0;
  std::vector<EpochMetrics> epochs;
  std::size_t best_epoch = 0;
  std::optional<double> test_nll;
  std::optional<double> test_ppl;  // LM, best-validation checkpoint
  std::optional<double> test_acc;  // sentiment, best test accuracy over epochs
  std::size_t test_tokens = 0;
  bool diverged = false;
  std::uint64_t fixed_fp_checksum_before = 0;
  std::uint64_t fixed_fp_checksum_after = 0;

  /// The headline number compare_runs aggregates: test_ppl or test_acc.
  std::optional<double> final_metric() const;
};

std::string format_metrics(const RunMetrics& metrics);
RunMetrics parse_metrics(std::string_view text);
RunMetrics load_metrics(const std::filesystem::path& path);

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, RunMetrics partial)
      : std::runtime_error(what), partial(std::move(partial)) {}
  RunMetrics partial;
};

/// Text, vocabulary and gate schedules resolved from a config.
struct PreparedTask {
  data::Vocab vocab;
  // LM streams.
  std::vector<std::int32_t> train_ids, valid_ids, test_ids;
  // Sentiment sentences.
  std::vector<std::vector<std::int32_t>> train_sents, valid_sents, test_sents;
  std::vector<int> train_labels, valid_labels, test_labels;
  // Hard schedules aligned with the streams / sentences (empty if none).
  std::vector<int> train_gates, valid_gates, test_gates;
  std::vector<std::vector<int>> train_sent_gates, valid_sent_gates, test_sent_gates;
  // Multi-task fixation data encoded with `vocab`; targets standardized.
  std::vector<std::vector<std::int32_t>> fixation_ids;
  std::vector<fp::FixationTarget> fixation_targets;
  std::uint64_t fixed_fp_checksum = 0;
};

PreparedTask prepare_task(const TaskConfig& config);

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: keep nothing on disk
  std::function<void(const EpochMetrics&)> on_epoch;
  /// Called after the model is built, before the first step.
  std::function<void(TaskModel<float>&)> on_model;
};

/// Full training run. Writes metrics.jsonl, timing.jsonl, config.txt,
/// vocab.txt and model.ckpt (best validation) under out_dir. Throws
/// TrainingDiverged on a non-finite loss or gradient, after writing the
/// partial metrics; model.ckpt then holds the last good best model.
RunMetrics train(const TaskConfig& config, const TrainOptions& options = {});

/// Resolved hidden dim (fitted to the budget when hidden_dim is 0).
std::size_t resolve_hidden_dim(const TaskConfig& config, std::size_t vocab_size);

/// Test-split evaluation of a saved checkpoint.
RunMetrics evaluate_checkpoint(const TaskConfig& config, const std::filesystem::path& checkpoint);

/// Per-token gate values the model applies to `tokens` (adaptive: the
/// normalized durations; hard sources: the schedule). Used for heatmaps.
std::vector<double> model_fixations(const TaskConfig& config, const PreparedTask& prepared,
                                    const TaskModel<float>& model, const std::vector<std::string>& tokens);

}  // namespace fgrnn::tasks
