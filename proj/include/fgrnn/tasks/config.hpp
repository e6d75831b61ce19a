// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

#include "fgrnn/gated/model.hpp"
#include "fgrnn/tasks/fixations.hpp"
#include "fgrnn/tasks/model.hpp"

namespace fgrnn::tasks {

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& key, const std::string& message)
      : std::invalid_argument("config key '" + key + "': " + message), key(key) {}
  std::string key;
};

/// Where task text comes from: generated, plain files, or the processed
/// fixation corpus (needed for human gates).
enum class CorpusSource { kSynthetic, kFiles, kFixation };

/// Flat key=value run description. Every field has a key of the same name
/// (see config_keys()).
struct TaskConfig {
  Task task = Task::kLm;
  gated::Variant variant = gated::Variant::kLstm;
  std::size_t k_components = 1;
  std::size_t n_layers = 1;
  std::size_t inter_dim = 0;
  std::size_t hidden_dim = 0;     // 0: fit to param_budget
  std::size_t param_budget = 0;
  std::size_t emb_dim = 64;
  GateSource gate_source = GateSource::kNone;
  double lambda = -1.0;           // < 0: task default (0.3 LM, 0.001 sentiment)
  double s = 4.0;
  double epsilon = 0.1;
  double lr = 0.001;
  std::size_t batch_size = 64;
  double seq_len = 100.0;         // mean segment length (LM)
  std::size_t eval_batch_size = 10;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  double dropout_embed = 0.5;
  double dropout_other = 0.25;
  double clip = 5.0;
  std::size_t min_freq = 2;
  std::size_t fp_hidden_dim = 0;  // adaptive FP trunk; 0: same as hidden_dim
  StatsScope stats_scope = StatsScope::kBatch;

  CorpusSource corpus = CorpusSource::kSynthetic;
  std::string train_path;
  std::string valid_path;
  std::string test_path;
  std::string fixation_corpus;    // processed eye-tracking corpus (prep output)
  std::string fp_checkpoint;      // fixed FP model
  std::size_t fixation_batch_size = 0;  // 0: batch_size

  std::size_t synth_vocab = 500;
  std::size_t synth_tokens = 100000;
  std::size_t synth_successors = 10;
  std::size_t synth_sentences = 600;
  std::uint64_t synth_seed = 0;

  double effective_lambda() const;
  /// Recurrent spec with input_dim = emb_dim (hidden_dim as configured).
  gated::ModelSpec model_spec() const;
  TaskModelSpec task_spec(std::size_t vocab_size) const;
  /// Cross-field checks; throws ConfigError naming the offending key.
  void validate() const;
};

/// Parses key=value lines ('#' starts a comment). Unknown keys and bad
/// values throw ConfigError with the key name.
TaskConfig parse_config(std::string_view text);
TaskConfig load_config(const std::filesystem::path& path);
void set_config_value(TaskConfig& config, const std::string& key, const std::string& value);

/// Every key with its canonical value.
std::map<std::string, std::string> config_pairs(const TaskConfig& config);
std::string format_config(const TaskConfig& config);
const std::vector<std::string>& config_keys();

/// 16 hex digits of FNV-1a over the sorted canonical pairs. Independent of
/// key order and of whether defaults were spelled out.
std::string run_id(const TaskConfig& config);

}  // namespace fgrnn::tasks
