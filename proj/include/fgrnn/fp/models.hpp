// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fgrnn/autodiff/graph.hpp"
#include "fgrnn/cells/cells.hpp"
#include "fgrnn/data/batch.hpp"
#include "fgrnn/data/eyetrack.hpp"
#include "fgrnn/data/text.hpp"
#include "fgrnn/gated/model.hpp"

namespace fgrnn::fp {

using ad::Graph;
using ad::ParamRef;
using ad::ParameterSet;
using ad::Var;

struct FixedFpConfig {
  std::size_t embed_dim = 50;
  std::size_t hidden_dim = 100;
  std::size_t fc_dim = 50;
  int levels = 4;
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double learning_rate = 0.005;
  double clip_norm = 5.0;
  std::size_t min_frequency = 1;
  std::uint64_t seed = 0;
};

/// Regression quality on bins (raw, unrounded predictions).
struct FpEvaluation {
  double l1 = 0.0;
  double mse = 0.0;
  double pearson = 0.0;
  std::size_t tokens = 0;
};

/// embedding -> LSTM -> FC -> tanh -> FC(1), one duration per token.
template <typename T>
class FixedFpModel {
 public:
  static FixedFpModel create(data::Vocab vocab, const FixedFpConfig& config);

  const FixedFpConfig& config() const { return config_; }
  const data::Vocab& vocab() const { return vocab_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

  /// Durations [length * batch, 1] in time-major order.
  Var forward(Graph<T>& g, const data::TokenBatch& batch) const;

  std::vector<double> predict(std::span<const std::string> tokens) const;
  std::vector<std::vector<double>> predict(const std::vector<std::vector<std::string>>& sentences) const;

  /// Checkpoint at `path`, config and vocabulary at `path` + ".json".
  void save(const std::filesystem::path& path) const;
  static FixedFpModel load(const std::filesystem::path& path);

 private:
  FixedFpConfig config_;
  data::Vocab vocab_;
  ParameterSet<T> params_;
  ParamRef<T> embedding_;
  cells::LstmCell<T> lstm_;
  ParamRef<T> fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

struct FpPretrainReport {
  std::vector<double> train_mse;  // per epoch
  FpEvaluation held_out;
};

/// Trains on the bins of `train` with MSE and evaluates on `test`. Every
/// record needs a bin in {1..levels}.
template <typename T>
FixedFpModel<T> pretrain_fixed_fp(const std::vector<data::FixationSentence>& train,
                                  const std::vector<data::FixationSentence>& test, const FixedFpConfig& config,
                                  FpPretrainReport* report = nullptr);

template <typename T>
FpEvaluation evaluate_fixed_fp(const FixedFpModel<T>& model, const std::vector<data::FixationSentence>& sentences);

/// Round to nearest (halves away from zero) and clamp to {1..levels}.
std::vector<int> to_hard_gates(std::span<const double> durations, int levels);

double pearson(std::span<const double> x, std::span<const double> y);

/// Jointly trained predictor. Its trunk mirrors the host: same cell family
/// and layer count, run as a plain stack. It reads the host's (shared)
/// embedded inputs and emits one raw duration per token.
template <typename T>
class AdaptiveFpModel {
 public:
  static gated::ModelSpec trunk_spec(const gated::ModelSpec& host, std::size_t hidden_dim);
  /// Trunk plus head; the shared embedding is not counted.
  static std::size_t parameter_count(const gated::ModelSpec& host, std::size_t hidden_dim);

  static AdaptiveFpModel create(ParameterSet<T>& params, const std::string& prefix, const gated::ModelSpec& host,
                                std::size_t hidden_dim, ParamRef<T> shared_embedding, CounterRng& rng);

  const ParamRef<T>& embedding() const { return embedding_; }
  const gated::RecurrentModel<T>& trunk() const { return trunk_; }
  /// Names of the parameters this model owns (trunk and head).
  const std::vector<std::string>& owned_parameters() const { return owned_; }

  gated::ModelState<T> zero_state(Graph<T>& g, std::size_t batch) const { return trunk_.zero_state(g, batch); }

  /// Raw durations for a segment of embedded inputs x_t [B, in]; result is
  /// [inputs.size() * B, 1], time-major.
  Var durations(Graph<T>& g, gated::ModelState<T>& state, std::span<const Var> inputs,
                const gated::LayerDropout<T>& dropout = {}) const;

 private:
  gated::RecurrentModel<T> trunk_;
  ParamRef<T> embedding_;
  ParamRef<T> head_w_, head_b_;
  std::vector<std::string> owned_;
};

}  // namespace fgrnn::fp
