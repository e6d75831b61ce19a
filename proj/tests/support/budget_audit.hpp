// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "fgrnn/tasks/model.hpp"

namespace fgrnn::check {

struct AuditCase {
  gated::Variant variant;
  std::size_t k, layers, inter;
  bool adaptive;
  tasks::Task task;
};

inline std::vector<AuditCase> audit_cases() {
  using gated::Variant;
  using tasks::Task;
  return {
      {Variant::kRnn, 1, 1, 0, false, Task::kLm},          {Variant::kLstm, 1, 1, 0, false, Task::kLm},
      {Variant::kFgpRnn, 4, 1, 0, false, Task::kLm},       {Variant::kFgpLstm, 4, 1, 0, false, Task::kLm},
      {Variant::kFgpLstm, 4, 1, 0, true, Task::kLm},       {Variant::kStackedFgpRnn, 4, 2, 32, true, Task::kLm},
      {Variant::kStackedFgpLstm, 4, 2, 32, false, Task::kLm}, {Variant::kFglRnn, 1, 3, 0, true, Task::kLm},
      {Variant::kFglLstm, 1, 4, 0, false, Task::kLm},      {Variant::kLstm, 1, 1, 0, false, Task::kSentiment},
      {Variant::kFgpLstm, 4, 1, 0, true, Task::kSentiment},
  };
}

struct AuditResult {
  std::string label;
  std::size_t hidden = 0;
  std::size_t formula = 0;     // count_parameters
  std::size_t enumerated = 0;  // sum over budgeted checkpoint tensors
  std::size_t model_count = 0; // TaskModel::counted_parameters
  std::size_t excluded = 0;    // everything else in the checkpoint
  std::size_t expected_excluded = 0;
  std::size_t next_formula = 0;  // count at hidden + 1
  bool ok(std::size_t budget) const {
    return formula == enumerated && model_count == enumerated && enumerated <= budget && next_formula > budget &&
           excluded == expected_excluded;
  }
};

/// Fits the hidden dim to `budget`, builds the model and enumerates its
/// tensors. vocab 1000, embedding 64.
inline AuditResult audit_budget(const AuditCase& c, std::size_t budget) {
  const std::size_t vocab = 1000, emb = 64;
  tasks::TaskModelSpec s;
  s.task = c.task;
  s.vocab_size = vocab;
  s.emb_dim = emb;
  s.rnn = gated::ModelSpec{c.variant, emb, 1, c.k, c.layers, c.inter, 4.0};
  s.adaptive_fp = c.adaptive;
  s.stats_scope = c.adaptive ? tasks::StatsScope::kRunning : tasks::StatsScope::kBatch;
  AuditResult r;
  r.label = std::string(gated::variant_name(c.variant)) + (c.adaptive ? "+adaptive" : "") + "/" +
            std::string(tasks::task_name(c.task));
  r.hidden = tasks::fit_hidden_dim(s, budget);
  s.rnn.hidden_dim = r.hidden;
  r.formula = tasks::count_parameters(s);
  const auto model = tasks::TaskModel<float>::create(s, 0);
  for (const auto& p : model.params().all()) {
    if (tasks::counts_toward_budget(p->name)) {
      r.enumerated += p->value.size();
    } else {
      r.excluded += p->value.size();
    }
  }
  r.model_count = model.counted_parameters();
  // Embedding table, tied-output bias (LM), running-stats buffer (adaptive).
  r.expected_excluded = vocab * emb + (c.task == tasks::Task::kLm ? vocab : 0) + (c.adaptive ? 3 : 0);
  auto bigger = s;
  bigger.rnn.hidden_dim = r.hidden + 1;
  r.next_formula = tasks::count_parameters(bigger);
  return r;
}

}  // namespace fgrnn::check
