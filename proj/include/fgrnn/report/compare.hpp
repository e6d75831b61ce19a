// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "fgrnn/tasks/train.hpp"

namespace fgrnn::report {

/// One group of runs sharing the group-by key values.
struct CompareRow {
  std::vector<std::string> key;  // one value per group-by field
  std::string task;
  std::string metric;            // "test_ppl" or "test_acc"
  std::size_t runs = 0;          // runs with a final metric
  std::size_t failed = 0;        // diverged or unfinished runs
  double mean = 0.0;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct CompareTable {
  std::vector<std::string> group_by;
  std::vector<CompareRow> rows;  // sorted by key
};

/// Accepted fields: task, variant, gate_source, seed, hidden_dim, params, run_id.
const std::vector<std::string>& group_fields();

/// Groups runs and aggregates their final metric. Throws
/// std::invalid_argument on an unknown field, an empty input, or a group
/// mixing tasks.
CompareTable compare_runs(const std::vector<tasks::RunMetrics>& runs, const std::vector<std::string>& group_by);

/// Aligned plain-text table.
std::string format_table(const CompareTable& table);
/// JSON record with the same content.
std::string format_json(const CompareTable& table);

}  // namespace fgrnn::report
