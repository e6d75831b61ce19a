// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "fgrnn/tasks/config.hpp"

namespace fgrnn::report {

/// Config overrides (key, value) applied on top of the base config.
using Arm = std::vector<std::pair<std::string, std::string>>;

/// Parses "key=value,key=value".
Arm parse_arm(const std::string& text);

/// Arms crossing variants with gate sources. Vanilla variants pair only
/// with gate_source=none, the others with every listed source.
std::vector<Arm> cross_arms(const std::vector<std::string>& variants, const std::vector<std::string>& gate_sources);

struct ExperimentMatrix {
  tasks::TaskConfig base;
  std::vector<Arm> arms;
  std::vector<std::uint64_t> seeds;
};

struct MatrixCell {
  std::string run_id;
  tasks::TaskConfig config;
};

/// arms x seeds, in that order. Every cell is validated; duplicate run ids
/// throw std::invalid_argument.
std::vector<MatrixCell> expand_matrix(const ExperimentMatrix& matrix);

struct CellResult {
  std::string run_id;
  std::filesystem::path dir;
  int exit_code = 0;  // of the worker; -1 when it could not start
  bool skipped = false;
};

/// Runs every cell as `executable train --config <dir>/config.txt --out <dir>`
/// with <dir> = out_dir/<run_id>, at most `jobs` processes at a time.
/// Worker output goes to <dir>/log.txt. With `resume`, cells whose
/// metrics already hold a final record are skipped.
std::vector<CellResult> run_matrix(const std::vector<MatrixCell>& cells, const std::filesystem::path& out_dir,
                                   const std::filesystem::path& executable, std::size_t jobs, bool resume = false);

}  // namespace fgrnn::report
