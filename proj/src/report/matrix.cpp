// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/report/matrix.hpp"

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "fgrnn/tasks/train.hpp"

extern char** environ;

namespace fgrnn::report {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

bool finished(const std::filesystem::path& dir) {
  std::ifstream in(dir / "metrics.jsonl");
  std::string line, last;
  while (std::getline(in, line)) {
    if (!line.empty()) last = line;
  }
  return last.find("\"kind\":\"final\"") != std::string::npos && last.find("\"diverged\":false") != std::string::npos;
}

pid_t spawn(const std::filesystem::path& exe, const std::filesystem::path& dir) {
  const std::string exe_s = exe.string(), cfg = (dir / "config.txt").string(), out = dir.string(),
                    log = (dir / "log.txt").string();
  std::vector<std::string> args{exe_s, "train", "--config", cfg, "--out", out};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_adddup2(&actions, STDOUT_FILENO, STDERR_FILENO);
  pid_t pid = -1;
  const int rc = posix_spawn(&pid, exe_s.c_str(), &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  return rc == 0 ? pid : -1;
}

}  // namespace

Arm parse_arm(const std::string& text) {
  Arm arm;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    const auto item = trim(text.substr(start, end - start));
    if (!item.empty()) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("arm item '" + item + "' is not key=value");
      arm.emplace_back(trim(item.substr(0, eq)), trim(item.substr(eq + 1)));
    }
    start = end + 1;
  }
  return arm;
}

std::vector<Arm> cross_arms(const std::vector<std::string>& variants, const std::vector<std::string>& gate_sources) {
  std::vector<Arm> arms;
  for (const auto& v : variants) {
    if (gated::is_vanilla(gated::parse_variant(v))) {
      arms.push_back({{"variant", v}, {"gate_source", "none"}});
      continue;
    }
    for (const auto& g : gate_sources) {
      if (tasks::parse_gate_source(g) == tasks::GateSource::kNone) continue;
      arms.push_back({{"variant", v}, {"gate_source", g}});
    }
  }
  return arms;
}

std::vector<MatrixCell> expand_matrix(const ExperimentMatrix& matrix) {
  std::vector<MatrixCell> cells;
  std::set<std::string> seen;
  const std::vector<Arm> arms = matrix.arms.empty() ? std::vector<Arm>{Arm{}} : matrix.arms;
  const std::vector<std::uint64_t> seeds = matrix.seeds.empty() ? std::vector<std::uint64_t>{matrix.base.seed}
                                                                 : matrix.seeds;
  for (const auto& arm : arms) {
    for (const auto seed : seeds) {
      auto cfg = matrix.base;
      for (const auto& [k, v] : arm) tasks::set_config_value(cfg, k, v);
      cfg.seed = seed;
      cfg.validate();
      MatrixCell cell{tasks::run_id(cfg), cfg};
      if (!seen.insert(cell.run_id).second) throw std::invalid_argument("matrix: duplicate cell " + cell.run_id);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::vector<CellResult> run_matrix(const std::vector<MatrixCell>& cells, const std::filesystem::path& out_dir,
                                   const std::filesystem::path& executable, std::size_t jobs, bool resume) {
  if (jobs == 0) jobs = 1;
  std::vector<CellResult> results;
  for (const auto& c : cells) {
    CellResult r{c.run_id, out_dir / c.run_id, 0, false};
    std::filesystem::create_directories(r.dir);
    if (resume && finished(r.dir)) {
      r.skipped = true;
    } else {
      std::ofstream(r.dir / "config.txt") << tasks::format_config(c.config);
    }
    results.push_back(std::move(r));
  }
  std::map<pid_t, std::size_t> running;
  std::size_t next = 0;
  auto reap = [&] {
    int status = 0;
    pid_t pid;
    do {
      pid = waitpid(-1, &status, 0);
    } while (pid < 0 && errno == EINTR);
    if (pid < 0) throw std::runtime_error(std::string("waitpid: ") + std::strerror(errno));
    const auto it = running.find(pid);
    if (it == running.end()) return;
    results[it->second].exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    running.erase(it);
  };
  while (next < results.size() || !running.empty()) {
    while (next < results.size() && running.size() < jobs) {
      auto& r = results[next];
      if (!r.skipped) {
        const pid_t pid = spawn(executable, r.dir);
        if (pid < 0) {
          r.exit_code = -1;
        } else {
          running[pid] = next;
        }
      }
      ++next;
    }
    if (!running.empty()) reap();
  }
  return results;
}

}  // namespace fgrnn::report
