// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/report/compare.hpp"

#include <algorithm>
#include <cstdio>
#include <json.hpp>
#include <map>
#include <stdexcept>

namespace fgrnn::report {

namespace {

std::string field(const tasks::RunMetrics& m, const std::string& name) {
  if (name == "task") return std::string(tasks::task_name(m.task));
  if (name == "variant") return m.variant;
  if (name == "gate_source") return m.gate_source;
  if (name == "seed") return std::to_string(m.seed);
  if (name == "hidden_dim") return std::to_string(m.hidden_dim);
  if (name == "params") return std::to_string(m.params);
  if (name == "run_id") return m.run_id;
  throw std::invalid_argument("unknown group-by field '" + name + "'");
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

const std::vector<std::string>& group_fields() {
  static const std::vector<std::string> fields{"task", "variant", "gate_source", "seed", "hidden_dim", "params", "run_id"};
  return fields;
}

CompareTable compare_runs(const std::vector<tasks::RunMetrics>& runs, const std::vector<std::string>& group_by) {
  if (runs.empty()) throw std::invalid_argument("compare: no runs");
  for (const auto& f : group_by) field(runs.front(), f);
  std::map<std::vector<std::string>, std::vector<const tasks::RunMetrics*>> groups;
  for (const auto& r : runs) {
    std::vector<std::string> key;
    for (const auto& f : group_by) key.push_back(field(r, f));
    groups[key].push_back(&r);
  }
  CompareTable table{group_by, {}};
  for (const auto& [key, members] : groups) {
    CompareRow row;
    row.key = key;
    row.task = std::string(tasks::task_name(members.front()->task));
    row.metric = members.front()->task == tasks::Task::kLm ? "test_ppl" : "test_acc";
    std::vector<double> values;
    for (const auto* m : members) {
      if (m->task != members.front()->task) {
        std::string label;
        for (const auto& k : key) label += (label.empty() ? "" : "/") + k;
        throw std::invalid_argument("compare: group '" + label + "' mixes lm and sentiment runs");
      }
      const auto v = m->final_metric();
      if (v && !m->diverged) {
        values.push_back(*v);
      } else {
        ++row.failed;
      }
    }
    row.runs = values.size();
    if (!values.empty()) {
      double sum = 0.0;
      for (double v : values) sum += v;
      row.mean = sum / static_cast<double>(values.size());
      std::sort(values.begin(), values.end());
      const std::size_t n = values.size();
      row.median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
      row.min = values.front();
      row.max = values.back();
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string format_table(const CompareTable& table) {
  std::vector<std::string> header = table.group_by;
  for (const char* h : {"metric", "runs", "failed", "mean", "median", "min", "max"}) header.emplace_back(h);
  std::vector<std::vector<std::string>> cells{header};
  for (const auto& r : table.rows) {
    auto line = r.key;
    line.push_back(r.metric);
    line.push_back(std::to_string(r.runs));
    line.push_back(std::to_string(r.failed));
    for (double v : {r.mean, r.median, r.min, r.max}) line.push_back(r.runs ? num(v) : "-");
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::string out;
  for (std::size_t li = 0; li < cells.size(); ++li) {
    const auto& line = cells[li];
    std::string text;
    for (std::size_t i = 0; i < line.size(); ++i) {
      // Key columns left-aligned, numbers right-aligned.
      const bool left = i <= table.group_by.size();
      const std::string pad(width[i] - line[i].size(), ' ');
      text += (i ? "  " : "") + (left ? line[i] + pad : pad + line[i]);
    }
    while (!text.empty() && text.back() == ' ') text.pop_back();
    out += text + "\n";
    if (li == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w;
      out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
    }
  }
  return out;
}

std::string format_json(const CompareTable& table) {
  nlohmann::ordered_json j;
  j["group_by"] = table.group_by;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : table.rows) {
    nlohmann::ordered_json row;
    nlohmann::ordered_json key;
    for (std::size_t i = 0; i < r.key.size(); ++i) key[table.group_by[i]] = r.key[i];
    row["key"] = key;
    row["task"] = r.task;
    row["metric"] = r.metric;
    row["runs"] = r.runs;
    row["failed"] = r.failed;
    if (r.runs) {
      row["mean"] = r.mean;
      row["median"] = r.median;
      row["min"] = r.min;
      row["max"] = r.max;
    }
    j["rows"].push_back(row);
  }
  return j.dump(2) + "\n";
}

}  // namespace fgrnn::report
