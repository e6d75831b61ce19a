// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "fgrnn/report/compare.hpp"
#include "fgrnn/report/heatmap.hpp"
#include "fgrnn/report/matrix.hpp"

namespace fgrnn {
namespace {

namespace fs = std::filesystem;
using report::HeatmapDoc;
using report::HeatmapTrack;
using report::Rescale;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("fgrnn_report_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Heatmaps -------------------------------------------------------------------

TEST(Heatmap, ConstantTrackIsUniform) {
  for (const auto mode : {Rescale::kLinear, Rescale::kRank}) {
    const auto level = report::rescale({"t", {2.5, 2.5, 2.5, 2.5}, mode});
    for (double v : level) EXPECT_EQ(v, level.front());
  }
  const HeatmapDoc doc{{"a", "b", "c"}, {{"t", {1.0, 1.0, 1.0}, Rescale::kLinear}}, ""};
  const auto ansi = report::render_ansi(doc);
  // One color code repeated.
  std::set<std::string> codes;
  for (std::size_t p = ansi.find("48;5;"); p != std::string::npos; p = ansi.find("48;5;", p + 1)) {
    codes.insert(ansi.substr(p, ansi.find('m', p) - p));
  }
  EXPECT_EQ(codes.size(), 1u);
}

TEST(Heatmap, IncreasingValuesGiveIncreasingIntensity) {
  for (const auto mode : {Rescale::kLinear, Rescale::kRank}) {
    const auto level = report::rescale({"t", {1.0, 2.0, 3.0}, mode});
    EXPECT_LT(level[0], level[1]);
    EXPECT_LT(level[1], level[2]);
  }
}

TEST(Heatmap, RankRescaleIgnoresMagnitudeAndSharesTies) {
  const auto level = report::rescale({"t", {0.0, 1000.0, 1.0, 1.0}, Rescale::kRank});
  EXPECT_EQ(level[0], 0.0);
  EXPECT_EQ(level[1], 1.0);
  EXPECT_EQ(level[2], level[3]);
  EXPECT_NEAR(level[2], 0.5, 1e-12);
}

TEST(Heatmap, MisalignedTrackThrows) {
  const HeatmapDoc doc{{"a", "b"}, {{"t", {1.0}, Rescale::kLinear}}, ""};
  EXPECT_THROW(report::render_html(doc), std::invalid_argument);
  EXPECT_THROW(report::render_ansi(doc), std::invalid_argument);
}

TEST(Heatmap, GoldenFilesAreByteIdentical) {
  const fs::path golden = FGRNN_GOLDEN_DIR;
  const auto doc = report::parse_heatmap_doc(slurp(golden / "heatmap_fixture.json"));
  EXPECT_EQ(report::render_html(doc), slurp(golden / "heatmap_fixture.html"));
  EXPECT_EQ(report::render_ansi(doc), slurp(golden / "heatmap_fixture.ans"));
  // Pure: rendering twice, or after a JSON round trip, gives the same bytes.
  EXPECT_EQ(report::render_html(doc), report::render_html(report::parse_heatmap_doc(report::format_heatmap_doc(doc))));
}

TEST(Heatmap, HtmlEscapesTokens) {
  const HeatmapDoc doc{{"<b>", "&"}, {{"t", {1.0, 2.0}, Rescale::kLinear}}, "a<b"};
  const auto html = report::render_html(doc);
  EXPECT_EQ(html.find("<b>"), std::string::npos);
  EXPECT_NE(html.find("&lt;b&gt;"), std::string::npos);
}

// compare_runs ----------------------------------------------------------------

tasks::RunMetrics run(const std::string& variant, const std::string& gate, std::uint64_t seed, double ppl,
                      tasks::Task task = tasks::Task::kLm) {
  tasks::RunMetrics m;
  m.run_id = variant + gate + std::to_string(seed);
  m.task = task;
  m.variant = variant;
  m.gate_source = gate;
  m.seed = seed;
  if (task == tasks::Task::kLm) {
    m.test_ppl = ppl;
  } else {
    m.test_acc = ppl;
  }
  return m;
}

TEST(Compare, SingleRun) {
  const auto t = report::compare_runs({run("lstm", "none", 0, 81.5)}, {"variant"});
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0].mean, 81.5);
  EXPECT_EQ(t.rows[0].median, 81.5);
  EXPECT_EQ(t.rows[0].min, 81.5);
}

TEST(Compare, ThreeSeeds) {
  const auto t = report::compare_runs(
      {run("lstm", "none", 0, 74), run("lstm", "none", 1, 70), run("lstm", "none", 2, 72)}, {"variant", "gate_source"});
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0].mean, 72.0);
  EXPECT_EQ(t.rows[0].median, 72.0);
  EXPECT_EQ(t.rows[0].min, 70.0);
  EXPECT_EQ(t.rows[0].max, 74.0);
  EXPECT_EQ(t.rows[0].runs, 3u);
}

TEST(Compare, HandOracleByGateSource) {
  std::vector<tasks::RunMetrics> runs{run("fgp_lstm", "full", 0, 10), run("fgp_lstm", "full", 1, 14),
                                      run("fgp_lstm", "random", 0, 20), run("fgp_lstm", "random", 1, 21),
                                      run("fgp_lstm", "random", 2, 29)};
  auto diverged = run("fgp_lstm", "full", 2, 1.0);
  diverged.diverged = true;
  runs.push_back(diverged);
  const auto t = report::compare_runs(runs, {"gate_source"});
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0].key, std::vector<std::string>{"full"});
  EXPECT_EQ(t.rows[0].runs, 2u);
  EXPECT_EQ(t.rows[0].failed, 1u);
  EXPECT_EQ(t.rows[0].mean, 12.0);
  EXPECT_EQ(t.rows[0].median, 12.0);
  EXPECT_EQ(t.rows[1].key, std::vector<std::string>{"random"});
  EXPECT_EQ(t.rows[1].mean, 70.0 / 3.0);
  EXPECT_EQ(t.rows[1].median, 21.0);
  EXPECT_EQ(t.rows[1].min, 20.0);
  const auto text = report::format_table(t);
  EXPECT_NE(text.find("random"), std::string::npos);
  EXPECT_NE(text.find("23.3333"), std::string::npos);
  EXPECT_NE(report::format_json(t).find("\"median\": 21.0"), std::string::npos);
}

TEST(Compare, MixedTasksInGroupThrows) {
  EXPECT_THROW(report::compare_runs({run("lstm", "none", 0, 70), run("lstm", "none", 1, 0.8, tasks::Task::kSentiment)},
                                    {"variant"}),
               std::invalid_argument);
  // Split by task, the same runs are fine.
  EXPECT_NO_THROW(report::compare_runs(
      {run("lstm", "none", 0, 70), run("lstm", "none", 1, 0.8, tasks::Task::kSentiment)}, {"task", "variant"}));
}

TEST(Compare, UnknownFieldAndEmptyInputThrow) {
  EXPECT_THROW(report::compare_runs({run("lstm", "none", 0, 70)}, {"colour"}), std::invalid_argument);
  EXPECT_THROW(report::compare_runs({}, {"variant"}), std::invalid_argument);
}

// Matrix ------------------------------------------------------------------------

tasks::TaskConfig tiny() {
  tasks::TaskConfig c;
  c.hidden_dim = 8;
  c.emb_dim = 8;
  c.synth_vocab = 40;
  c.synth_tokens = 2000;
  c.batch_size = 4;
  c.seq_len = 15;
  c.epochs = 1;
  return c;
}

TEST(Matrix, ExpandsArmsBySeeds) {
  report::ExperimentMatrix m;
  m.base = tiny();
  m.arms = {report::parse_arm("variant=lstm, gate_source=none"),
            report::parse_arm("variant=fgp_lstm,k_components=4,gate_source=full"),
            report::parse_arm("variant=fgp_lstm,k_components=4,gate_source=random")};
  m.seeds = {0, 1, 2};
  const auto cells = report::expand_matrix(m);
  ASSERT_EQ(cells.size(), 9u);
  std::set<std::string> ids;
  for (const auto& c : cells) ids.insert(c.run_id);
  EXPECT_EQ(ids.size(), 9u);
  EXPECT_EQ(report::expand_matrix(m)[4].run_id, cells[4].run_id);
}

TEST(Matrix, CrossArmsPairsVanillaWithNone) {
  const auto arms = report::cross_arms({"lstm", "fgp_lstm"}, {"full", "random", "adaptive"});
  ASSERT_EQ(arms.size(), 4u);
  EXPECT_EQ(arms[0], (report::Arm{{"variant", "lstm"}, {"gate_source", "none"}}));
  EXPECT_EQ(arms[3], (report::Arm{{"variant", "fgp_lstm"}, {"gate_source", "adaptive"}}));
}

TEST(Matrix, DuplicateCellsThrow) {
  report::ExperimentMatrix m;
  m.base = tiny();
  m.arms = {report::parse_arm("lr=0.001"), report::parse_arm("lr=1e-3")};
  EXPECT_THROW(report::expand_matrix(m), std::invalid_argument);
}

TEST(Matrix, WorkersWriteOneRecordPerCell) {
  const auto out = scratch("matrix");
  report::ExperimentMatrix m;
  m.base = tiny();
  m.arms = {report::parse_arm("variant=rnn,gate_source=none"),
            report::parse_arm("variant=fgp_rnn,k_components=2,gate_source=full"),
            report::parse_arm("variant=fgp_rnn,k_components=2,gate_source=random")};
  m.seeds = {0, 1, 2};
  const auto cells = report::expand_matrix(m);
  const auto results = report::run_matrix(cells, out, FGRNN_TOOL_PATH, 3);
  ASSERT_EQ(results.size(), 9u);
  std::set<std::string> ids;
  std::vector<tasks::RunMetrics> runs;
  for (const auto& r : results) {
    EXPECT_EQ(r.exit_code, 0) << slurp(r.dir / "log.txt");
    const auto metrics = tasks::load_metrics(r.dir / "metrics.jsonl");
    EXPECT_GE(metrics.epochs.size(), 1u);
    EXPECT_EQ(metrics.run_id, r.run_id);
    ids.insert(metrics.run_id);
    runs.push_back(metrics);
  }
  EXPECT_EQ(ids.size(), 9u);
  const auto table = report::compare_runs(runs, {"gate_source"});
  ASSERT_EQ(table.rows.size(), 3u);
  for (const auto& row : table.rows) EXPECT_EQ(row.runs, 3u);

  // Same config and seed in a separate process: identical metrics.
  const auto again = report::run_matrix({cells[0]}, out / "again", FGRNN_TOOL_PATH, 1);
  EXPECT_EQ(slurp(again[0].dir / "metrics.jsonl"), slurp(results[0].dir / "metrics.jsonl"));

  // Resume skips finished cells.
  const auto resumed = report::run_matrix(cells, out, FGRNN_TOOL_PATH, 3, true);
  for (const auto& r : resumed) EXPECT_TRUE(r.skipped);
}

TEST(Cli, InvalidKeyExitsNonzeroNamingKey) {
  const auto dir = scratch("cli");
  std::ofstream(dir / "bad.cfg") << "task = lm\nhidden_dim = 8\nlearning_rat = 0.1\n";
  const std::string cmd = std::string(FGRNN_TOOL_PATH) + " train --config " + (dir / "bad.cfg").string() + " --out " +
                          (dir / "run").string() + " > " + (dir / "log.txt").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_NE(WEXITSTATUS(status), 0);
  EXPECT_NE(slurp(dir / "log.txt").find("learning_rat"), std::string::npos);
}

TEST(Cli, MinimalRunWritesMetrics) {
  const auto dir = scratch("cli_ok");
  std::ofstream(dir / "ok.cfg") << tasks::format_config(tiny());
  const std::string cmd = std::string(FGRNN_TOOL_PATH) + " train --config " + (dir / "ok.cfg").string() + " --out " +
                          (dir / "run").string() + " > " + (dir / "log.txt").string() + " 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0) << slurp(dir / "log.txt");
  const auto m = tasks::load_metrics(dir / "run" / "metrics.jsonl");
  EXPECT_EQ(m.epochs.size(), 1u);
  EXPECT_TRUE(fs::exists(dir / "run" / "model.ckpt"));
}

}  // namespace
}  // namespace fgrnn
