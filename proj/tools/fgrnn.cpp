// SPDX-License-Identifier: Apache-2.0
// Command-line entry point: prep, pretrain-fp, synth, train, eval, matrix,
// heatmap, compare.
#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "fgrnn/autodiff/checkpoint.hpp"
#include "fgrnn/data/eyetrack.hpp"
#include "fgrnn/fp/models.hpp"
#include "fgrnn/report/compare.hpp"
#include "fgrnn/report/heatmap.hpp"
#include "fgrnn/report/matrix.hpp"
#include "fgrnn/tasks/corpus.hpp"
#include "fgrnn/tasks/train.hpp"

namespace fs = std::filesystem;
using namespace fgrnn;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

std::string last_line(const std::string& text) {
  auto t = text;
  while (!t.empty() && t.back() == '\n') t.pop_back();
  const auto nl = t.rfind('\n');
  return nl == std::string::npos ? t : t.substr(nl + 1);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

tasks::TaskConfig load_with_overrides(const std::string& path, const std::vector<std::string>& sets,
                                      const std::optional<std::uint64_t>& seed) {
  auto cfg = path.empty() ? tasks::TaskConfig{} : tasks::load_config(path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw tasks::ConfigError(kv, "--set expects key=value");
    tasks::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

// prep ------------------------------------------------------------------------

struct PrepArgs {
  std::string input, output;
  bool synthetic = false;
  int levels = 4;
  double train_fraction = 0.75;
  std::uint64_t seed = 0;
  std::string order = "subjects_first";
  std::size_t sentences = 200;
  std::size_t vocab = 60;
};

int run_prep(const PrepArgs& a) {
  data::RawFixationCorpus raw;
  if (a.synthetic) {
    data::SynthFixationSpec spec;
    spec.sentence_count = a.sentences;
    spec.vocab_size = a.vocab;
    spec.levels = a.levels;
    spec.seed = a.seed;
    raw = data::synth_fixation_corpus(spec);
  } else {
    raw = data::load_corpus(a.input);
  }
  data::PrepOptions opt;
  opt.levels = a.levels;
  opt.split.train_fraction = a.train_fraction;
  opt.split.seed = a.seed;
  if (a.order == "average_first") {
    opt.order = data::NormalizationOrder::kAverageFirst;
  } else if (a.order != "subjects_first") {
    throw std::invalid_argument("--order must be subjects_first or average_first");
  }
  const auto processed = data::prepare_corpus(raw, opt);
  data::save_processed(a.output, processed);
  std::cout << "wrote " << a.output << ": " << processed.train.size() << " train / " << processed.test.size()
            << " test sentences, K=" << processed.levels << "\n";
  return 0;
}

// pretrain-fp -------------------------------------------------------------------

int run_pretrain(const std::string& corpus, const std::string& output, fp::FixedFpConfig config) {
  const auto processed = data::load_processed(corpus);
  config.levels = processed.levels;
  fp::FpPretrainReport report;
  const auto model = fp::pretrain_fixed_fp<float>(processed.train, processed.test, config, &report);
  model.save(output);
  nlohmann::ordered_json j;
  j["checkpoint"] = output;
  j["train_mse"] = report.train_mse;
  j["held_out_l1"] = report.held_out.l1;
  j["held_out_mse"] = report.held_out.mse;
  j["held_out_pearson"] = report.held_out.pearson;
  j["held_out_tokens"] = report.held_out.tokens;
  std::cout << j.dump() << "\n";
  return 0;
}

// synth -------------------------------------------------------------------------

int run_synth(const std::string& kind, const fs::path& out, std::uint64_t seed, std::size_t size, std::size_t vocab) {
  fs::create_directories(out);
  if (kind == "lm") {
    tasks::SynthLmSpec spec;
    spec.seed = seed;
    if (size) spec.tokens = size;
    if (vocab) spec.vocab_size = vocab;
    const auto c = tasks::synth_lm_corpus(spec);
    tasks::write_lm_text(out / "train.txt", c.train);
    tasks::write_lm_text(out / "valid.txt", c.valid);
    tasks::write_lm_text(out / "test.txt", c.test);
  } else if (kind == "sentiment") {
    tasks::SynthSentimentSpec spec;
    spec.seed = seed;
    if (size) spec.sentences = size;
    const auto c = tasks::synth_sentiment_corpus(spec);
    tasks::write_sentiment(out / "train.jsonl", c.train);
    tasks::write_sentiment(out / "valid.jsonl", c.valid);
    tasks::write_sentiment(out / "test.jsonl", c.test);
  } else if (kind == "fixation") {
    data::SynthFixationSpec spec;
    spec.seed = seed;
    if (size) spec.sentence_count = size;
    if (vocab) spec.vocab_size = vocab;
    data::save_corpus(out / "raw.jsonl", data::synth_fixation_corpus(spec));
  } else {
    throw std::invalid_argument("--kind must be lm, sentiment or fixation");
  }
  std::cout << "wrote " << kind << " corpus under " << out.string() << "\n";
  return 0;
}

// train / eval ------------------------------------------------------------------

int run_train(const tasks::TaskConfig& cfg, std::string out) {
  if (out.empty()) out = (fs::path("runs") / tasks::run_id(cfg)).string();
  tasks::TrainOptions opt;
  opt.out_dir = out;
  opt.on_epoch = [](const tasks::EpochMetrics& e) {
    std::cerr << "epoch " << e.epoch << " train_nll " << e.train_nll << " valid_nll " << e.valid_nll;
    if (e.valid_ppl) std::cerr << " valid_ppl " << *e.valid_ppl;
    if (e.valid_acc) std::cerr << " valid_acc " << *e.valid_acc;
    if (e.fixation_loss) std::cerr << " fixation_loss " << *e.fixation_loss;
    std::cerr << "\n";
  };
  try {
    const auto m = tasks::train(cfg, opt);
    std::cout << last_line(tasks::format_metrics(m)) << "\n";
  } catch (const tasks::TrainingDiverged& e) {
    std::cerr << "diverged: " << e.what() << " (partial metrics in " << out << ")\n";
    return kExitDiverged;
  }
  return 0;
}

int run_eval(const tasks::TaskConfig& cfg, const std::string& checkpoint) {
  const auto m = tasks::evaluate_checkpoint(cfg, checkpoint);
  std::cout << last_line(tasks::format_metrics(m)) << "\n";
  return 0;
}

// matrix ------------------------------------------------------------------------

struct MatrixArgs {
  std::string base, out = "runs", variants, gate_sources, seeds = "0";
  std::vector<std::string> arms, sets;
  std::size_t jobs = 1;
  bool resume = false;
};

int run_matrix_cmd(const MatrixArgs& a) {
  report::ExperimentMatrix m;
  m.base = a.base.empty() ? tasks::TaskConfig{} : tasks::load_config(a.base);
  for (const auto& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw tasks::ConfigError(kv, "--set expects key=value");
    tasks::set_config_value(m.base, kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& arm : a.arms) m.arms.push_back(report::parse_arm(arm));
  if (!a.variants.empty()) {
    const auto sources = a.gate_sources.empty() ? std::vector<std::string>{"none"} : split_list(a.gate_sources);
    for (auto& arm : report::cross_arms(split_list(a.variants), sources)) m.arms.push_back(std::move(arm));
  }
  for (const auto& s : split_list(a.seeds)) m.seeds.push_back(std::stoull(s));
  const auto cells = report::expand_matrix(m);
  const auto exe = fs::read_symlink("/proc/self/exe");
  std::cerr << "matrix: " << cells.size() << " runs, " << a.jobs << " at a time\n";
  const auto results = report::run_matrix(cells, a.out, exe, a.jobs, a.resume);
  int failed = 0;
  std::vector<tasks::RunMetrics> runs;
  for (const auto& r : results) {
    std::cout << r.run_id << "  " << (r.skipped ? "skipped" : r.exit_code == 0 ? "ok" : "exit " + std::to_string(r.exit_code))
              << "\n";
    if (!r.skipped && r.exit_code != 0) ++failed;
    if (fs::exists(r.dir / "metrics.jsonl")) runs.push_back(tasks::load_metrics(r.dir / "metrics.jsonl"));
  }
  if (!runs.empty()) std::cout << "\n" << report::format_table(report::compare_runs(runs, {"variant", "gate_source"}));
  return failed ? 1 : 0;
}

// heatmap -----------------------------------------------------------------------

struct HeatmapArgs {
  std::string doc, run, text, corpus, output, format = "html", caption;
  std::size_t sentence = 0;
};

int run_heatmap(const HeatmapArgs& a) {
  report::HeatmapDoc doc;
  if (!a.doc.empty()) {
    doc = report::parse_heatmap_doc(read_file(a.doc));
  } else {
    std::optional<data::FixationSentence> human;
    std::vector<std::string> tokens;
    if (!a.corpus.empty()) {
      const auto processed = data::load_processed(a.corpus);
      if (a.sentence >= processed.test.size()) throw std::invalid_argument("--sentence is past the test split");
      human = processed.test[a.sentence];
      for (const auto& r : human->records) tokens.push_back(r.token);
    } else {
      tokens = data::tokenize_text(a.text);
    }
    if (tokens.empty()) throw std::invalid_argument("heatmap needs --doc, --text or --corpus");
    doc.tokens = tokens;
    if (human) {
      report::HeatmapTrack t{"human", {}, report::Rescale::kRank};
      for (const auto& r : human->records) t.values.push_back(r.mean);
      doc.tracks.push_back(std::move(t));
    }
    if (!a.run.empty()) {
      const fs::path run = a.run;
      const auto cfg = tasks::load_config(run / "config.txt");
      const auto prepared = tasks::prepare_task(cfg);
      auto spec = cfg.task_spec(prepared.vocab.size());
      spec.rnn.hidden_dim = tasks::resolve_hidden_dim(cfg, prepared.vocab.size());
      auto model = tasks::TaskModel<float>::create(spec, cfg.seed);
      ad::load_checkpoint(ad::read_checkpoint(run / "model.ckpt"), model.params());
      doc.tracks.push_back({"model", tasks::model_fixations(cfg, prepared, model, tokens), report::Rescale::kLinear});
    }
    if (doc.tracks.empty()) throw std::invalid_argument("heatmap needs --run or --corpus for a track");
  }
  if (!a.caption.empty()) doc.caption = a.caption;
  const auto text = report::render(doc, report::parse_heatmap_format(a.format));
  if (a.output.empty()) {
    std::cout << text;
  } else {
    write_file(a.output, text);
  }
  return 0;
}

// compare -----------------------------------------------------------------------

int run_compare(const std::vector<std::string>& inputs, const std::string& group_by, const std::string& json_out) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::recursive_directory_iterator(in)) {
        if (e.is_regular_file() && e.path().filename() == "metrics.jsonl") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.emplace_back(in);
    }
  }
  std::vector<tasks::RunMetrics> runs;
  for (const auto& f : files) runs.push_back(tasks::load_metrics(f));
  const auto table = report::compare_runs(runs, split_list(group_by));
  std::cout << report::format_table(table);
  if (!json_out.empty()) write_file(json_out, report::format_json(table));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fixation-guided recurrent networks: data prep, training, evaluation and reports"};
  app.require_subcommand(1);

  PrepArgs prep;
  auto* c_prep = app.add_subcommand("prep", "Preprocess an eye-tracking corpus");
  c_prep->add_option("--input", prep.input, "Raw corpus (JSON lines)");
  c_prep->add_flag("--synthetic", prep.synthetic, "Generate a synthetic raw corpus instead");
  c_prep->add_option("--output", prep.output, "Processed corpus path")->required();
  c_prep->add_option("--levels", prep.levels, "Duration levels K");
  c_prep->add_option("--train-fraction", prep.train_fraction);
  c_prep->add_option("--order", prep.order, "subjects_first or average_first");
  c_prep->add_option("--sentences", prep.sentences, "Synthetic sentence count");
  c_prep->add_option("--vocab", prep.vocab, "Synthetic vocabulary size");
  c_prep->add_option("--seed", prep.seed);

  std::string fp_corpus, fp_out;
  fp::FixedFpConfig fp_cfg;
  auto* c_fp = app.add_subcommand("pretrain-fp", "Train the fixed fixation predictor");
  c_fp->add_option("--corpus", fp_corpus, "Processed corpus")->required();
  c_fp->add_option("--output", fp_out, "Checkpoint path")->required();
  c_fp->add_option("--epochs", fp_cfg.epochs);
  c_fp->add_option("--embed-dim", fp_cfg.embed_dim);
  c_fp->add_option("--hidden-dim", fp_cfg.hidden_dim);
  c_fp->add_option("--fc-dim", fp_cfg.fc_dim);
  c_fp->add_option("--batch-size", fp_cfg.batch_size);
  c_fp->add_option("--lr", fp_cfg.learning_rate);
  c_fp->add_option("--seed", fp_cfg.seed);

  std::string synth_kind, synth_out;
  std::uint64_t synth_seed = 0;
  std::size_t synth_size = 0, synth_vocab = 0;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic corpus");
  c_synth->add_option("--kind", synth_kind, "lm, sentiment or fixation")->required();
  c_synth->add_option("--out", synth_out, "Output directory")->required();
  c_synth->add_option("--size", synth_size, "Tokens (lm) or sentences");
  c_synth->add_option("--vocab", synth_vocab);
  c_synth->add_option("--seed", synth_seed);

  std::string cfg_path, out_dir, checkpoint;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  auto* c_train = app.add_subcommand("train", "Train one configuration");
  c_train->add_option("--config", cfg_path, "key=value config file");
  c_train->add_option("--set", sets, "Override key=value (repeatable)");
  c_train->add_option("--seed", seed);
  c_train->add_option("--out", out_dir, "Run directory (default runs/<run id>)");

  auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  c_eval->add_option("--config", cfg_path)->required();
  c_eval->add_option("--set", sets);
  c_eval->add_option("--seed", seed);
  c_eval->add_option("--checkpoint", checkpoint)->required();

  MatrixArgs mx;
  auto* c_matrix = app.add_subcommand("matrix", "Run a grid of configurations as worker processes");
  c_matrix->add_option("--base", mx.base, "Base config file");
  c_matrix->add_option("--set", mx.sets, "Base override key=value");
  c_matrix->add_option("--arm", mx.arms, "Overrides 'k=v,k=v' for one arm (repeatable)");
  c_matrix->add_option("--variants", mx.variants, "Comma list crossed with --gate-sources");
  c_matrix->add_option("--gate-sources", mx.gate_sources);
  c_matrix->add_option("--seeds", mx.seeds, "Comma list");
  c_matrix->add_option("--out", mx.out);
  c_matrix->add_option("--jobs", mx.jobs, "Parallel workers");
  c_matrix->add_flag("--resume", mx.resume, "Skip finished runs");

  HeatmapArgs hm;
  auto* c_heat = app.add_subcommand("heatmap", "Render fixation heatmaps");
  c_heat->add_option("--doc", hm.doc, "Heatmap document (JSON)");
  c_heat->add_option("--run", hm.run, "Run directory with config.txt and model.ckpt");
  c_heat->add_option("--text", hm.text, "Text to run through the model");
  c_heat->add_option("--corpus", hm.corpus, "Processed corpus for the human track");
  c_heat->add_option("--sentence", hm.sentence, "Test-split sentence index");
  c_heat->add_option("--format", hm.format, "html or ansi");
  c_heat->add_option("--caption", hm.caption);
  c_heat->add_option("--output", hm.output, "Output file (default stdout)");

  std::vector<std::string> cmp_inputs;
  std::string group_by = "variant,gate_source", cmp_json;
  auto* c_cmp = app.add_subcommand("compare", "Aggregate final metrics over runs");
  c_cmp->add_option("inputs", cmp_inputs, "metrics.jsonl files or run directories")->required();
  c_cmp->add_option("--group-by", group_by, "Comma list of fields");
  c_cmp->add_option("--json", cmp_json, "Also write a JSON summary");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_prep) return run_prep(prep);
    if (*c_fp) return run_pretrain(fp_corpus, fp_out, fp_cfg);
    if (*c_synth) return run_synth(synth_kind, synth_out, synth_seed, synth_size, synth_vocab);
    if (*c_train) return run_train(load_with_overrides(cfg_path, sets, seed), out_dir);
    if (*c_eval) return run_eval(load_with_overrides(cfg_path, sets, seed), checkpoint);
    if (*c_matrix) return run_matrix_cmd(mx);
    if (*c_heat) return run_heatmap(hm);
    if (*c_cmp) return run_compare(cmp_inputs, group_by, cmp_json);
  } catch (const tasks::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
