// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/tasks/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "fgrnn/rng.hpp"

namespace fgrnn::tasks {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename Int>
Int to_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::logic_error&) {
    throw ConfigError(key, "expected a number, got '" + v + "'");
  }
}

/// Shortest decimal that round-trips, so formatting is canonical.
std::string fmt_double(double d) {
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, d);
    if (std::stod(buf) == d) break;
  }
  return buf;
}

std::string_view corpus_name(CorpusSource c) {
  switch (c) {
    case CorpusSource::kSynthetic:
      return "synthetic";
    case CorpusSource::kFiles:
      return "files";
    case CorpusSource::kFixation:
      return "fixation";
  }
  return "";
}

struct Field {
  std::string name;
  std::function<void(TaskConfig&, const std::string&)> set;
  std::function<std::string(const TaskConfig&)> get;
};

#define FGRNN_SIZE_FIELD(member)                                                                             \
  Field {                                                                                                    \
    #member, [](TaskConfig& c, const std::string& v) { c.member = to_int<std::size_t>(#member, v); },         \
        [](const TaskConfig& c) { return std::to_string(c.member); }                                         \
  }
#define FGRNN_U64_FIELD(member)                                                                              \
  Field {                                                                                                    \
    #member, [](TaskConfig& c, const std::string& v) { c.member = to_int<std::uint64_t>(#member, v); },       \
        [](const TaskConfig& c) { return std::to_string(c.member); }                                         \
  }
#define FGRNN_DOUBLE_FIELD(member)                                                                           \
  Field {                                                                                                    \
    #member, [](TaskConfig& c, const std::string& v) { c.member = to_double(#member, v); },                   \
        [](const TaskConfig& c) { return fmt_double(c.member); }                                             \
  }
#define FGRNN_STRING_FIELD(member)                                                             \
  Field {                                                                                      \
    #member, [](TaskConfig& c, const std::string& v) { c.member = v; },                          \
        [](const TaskConfig& c) { return c.member; }                                           \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      {"task",
       [](TaskConfig& c, const std::string& v) {
         try {
           c.task = parse_task(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError("task", e.what());
         }
       },
       [](const TaskConfig& c) { return std::string(task_name(c.task)); }},
      {"variant",
       [](TaskConfig& c, const std::string& v) {
         try {
           c.variant = gated::parse_variant(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError("variant", e.what());
         }
       },
       [](const TaskConfig& c) { return std::string(gated::variant_name(c.variant)); }},
      FGRNN_SIZE_FIELD(k_components),
      FGRNN_SIZE_FIELD(n_layers),
      FGRNN_SIZE_FIELD(inter_dim),
      FGRNN_SIZE_FIELD(hidden_dim),
      FGRNN_SIZE_FIELD(param_budget),
      FGRNN_SIZE_FIELD(emb_dim),
      {"gate_source",
       [](TaskConfig& c, const std::string& v) {
         try {
           c.gate_source = parse_gate_source(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError("gate_source", e.what());
         }
       },
       [](const TaskConfig& c) { return std::string(gate_source_name(c.gate_source)); }},
      FGRNN_DOUBLE_FIELD(lambda),
      FGRNN_DOUBLE_FIELD(s),
      FGRNN_DOUBLE_FIELD(epsilon),
      FGRNN_DOUBLE_FIELD(lr),
      FGRNN_SIZE_FIELD(batch_size),
      FGRNN_DOUBLE_FIELD(seq_len),
      FGRNN_SIZE_FIELD(eval_batch_size),
      FGRNN_SIZE_FIELD(epochs),
      FGRNN_U64_FIELD(seed),
      FGRNN_DOUBLE_FIELD(dropout_embed),
      FGRNN_DOUBLE_FIELD(dropout_other),
      FGRNN_DOUBLE_FIELD(clip),
      FGRNN_SIZE_FIELD(min_freq),
      FGRNN_SIZE_FIELD(fp_hidden_dim),
      {"stats_scope",
       [](TaskConfig& c, const std::string& v) {
         if (v == "batch") {
           c.stats_scope = StatsScope::kBatch;
         } else if (v == "running") {
           c.stats_scope = StatsScope::kRunning;
         } else {
           throw ConfigError("stats_scope", "expected batch or running, got '" + v + "'");
         }
       },
       [](const TaskConfig& c) { return std::string(c.stats_scope == StatsScope::kBatch ? "batch" : "running"); }},
      {"corpus",
       [](TaskConfig& c, const std::string& v) {
         if (v == "synthetic") {
           c.corpus = CorpusSource::kSynthetic;
         } else if (v == "files") {
           c.corpus = CorpusSource::kFiles;
         } else if (v == "fixation") {
           c.corpus = CorpusSource::kFixation;
         } else {
           throw ConfigError("corpus", "expected synthetic, files or fixation, got '" + v + "'");
         }
       },
       [](const TaskConfig& c) { return std::string(corpus_name(c.corpus)); }},
      FGRNN_STRING_FIELD(train_path),
      FGRNN_STRING_FIELD(valid_path),
      FGRNN_STRING_FIELD(test_path),
      FGRNN_STRING_FIELD(fixation_corpus),
      FGRNN_STRING_FIELD(fp_checkpoint),
      FGRNN_SIZE_FIELD(fixation_batch_size),
      FGRNN_SIZE_FIELD(synth_vocab),
      FGRNN_SIZE_FIELD(synth_tokens),
      FGRNN_SIZE_FIELD(synth_successors),
      FGRNN_SIZE_FIELD(synth_sentences),
      FGRNN_U64_FIELD(synth_seed),
  };
  return all;
}

#undef FGRNN_SIZE_FIELD
#undef FGRNN_U64_FIELD
#undef FGRNN_DOUBLE_FIELD
#undef FGRNN_STRING_FIELD

const Field& field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.name == key) return f;
  }
  throw ConfigError(key, "unknown key");
}

}  // namespace

double TaskConfig::effective_lambda() const {
  if (lambda >= 0.0) return lambda;
  return task == Task::kLm ? 0.3 : 0.001;
}

gated::ModelSpec TaskConfig::model_spec() const {
  gated::ModelSpec spec;
  spec.variant = variant;
  spec.input_dim = emb_dim;
  spec.hidden_dim = hidden_dim;
  spec.components = gated::is_fgp(variant) ? k_components : 1;
  spec.layers = n_layers;
  spec.inter_dim = inter_dim;
  spec.steepness = s;
  return spec;
}

TaskModelSpec TaskConfig::task_spec(std::size_t vocab_size) const {
  TaskModelSpec t;
  t.task = task;
  t.rnn = model_spec();
  t.vocab_size = vocab_size;
  t.emb_dim = emb_dim;
  t.adaptive_fp = gate_source == GateSource::kAdaptive;
  t.fp_hidden_dim = fp_hidden_dim;
  t.stats_scope = stats_scope;
  return t;
}

void TaskConfig::validate() const {
  if (hidden_dim == 0 && param_budget == 0) throw ConfigError("hidden_dim", "set hidden_dim or param_budget");
  if (emb_dim == 0) throw ConfigError("emb_dim", "must be positive");
  if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
  if (eval_batch_size == 0) throw ConfigError("eval_batch_size", "must be positive");
  if (epochs == 0) throw ConfigError("epochs", "must be positive");
  if (!(lr >= 0.0)) throw ConfigError("lr", "must be >= 0");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon", "must be positive");
  if (!(s > 1.0)) throw ConfigError("s", "must be > 1");
  if (seq_len < 10.0) throw ConfigError("seq_len", "must be >= 10");
  if (dropout_embed < 0.0 || dropout_embed >= 1.0) throw ConfigError("dropout_embed", "must be in [0, 1)");
  if (dropout_other < 0.0 || dropout_other >= 1.0) throw ConfigError("dropout_other", "must be in [0, 1)");
  if (!gated::is_fgp(variant) && k_components != 1) throw ConfigError("k_components", "only FGP variants take K > 1");
  if (gated::is_fgp(variant) && !gated::is_stacked(variant) && n_layers != 1) {
    throw ConfigError("n_layers", "plain FGP variants have one layer; use stacked_fgp_*");
  }
  if (gated::is_vanilla(variant) && gate_source != GateSource::kNone) {
    throw ConfigError("gate_source", "vanilla variants take gate_source=none");
  }
  if (!gated::is_vanilla(variant) && gate_source == GateSource::kNone) {
    throw ConfigError("gate_source", "fixation-guided variants need a gate source");
  }
  if (gate_source == GateSource::kFixedFp && fp_checkpoint.empty()) {
    throw ConfigError("fp_checkpoint", "required by gate_source=fixed_fp");
  }
  if (gate_source == GateSource::kFreq && fixation_corpus.empty()) {
    throw ConfigError("fixation_corpus", "required by gate_source=freq");
  }
  if (gate_source == GateSource::kHuman && corpus != CorpusSource::kFixation) {
    throw ConfigError("corpus", "gate_source=human needs corpus=fixation");
  }
  if (corpus == CorpusSource::kFixation && fixation_corpus.empty()) {
    throw ConfigError("fixation_corpus", "required by corpus=fixation");
  }
  if (corpus == CorpusSource::kFixation && task != Task::kLm) {
    throw ConfigError("corpus", "corpus=fixation is only defined for task=lm");
  }
  if (corpus == CorpusSource::kFiles) {
    if (train_path.empty()) throw ConfigError("train_path", "required by corpus=files");
    if (valid_path.empty()) throw ConfigError("valid_path", "required by corpus=files");
    if (test_path.empty()) throw ConfigError("test_path", "required by corpus=files");
  }
  try {
    auto spec = model_spec();
    if (spec.hidden_dim == 0) spec.hidden_dim = 1;
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("variant", e.what());
  }
}

void set_config_value(TaskConfig& config, const std::string& key, const std::string& value) {
  field(key).set(config, value);
}

TaskConfig parse_config(std::string_view text) {
  TaskConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(body, "line " + std::to_string(line_no) + " is not key=value");
    }
    set_config_value(config, trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)));
  }
  return config;
}

TaskConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::map<std::string, std::string> config_pairs(const TaskConfig& config) {
  std::map<std::string, std::string> out;
  for (const auto& f : fields()) out[f.name] = f.get(config);
  return out;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.name);
    return k;
  }();
  return keys;
}

std::string format_config(const TaskConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.name + "=" + f.get(config) + "\n";
  return out;
}

std::string run_id(const TaskConfig& config) {
  std::string canon;
  for (const auto& [k, v] : config_pairs(config)) canon += k + "=" + v + "\n";
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canon)));
  return buf;
}

}  // namespace fgrnn::tasks
