#include "minibert/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "minibert/checkpoint.hpp"
#include "minibert/errors.hpp"

namespace minibert {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Typed access to a JSON object that reports the dotted key path on error.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  Section section(const std::string& key) const {
    if (!has(key)) throw ConfigError(key_path(key) + " is required");
    return Section(node_.at(key), key_path(key));
  }

  const json& raw(const std::string& key) const { return node_.at(key); }

  std::uint64_t seed(const std::string& key) const {
    if (!has(key)) throw ConfigError(key_path(key) + " is required (seeds have no default)");
    return unsigned_value(key);
  }

  std::size_t count(const std::string& key, std::size_t fallback) const {
    return has(key) ? static_cast<std::size_t>(unsigned_value(key)) : fallback;
  }

  double real(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const auto& v = node_.at(key);
    if (!v.is_number()) throw ConfigError(key_path(key) + " must be a number");
    return v.get<double>();
  }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = node_.at(key);
    if (!v.is_boolean()) throw ConfigError(key_path(key) + " must be true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& key) const {
    if (!has(key)) throw ConfigError(key_path(key) + " is required");
    const auto& v = node_.at(key);
    if (!v.is_string()) throw ConfigError(key_path(key) + " must be a string");
    return v.get<std::string>();
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    return has(key) ? text(key) : fallback;
  }

  std::vector<std::string> strings(const std::string& key) const {
    const auto& v = node_.at(key);
    if (!v.is_array()) throw ConfigError(key_path(key) + " must be an array of strings");
    std::vector<std::string> out;
    for (const auto& item : v) {
      if (!item.is_string()) throw ConfigError(key_path(key) + " must be an array of strings");
      out.push_back(item.get<std::string>());
    }
    return out;
  }

  std::uint64_t unsigned_value(const std::string& key) const {
    const auto& v = node_.at(key);
    if (!v.is_number_unsigned()) {
      throw ConfigError(key_path(key) + " must be a nonnegative integer");
    }
    return v.get<std::uint64_t>();
  }

  std::string where() const { return path_.empty() ? "configuration" : path_; }

 private:
  const json& node_;
  std::string path_;
};

AdamConfig parse_adam(const Section& s, const AdamConfig& defaults) {
  AdamConfig adam;
  adam.learning_rate = s.real("learning_rate", defaults.learning_rate);
  adam.beta1 = s.real("beta1", defaults.beta1);
  adam.beta2 = s.real("beta2", defaults.beta2);
  adam.epsilon = s.real("epsilon", defaults.epsilon);
  return adam;
}

bool is_safe_name(const std::string& name) {
  if (name.empty() || name == "." || name == "..") return false;
  return std::all_of(name.begin(), name.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '-' || c == '_' || c == '.';
  });
}

VariantSpec parse_variant(const json& node, std::size_t index) {
  const Section s(node, "variants[" + std::to_string(index) + "]");
  VariantSpec v;
  v.name = s.text("name");
  if (!is_safe_name(v.name)) {
    throw ConfigError(s.key_path("name") + " '" + v.name +
                      "' may only contain letters, digits, '-', '_' and '.'");
  }
  const std::string kind = s.text("kind");
  if (kind == "single") {
    v.kind = VariantKind::kSingle;
  } else if (kind == "ensemble") {
    v.kind = VariantKind::kEnsemble;
  } else {
    throw ConfigError(s.key_path("kind") + " must be 'single' or 'ensemble', got '" + kind + "'");
  }
  v.num_layers = s.count("num_layers", 1);
  if (v.num_layers < 1) throw ConfigError(s.key_path("num_layers") + " must be >= 1");
  v.optional = s.flag("optional", false);
  if (v.kind == VariantKind::kEnsemble) {
    v.n_members = s.count("n_members", 3);
    if (v.n_members < 1) throw ConfigError(s.key_path("n_members") + " must be >= 1");
    if (!s.has("member_shuffle_seeds")) {
      throw ConfigError(s.key_path("member_shuffle_seeds") + " is required (seeds have no default)");
    }
    const auto& seeds = s.raw("member_shuffle_seeds");
    if (!seeds.is_array()) {
      throw ConfigError(s.key_path("member_shuffle_seeds") + " must be an array");
    }
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      if (!seeds[i].is_number_unsigned()) {
        throw ConfigError(s.key_path("member_shuffle_seeds") + "[" + std::to_string(i) +
                          "] must be a nonnegative integer");
      }
      v.member_shuffle_seeds.push_back(seeds[i].get<std::uint64_t>());
    }
    if (v.member_shuffle_seeds.size() != v.n_members) {
      throw ConfigError(s.key_path("member_shuffle_seeds") + " lists " +
                        std::to_string(v.member_shuffle_seeds.size()) + " seeds for " +
                        std::to_string(v.n_members) + " members");
    }
    v.voting = voting_rule_from_string(s.text("voting", "majority"));
    v.shared_init = s.flag("shared_init", true);
  }
  return v;
}

SyntheticSpec parse_synthetic_section(const Section& s) {
  SyntheticSpec spec;
  const std::uint64_t seed = s.seed("seed");
  const double noise = s.real("noise_rate", 0.1);
  const std::size_t n = s.count("num_examples", 2000);
  if (s.has("class_token_pools")) {
    const auto& pools = s.raw("class_token_pools");
    if (!pools.is_array()) throw ConfigError(s.key_path("class_token_pools") + " must be an array");
    spec.num_examples = n;
    spec.noise_rate = noise;
    spec.seed = seed;
    for (std::size_t c = 0; c < pools.size(); ++c) {
      const auto& pool = pools[c];
      if (!pool.is_array()) {
        throw ConfigError(s.key_path("class_token_pools") + "[" + std::to_string(c) +
                          "] must be an array of strings");
      }
      std::vector<std::string> tokens;
      for (const auto& t : pool) {
        if (!t.is_string()) {
          throw ConfigError(s.key_path("class_token_pools") + "[" + std::to_string(c) +
                            "] must be an array of strings");
        }
        tokens.push_back(t.get<std::string>());
      }
      spec.class_token_pools.push_back(std::move(tokens));
    }
    if (s.has("shared_pool")) spec.shared_pool = s.strings("shared_pool");
  } else {
    spec = make_synthetic_spec(n, s.count("num_classes", 2), s.count("pool_size", 40),
                               s.count("shared_pool_size", 40), noise, seed);
  }
  spec.min_tokens = s.count("min_tokens", spec.min_tokens);
  spec.max_tokens = s.count("max_tokens", spec.max_tokens);
  spec.validate();
  return spec;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return out.str();
}

fs::path create_run_dir(const fs::path& output_dir) {
  fs::create_directories(output_dir);
  const std::string stem = "run-" + utc_timestamp();
  for (std::size_t attempt = 0;; ++attempt) {
    const fs::path candidate =
        output_dir / (attempt == 0 ? stem : stem + "-" + std::to_string(attempt + 1));
    if (fs::create_directory(candidate)) return candidate;
  }
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<EncodedExample> encode_records(const std::vector<LabeledRecord>& records,
                                           const Vocabulary& vocab, std::size_t max_seq_len) {
  std::vector<EncodedExample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(encode(r.text, vocab, max_seq_len, r.label));
  return out;
}

std::vector<int> labels_of(std::span<const EncodedExample> examples) {
  std::vector<int> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(e.label);
  return out;
}

std::string epoch_line(const std::string& run, const EpochRecord& r, std::size_t epochs) {
  std::ostringstream out;
  out << "[" << run << "] epoch " << r.epoch << "/" << epochs << " loss=" << format_fixed(r.mean_loss, 4)
      << " val_acc=" << format_fixed(r.validation_accuracy, 4) << " time="
      << format_fixed(r.train_seconds, 2) << "s";
  return out.str();
}

void print_metrics(std::ostream& out, const MetricsReport& m) {
  const auto line = [&](const char* name, double value, bool defined) {
    out << std::left << std::setw(10) << name << format_fixed(value, 4)
        << (defined ? "" : " (undefined)") << '\n';
  };
  line("accuracy", m.accuracy, true);
  line("precision", m.precision, m.precision_defined);
  line("recall", m.recall, m.recall_defined);
  line("f1", m.f1, m.f1_defined);
}

void print_confusion(std::ostream& out, const ConfusionMatrix& cm) {
  out << "confusion matrix (rows = actual, columns = predicted)\n";
  for (std::size_t a = 0; a < cm.num_classes(); ++a) {
    for (std::size_t p = 0; p < cm.num_classes(); ++p) {
      out << (p ? " " : "") << std::setw(8) << cm.count(a, p);
    }
    out << '\n';
  }
}

}  // namespace

SyntheticSpec parse_synthetic_spec(const json& document) {
  const Section root(document, "");
  if (root.has("corpus")) {
    const Section corpus = root.section("corpus");
    return parse_synthetic_section(corpus.section("synthetic"));
  }
  if (root.has("synthetic")) return parse_synthetic_section(root.section("synthetic"));
  return parse_synthetic_section(root);
}

ExperimentConfig parse_experiment_config(const json& document, const fs::path& base_dir) {
  const Section root(document, "");
  ExperimentConfig config;
  config.source = document;

  const Section corpus = root.section("corpus");
  const bool has_path = corpus.has("path");
  const bool has_synthetic = corpus.has("synthetic");
  if (has_path == has_synthetic) {
    throw ConfigError("corpus must contain exactly one of 'path' or 'synthetic'");
  }
  if (has_path) {
    fs::path p = corpus.text("path");
    config.corpus_path = p.is_relative() ? base_dir / p : p;
  } else {
    config.synthetic = parse_synthetic_section(corpus.section("synthetic"));
  }

  if (root.has("tokenizer")) {
    const Section t = root.section("tokenizer");
    config.tokenizer.max_vocab = t.count("max_vocab", config.tokenizer.max_vocab);
    config.tokenizer.min_frequency = t.count("min_frequency", config.tokenizer.min_frequency);
    config.tokenizer.max_seq_len = t.count("max_seq_len", config.tokenizer.max_seq_len);
  }
  if (config.tokenizer.max_seq_len < 3) throw ConfigError("tokenizer.max_seq_len must be >= 3");
  if (config.tokenizer.max_vocab < kNumSpecialTokens + 1) {
    throw ConfigError("tokenizer.max_vocab must leave room for at least one word");
  }

  const Section model = root.section("model");
  config.model.hidden_dim = model.count("hidden_dim", config.model.hidden_dim);
  config.model.num_heads = model.count("num_heads", config.model.num_heads);
  config.model.ff_dim = model.count("ff_dim", config.model.ff_dim);
  config.model.init_scale = model.real("init_scale", config.model.init_scale);
  config.model.init_seed = model.seed("init_seed");
  config.model.max_seq_len = config.tokenizer.max_seq_len;

  const Section train = root.section("train");
  config.train.epochs = train.count("epochs", config.train.epochs);
  config.train.batch_size = train.count("batch_size", config.train.batch_size);
  config.train.adam = parse_adam(train, config.train.adam);
  config.train.split_ratio = train.real("split_ratio", config.train.split_ratio);
  config.train.shuffle_seed = train.seed("shuffle_seed");
  config.train.split_seed = train.seed("split_seed");
  config.train.validate();

  if (root.has("pretrain")) {
    const Section p = root.section("pretrain");
    config.pretrain.epochs = p.count("epochs", 0);
    config.pretrain.batch_size = p.count("batch_size", config.train.batch_size);
    config.pretrain.adam = parse_adam(p, config.train.adam);
    if (config.pretrain.epochs > 0) {
      config.pretrain.seed = p.seed("seed");
      if (config.pretrain.batch_size < 1) throw ConfigError("pretrain.batch_size must be >= 1");
    }
  }

  if (!root.has("variants") || !root.raw("variants").is_array()) {
    throw ConfigError("variants must be an array");
  }
  const auto& variants = root.raw("variants");
  if (variants.empty()) throw ConfigError("variants lists no variants");
  std::set<std::string> names;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    auto v = parse_variant(variants[i], i);
    if (!names.insert(v.name).second) {
      throw ConfigError("variants[" + std::to_string(i) + "].name '" + v.name + "' is not unique");
    }
    config.variants.push_back(std::move(v));
  }

  if (root.has("output_dir")) {
    fs::path out = root.text("output_dir");
    config.output_dir = out.is_relative() ? base_dir / out : out;
  } else {
    config.output_dir = base_dir / "runs";
  }
  return config;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  return parse_experiment_config(read_json_file(path), path.parent_path());
}

LabeledCorpus load_corpus(const ExperimentConfig& config) {
  if (config.corpus_path) return load_csv(*config.corpus_path);
  return generate_synthetic(*config.synthetic);
}

PreparedData prepare_data(const ExperimentConfig& config, LabeledCorpus corpus) {
  corpus.validate();
  PreparedData data;
  auto [train_records, validation_records] = split_dataset<LabeledRecord>(
      corpus.records, config.train.split_ratio, config.train.split_seed);
  data.train_records = std::move(train_records);
  data.validation_records = std::move(validation_records);

  std::vector<std::string> train_texts;
  train_texts.reserve(data.train_records.size());
  for (const auto& r : data.train_records) train_texts.push_back(r.text);
  data.vocab = build_vocab(train_texts, config.tokenizer.max_vocab, config.tokenizer.min_frequency);

  data.train = encode_records(data.train_records, data.vocab, config.tokenizer.max_seq_len);
  data.validation = encode_records(data.validation_records, data.vocab, config.tokenizer.max_seq_len);
  data.corpus = std::move(corpus);
  return data;
}

ExperimentOutcome run_experiment(const ExperimentConfig& base, const RunOptions& options,
                                 std::ostream& log) {
  ExperimentConfig config = base;
  if (options.output_dir) config.output_dir = *options.output_dir;
  if (options.epochs) config.train.epochs = *options.epochs;
  if (options.batch_size) config.train.batch_size = *options.batch_size;
  config.train.validate();

  std::vector<VariantSpec> selected;
  for (const auto& v : config.variants) {
    if (v.optional && !options.include_optional) {
      if (!options.quiet) log << "skipping optional variant " << v.name << '\n';
      continue;
    }
    selected.push_back(v);
  }
  if (selected.empty()) throw ConfigError("every variant is optional; pass --include-optional");

  PreparedData data = prepare_data(config, load_corpus(config));
  ModelConfig model_config = config.model;
  model_config.vocab_size = data.vocab.size();
  model_config.num_classes = data.corpus.num_classes;
  model_config.max_seq_len = config.tokenizer.max_seq_len;
  for (const auto& v : selected) {
    auto c = model_config;
    c.num_layers = v.num_layers;
    c.validate();
  }

  ExperimentOutcome outcome;
  outcome.run_dir = create_run_dir(config.output_dir);
  const fs::path& run_dir = outcome.run_dir;
  if (!options.quiet) log << "run directory " << run_dir.string() << '\n';

  json resolved = config.source;
  resolved["overrides"] = {{"epochs", config.train.epochs},
                           {"batch_size", config.train.batch_size},
                           {"parallel_members", options.parallel_members},
                           {"include_optional", options.include_optional}};
  write_text(run_dir / "config.json", resolved.dump(2) + "\n");
  fs::create_directories(run_dir / "data");
  save_csv(run_dir / "data" / "train.csv",
           LabeledCorpus{data.train_records, data.corpus.num_classes, data.corpus.provenance});
  save_csv(run_dir / "data" / "validation.csv",
           LabeledCorpus{data.validation_records, data.corpus.num_classes, data.corpus.provenance});
  data.vocab.save(run_dir / "vocab.txt");

  std::ofstream train_log(run_dir / "train_log.jsonl", std::ios::binary);
  if (!train_log) throw std::runtime_error("cannot write " + (run_dir / "train_log.jsonl").string());
  const auto record_epoch = [&](const std::string& run, const EpochRecord& r) {
    train_log << epoch_record_json(run, r).dump() << '\n';
    train_log.flush();
    if (!options.quiet) log << epoch_line(run, r, config.train.epochs) << '\n' << std::flush;
  };

  const auto pretrain_hook = [&](const std::string& name) -> MemberInitHook {
    if (config.pretrain.epochs == 0) return {};
    return [&, name](ClassifierModel& model) {
      const auto losses = pretrain_mlm(model, data.train, config.pretrain);
      for (std::size_t e = 0; e < losses.size(); ++e) {
        json line = {{"run", name}, {"phase", "pretrain"}, {"epoch", e + 1}, {"loss", losses[e]}};
        train_log << line.dump() << '\n';
        if (!options.quiet) {
          log << "[" << name << "] pretrain epoch " << e + 1 << "/" << losses.size()
              << " loss=" << format_fixed(losses[e], 4) << '\n';
        }
      }
    };
  };

  const std::vector<int> actual = labels_of(data.validation);
  std::vector<RunResult> results;
  fs::create_directories(run_dir / "checkpoints");
  for (const auto& v : selected) {
    VariantOutcome vo;
    vo.name = v.name;
    vo.checkpoint = run_dir / "checkpoints" / v.name;
    auto member_model = model_config;
    member_model.num_layers = v.num_layers;
    try {
      std::vector<int> predicted;
      if (v.kind == VariantKind::kSingle) {
        auto model = init_model<float>(member_model);
        if (auto hook = pretrain_hook(v.name)) hook(model);
        const auto run = train(model, data.train, data.validation, config.train,
                               [&](const EpochRecord& r) { record_epoch(v.name, r); });
        predicted = predict(model, data.validation).labels;
        save_checkpoint(vo.checkpoint, model, data.vocab);
        vo.runs.push_back(run);
        vo.metrics = metrics(confusion_matrix(predicted, actual, model_config.num_classes));
        vo.timing = make_timing_record(v.name, run.total_seconds, vo.metrics.accuracy);
      } else {
        EnsembleConfig ec;
        ec.n_members = v.n_members;
        ec.member_model = member_model;
        ec.shared_init = v.shared_init;
        ec.member_shuffle_seeds = v.member_shuffle_seeds;
        ec.voting = v.voting;
        ec.parallel = options.parallel_members;
        auto trained = train_ensemble(
            data.train, data.validation, ec, config.train,
            [&](std::size_t m, const EpochRecord& r) {
              record_epoch(v.name + "/member_" + std::to_string(m), r);
            },
            pretrain_hook(v.name));
        predicted = predict_ensemble(trained.ensemble, data.validation).labels;
        save_ensemble(vo.checkpoint, trained.ensemble, data.vocab);
        vo.runs = trained.runs;
        vo.metrics = metrics(confusion_matrix(predicted, actual, model_config.num_classes));
        if (options.parallel_members) {
          vo.timing = make_timing_record(v.name, trained.wall_seconds, vo.metrics.accuracy);
          vo.timing.sequential_minutes = trained.summed_member_seconds / 60.0;
        } else {
          vo.timing = make_timing_record(v.name, trained.summed_member_seconds, vo.metrics.accuracy);
        }
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw std::runtime_error("variant " + v.name + ": " + e.what());
    }
    if (!options.quiet) {
      log << "[" << v.name << "] validation accuracy " << format_fixed(vo.metrics.accuracy, 4)
          << ", training " << format_fixed(vo.timing.training_minutes, 4) << " min\n";
    }
    results.push_back({v.name, vo.metrics, vo.timing});
    outcome.variants.push_back(std::move(vo));
  }

  outcome.report = compare_report(results);
  write_text(run_dir / "metrics.json", metrics_section_json(outcome.report).dump(2) + "\n");
  write_text(run_dir / "timing.json", timing_section_json(outcome.report).dump(2) + "\n");
  write_text(run_dir / "report.json", report_json(outcome.report).dump(2) + "\n");
  write_text(run_dir / "report.md", report_markdown(outcome.report));
  return outcome;
}

EvalOutcome evaluate_checkpoint(const fs::path& checkpoint, const fs::path& corpus_path) {
  if (!fs::exists(checkpoint)) throw CheckpointError("checkpoint " + checkpoint.string() + " does not exist");
  const LabeledCorpus corpus = load_csv(corpus_path);
  EvalOutcome out;

  const auto check_compatible = [&](const ModelConfig& c) {
    if (corpus.num_classes > c.num_classes) {
      throw ValidationError("corpus " + corpus_path.string() + " has labels up to " +
                            std::to_string(corpus.num_classes - 1) + " but the checkpoint model has " +
                            std::to_string(c.num_classes) + " classes");
    }
  };
  const auto encode_all = [&](const Vocabulary& vocab, const ModelConfig& c) {
    std::vector<EncodedExample> examples;
    examples.reserve(corpus.records.size());
    for (const auto& r : corpus.records) examples.push_back(encode(r.text, vocab, c.max_seq_len, r.label));
    return examples;
  };

  if (is_ensemble_checkpoint(checkpoint)) {
    const auto loaded = load_ensemble(checkpoint);
    const auto& cfg = loaded.ensemble.config.member_model;
    check_compatible(cfg);
    const auto examples = encode_all(loaded.vocab, cfg);
    const auto actual = labels_of(examples);
    const auto prediction = predict_ensemble(loaded.ensemble, examples);
    out.is_ensemble = true;
    out.disagreements = prediction.disagreements;
    for (const auto& member_labels : prediction.member_labels) {
      std::size_t correct = 0;
      for (std::size_t i = 0; i < actual.size(); ++i) correct += member_labels[i] == actual[i];
      out.member_accuracies.push_back(static_cast<double>(correct) / static_cast<double>(actual.size()));
    }
    out.metrics = metrics(confusion_matrix(prediction.labels, actual, cfg.num_classes));
  } else {
    const auto loaded = load_checkpoint(checkpoint);
    check_compatible(loaded.model.config());
    const auto examples = encode_all(loaded.vocab, loaded.model.config());
    const auto actual = labels_of(examples);
    const auto predicted = predict(loaded.model, examples).labels;
    out.metrics = metrics(confusion_matrix(predicted, actual, loaded.model.config().num_classes));
  }
  return out;
}

int cmd_run(const fs::path& config_path, const RunOptions& options, std::ostream& out,
            std::ostream& err) {
  ExperimentConfig config;
  try {
    config = load_experiment_config(config_path);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  }
  try {
    const auto outcome = run_experiment(config, options, out);
    out << '\n' << report_markdown(outcome.report);
    out << "\nartifacts written to " << outcome.run_dir.string() << '\n';
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "run failed: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int cmd_eval(const fs::path& checkpoint, const fs::path& corpus, std::ostream& out,
             std::ostream& err) {
  try {
    const auto result = evaluate_checkpoint(checkpoint, corpus);
    out << (result.is_ensemble ? "ensemble" : "single model") << " checkpoint " << checkpoint.string()
        << " on " << corpus.string() << " (" << result.metrics.confusion.total() << " examples, "
        << result.metrics.averaging << " averaging)\n";
    print_metrics(out, result.metrics);
    print_confusion(out, result.metrics.confusion);
    if (result.is_ensemble) {
      for (std::size_t m = 0; m < result.member_accuracies.size(); ++m) {
        out << "member " << m << " accuracy " << format_fixed(result.member_accuracies[m], 4) << '\n';
      }
      out << "disagreements " << result.disagreements << '\n';
    }
    return kExitOk;
  } catch (const std::exception& e) {
    err << "eval failed: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int cmd_metrics(const std::vector<std::string>& counts, std::optional<double> minutes,
                std::ostream& out, std::ostream& err) {
  if (counts.size() != 4) {
    err << "usage: metrics <tn> <fp> <fn> <tp> [--minutes M]\n";
    return kExitUsage;
  }
  static constexpr const char* kNames[] = {"tn", "fp", "fn", "tp"};
  std::size_t cells[4] = {};
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string& s = counts[i];
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
      err << kNames[i] << " '" << s << "' is not an integer\n";
      return kExitUsage;
    }
    if (value < 0) {
      err << kNames[i] << " must be nonnegative, got " << value << '\n';
      return kExitUsage;
    }
    cells[i] = static_cast<std::size_t>(value);
  }
  if (cells[0] + cells[1] + cells[2] + cells[3] == 0) {
    err << "all four counts are zero; nothing to evaluate\n";
    return kExitUsage;
  }
  if (minutes && !(*minutes > 0.0)) {
    err << "--minutes must be > 0\n";
    return kExitUsage;
  }
  const auto report = metrics(ConfusionMatrix::binary(cells[0], cells[1], cells[2], cells[3]));
  print_metrics(out, report);
  if (minutes) {
    out << std::left << std::setw(10) << "acc/min" << format_fixed(accuracy_per_minute(report.accuracy, *minutes), 4)
        << '\n';
  }
  return kExitOk;
}

int cmd_gen_synthetic(const fs::path& spec_path, const fs::path& out_csv, std::ostream& out,
                      std::ostream& err) {
  SyntheticSpec spec;
  try {
    spec = parse_synthetic_spec(read_json_file(spec_path));
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  }
  try {
    const auto corpus = generate_synthetic(spec);
    if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
    save_csv(out_csv, corpus);
    out << "wrote " << corpus.records.size() << " examples (" << corpus.num_classes << " classes) to "
        << out_csv.string() << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    err << "gen-synthetic failed: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace minibert
