#pragma once

// Experiment driver behind the `minibert` command line tool.
//
// Configuration is a JSON document:
//
//   {
//     "corpus": {"path": "reviews.csv"}
//             | {"synthetic": {"num_examples": 2000, "num_classes": 2,
//                              "pool_size": 40, "shared_pool_size": 40,
//                              "min_tokens": 6, "max_tokens": 16,
//                              "noise_rate": 0.1, "seed": 7}},
//     "tokenizer": {"max_vocab": 2000, "min_frequency": 1, "max_seq_len": 64},
//     "model": {"hidden_dim": 64, "num_heads": 2, "ff_dim": 256,
//               "init_seed": 42, "init_scale": 0.02},
//     "train": {"epochs": 3, "batch_size": 32, "learning_rate": 0.001,
//               "beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8,
//               "shuffle_seed": 1, "split_ratio": 0.8, "split_seed": 2},
//     "pretrain": {"epochs": 0, "batch_size": 32, "learning_rate": 0.001,
//                  "seed": 3},                                  (optional)
//     "variants": [
//       {"name": "ensemble", "kind": "ensemble", "num_layers": 1,
//        "n_members": 3, "member_shuffle_seeds": [11, 12, 13],
//        "voting": "majority", "shared_init": true},
//       {"name": "bert-3", "kind": "single", "num_layers": 3},
//       {"name": "bert-12", "kind": "single", "num_layers": 12,
//        "optional": true}
//     ],
//     "output_dir": "runs"
//   }
//
// Seeds have no defaults. Optional variants only run with
// RunOptions::include_optional.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration/usage error.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "minibert/corpus.hpp"
#include "minibert/ensemble.hpp"
#include "minibert/evaluation.hpp"
#include "minibert/model.hpp"
#include "minibert/tokenizer.hpp"
#include "minibert/training.hpp"

namespace minibert {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

enum class VariantKind { kSingle, kEnsemble };

struct VariantSpec {
  std::string name;
  VariantKind kind = VariantKind::kSingle;
  std::size_t num_layers = 1;
  std::size_t n_members = 1;
  std::vector<std::uint64_t> member_shuffle_seeds;
  VotingRule voting = VotingRule::kMajority;
  bool shared_init = true;
  bool optional = false;
};

struct TokenizerLimits {
  std::size_t max_vocab = 2000;
  std::size_t min_frequency = 1;
  std::size_t max_seq_len = 64;
};

struct ExperimentConfig {
  std::optional<std::filesystem::path> corpus_path;
  std::optional<SyntheticSpec> synthetic;
  TokenizerLimits tokenizer;
  ModelConfig model;  // vocab_size, num_layers, num_classes filled per run
  TrainConfig train;
  PretrainConfig pretrain;
  std::vector<VariantSpec> variants;
  std::filesystem::path output_dir = "runs";
  nlohmann::json source;  // the document as read
};

// Throws ConfigError whose message names the offending key path.
ExperimentConfig parse_experiment_config(const nlohmann::json& document,
                                         const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Accepts a bare synthetic object or one nested under "synthetic" or
// "corpus.synthetic".
SyntheticSpec parse_synthetic_spec(const nlohmann::json& document);

struct PreparedData {
  LabeledCorpus corpus;
  std::vector<LabeledRecord> train_records;
  std::vector<LabeledRecord> validation_records;
  Vocabulary vocab;  // built from train_records only
  std::vector<EncodedExample> train;
  std::vector<EncodedExample> validation;
};

LabeledCorpus load_corpus(const ExperimentConfig& config);
PreparedData prepare_data(const ExperimentConfig& config, LabeledCorpus corpus);

struct RunOptions {
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  bool parallel_members = false;
  bool include_optional = false;
  bool quiet = false;
};

struct VariantOutcome {
  std::string name;
  MetricsReport metrics;
  TimingRecord timing;
  std::vector<TrainRun> runs;  // one per member (one for single models)
  std::filesystem::path checkpoint;
};

struct ExperimentOutcome {
  std::filesystem::path run_dir;
  std::vector<VariantOutcome> variants;
  ComparisonReport report;
};

// Throws ConfigError for configuration problems; other exceptions are
// runtime failures.
ExperimentOutcome run_experiment(const ExperimentConfig& config, const RunOptions& options,
                                 std::ostream& log);

struct EvalOutcome {
  MetricsReport metrics;
  std::vector<double> member_accuracies;  // ensembles only
  std::size_t disagreements = 0;
  bool is_ensemble = false;
};

// Throws CheckpointError / CorpusError / ValidationError.
EvalOutcome evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                const std::filesystem::path& corpus_path);

// Command entry points; print to `out`/`err` and return an exit code.
int cmd_run(const std::filesystem::path& config_path, const RunOptions& options,
            std::ostream& out, std::ostream& err);
int cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& corpus,
             std::ostream& out, std::ostream& err);
int cmd_metrics(const std::vector<std::string>& counts, std::optional<double> minutes,
                std::ostream& out, std::ostream& err);
int cmd_gen_synthetic(const std::filesystem::path& spec_path,
                      const std::filesystem::path& out_csv, std::ostream& out,
                      std::ostream& err);

}  // namespace minibert
