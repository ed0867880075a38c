#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "minibert/model.hpp"
#include "minibert/tokenizer.hpp"
#include "minibert/training.hpp"

namespace minibert {

enum class VotingRule { kMajority, kAverageProbability };

std::string to_string(VotingRule rule);
// Accepts "majority" and "average_probability"; throws ConfigError.
VotingRule voting_rule_from_string(const std::string& name);

struct EnsembleConfig {
  std::size_t n_members = 3;
  ModelConfig member_model;  // num_layers = 1 for the shallow-member design
  // All members start from member_model.init_seed. When false, member i
  // uses init_seed + i.
  bool shared_init = true;
  std::vector<std::uint64_t> member_shuffle_seeds;
  VotingRule voting = VotingRule::kMajority;
  // Train members on separate threads.
  bool parallel = false;

  void validate() const;
  std::uint64_t member_init_seed(std::size_t member) const;
};

struct EnsembleModel {
  std::vector<ClassifierModel> members;
  EnsembleConfig config;
};

struct EnsembleTraining {
  EnsembleModel ensemble;
  std::vector<TrainRun> runs;
  double wall_seconds = 0.0;            // whole train_ensemble() call
  double summed_member_seconds = 0.0;   // sum of member total_seconds
};

using MemberEpochCallback = std::function<void(std::size_t member, const EpochRecord&)>;
// Runs on each freshly initialized model before fine-tuning (once on the
// shared model when shared_init is set), e.g. for MLM pretraining.
using MemberInitHook = std::function<void(ClassifierModel&)>;

// Trains every member on the same split with its own shuffle seed. Errors
// are rethrown as TrainingError naming the member index.
EnsembleTraining train_ensemble(std::span<const EncodedExample> train_set,
                                std::span<const EncodedExample> validation_set,
                                const EnsembleConfig& config,
                                const TrainConfig& train_config,
                                const MemberEpochCallback& on_epoch = {},
                                const MemberInitHook& on_init = {});

// votes[member][example]. Per example the most frequent class; ties go to
// the lowest class index. Throws ValidationError on ragged or negative input.
std::vector<int> majority_vote(const std::vector<std::vector<int>>& votes);

// probabilities[member][example][class]. Argmax of the member mean, ties to
// the lowest class index. Each row must be a distribution (sum within 1e-5).
// Per-class sums are accumulated in sorted order, so the result does not
// depend on member order.
std::vector<int> average_vote(
    const std::vector<std::vector<std::vector<double>>>& probabilities);

struct EnsemblePrediction {
  std::vector<int> labels;
  std::vector<std::vector<int>> member_labels;  // [member][example]
  std::size_t disagreements = 0;  // examples where members are not unanimous
};

EnsemblePrediction predict_ensemble(const EnsembleModel& ensemble,
                                    std::span<const EncodedExample> examples);

// Directory layout:
//   ensemble.json   {"format": "minibert-ensemble", "version": 1,
//                    "n_members", "voting", "shared_init",
//                    "member_shuffle_seeds", "members": ["member_0", ...]}
//   member_<i>/     model checkpoint (see checkpoint.hpp)
void save_ensemble(const std::filesystem::path& dir, const EnsembleModel& ensemble,
                   const Vocabulary& vocab);

struct LoadedEnsemble {
  EnsembleModel ensemble;
  Vocabulary vocab;
};
LoadedEnsemble load_ensemble(const std::filesystem::path& dir);

bool is_ensemble_checkpoint(const std::filesystem::path& dir);

}  // namespace minibert
