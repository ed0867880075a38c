#include "minibert/ensemble.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <optional>
#include <thread>

#include "json.hpp"
#include "minibert/checkpoint.hpp"
#include "minibert/errors.hpp"

namespace minibert {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(VotingRule rule) {
  return rule == VotingRule::kMajority ? "majority" : "average_probability";
}

VotingRule voting_rule_from_string(const std::string& name) {
  if (name == "majority") return VotingRule::kMajority;
  if (name == "average_probability" || name == "average") return VotingRule::kAverageProbability;
  throw ConfigError("unknown voting rule '" + name + "' (expected majority or average_probability)");
}

void EnsembleConfig::validate() const {
  if (n_members < 1) throw ConfigError("ensemble: n_members must be >= 1");
  if (member_shuffle_seeds.size() != n_members) {
    throw ConfigError("ensemble: " + std::to_string(member_shuffle_seeds.size()) +
                      " shuffle seeds for " + std::to_string(n_members) + " members");
  }
  member_model.validate();
}

std::uint64_t EnsembleConfig::member_init_seed(std::size_t member) const {
  return shared_init ? member_model.init_seed : member_model.init_seed + member;
}

EnsembleTraining train_ensemble(std::span<const EncodedExample> train_set,
                                std::span<const EncodedExample> validation_set,
                                const EnsembleConfig& config,
                                const TrainConfig& train_config,
                                const MemberEpochCallback& on_epoch,
                                const MemberInitHook& on_init) {
  config.validate();
  train_config.validate();
  const auto start = std::chrono::steady_clock::now();

  EnsembleTraining out;
  out.ensemble.config = config;
  std::optional<ClassifierModel> shared;
  if (config.shared_init) {
    shared.emplace(init_model<float>(config.member_model));
    if (on_init) on_init(*shared);
  }
  for (std::size_t i = 0; i < config.n_members; ++i) {
    if (shared) {
      out.ensemble.members.push_back(shared->clone());
    } else {
      auto member_config = config.member_model;
      member_config.init_seed = config.member_init_seed(i);
      out.ensemble.members.push_back(init_model<float>(member_config));
      if (on_init) on_init(out.ensemble.members.back());
    }
  }
  out.runs.resize(config.n_members);

  std::vector<std::exception_ptr> errors(config.n_members);
  const auto train_member = [&](std::size_t i) {
    try {
      auto member_train = train_config;
      member_train.shuffle_seed = config.member_shuffle_seeds[i];
      EpochCallback callback;
      if (on_epoch) callback = [&, i](const EpochRecord& r) { on_epoch(i, r); };
      out.runs[i] = train(out.ensemble.members[i], train_set, validation_set, member_train, callback);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  if (config.parallel && config.n_members > 1) {
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < config.n_members; ++i) workers.emplace_back(train_member, i);
    for (auto& w : workers) w.join();
  } else {
    for (std::size_t i = 0; i < config.n_members; ++i) {
      train_member(i);
      if (errors[i]) break;
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const TrainingError& e) {
      throw TrainingError("member " + std::to_string(i) + ": " + e.what(), e.epoch(), e.batch());
    } catch (const std::exception& e) {
      throw TrainingError("member " + std::to_string(i) + ": " + e.what(), 0, 0);
    }
  }

  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const auto& run : out.runs) out.summed_member_seconds += run.total_seconds;
  return out;
}

std::vector<int> majority_vote(const std::vector<std::vector<int>>& votes) {
  if (votes.empty()) throw ValidationError("majority_vote: no members");
  const std::size_t batch = votes[0].size();
  int max_label = 0;
  for (std::size_t m = 0; m < votes.size(); ++m) {
    if (votes[m].size() != batch) {
      throw ValidationError("majority_vote: member " + std::to_string(m) + " voted on " +
                            std::to_string(votes[m].size()) + " examples, expected " +
                            std::to_string(batch));
    }
    for (int v : votes[m]) {
      if (v < 0) throw ValidationError("majority_vote: negative class index");
      max_label = std::max(max_label, v);
    }
  }
  std::vector<int> out(batch);
  std::vector<std::size_t> counts(static_cast<std::size_t>(max_label) + 1);
  for (std::size_t i = 0; i < batch; ++i) {
    std::fill(counts.begin(), counts.end(), 0);
    for (const auto& member : votes) ++counts[static_cast<std::size_t>(member[i])];
    // max_element returns the first maximum, i.e. the lowest tied class.
    out[i] = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }
  return out;
}

std::vector<int> average_vote(
    const std::vector<std::vector<std::vector<double>>>& probabilities) {
  if (probabilities.empty()) throw ValidationError("average_vote: no members");
  const std::size_t batch = probabilities[0].size();
  const std::size_t classes = batch ? probabilities[0][0].size() : 0;
  for (std::size_t m = 0; m < probabilities.size(); ++m) {
    if (probabilities[m].size() != batch) {
      throw ValidationError("average_vote: member " + std::to_string(m) + " has " +
                            std::to_string(probabilities[m].size()) + " rows, expected " +
                            std::to_string(batch));
    }
    for (std::size_t i = 0; i < batch; ++i) {
      const auto& row = probabilities[m][i];
      if (row.size() != classes || classes == 0) {
        throw ValidationError("average_vote: ragged probability rows");
      }
      double total = 0.0;
      for (double p : row) {
        if (!(p >= 0.0)) throw ValidationError("average_vote: negative or NaN probability");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-5) {
        throw ValidationError("average_vote: member " + std::to_string(m) + " row " +
                              std::to_string(i) + " sums to " + std::to_string(total));
      }
    }
  }
  std::vector<int> out(batch);
  std::vector<double> column(probabilities.size());
  for (std::size_t i = 0; i < batch; ++i) {
    double best = -1.0;
    for (std::size_t c = 0; c < classes; ++c) {
      for (std::size_t m = 0; m < probabilities.size(); ++m) column[m] = probabilities[m][i][c];
      std::sort(column.begin(), column.end());
      double total = 0.0;
      for (double p : column) total += p;
      if (total > best) {
        best = total;
        out[i] = static_cast<int>(c);
      }
    }
  }
  return out;
}

EnsemblePrediction predict_ensemble(const EnsembleModel& ensemble,
                                    std::span<const EncodedExample> examples) {
  if (ensemble.members.empty()) throw ValidationError("predict_ensemble: empty ensemble");
  EnsemblePrediction out;
  std::vector<std::vector<std::vector<double>>> probabilities;
  for (const auto& member : ensemble.members) {
    auto prediction = predict(member, examples);
    out.member_labels.push_back(std::move(prediction.labels));
    probabilities.push_back(std::move(prediction.probabilities));
  }
  if (examples.empty()) return out;
  out.labels = ensemble.config.voting == VotingRule::kMajority ? majority_vote(out.member_labels)
                                                               : average_vote(probabilities);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const int first = out.member_labels[0][i];
    for (const auto& member : out.member_labels) {
      if (member[i] != first) {
        ++out.disagreements;
        break;
      }
    }
  }
  return out;
}

void save_ensemble(const fs::path& dir, const EnsembleModel& ensemble,
                   const Vocabulary& vocab) {
  fs::create_directories(dir);
  json manifest{{"format", "minibert-ensemble"},
                {"version", 1},
                {"n_members", ensemble.members.size()},
                {"voting", to_string(ensemble.config.voting)},
                {"shared_init", ensemble.config.shared_init},
                {"member_shuffle_seeds", ensemble.config.member_shuffle_seeds},
                {"members", json::array()}};
  for (std::size_t i = 0; i < ensemble.members.size(); ++i) {
    const std::string name = "member_" + std::to_string(i);
    save_checkpoint(dir / name, ensemble.members[i], vocab);
    manifest["members"].push_back(name);
  }
  std::ofstream out(dir / "ensemble.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw CheckpointError("failed writing " + (dir / "ensemble.json").string());
}

bool is_ensemble_checkpoint(const fs::path& dir) {
  return fs::exists(dir / "ensemble.json");
}

LoadedEnsemble load_ensemble(const fs::path& dir) {
  const auto path = dir / "ensemble.json";
  if (!fs::exists(path)) throw CheckpointError("no ensemble checkpoint at " + dir.string());
  json manifest;
  try {
    std::ifstream in(path);
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw CheckpointError("unreadable " + path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "minibert-ensemble") {
    throw CheckpointError(path.string() + " is not an ensemble manifest");
  }
  LoadedEnsemble out;
  try {
    auto& cfg = out.ensemble.config;
    cfg.n_members = manifest.at("n_members").get<std::size_t>();
    cfg.voting = voting_rule_from_string(manifest.at("voting").get<std::string>());
    cfg.shared_init = manifest.at("shared_init").get<bool>();
    cfg.member_shuffle_seeds = manifest.at("member_shuffle_seeds").get<std::vector<std::uint64_t>>();
    const auto members = manifest.at("members").get<std::vector<std::string>>();
    if (members.size() != cfg.n_members) {
      throw CheckpointError("ensemble manifest lists " + std::to_string(members.size()) +
                            " members but n_members is " + std::to_string(cfg.n_members));
    }
    for (std::size_t i = 0; i < members.size(); ++i) {
      auto loaded = load_checkpoint(dir / members[i]);
      if (i == 0) {
        out.vocab = std::move(loaded.vocab);
        cfg.member_model = loaded.model.config();
      } else {
        if (!(loaded.vocab == out.vocab)) {
          throw CheckpointError("member " + members[i] + " has a different vocabulary");
        }
        auto expected = cfg.member_model;
        expected.init_seed = loaded.model.config().init_seed;
        if (!(loaded.model.config() == expected)) {
          throw CheckpointError("member " + members[i] + " has a different model shape");
        }
      }
      out.ensemble.members.push_back(std::move(loaded.model));
    }
  } catch (const json::exception& e) {
    throw CheckpointError("malformed " + path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace minibert
