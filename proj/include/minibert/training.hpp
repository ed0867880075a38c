#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "minibert/masking.hpp"
#include "minibert/model.hpp"
#include "minibert/tokenizer.hpp"

namespace minibert {

// A failure inside train(); the message carries epoch and batch index.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& message, std::size_t epoch, std::size_t batch)
      : std::runtime_error(message), epoch_(epoch), batch_(batch) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
  std::size_t step = 0;
};

template <typename T>
AdamState<T> make_adam_state(std::span<const Tensor<T>> params);

// One bias-corrected Adam update using each parameter's grad buffer:
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
//   p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
// Throws ShapeError if the state does not match the parameters.
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state,
               const AdamConfig& config);

struct TrainConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 32;
  AdamConfig adam;
  std::uint64_t shuffle_seed = 0;
  double split_ratio = 0.8;
  std::uint64_t split_seed = 0;

  // Throws ConfigError.
  void validate() const;
};

// Seeded permutation of [0, n); the first ceil(n * ratio) indices (clamped
// to [1, n - 1]) form the training part. Throws ValidationError for n < 2
// and ConfigError for a ratio outside (0, 1).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double split_ratio, std::uint64_t split_seed);

template <typename Item>
std::pair<std::vector<Item>, std::vector<Item>> split_dataset(
    std::span<const Item> items, double split_ratio, std::uint64_t split_seed) {
  auto [train_idx, valid_idx] = split_indices(items.size(), split_ratio, split_seed);
  std::pair<std::vector<Item>, std::vector<Item>> out;
  for (auto i : train_idx) out.first.push_back(items[i]);
  for (auto i : valid_idx) out.second.push_back(items[i]);
  return out;
}

// Permutation of [0, n) determined by (shuffle_seed, epoch).
std::vector<std::size_t> shuffle_epoch(std::size_t n, std::uint64_t shuffle_seed,
                                       std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double validation_accuracy = 0.0;
  double train_seconds = 0.0;    // optimization only, this epoch
  double elapsed_seconds = 0.0;  // since train() started
};

struct TrainRun {
  std::vector<EpochRecord> epochs;
  double total_seconds = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Fine-tunes `model` in place: per epoch shuffle, batch (last partial batch
// kept), cross-entropy, backward, Adam; then validation accuracy.
TrainRun train(ClassifierModel& model, std::span<const EncodedExample> train_set,
               std::span<const EncodedExample> validation_set,
               const TrainConfig& config, const EpochCallback& on_epoch = {});

double accuracy(const ClassifierModel& model, std::span<const EncodedExample> examples);

// Line-delimited log record.
nlohmann::json epoch_record_json(const std::string& run, const EpochRecord& record);

struct PretrainConfig {
  std::size_t epochs = 0;
  std::size_t batch_size = 32;
  AdamConfig adam;
  MaskingPolicy policy;
  std::uint64_t seed = 0;
};

// Optional masked-language-model phase over unlabeled sequences. Returns the
// mean loss of each epoch.
std::vector<double> pretrain_mlm(ClassifierModel& model,
                                 std::span<const EncodedExample> examples,
                                 const PretrainConfig& config);

}  // namespace minibert
