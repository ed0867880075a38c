#include "minibert/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "minibert/errors.hpp"

namespace minibert {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

std::vector<std::size_t> permutation(std::size_t n, std::mt19937_64& engine) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), engine);
  return order;
}

}  // namespace

template <typename T>
AdamState<T> make_adam_state(std::span<const Tensor<T>> params) {
  AdamState<T> state;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.numel(), T(0));
    state.second_moment.emplace_back(p.numel(), T(0));
  }
  return state;
}

template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state,
               const AdamConfig& config) {
  if (state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: state holds " + std::to_string(state.first_moment.size()) +
                     " moments for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].numel() ||
        state.second_moment[i].size() != params[i].numel()) {
      throw ShapeError("adam_step: moment size mismatch for parameter " + std::to_string(i) +
                       " " + shape_to_string(params[i].shape()));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  const T lr = static_cast<T>(config.learning_rate);
  const T eps = static_cast<T>(config.epsilon);
  const T correction1 = static_cast<T>(1.0 - std::pow(config.beta1, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(config.beta2, t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].data();
    const auto grads = params[i].grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const T g = grads[j];
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      v[j] = b2 * v[j] + (T(1) - b2) * g * g;
      const T m_hat = m[j] / correction1;
      const T v_hat = v[j] / correction2;
      values[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template AdamState<float> make_adam_state(std::span<const Tensor<float>>);
template AdamState<double> make_adam_state(std::span<const Tensor<double>>);
template void adam_step(std::span<Tensor<float>>, AdamState<float>&, const AdamConfig&);
template void adam_step(std::span<Tensor<double>>, AdamState<double>&, const AdamConfig&);

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
    throw ConfigError("train: split_ratio must lie in (0, 1)");
  }
  if (!(adam.learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0.0)) throw ConfigError("train: Adam epsilon must be > 0");
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double split_ratio, std::uint64_t split_seed) {
  if (n < 2) throw ValidationError("split_dataset: need at least 2 examples, got " + std::to_string(n));
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
    throw ConfigError("split_dataset: split_ratio must lie in (0, 1)");
  }
  auto engine = make_engine(split_seed, 0x5b17);
  auto order = permutation(n, engine);
  // The tolerance keeps exact products such as 10 * 0.7 from rounding up.
  auto train_size = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * split_ratio - 1e-9));
  train_size = std::clamp<std::size_t>(train_size, 1, n - 1);
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
  out.first.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_size));
  out.second.assign(order.begin() + static_cast<std::ptrdiff_t>(train_size), order.end());
  return out;
}

std::vector<std::size_t> shuffle_epoch(std::size_t n, std::uint64_t shuffle_seed,
                                       std::size_t epoch) {
  auto engine = make_engine(shuffle_seed, epoch);
  return permutation(n, engine);
}

double accuracy(const ClassifierModel& model, std::span<const EncodedExample> examples) {
  if (examples.empty()) return 0.0;
  const auto predicted = predict(model, examples).labels;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < examples.size(); ++i)
    correct += predicted[i] == examples[i].label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

TrainRun train(ClassifierModel& model, std::span<const EncodedExample> train_set,
               std::span<const EncodedExample> validation_set,
               const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw ValidationError("train: empty training set");
  if (validation_set.empty()) throw ValidationError("train: empty validation set");

  const auto start = Clock::now();
  auto params = model.parameters();
  auto state = make_adam_state(std::span<const Tensor<float>>(params));
  TrainRun run;
  std::vector<EncodedExample> batch;
  std::vector<int> labels;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    const auto order = shuffle_epoch(train_set.size(), config.shuffle_seed, epoch);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      batch.clear();
      labels.clear();
      for (std::size_t i = begin; i < end; ++i) {
        batch.push_back(train_set[order[i]]);
        labels.push_back(train_set[order[i]].label);
      }
      try {
        model.zero_grad();
        const auto logits = forward_classify_batch(std::span<const EncodedExample>(batch), model);
        const auto loss = cross_entropy(logits, std::span<const int>(labels));
        const double value = loss.item();
        if (!std::isfinite(value)) throw std::runtime_error("non-finite loss");
        backward(loss);
        adam_step(std::span<Tensor<float>>(params), state, config.adam);
        loss_sum += value * static_cast<double>(batch.size());
      } catch (const std::exception& e) {
        throw TrainingError("epoch " + std::to_string(epoch + 1) + ", batch " +
                                std::to_string(batch_index) + ": " + e.what(),
                            epoch + 1, batch_index);
      }
    }
    EpochRecord record;
    record.epoch = epoch + 1;
    record.mean_loss = loss_sum / static_cast<double>(train_set.size());
    record.train_seconds = seconds_since(epoch_start);
    record.validation_accuracy = accuracy(model, validation_set);
    record.elapsed_seconds = seconds_since(start);
    run.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  model.zero_grad();
  run.total_seconds = seconds_since(start);
  return run;
}

nlohmann::json epoch_record_json(const std::string& run, const EpochRecord& record) {
  return {{"run", run},
          {"epoch", record.epoch},
          {"loss", record.mean_loss},
          {"val_accuracy", record.validation_accuracy},
          {"epoch_train_seconds", record.train_seconds},
          {"elapsed_seconds", record.elapsed_seconds}};
}

std::vector<double> pretrain_mlm(ClassifierModel& model,
                                 std::span<const EncodedExample> examples,
                                 const PretrainConfig& config) {
  config.policy.validate();
  if (config.batch_size < 1) throw ConfigError("pretrain: batch_size must be >= 1");
  std::vector<double> losses;
  if (config.epochs == 0 || examples.empty()) return losses;
  auto params = model.parameters();
  auto state = make_adam_state(std::span<const Tensor<float>>(params));
  std::vector<EncodedExample> batch;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffle_epoch(examples.size(), config.seed, epoch);
    double loss_sum = 0.0;
    std::size_t target_count = 0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_index) {
      batch.clear();
      for (std::size_t i = begin; i < std::min(order.size(), begin + config.batch_size); ++i)
        batch.push_back(examples[order[i]]);
      const std::uint64_t mask_seed = config.seed ^ (0x9e3779b97f4a7c15ULL * (epoch * 1000003 + batch_index + 1));
      const auto masked = apply_mlm_mask(std::span<const EncodedExample>(batch),
                                         model.config().vocab_size, config.policy, mask_seed);
      if (masked.targets.empty()) continue;
      model.zero_grad();
      const auto loss = mlm_pretrain_loss(masked, model);
      backward(loss);
      adam_step(std::span<Tensor<float>>(params), state, config.adam);
      loss_sum += loss.item() * static_cast<double>(masked.targets.size());
      target_count += masked.targets.size();
    }
    losses.push_back(target_count ? loss_sum / static_cast<double>(target_count) : 0.0);
  }
  model.zero_grad();
  return losses;
}

}  // namespace minibert
