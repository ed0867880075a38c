#include "minibert/masking.hpp"

#include <cmath>
#include <random>

#include "minibert/errors.hpp"

namespace minibert {

void MaskingPolicy::validate() const {
  const auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(select_rate)) throw ConfigError("masking: select_rate must lie in [0, 1]");
  if (!in_unit(mask_rate) || !in_unit(random_rate) || !in_unit(keep_rate)) {
    throw ConfigError("masking: replacement rates must lie in [0, 1]");
  }
  if (std::abs(mask_rate + random_rate + keep_rate - 1.0) > 1e-9) {
    throw ConfigError("masking: mask_rate + random_rate + keep_rate must equal 1");
  }
}

bool is_maskable(int token_id, int attention) {
  return attention != 0 && token_id >= kNumSpecialTokens;
}

MaskedBatch apply_mlm_mask(std::span<const EncodedExample> examples,
                           std::size_t vocab_size, const MaskingPolicy& policy,
                           std::uint64_t rng_seed) {
  policy.validate();
  if (vocab_size <= static_cast<std::size_t>(kNumSpecialTokens)) {
    throw ConfigError("masking: vocabulary of " + std::to_string(vocab_size) +
                      " has no non-special tokens for random replacement");
  }
  std::mt19937_64 engine(rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> random_token(kNumSpecialTokens,
                                                  static_cast<int>(vocab_size) - 1);
  MaskedBatch batch;
  batch.inputs.assign(examples.begin(), examples.end());
  for (std::size_t e = 0; e < batch.inputs.size(); ++e) {
    auto& ex = batch.inputs[e];
    for (std::size_t p = 0; p < ex.token_ids.size(); ++p) {
      if (!is_maskable(ex.token_ids[p], ex.attention_mask[p])) continue;
      if (unit(engine) >= policy.select_rate) continue;
      MaskTarget target{e, p, ex.token_ids[p], MaskAction::kKeep};
      const double choice = unit(engine);
      if (choice < policy.mask_rate) {
        target.action = MaskAction::kMask;
        ex.token_ids[p] = kMaskId;
      } else if (choice < policy.mask_rate + policy.random_rate) {
        target.action = MaskAction::kRandom;
        ex.token_ids[p] = random_token(engine);
      }
      batch.targets.push_back(target);
    }
  }
  return batch;
}

template <typename T>
Tensor<T> mlm_pretrain_loss(const MaskedBatch& batch,
                            const BasicClassifierModel<T>& model) {
  if (batch.targets.empty()) return Tensor<T>::scalar(T(0));
  std::vector<Tensor<T>> rows;
  std::vector<int> labels;
  std::size_t t = 0;
  while (t < batch.targets.size()) {
    const std::size_t e = batch.targets[t].example;
    if (e >= batch.inputs.size()) {
      throw ValidationError("masked target refers to missing example " + std::to_string(e));
    }
    std::vector<int> positions;
    for (; t < batch.targets.size() && batch.targets[t].example == e; ++t) {
      positions.push_back(static_cast<int>(batch.targets[t].position));
      labels.push_back(batch.targets[t].original_id);
    }
    validate_example(batch.inputs[e], model);
    const auto hidden = encode_sequence(trim_trailing_padding(batch.inputs[e]), model);
    rows.push_back(gather_rows(hidden, std::span<const int>(positions)));
  }
  const auto features = concat_rows(std::span<const Tensor<T>>(rows));
  const auto logits = matmul(features, transpose(model.word_embeddings));
  return cross_entropy(logits, std::span<const int>(labels));
}

template Tensor<float> mlm_pretrain_loss(const MaskedBatch&, const BasicClassifierModel<float>&);
template Tensor<double> mlm_pretrain_loss(const MaskedBatch&, const BasicClassifierModel<double>&);

}  // namespace minibert
