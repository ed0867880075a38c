#pragma once

// Masked-language-model corruption and loss.
//
// Every non-special, non-PAD position is selected independently with
// probability select_rate. A selected position becomes [MASK] with
// probability mask_rate, a uniformly drawn non-special vocabulary id with
// probability random_rate, and is left unchanged otherwise.

#include <cstdint>
#include <span>
#include <vector>

#include "minibert/model.hpp"
#include "minibert/tokenizer.hpp"

namespace minibert {

struct MaskingPolicy {
  double select_rate = 0.15;
  double mask_rate = 0.80;
  double random_rate = 0.10;
  double keep_rate = 0.10;

  // Throws ConfigError. The three replacement rates must sum to 1 (within
  // 1e-9) and select_rate must lie in [0, 1].
  void validate() const;
};

enum class MaskAction : std::uint8_t { kMask, kRandom, kKeep };

struct MaskTarget {
  std::size_t example = 0;
  std::size_t position = 0;
  int original_id = 0;
  MaskAction action = MaskAction::kMask;
};

struct MaskedBatch {
  std::vector<EncodedExample> inputs;  // corrupted copies
  std::vector<MaskTarget> targets;
};

// True for positions that may be selected: real tokens other than the
// special ids.
bool is_maskable(int token_id, int attention);

// Deterministic per seed. Throws ConfigError when the vocabulary has no
// non-special tokens to draw random replacements from.
MaskedBatch apply_mlm_mask(std::span<const EncodedExample> examples,
                           std::size_t vocab_size, const MaskingPolicy& policy,
                           std::uint64_t rng_seed);

// Mean cross-entropy of the tied-decoder logits (hidden . word_embeddings^T)
// at the target positions. An empty target set yields a zero scalar that is
// not connected to the model.
template <typename T>
Tensor<T> mlm_pretrain_loss(const MaskedBatch& batch,
                            const BasicClassifierModel<T>& model);

}  // namespace minibert
