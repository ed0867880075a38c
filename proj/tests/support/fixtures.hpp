#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "minibert/model.hpp"
#include "minibert/tokenizer.hpp"

namespace minibert::testing {

// hidden 8, heads 2, seq 8, vocab 20.
inline ModelConfig tiny_config(std::uint64_t seed, std::size_t layers = 1) {
  ModelConfig c;
  c.vocab_size = 20;
  c.hidden_dim = 8;
  c.num_layers = layers;
  c.num_heads = 2;
  c.ff_dim = 16;
  c.max_seq_len = 8;
  c.num_classes = 2;
  c.init_seed = seed;
  c.init_scale = 0.5;
  return c;
}

// [CLS] w... [SEP] [PAD]... with `real` content tokens drawn from the
// non-special ids.
inline EncodedExample random_example(std::mt19937_64& rng, std::size_t vocab_size,
                                     std::size_t seq_len, std::size_t real, int label) {
  std::uniform_int_distribution<int> word(kNumSpecialTokens, static_cast<int>(vocab_size) - 1);
  EncodedExample e;
  e.token_ids.push_back(kClsId);
  for (std::size_t i = 0; i < real; ++i) e.token_ids.push_back(word(rng));
  e.token_ids.push_back(kSepId);
  e.attention_mask.assign(e.token_ids.size(), 1);
  while (e.token_ids.size() < seq_len) {
    e.token_ids.push_back(kPadId);
    e.attention_mask.push_back(0);
  }
  e.segment_ids.assign(seq_len, 0);
  e.label = label;
  return e;
}

inline std::vector<EncodedExample> random_examples(std::uint64_t seed, std::size_t count,
                                                   const ModelConfig& c) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len(1, c.max_seq_len - 2);
  std::vector<EncodedExample> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(random_example(rng, c.vocab_size, c.max_seq_len, len(rng),
                                 static_cast<int>(i % c.num_classes)));
  }
  return out;
}

// Mode of each column with ties going to the smallest label, by direct
// counting over an ordered map.
inline std::vector<int> brute_force_majority(const std::vector<std::vector<int>>& votes) {
  std::vector<int> out;
  for (std::size_t i = 0; i < votes[0].size(); ++i) {
    std::map<int, int> tally;
    for (const auto& member : votes) ++tally[member[i]];
    int best = -1, best_count = 0;
    for (const auto& [label, n] : tally) {
      if (n > best_count) {
        best = label;
        best_count = n;
      }
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace minibert::testing
