#pragma once

// BERT-style sequence classifier.
//
//   embeddings  = word[token] + segment[segment] + position[p]
//   each layer  = post-LN residual block:
//                   h   = LN(x + MHA(x))
//                   out = LN(h + W2 gelu(W1 h + b1) + b2)
//   head        = tanh(cls W_h + b_h) W_o + b_o      (cls = final row 0)
//
// Attention scores are scaled by 1/sqrt(head_dim); PAD keys get an additive
// -1e9 before the softmax. All four attention projections carry biases.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "minibert/tensor.hpp"
#include "minibert/tokenizer.hpp"

namespace minibert {

struct ModelConfig {
  std::size_t vocab_size = 2000;
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 1;
  std::size_t num_heads = 2;
  std::size_t ff_dim = 256;
  std::size_t max_seq_len = 64;
  std::size_t num_classes = 2;
  std::uint64_t init_seed = 0;
  double init_scale = 0.02;

  // Throws ConfigError describing the first violated invariant.
  void validate() const;
  std::size_t head_dim() const { return hidden_dim / num_heads; }

  bool operator==(const ModelConfig&) const = default;
};

inline constexpr double kLayerNormEpsilon = 1e-5;
inline constexpr double kAttentionMaskBias = -1e9;

// Pure function of the configuration.
std::size_t parameter_count(const ModelConfig& config);

template <typename T>
struct LayerParameters {
  Tensor<T> query_w, query_b;
  Tensor<T> key_w, key_b;
  Tensor<T> value_w, value_b;
  Tensor<T> output_w, output_b;
  Tensor<T> attention_norm_gain, attention_norm_bias;
  Tensor<T> ff_in_w, ff_in_b;
  Tensor<T> ff_out_w, ff_out_b;
  Tensor<T> ff_norm_gain, ff_norm_bias;
};

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
class BasicClassifierModel {
 public:
  // Seeded normal(0, init_scale) weights, zero biases, unit layer-norm gains.
  explicit BasicClassifierModel(const ModelConfig& config);

  BasicClassifierModel(const BasicClassifierModel&) = delete;
  BasicClassifierModel& operator=(const BasicClassifierModel&) = delete;
  BasicClassifierModel(BasicClassifierModel&&) noexcept = default;
  BasicClassifierModel& operator=(BasicClassifierModel&&) noexcept = default;

  // Deep copy with independent parameter storage.
  BasicClassifierModel clone() const;

  template <typename U>
  BasicClassifierModel<U> cast() const;

  const ModelConfig& config() const { return config_; }

  // Fixed order; names are stable and used by checkpoints.
  std::vector<NamedParameter<T>> named_parameters() const;
  std::vector<Tensor<T>> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  Tensor<T> word_embeddings;      // [vocab x hidden]
  Tensor<T> segment_embeddings;   // [2 x hidden]
  Tensor<T> position_embeddings;  // [max_seq_len x hidden]
  std::vector<LayerParameters<T>> layers;
  Tensor<T> head_hidden_w, head_hidden_b;  // [hidden x hidden], [hidden]
  Tensor<T> head_output_w, head_output_b;  // [hidden x classes], [classes]

 private:
  struct Uninitialized {};
  BasicClassifierModel(const ModelConfig& config, Uninitialized);
  template <typename U>
  friend class BasicClassifierModel;

  ModelConfig config_;
};

using ClassifierModel = BasicClassifierModel<float>;

template <typename T>
BasicClassifierModel<T> init_model(const ModelConfig& config) {
  return BasicClassifierModel<T>(config);
}

// Attention probabilities captured during a forward pass, one [seq x seq]
// tensor per head, rows = queries.
template <typename T>
struct AttentionProbe {
  std::vector<Tensor<T>> head_weights;
};

// Checks ids and lengths against the model configuration; throws
// ValidationError.
template <typename T>
void validate_example(const EncodedExample& example,
                      const BasicClassifierModel<T>& model);

// [seq x hidden] summed word + segment + position embeddings.
template <typename T>
Tensor<T> embed(const EncodedExample& example, const BasicClassifierModel<T>& model);

// One post-LN encoder block. `attention_mask` has one entry per row of x.
template <typename T>
Tensor<T> encoder_layer(const Tensor<T>& x, std::span<const int> attention_mask,
                        const LayerParameters<T>& params, std::size_t num_heads,
                        AttentionProbe<T>* probe = nullptr);

// Drops positions after the last attended one (keeps at least one). Masked
// keys receive exactly zero attention weight, so the hidden states of the
// remaining positions are unchanged.
EncodedExample trim_trailing_padding(const EncodedExample& example);

// Final-layer hidden states [seq x hidden].
template <typename T>
Tensor<T> encode_sequence(const EncodedExample& example,
                          const BasicClassifierModel<T>& model);

// Applies the MLP head to pooled [CLS] features [batch x hidden].
template <typename T>
Tensor<T> classification_head(const Tensor<T>& cls_features,
                              const BasicClassifierModel<T>& model);

// Logits [1 x num_classes].
template <typename T>
Tensor<T> forward_classify(const EncodedExample& example,
                           const BasicClassifierModel<T>& model);

// Logits [batch x num_classes]; row i equals forward_classify(examples[i]).
template <typename T>
Tensor<T> forward_classify_batch(std::span<const EncodedExample> examples,
                                 const BasicClassifierModel<T>& model);

// Index of the largest entry of each row; first index wins ties.
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits);

// Predictions and class probabilities without building a graph.
struct Prediction {
  std::vector<int> labels;
  std::vector<std::vector<double>> probabilities;
};
Prediction predict(const ClassifierModel& model,
                   std::span<const EncodedExample> examples,
                   std::size_t batch_size = 64);

}  // namespace minibert
