#include "minibert/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "minibert/errors.hpp"

namespace minibert {

void ModelConfig::validate() const {
  const auto positive = [](std::size_t v, const char* name) {
    if (v < 1) throw ConfigError(std::string("model: ") + name + " must be >= 1");
  };
  positive(vocab_size, "vocab_size");
  positive(hidden_dim, "hidden_dim");
  positive(num_layers, "num_layers");
  positive(num_heads, "num_heads");
  positive(ff_dim, "ff_dim");
  positive(max_seq_len, "max_seq_len");
  if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
  if (hidden_dim % num_heads != 0) {
    throw ConfigError("model: hidden_dim " + std::to_string(hidden_dim) +
                      " is not divisible by num_heads " +
                      std::to_string(num_heads));
  }
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) {
    throw ConfigError("model: init_scale must be finite and >= 0");
  }
}

std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t h = c.hidden_dim, f = c.ff_dim;
  const std::size_t embeddings = c.vocab_size * h + 2 * h + c.max_seq_len * h;
  const std::size_t attention = 4 * (h * h + h);
  const std::size_t feed_forward = (h * f + f) + (f * h + h);
  const std::size_t norms = 4 * h;
  const std::size_t head = (h * h + h) + (h * c.num_classes + c.num_classes);
  return embeddings + c.num_layers * (attention + feed_forward + norms) + head;
}

namespace {

enum class InitKind { kWeight, kBias, kGain };

struct ParamSlot {
  std::string name;
  Shape shape;
  InitKind kind;
};

template <typename Model, typename Fn>
void for_each_slot(Model& model, const ModelConfig& c, Fn&& fn) {
  const std::size_t h = c.hidden_dim, f = c.ff_dim;
  fn(model.word_embeddings, ParamSlot{"embeddings.word", {c.vocab_size, h}, InitKind::kWeight});
  fn(model.segment_embeddings, ParamSlot{"embeddings.segment", {2, h}, InitKind::kWeight});
  fn(model.position_embeddings, ParamSlot{"embeddings.position", {c.max_seq_len, h}, InitKind::kWeight});
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    auto& l = model.layers[i];
    const std::string p = "layer." + std::to_string(i) + ".";
    fn(l.query_w, ParamSlot{p + "attention.query.weight", {h, h}, InitKind::kWeight});
    fn(l.query_b, ParamSlot{p + "attention.query.bias", {h}, InitKind::kBias});
    fn(l.key_w, ParamSlot{p + "attention.key.weight", {h, h}, InitKind::kWeight});
    fn(l.key_b, ParamSlot{p + "attention.key.bias", {h}, InitKind::kBias});
    fn(l.value_w, ParamSlot{p + "attention.value.weight", {h, h}, InitKind::kWeight});
    fn(l.value_b, ParamSlot{p + "attention.value.bias", {h}, InitKind::kBias});
    fn(l.output_w, ParamSlot{p + "attention.output.weight", {h, h}, InitKind::kWeight});
    fn(l.output_b, ParamSlot{p + "attention.output.bias", {h}, InitKind::kBias});
    fn(l.attention_norm_gain, ParamSlot{p + "attention.norm.gain", {h}, InitKind::kGain});
    fn(l.attention_norm_bias, ParamSlot{p + "attention.norm.bias", {h}, InitKind::kBias});
    fn(l.ff_in_w, ParamSlot{p + "ffn.in.weight", {h, f}, InitKind::kWeight});
    fn(l.ff_in_b, ParamSlot{p + "ffn.in.bias", {f}, InitKind::kBias});
    fn(l.ff_out_w, ParamSlot{p + "ffn.out.weight", {f, h}, InitKind::kWeight});
    fn(l.ff_out_b, ParamSlot{p + "ffn.out.bias", {h}, InitKind::kBias});
    fn(l.ff_norm_gain, ParamSlot{p + "ffn.norm.gain", {h}, InitKind::kGain});
    fn(l.ff_norm_bias, ParamSlot{p + "ffn.norm.bias", {h}, InitKind::kBias});
  }
  fn(model.head_hidden_w, ParamSlot{"head.hidden.weight", {h, h}, InitKind::kWeight});
  fn(model.head_hidden_b, ParamSlot{"head.hidden.bias", {h}, InitKind::kBias});
  fn(model.head_output_w, ParamSlot{"head.output.weight", {h, c.num_classes}, InitKind::kWeight});
  fn(model.head_output_b, ParamSlot{"head.output.bias", {c.num_classes}, InitKind::kBias});
}

}  // namespace

template <typename T>
BasicClassifierModel<T>::BasicClassifierModel(const ModelConfig& config,
                                              Uninitialized)
    : config_(config) {
  config_.validate();
  layers.resize(config_.num_layers);
}

template <typename T>
BasicClassifierModel<T>::BasicClassifierModel(const ModelConfig& config)
    : BasicClassifierModel(config, Uninitialized{}) {
  // Draws happen in double so float and double models share initial values.
  std::mt19937_64 engine(config_.init_seed);
  std::normal_distribution<double> normal(0.0, config_.init_scale > 0.0 ? config_.init_scale : 1.0);
  for_each_slot(*this, config_, [&](Tensor<T>& tensor, const ParamSlot& slot) {
    std::vector<T> values(shape_numel(slot.shape), T(0));
    if (slot.kind == InitKind::kGain) {
      std::fill(values.begin(), values.end(), T(1));
    } else if (slot.kind == InitKind::kWeight && config_.init_scale > 0.0) {
      for (auto& v : values) v = static_cast<T>(normal(engine));
    }
    tensor = Tensor<T>::from_data(slot.shape, std::move(values), true);
  });
}

template <typename T>
BasicClassifierModel<T> BasicClassifierModel<T>::clone() const {
  return cast<T>();
}

template <typename T>
template <typename U>
BasicClassifierModel<U> BasicClassifierModel<T>::cast() const {
  BasicClassifierModel<U> out(config_, typename BasicClassifierModel<U>::Uninitialized{});
  auto source = named_parameters();
  std::size_t index = 0;
  for_each_slot(out, config_, [&](Tensor<U>& tensor, const ParamSlot& slot) {
    const auto data = source[index++].tensor.data();
    std::vector<U> values(data.size());
    std::transform(data.begin(), data.end(), values.begin(),
                   [](T v) { return static_cast<U>(v); });
    tensor = Tensor<U>::from_data(slot.shape, std::move(values), true);
  });
  return out;
}

template <typename T>
std::vector<NamedParameter<T>> BasicClassifierModel<T>::named_parameters() const {
  std::vector<NamedParameter<T>> out;
  auto& self = const_cast<BasicClassifierModel&>(*this);
  for_each_slot(self, config_, [&](Tensor<T>& tensor, const ParamSlot& slot) {
    out.push_back({slot.name, tensor});
  });
  return out;
}

template <typename T>
std::vector<Tensor<T>> BasicClassifierModel<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (auto& p : named_parameters()) out.push_back(std::move(p.tensor));
  return out;
}

template <typename T>
std::size_t BasicClassifierModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

template <typename T>
void BasicClassifierModel<T>::zero_grad() {
  for (auto& p : parameters()) p.zero_grad();
}

// ---------------------------------------------------------------------------

template <typename T>
void validate_example(const EncodedExample& example,
                      const BasicClassifierModel<T>& model) {
  const auto& c = model.config();
  const std::size_t len = example.token_ids.size();
  if (len == 0 || len > c.max_seq_len) {
    throw ValidationError("example length " + std::to_string(len) +
                          " outside [1, " + std::to_string(c.max_seq_len) + "]");
  }
  if (example.segment_ids.size() != len || example.attention_mask.size() != len) {
    throw ValidationError("example token/segment/mask lengths differ");
  }
  for (std::size_t i = 0; i < len; ++i) {
    const int id = example.token_ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size) {
      throw ValidationError("token id " + std::to_string(id) + " at position " +
                            std::to_string(i) + " outside vocabulary of " +
                            std::to_string(c.vocab_size));
    }
    if (example.segment_ids[i] != 0 && example.segment_ids[i] != 1) {
      throw ValidationError("segment id at position " + std::to_string(i) +
                            " must be 0 or 1");
    }
    if (example.attention_mask[i] != 0 && example.attention_mask[i] != 1) {
      throw ValidationError("attention mask at position " + std::to_string(i) +
                            " must be 0 or 1");
    }
  }
}

EncodedExample trim_trailing_padding(const EncodedExample& example) {
  std::size_t keep = example.attention_mask.size();
  while (keep > 1 && example.attention_mask[keep - 1] == 0) --keep;
  if (keep == example.attention_mask.size()) return example;
  EncodedExample out;
  out.token_ids.assign(example.token_ids.begin(), example.token_ids.begin() + static_cast<std::ptrdiff_t>(keep));
  out.segment_ids.assign(example.segment_ids.begin(), example.segment_ids.begin() + static_cast<std::ptrdiff_t>(keep));
  out.attention_mask.assign(example.attention_mask.begin(),
                            example.attention_mask.begin() + static_cast<std::ptrdiff_t>(keep));
  out.label = example.label;
  return out;
}

template <typename T>
Tensor<T> embed(const EncodedExample& example, const BasicClassifierModel<T>& model) {
  validate_example(example, model);
  std::vector<int> positions(example.token_ids.size());
  std::iota(positions.begin(), positions.end(), 0);
  auto words = gather_rows(model.word_embeddings, std::span<const int>(example.token_ids));
  auto segments = gather_rows(model.segment_embeddings, std::span<const int>(example.segment_ids));
  auto pos = gather_rows(model.position_embeddings, std::span<const int>(positions));
  return add(add(words, segments), pos);
}

template <typename T>
Tensor<T> encoder_layer(const Tensor<T>& x, std::span<const int> attention_mask,
                        const LayerParameters<T>& params, std::size_t num_heads,
                        AttentionProbe<T>* probe) {
  if (x.rank() != 2) throw ShapeError("encoder_layer: input must be 2-D, got " + shape_to_string(x.shape()));
  const std::size_t seq = x.dim(0), hidden = x.dim(1);
  if (attention_mask.size() != seq) {
    throw ShapeError("encoder_layer: mask length " + std::to_string(attention_mask.size()) +
                     " does not match sequence length " + std::to_string(seq));
  }
  if (num_heads == 0 || hidden % num_heads != 0) {
    throw ShapeError("encoder_layer: hidden " + std::to_string(hidden) +
                     " not divisible by " + std::to_string(num_heads) + " heads");
  }
  const std::size_t head_dim = hidden / num_heads;

  std::vector<T> bias_values(seq);
  for (std::size_t j = 0; j < seq; ++j)
    bias_values[j] = attention_mask[j] ? T(0) : static_cast<T>(kAttentionMaskBias);
  const auto key_bias = Tensor<T>::from_data({seq}, std::move(bias_values));

  const auto q = add_row_bias(matmul(x, params.query_w), params.query_b);
  const auto k = add_row_bias(matmul(x, params.key_w), params.key_b);
  const auto v = add_row_bias(matmul(x, params.value_w), params.value_b);
  const T score_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim)));

  std::vector<Tensor<T>> contexts;
  contexts.reserve(num_heads);
  for (std::size_t h = 0; h < num_heads; ++h) {
    const auto qh = slice_cols(q, h * head_dim, head_dim);
    const auto kh = slice_cols(k, h * head_dim, head_dim);
    const auto vh = slice_cols(v, h * head_dim, head_dim);
    auto scores = scale(matmul(qh, transpose(kh)), score_scale);
    auto weights = softmax(add_row_bias(scores, key_bias), 1);
    if (probe) probe->head_weights.push_back(weights);
    contexts.push_back(matmul(weights, vh));
  }
  const auto attended = add_row_bias(
      matmul(concat_cols(std::span<const Tensor<T>>(contexts)), params.output_w),
      params.output_b);
  const T eps = static_cast<T>(kLayerNormEpsilon);
  const auto h1 = layer_norm(add(x, attended), params.attention_norm_gain,
                             params.attention_norm_bias, eps);
  const auto inner = gelu(add_row_bias(matmul(h1, params.ff_in_w), params.ff_in_b));
  const auto ff = add_row_bias(matmul(inner, params.ff_out_w), params.ff_out_b);
  return layer_norm(add(h1, ff), params.ff_norm_gain, params.ff_norm_bias, eps);
}

template <typename T>
Tensor<T> encode_sequence(const EncodedExample& example,
                          const BasicClassifierModel<T>& model) {
  auto hidden = embed(example, model);
  for (const auto& layer : model.layers) {
    hidden = encoder_layer(hidden, std::span<const int>(example.attention_mask),
                           layer, model.config().num_heads);
  }
  return hidden;
}

template <typename T>
Tensor<T> classification_head(const Tensor<T>& cls_features,
                              const BasicClassifierModel<T>& model) {
  const auto hidden = tanh(add_row_bias(matmul(cls_features, model.head_hidden_w),
                                        model.head_hidden_b));
  return add_row_bias(matmul(hidden, model.head_output_w), model.head_output_b);
}

template <typename T>
Tensor<T> forward_classify(const EncodedExample& example,
                           const BasicClassifierModel<T>& model) {
  return forward_classify_batch(std::span<const EncodedExample>(&example, 1), model);
}

template <typename T>
Tensor<T> forward_classify_batch(std::span<const EncodedExample> examples,
                                 const BasicClassifierModel<T>& model) {
  if (examples.empty()) throw ValidationError("forward_classify_batch: empty batch");
  static constexpr int kClsRow[] = {0};
  std::vector<Tensor<T>> pooled;
  pooled.reserve(examples.size());
  for (const auto& ex : examples) {
    validate_example(ex, model);
    pooled.push_back(gather_rows(encode_sequence(trim_trailing_padding(ex), model),
                                 std::span<const int>(kClsRow)));
  }
  return classification_head(concat_rows(std::span<const Tensor<T>>(pooled)), model);
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("argmax_rows: expected 2-D logits");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  std::vector<int> out(rows);
  const auto d = logits.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const T* row = d.data() + i * cols;
    out[i] = static_cast<int>(std::max_element(row, row + cols) - row);
  }
  return out;
}

Prediction predict(const ClassifierModel& model,
                   std::span<const EncodedExample> examples,
                   std::size_t batch_size) {
  NoGradGuard no_grad;
  Prediction out;
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const auto batch = examples.subspan(start, std::min(batch_size, examples.size() - start));
    const auto logits = forward_classify_batch(batch, model);
    for (int label : argmax_rows(logits)) out.labels.push_back(label);
    const auto probs = softmax(logits, 1);
    const std::size_t classes = probs.dim(1);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto row = probs.data().subspan(i * classes, classes);
      out.probabilities.emplace_back(row.begin(), row.end());
    }
  }
  return out;
}

#define MINIBERT_INSTANTIATE_MODEL(T)                                              \
  template class BasicClassifierModel<T>;                                          \
  template void validate_example(const EncodedExample&, const BasicClassifierModel<T>&); \
  template Tensor<T> embed(const EncodedExample&, const BasicClassifierModel<T>&); \
  template Tensor<T> encoder_layer(const Tensor<T>&, std::span<const int>,         \
                                   const LayerParameters<T>&, std::size_t,         \
                                   AttentionProbe<T>*);                            \
  template Tensor<T> encode_sequence(const EncodedExample&,                        \
                                     const BasicClassifierModel<T>&);              \
  template Tensor<T> classification_head(const Tensor<T>&,                         \
                                         const BasicClassifierModel<T>&);          \
  template Tensor<T> forward_classify(const EncodedExample&,                       \
                                      const BasicClassifierModel<T>&);             \
  template Tensor<T> forward_classify_batch(std::span<const EncodedExample>,       \
                                            const BasicClassifierModel<T>&);       \
  template std::vector<int> argmax_rows(const Tensor<T>&);

MINIBERT_INSTANTIATE_MODEL(float)
MINIBERT_INSTANTIATE_MODEL(double)

template BasicClassifierModel<double> BasicClassifierModel<float>::cast<double>() const;
template BasicClassifierModel<float> BasicClassifierModel<double>::cast<float>() const;

#undef MINIBERT_INSTANTIATE_MODEL

}  // namespace minibert
