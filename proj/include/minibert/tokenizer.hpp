#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace minibert {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kMaskId = 4;
inline constexpr int kNumSpecialTokens = 5;

inline constexpr std::string_view kSpecialTokens[kNumSpecialTokens] = {
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

// Splits text into tokens:
//  - every CJK ideograph is its own token;
//  - maximal runs of other non-whitespace characters form one token,
//    lowercased (ASCII letters only);
//  - Unicode whitespace separates tokens.
// Malformed UTF-8 bytes decode to U+FFFD.
std::vector<std::string> segment_text(std::string_view text);

bool is_cjk_codepoint(char32_t cp);

class Vocabulary {
 public:
  // Specials only.
  Vocabulary();

  // `tokens` must start with the five special tokens in canonical order and
  // contain no duplicates.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return id_to_token_.size(); }
  // kUnkId when absent.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  // UTF-8 text, one token per line, line number (0-based) = id.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const {
    return id_to_token_ == other.id_to_token_;
  }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

// Specials first, then tokens by descending frequency (ties lexicographic),
// dropping tokens seen fewer than `min_frequency` times, truncated so the
// total size is at most `max_size`.
Vocabulary build_vocab(std::span<const std::string> corpus, std::size_t max_size,
                       std::size_t min_frequency);

struct EncodedExample {
  std::vector<int> token_ids;
  std::vector<int> segment_ids;
  std::vector<int> attention_mask;
  int label = 0;

  std::size_t length() const { return token_ids.size(); }
  // Number of non-PAD positions.
  std::size_t real_length() const;

  bool operator==(const EncodedExample&) const = default;
};

// [CLS] tokens... [SEP] [PAD]... with the content truncated to
// max_seq_len - 2 tokens (prefix kept). Throws ConfigError when
// max_seq_len < 3.
EncodedExample encode(std::string_view text, const Vocabulary& vocab,
                      std::size_t max_seq_len, int label);

// Content tokens between [CLS] and [SEP].
std::vector<std::string> decode(const EncodedExample& example,
                                const Vocabulary& vocab);

}  // namespace minibert
