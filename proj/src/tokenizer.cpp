#include "minibert/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "minibert/errors.hpp"

namespace minibert {

namespace {

constexpr char32_t kReplacement = 0xFFFD;

// Decodes one codepoint starting at text[pos] and advances pos. Invalid or
// truncated sequences consume one byte and yield U+FFFD.
char32_t next_codepoint(std::string_view text, std::size_t& pos) {
  const auto byte = [&](std::size_t i) {
    return static_cast<unsigned char>(text[i]);
  };
  const unsigned char lead = byte(pos);
  if (lead < 0x80) {
    ++pos;
    return lead;
  }
  std::size_t len = 0;
  char32_t cp = 0;
  char32_t min_cp = 0;
  if ((lead & 0xE0) == 0xC0) {
    len = 2, cp = lead & 0x1F, min_cp = 0x80;
  } else if ((lead & 0xF0) == 0xE0) {
    len = 3, cp = lead & 0x0F, min_cp = 0x800;
  } else if ((lead & 0xF8) == 0xF0) {
    len = 4, cp = lead & 0x07, min_cp = 0x10000;
  } else {
    ++pos;
    return kReplacement;
  }
  if (pos + len > text.size()) {
    ++pos;
    return kReplacement;
  }
  for (std::size_t i = 1; i < len; ++i) {
    const unsigned char c = byte(pos + i);
    if ((c & 0xC0) != 0x80) {
      ++pos;
      return kReplacement;
    }
    cp = (cp << 6) | (c & 0x3F);
  }
  if (cp < min_cp || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
    ++pos;
    return kReplacement;
  }
  pos += len;
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Unicode White_Space property.
bool is_whitespace(char32_t cp) {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

char32_t to_lower(char32_t cp) {
  return (cp >= 'A' && cp <= 'Z') ? cp + ('a' - 'A') : cp;
}

}  // namespace

// Same ranges as the reference BERT tokenizer's Chinese-character test.
bool is_cjk_codepoint(char32_t cp) {
  return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
         (cp >= 0x20000 && cp <= 0x2A6DF) || (cp >= 0x2A700 && cp <= 0x2B73F) ||
         (cp >= 0x2B740 && cp <= 0x2B81F) || (cp >= 0x2B820 && cp <= 0x2CEAF) ||
         (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0x2F800 && cp <= 0x2FA1F);
}

std::vector<std::string> segment_text(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  const auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  std::size_t pos = 0;
  while (pos < text.size()) {
    const char32_t cp = next_codepoint(text, pos);
    if (is_whitespace(cp)) {
      flush();
    } else if (is_cjk_codepoint(cp)) {
      flush();
      append_utf8(current, cp);
      flush();
    } else {
      append_utf8(current, to_lower(cp));
    }
  }
  flush();
  return tokens;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
  for (auto special : kSpecialTokens) {
    token_to_id_.emplace(std::string(special), static_cast<int>(id_to_token_.size()));
    id_to_token_.emplace_back(special);
  }
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kNumSpecialTokens) {
    throw ValidationError("vocabulary needs at least the " +
                          std::to_string(kNumSpecialTokens) + " special tokens");
  }
  for (int i = 0; i < kNumSpecialTokens; ++i) {
    if (tokens[i] != kSpecialTokens[i]) {
      throw ValidationError("vocabulary id " + std::to_string(i) + " must be " +
                            std::string(kSpecialTokens[i]) + ", found '" +
                            tokens[i] + "'");
    }
  }
  Vocabulary vocab;
  vocab.id_to_token_.clear();
  vocab.token_to_id_.clear();
  for (auto& token : tokens) {
    const int id = static_cast<int>(vocab.id_to_token_.size());
    if (token.empty()) {
      throw ValidationError("vocabulary token " + std::to_string(id) + " is empty");
    }
    if (!vocab.token_to_id_.emplace(token, id).second) {
      throw ValidationError("duplicate vocabulary token '" + token + "'");
    }
    vocab.id_to_token_.push_back(std::move(token));
  }
  return vocab;
}

int Vocabulary::id(std::string_view token) const {
  const auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return token_to_id_.contains(std::string(token));
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw ValidationError("token id " + std::to_string(id) +
                          " outside vocabulary of size " +
                          std::to_string(id_to_token_.size()));
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary: " + path.string());
  for (const auto& token : id_to_token_) out << token << '\n';
  if (!out) throw std::runtime_error("failed writing vocabulary: " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read vocabulary: " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

Vocabulary build_vocab(std::span<const std::string> corpus, std::size_t max_size,
                       std::size_t min_frequency) {
  if (corpus.empty()) throw ValidationError("build_vocab: empty corpus");
  if (max_size < kNumSpecialTokens) {
    throw ConfigError("build_vocab: max_size " + std::to_string(max_size) +
                      " cannot hold the special tokens");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& text : corpus)
    for (auto& token : segment_text(text)) ++counts[std::move(token)];

  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [token, count] : counts) {
    if (count >= std::max<std::size_t>(min_frequency, 1)) ranked.emplace_back(token, count);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;  // map order already lexicographic
  });

  std::vector<std::string> tokens(std::begin(kSpecialTokens), std::end(kSpecialTokens));
  for (auto& [token, count] : ranked) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(token);
  }
  return Vocabulary::from_tokens(std::move(tokens));
}

// ---------------------------------------------------------------------------

std::size_t EncodedExample::real_length() const {
  return static_cast<std::size_t>(
      std::count(attention_mask.begin(), attention_mask.end(), 1));
}

EncodedExample encode(std::string_view text, const Vocabulary& vocab,
                      std::size_t max_seq_len, int label) {
  if (max_seq_len < 3) {
    throw ConfigError("encode: max_seq_len must be at least 3, got " +
                      std::to_string(max_seq_len));
  }
  const auto tokens = segment_text(text);
  const std::size_t kept = std::min(tokens.size(), max_seq_len - 2);

  EncodedExample ex;
  ex.label = label;
  ex.token_ids.assign(max_seq_len, kPadId);
  ex.segment_ids.assign(max_seq_len, 0);
  ex.attention_mask.assign(max_seq_len, 0);
  ex.token_ids[0] = kClsId;
  for (std::size_t i = 0; i < kept; ++i) ex.token_ids[i + 1] = vocab.id(tokens[i]);
  ex.token_ids[kept + 1] = kSepId;
  std::fill_n(ex.attention_mask.begin(), kept + 2, 1);
  return ex;
}

std::vector<std::string> decode(const EncodedExample& example,
                                const Vocabulary& vocab) {
  std::vector<std::string> tokens;
  for (std::size_t i = 1; i < example.token_ids.size(); ++i) {
    if (example.token_ids[i] == kSepId) break;
    tokens.push_back(vocab.token(example.token_ids[i]));
  }
  return tokens;
}

}  // namespace minibert
