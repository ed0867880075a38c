#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace minibert {

struct LabeledRecord {
  std::string text;
  int label = 0;

  bool operator==(const LabeledRecord&) const = default;
};

struct LabeledCorpus {
  std::vector<LabeledRecord> records;
  std::size_t num_classes = 0;
  std::string provenance;

  // Every label in [0, num_classes), every class present, no blank text.
  // Throws ValidationError.
  void validate() const;
  std::vector<std::string> texts() const;
  std::vector<int> labels() const;
};

enum class CorpusErrorKind {
  kMissingFile,
  kBadHeader,
  kWrongColumnCount,
  kBadLabel,
  kEmptyText,
  kUnterminatedQuote,
  kEmptyData,
  kMissingClass,
};

std::string to_string(CorpusErrorKind kind);

class CorpusError : public std::runtime_error {
 public:
  // row is the 1-based CSV record number (header = 1); 0 when not tied to a row.
  CorpusError(CorpusErrorKind kind, std::size_t row, const std::string& message);
  CorpusErrorKind kind() const { return kind_; }
  std::size_t row() const { return row_; }

 private:
  CorpusErrorKind kind_;
  std::size_t row_;
};

// UTF-8 CSV with header `text,label` and RFC 4180 quoting (quoted fields may
// contain commas, doubled quotes and newlines). num_classes = max label + 1.
LabeledCorpus load_csv(const std::filesystem::path& path);

// Writes the header and one row per record; text is always quoted.
void save_csv(const std::filesystem::path& path, const LabeledCorpus& corpus);

struct SyntheticSpec {
  std::size_t num_examples = 2000;
  std::vector<std::vector<std::string>> class_token_pools;  // pairwise disjoint
  std::vector<std::string> shared_pool;  // disjoint from every class pool
  std::size_t min_tokens = 6;
  std::size_t max_tokens = 16;
  double noise_rate = 0.1;  // per-token probability of drawing from shared_pool
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

// Pools of generated words: class c gets `pool_size` tokens "c<c>w<i>", the
// shared pool gets "sw<i>".
SyntheticSpec make_synthetic_spec(std::size_t num_examples, std::size_t num_classes,
                                  std::size_t pool_size, std::size_t shared_pool_size,
                                  double noise_rate, std::uint64_t seed);

// Balanced classes (counts differ by at most one), deterministic per seed.
LabeledCorpus generate_synthetic(const SyntheticSpec& spec);

}  // namespace minibert
