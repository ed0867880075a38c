#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "minibert/errors.hpp"
#include "minibert/tokenizer.hpp"

using namespace minibert;
namespace fs = std::filesystem;

namespace {

using Strings = std::vector<std::string>;

std::string join(const Strings& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

// Random mixture of ASCII, whitespace, CJK, other multi-byte characters and
// stray bytes.
std::string random_text(std::mt19937_64& rng) {
  static const std::vector<std::string> pieces = {
      "a", "B", "z", "Q", "7", "!", ",", " ", "  ", "\t", "\n", "中", "国", "好", "é",
      "Ω", "\xE3\x80\x80" /* ideographic space */, "\xC2\xA0" /* nbsp */, "\xFF", "\xE4\xB8",
      "ß", "😀", "-", "'"};
  std::uniform_int_distribution<std::size_t> len(0, 30);
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
  std::string out;
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) out += pieces[pick(rng)];
  return out;
}

}  // namespace

TEST_CASE("segment_text") {
  CHECK(segment_text("I love 中国") == Strings{"i", "love", "中", "国"});
  CHECK(segment_text("").empty());
  CHECK(segment_text("   \t\n").empty());
  CHECK(segment_text("abc中def") == Strings{"abc", "中", "def"});
  CHECK(segment_text("Hello,World!") == Strings{"hello,world!"});
  CHECK(segment_text("a\xE3\x80\x80" "b") == Strings{"a", "b"});
  CHECK(segment_text("\xFF") == Strings{"\xEF\xBF\xBD"});
}

TEST_CASE("segment_text is idempotent after rejoining") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 500; ++i) {
    const auto text = random_text(rng);
    const auto tokens = segment_text(text);
    CHECK(segment_text(join(tokens)) == tokens);
    for (const auto& t : tokens) CHECK_FALSE(t.empty());
  }
}

TEST_CASE("build_vocab") {
  SUBCASE("frequency order") {
    const Strings corpus = {"a b", "a"};
    const auto vocab = build_vocab(corpus, 100, 1);
    REQUIRE(vocab.size() == 7);
    CHECK(vocab.token(5) == "a");
    CHECK(vocab.token(6) == "b");
  }
  SUBCASE("capacity drops words") {
    const Strings corpus = {"x"};
    const auto vocab = build_vocab(corpus, 5, 1);
    CHECK(vocab.size() == 5);
    CHECK_FALSE(vocab.contains("x"));
  }
  SUBCASE("specials occupy ids 0-4 in order") {
    const Strings corpus = {"hello"};
    const auto vocab = build_vocab(corpus, 10, 1);
    for (int i = 0; i < kNumSpecialTokens; ++i) CHECK(vocab.token(i) == kSpecialTokens[i]);
  }
  SUBCASE("ties are lexicographic") {
    const Strings corpus = {"c b a", "b c a"};
    const auto vocab = build_vocab(corpus, 100, 1);
    CHECK(Strings(vocab.tokens().begin() + 5, vocab.tokens().end()) == Strings{"a", "b", "c"});
  }
  SUBCASE("min frequency") {
    const Strings corpus = {"a a b"};
    const auto vocab = build_vocab(corpus, 100, 2);
    CHECK(vocab.contains("a"));
    CHECK_FALSE(vocab.contains("b"));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(build_vocab(Strings{}, 100, 1), ValidationError);
    CHECK_THROWS_AS(build_vocab(Strings{"a"}, 4, 1), ConfigError);
  }
}

TEST_CASE("build_vocab agrees with an independent frequency count") {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> word(0, 59);
  std::uniform_int_distribution<int> len(1, 12);
  Strings corpus;
  for (int d = 0; d < 100; ++d) {
    std::string doc;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) doc += "w" + std::to_string(word(rng) * word(rng) % 60) + " ";
    corpus.push_back(doc);
  }
  const std::size_t max_size = 30, min_frequency = 2;
  const auto vocab = build_vocab(corpus, max_size, min_frequency);

  std::map<std::string, std::size_t> counts;
  for (const auto& doc : corpus) {
    std::size_t start = 0;
    while (start < doc.size()) {
      const auto end = doc.find(' ', start);
      const auto token = doc.substr(start, end - start);
      if (!token.empty()) ++counts[token];
      start = end == std::string::npos ? doc.size() : end + 1;
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Strings expected(kSpecialTokens, kSpecialTokens + kNumSpecialTokens);
  for (const auto& [token, n] : ranked) {
    if (n >= min_frequency && expected.size() < max_size) expected.push_back(token);
  }
  CHECK(vocab.tokens() == expected);
  CHECK(build_vocab(corpus, max_size, min_frequency) == vocab);
}

TEST_CASE("vocabulary lookup and persistence") {
  const auto vocab = build_vocab(Strings{"alpha beta 中"}, 100, 1);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    CHECK(vocab.id(vocab.token(static_cast<int>(i))) == static_cast<int>(i));
  }
  CHECK(vocab.id("missing") == kUnkId);
  CHECK_THROWS(vocab.token(static_cast<int>(vocab.size())));

  const auto path = fs::temp_directory_path() / "minibert_vocab_test.txt";
  vocab.save(path);
  CHECK(Vocabulary::load(path) == vocab);
  fs::remove(path);

  CHECK_THROWS(Vocabulary::from_tokens({"[PAD]", "[UNK]", "[CLS]", "[SEP]"}));
  CHECK_THROWS(Vocabulary::from_tokens({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "a", "a"}));
}

TEST_CASE("encode") {
  const auto vocab = build_vocab(Strings{"a b c d e f g h i j"}, 100, 1);
  SUBCASE("short text is padded") {
    const auto e = encode("a", vocab, 4, 1);
    CHECK(e.token_ids == std::vector<int>{kClsId, vocab.id("a"), kSepId, kPadId});
    CHECK(e.attention_mask == std::vector<int>{1, 1, 1, 0});
    CHECK(e.segment_ids == std::vector<int>{0, 0, 0, 0});
    CHECK(e.label == 1);
    CHECK(e.real_length() == 3);
  }
  SUBCASE("long text keeps the first max_seq_len - 2 tokens") {
    std::string text;
    for (int i = 0; i < 100; ++i) text += "abcdefghij"[i % 10] + std::string(" ");
    const auto e = encode(text, vocab, 8, 0);
    CHECK(e.length() == 8);
    CHECK(e.token_ids.back() == kSepId);
    CHECK(decode(e, vocab) == Strings{"a", "b", "c", "d", "e", "f"});
  }
  SUBCASE("unknown words map to UNK") {
    const auto e = encode("a zebra b", vocab, 8, 0);
    CHECK(e.token_ids[2] == kUnkId);
  }
  CHECK_THROWS_AS(encode("a", vocab, 2, 0), ConfigError);
}

TEST_CASE("encoded examples satisfy their invariants for arbitrary text") {
  std::mt19937_64 rng(29);
  Strings corpus;
  for (int i = 0; i < 50; ++i) corpus.push_back(random_text(rng));
  corpus.push_back("seed");
  const auto vocab = build_vocab(corpus, 40, 1);
  for (int i = 0; i < 500; ++i) {
    const auto text = random_text(rng);
    const std::size_t max_len = 3 + static_cast<std::size_t>(i % 12);
    const auto e = encode(text, vocab, max_len, 0);
    REQUIRE(e.length() == max_len);
    CHECK(e.segment_ids == std::vector<int>(max_len, 0));
    CHECK(e.token_ids[0] == kClsId);
    CHECK(std::count(e.token_ids.begin(), e.token_ids.end(), kSepId) == 1);
    const auto sep = static_cast<std::size_t>(
        std::find(e.token_ids.begin(), e.token_ids.end(), kSepId) - e.token_ids.begin());
    for (std::size_t p = 0; p < max_len; ++p) {
      CHECK(e.token_ids[p] < static_cast<int>(vocab.size()));
      CHECK(e.attention_mask[p] == (e.token_ids[p] != kPadId ? 1 : 0));
      if (p > sep) CHECK(e.token_ids[p] == kPadId);
      if (p < sep) CHECK(e.token_ids[p] != kPadId);
    }

    // decode(encode(t)) reproduces the segmented tokens up to truncation and UNK.
    const auto tokens = segment_text(text);
    const auto decoded = decode(e, vocab);
    REQUIRE(decoded.size() == std::min(tokens.size(), max_len - 2));
    for (std::size_t k = 0; k < decoded.size(); ++k) {
      CHECK(decoded[k] == (vocab.contains(tokens[k]) ? tokens[k] : std::string(kSpecialTokens[kUnkId])));
    }
  }
}
