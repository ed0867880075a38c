#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "doctest.h"
#include "minibert/corpus.hpp"
#include "minibert/errors.hpp"

using namespace minibert;
namespace fs = std::filesystem;

namespace {

fs::path write_file(const std::string& name, const std::string& content) {
  const auto path = fs::temp_directory_path() / name;
  std::ofstream(path, std::ios::binary) << content;
  return path;
}

CorpusError load_error(const std::string& content) {
  const auto path = write_file("minibert_corpus_error.csv", content);
  try {
    load_csv(path);
  } catch (const CorpusError& e) {
    fs::remove(path);
    return e;
  }
  fs::remove(path);
  FAIL("expected CorpusError");
  return CorpusError(CorpusErrorKind::kMissingFile, 0, "");
}

std::vector<std::string> words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

}  // namespace

TEST_CASE("load_csv examples") {
  const auto path = write_file("minibert_corpus_ok.csv", "text,label\n\"good day\",1\n\"bad day\",0\n");
  const auto corpus = load_csv(path);
  fs::remove(path);
  REQUIRE(corpus.records.size() == 2);
  CHECK(corpus.records[0] == LabeledRecord{"good day", 1});
  CHECK(corpus.records[1] == LabeledRecord{"bad day", 0});
  CHECK(corpus.num_classes == 2);
  CHECK_NOTHROW(corpus.validate());

  const auto quoted =
      write_file("minibert_corpus_quoted.csv",
                 "\xEF\xBB\xBFtext,label\r\n\"say \"\"hi\"\", then, leave\",0\r\n\"two\nlines\",1\r\nplain,1");
  const auto q = load_csv(quoted);
  fs::remove(quoted);
  REQUIRE(q.records.size() == 3);
  CHECK(q.records[0].text == "say \"hi\", then, leave");
  CHECK(q.records[1].text == "two\nlines");
  CHECK(q.records[2] == LabeledRecord{"plain", 1});
}

TEST_CASE("load_csv errors") {
  SUBCASE("bad label names its row") {
    const auto e = load_error("text,label\n\"ok\",x\n");
    CHECK(e.kind() == CorpusErrorKind::kBadLabel);
    CHECK(e.row() == 2);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
  SUBCASE("row numbers count records, not lines") {
    const auto e = load_error("text,label\n\"a\nb\",0\n\"c\",-1\n");
    CHECK(e.kind() == CorpusErrorKind::kBadLabel);
    CHECK(e.row() == 3);
  }
  SUBCASE("other kinds") {
    CHECK(load_error("words,label\na,0\n").kind() == CorpusErrorKind::kBadHeader);
    CHECK(load_error("").kind() == CorpusErrorKind::kBadHeader);
    CHECK(load_error("text,label\na,0,1\n").kind() == CorpusErrorKind::kWrongColumnCount);
    CHECK(load_error("text,label\n\"  \",0\n").kind() == CorpusErrorKind::kEmptyText);
    CHECK(load_error("text,label\n\"open,0\n").kind() == CorpusErrorKind::kUnterminatedQuote);
    CHECK(load_error("text,label\n").kind() == CorpusErrorKind::kEmptyData);
    CHECK(load_error("text,label\na,0\nb,2\n").kind() == CorpusErrorKind::kMissingClass);
    CHECK(load_error("text,label\na,1.5\n").kind() == CorpusErrorKind::kBadLabel);
  }
  SUBCASE("missing file") {
    try {
      load_csv(fs::temp_directory_path() / "minibert_no_such_corpus.csv");
      FAIL("expected CorpusError");
    } catch (const CorpusError& e) {
      CHECK(e.kind() == CorpusErrorKind::kMissingFile);
    }
  }
}

TEST_CASE("corpus validation") {
  LabeledCorpus c;
  c.num_classes = 2;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.records = {{"a", 0}, {"b", 2}};
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.records = {{"a", 0}, {" ", 1}};
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.records = {{"a", 0}, {"b", 0}};
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.records = {{"a", 0}, {"b", 1}};
  CHECK_NOTHROW(c.validate());
  CHECK(c.texts() == std::vector<std::string>{"a", "b"});
  CHECK(c.labels() == std::vector<int>{0, 1});
}

TEST_CASE("save_csv then load_csv is the identity") {
  std::mt19937_64 rng(12);
  const std::vector<std::string> pieces = {"a", "Z", " ", ",", "\"", "\n", "中", "x y", "\"\"", "é", "7"};
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1), len(1, 15), classes(2, 4);
  const auto path = fs::temp_directory_path() / "minibert_corpus_roundtrip.csv";
  for (int trial = 0; trial < 100; ++trial) {
    LabeledCorpus corpus;
    corpus.num_classes = classes(rng);
    const std::size_t n = corpus.num_classes + len(rng);
    for (std::size_t i = 0; i < n; ++i) {
      std::string text = "w";
      const std::size_t k = len(rng);
      for (std::size_t j = 0; j < k; ++j) text += pieces[pick(rng)];
      corpus.records.push_back({text, static_cast<int>(i % corpus.num_classes)});
    }
    std::shuffle(corpus.records.begin(), corpus.records.end(), rng);
    save_csv(path, corpus);
    const auto loaded = load_csv(path);
    CHECK(loaded.records == corpus.records);
    CHECK(loaded.num_classes == corpus.num_classes);
  }
  fs::remove(path);
}

TEST_CASE("synthetic corpora") {
  const auto spec = make_synthetic_spec(301, 3, 10, 5, 0.2, 44);
  const auto corpus = generate_synthetic(spec);
  CHECK_NOTHROW(corpus.validate());
  CHECK(corpus.records.size() == 301);
  CHECK(corpus.num_classes == 3);
  CHECK(generate_synthetic(spec).records == corpus.records);
  auto other = spec;
  other.seed = 45;
  CHECK(generate_synthetic(other).records != corpus.records);

  std::map<int, std::size_t> per_class;
  for (const auto& r : corpus.records) {
    ++per_class[r.label];
    const auto w = words(r.text);
    CHECK(w.size() >= spec.min_tokens);
    CHECK(w.size() <= spec.max_tokens);
  }
  std::size_t lo = corpus.records.size(), hi = 0;
  for (const auto& [label, n] : per_class) {
    lo = std::min(lo, n);
    hi = std::max(hi, n);
  }
  CHECK(per_class.size() == 3);
  CHECK(hi - lo <= 1);
}

TEST_CASE("noise-free synthetic tokens come only from the class pool") {
  const auto spec = make_synthetic_spec(200, 4, 8, 8, 0.0, 7);
  const auto corpus = generate_synthetic(spec);
  std::vector<std::set<std::string>> pools;
  for (const auto& p : spec.class_token_pools) pools.emplace_back(p.begin(), p.end());
  for (const auto& r : corpus.records)
    for (const auto& w : words(r.text)) CHECK(pools[static_cast<std::size_t>(r.label)].count(w) == 1);

  // A bag-of-words vote over the pools classifies every example.
  std::size_t correct = 0;
  for (const auto& r : corpus.records) {
    std::vector<std::size_t> hits(pools.size(), 0);
    for (const auto& w : words(r.text))
      for (std::size_t c = 0; c < pools.size(); ++c) hits[c] += pools[c].count(w);
    const auto best = std::max_element(hits.begin(), hits.end()) - hits.begin();
    correct += best == r.label;
  }
  CHECK(correct == corpus.records.size());
}

TEST_CASE("synthetic spec validation") {
  auto spec = make_synthetic_spec(10, 2, 3, 3, 0.1, 0);
  CHECK_NOTHROW(spec.validate());
  auto bad = spec;
  bad.class_token_pools[1][0] = bad.class_token_pools[0][0];
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.shared_pool.push_back(spec.class_token_pools[0][1]);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.noise_rate = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.shared_pool.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.min_tokens = 5;
  bad.max_tokens = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.num_examples = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.class_token_pools.resize(1);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(generate_synthetic(bad), ConfigError);
}
