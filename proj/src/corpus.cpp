#include "minibert/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "minibert/errors.hpp"

namespace minibert {

namespace {

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  });
}

struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t row = 0;
};

// RFC 4180 reader. Accepts LF or CRLF line endings and a trailing newline.
std::vector<CsvRecord> parse_csv(const std::string& content) {
  std::vector<CsvRecord> records;
  CsvRecord current;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t row = 1;
  current.row = row;
  std::size_t quote_row = 0;

  const auto end_field = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  const auto end_record = [&] {
    end_field();
    records.push_back(std::move(current));
    current = CsvRecord{};
    current.row = ++row;
  };

  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
      quote_row = current.row;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n' || (c == '\r' && i + 1 < content.size() && content[i + 1] == '\n')) {
      if (c == '\r') ++i;
      end_record();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) {
    throw CorpusError(CorpusErrorKind::kUnterminatedQuote, quote_row,
                      "unterminated quoted field starting in row " + std::to_string(quote_row));
  }
  if (field_started || !current.fields.empty()) end_record();
  return records;
}

std::string quote(const std::string& text) {
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::string to_string(CorpusErrorKind kind) {
  switch (kind) {
    case CorpusErrorKind::kMissingFile: return "missing_file";
    case CorpusErrorKind::kBadHeader: return "bad_header";
    case CorpusErrorKind::kWrongColumnCount: return "wrong_column_count";
    case CorpusErrorKind::kBadLabel: return "bad_label";
    case CorpusErrorKind::kEmptyText: return "empty_text";
    case CorpusErrorKind::kUnterminatedQuote: return "unterminated_quote";
    case CorpusErrorKind::kEmptyData: return "empty_data";
    case CorpusErrorKind::kMissingClass: return "missing_class";
  }
  return "unknown";
}

CorpusError::CorpusError(CorpusErrorKind kind, std::size_t row, const std::string& message)
    : std::runtime_error(message), kind_(kind), row_(row) {}

void LabeledCorpus::validate() const {
  if (records.empty()) throw ValidationError("corpus has no records");
  std::vector<bool> seen(num_classes, false);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int label = records[i].label;
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
      throw ValidationError("record " + std::to_string(i) + " has label " + std::to_string(label) +
                            " outside [0, " + std::to_string(num_classes) + ")");
    }
    if (is_blank(records[i].text)) {
      throw ValidationError("record " + std::to_string(i) + " has blank text");
    }
    seen[static_cast<std::size_t>(label)] = true;
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (!seen[c]) throw ValidationError("class " + std::to_string(c) + " never occurs");
  }
}

std::vector<std::string> LabeledCorpus::texts() const {
  std::vector<std::string> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.text);
  return out;
}

std::vector<int> LabeledCorpus::labels() const {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

LabeledCorpus load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError(CorpusErrorKind::kMissingFile, 0, "cannot open corpus " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  std::string content = buffer.str();
  if (content.rfind("\xEF\xBB\xBF", 0) == 0) content.erase(0, 3);  // UTF-8 BOM

  const auto records = parse_csv(content);
  if (records.empty() || records[0].fields != std::vector<std::string>{"text", "label"}) {
    throw CorpusError(CorpusErrorKind::kBadHeader, 1,
                      path.string() + ": row 1 must be the header 'text,label'");
  }
  LabeledCorpus corpus;
  corpus.provenance = path.string();
  int max_label = -1;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != 2) {
      throw CorpusError(CorpusErrorKind::kWrongColumnCount, rec.row,
                        path.string() + ": row " + std::to_string(rec.row) + " has " +
                            std::to_string(rec.fields.size()) + " columns, expected 2");
    }
    const std::string& label_text = rec.fields[1];
    int label = -1;
    const auto [ptr, ec] = std::from_chars(label_text.data(), label_text.data() + label_text.size(), label);
    if (ec != std::errc{} || ptr != label_text.data() + label_text.size() || label < 0) {
      throw CorpusError(CorpusErrorKind::kBadLabel, rec.row,
                        path.string() + ": row " + std::to_string(rec.row) + " label '" +
                            label_text + "' is not a nonnegative integer");
    }
    if (is_blank(rec.fields[0])) {
      throw CorpusError(CorpusErrorKind::kEmptyText, rec.row,
                        path.string() + ": row " + std::to_string(rec.row) + " has empty text");
    }
    corpus.records.push_back({rec.fields[0], label});
    max_label = std::max(max_label, label);
  }
  if (corpus.records.empty()) {
    throw CorpusError(CorpusErrorKind::kEmptyData, 0, path.string() + ": no data rows");
  }
  corpus.num_classes = static_cast<std::size_t>(max_label) + 1;
  std::vector<bool> seen(corpus.num_classes, false);
  for (const auto& r : corpus.records) seen[static_cast<std::size_t>(r.label)] = true;
  for (std::size_t c = 0; c < corpus.num_classes; ++c) {
    if (!seen[c]) {
      throw CorpusError(CorpusErrorKind::kMissingClass, 0,
                        path.string() + ": class " + std::to_string(c) + " never occurs");
    }
  }
  return corpus;
}

void save_csv(const std::filesystem::path& path, const LabeledCorpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write corpus " + path.string());
  out << "text,label\n";
  for (const auto& r : corpus.records) out << quote(r.text) << ',' << r.label << '\n';
  if (!out) throw std::runtime_error("failed writing corpus " + path.string());
}

// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (num_examples < 1) throw ConfigError("synthetic: num_examples must be >= 1");
  if (class_token_pools.size() < 2) throw ConfigError("synthetic: need at least 2 class pools");
  if (num_examples < class_token_pools.size()) {
    throw ConfigError("synthetic: fewer examples than classes");
  }
  if (min_tokens < 1 || max_tokens < min_tokens) {
    throw ConfigError("synthetic: need 1 <= min_tokens <= max_tokens");
  }
  if (!(noise_rate >= 0.0 && noise_rate < 1.0)) {
    throw ConfigError("synthetic: noise_rate must lie in [0, 1)");
  }
  if (noise_rate > 0.0 && shared_pool.empty()) {
    throw ConfigError("synthetic: noise_rate > 0 needs a shared pool");
  }
  std::set<std::string> seen;
  const auto check_pool = [&](const std::vector<std::string>& pool, const std::string& what) {
    if (pool.empty()) throw ConfigError("synthetic: " + what + " is empty");
    for (const auto& token : pool) {
      if (token.empty() || token.find_first_of(" \t\r\n") != std::string::npos) {
        throw ConfigError("synthetic: token '" + token + "' in " + what +
                          " must be a single non-empty word");
      }
      if (!seen.insert(token).second) {
        throw ConfigError("synthetic: token '" + token + "' appears in more than one pool");
      }
    }
  };
  for (std::size_t c = 0; c < class_token_pools.size(); ++c) {
    check_pool(class_token_pools[c], "class pool " + std::to_string(c));
  }
  if (!shared_pool.empty()) check_pool(shared_pool, "shared pool");
}

SyntheticSpec make_synthetic_spec(std::size_t num_examples, std::size_t num_classes,
                                  std::size_t pool_size, std::size_t shared_pool_size,
                                  double noise_rate, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_examples = num_examples;
  spec.noise_rate = noise_rate;
  spec.seed = seed;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<std::string> pool;
    for (std::size_t i = 0; i < pool_size; ++i)
      pool.push_back("c" + std::to_string(c) + "w" + std::to_string(i));
    spec.class_token_pools.push_back(std::move(pool));
  }
  for (std::size_t i = 0; i < shared_pool_size; ++i) spec.shared_pool.push_back("sw" + std::to_string(i));
  return spec;
}

LabeledCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 engine(spec.seed);
  const std::size_t classes = spec.class_token_pools.size();
  std::vector<int> labels(spec.num_examples);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % classes);
  std::shuffle(labels.begin(), labels.end(), engine);

  std::uniform_int_distribution<std::size_t> length(spec.min_tokens, spec.max_tokens);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  LabeledCorpus corpus;
  corpus.num_classes = classes;
  std::ostringstream provenance;
  provenance << "synthetic(num_examples=" << spec.num_examples << ", classes=" << classes
             << ", noise_rate=" << spec.noise_rate << ", seed=" << spec.seed << ")";
  corpus.provenance = provenance.str();
  for (int label : labels) {
    const auto& pool = spec.class_token_pools[static_cast<std::size_t>(label)];
    const std::size_t n = length(engine);
    std::string text;
    for (std::size_t t = 0; t < n; ++t) {
      const bool noise = unit(engine) < spec.noise_rate;
      const auto& source = noise ? spec.shared_pool : pool;
      std::uniform_int_distribution<std::size_t> pick(0, source.size() - 1);
      if (t) text.push_back(' ');
      text += source[pick(engine)];
    }
    corpus.records.push_back({std::move(text), label});
  }
  return corpus;
}

}  // namespace minibert
