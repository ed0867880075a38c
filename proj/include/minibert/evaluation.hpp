#pragma once

// Classification metrics, training-cost economics, and comparison reports.
//
// Binary convention: class 1 is positive; rows of the confusion matrix are
// the true class, columns the predicted class. A metric whose denominator
// is zero is reported as 0.0 with its *_defined flag cleared.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace minibert {

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);
  // Binary matrix from its four cells.
  static ConfusionMatrix binary(std::size_t tn, std::size_t fp, std::size_t fn, std::size_t tp);

  std::size_t num_classes() const { return num_classes_; }
  std::size_t count(std::size_t actual, std::size_t predicted) const;
  void add(std::size_t actual, std::size_t predicted, std::size_t n = 1);
  std::size_t total() const;
  std::size_t trace() const;

  // Binary accessors; throw UsageError for num_classes != 2.
  std::size_t tn() const;
  std::size_t fp() const;
  std::size_t fn() const;
  std::size_t tp() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t num_classes_;
  std::vector<std::size_t> counts_;  // row-major, rows = actual
};

// counts[a][p] = |{i : actual[i] = a, predicted[i] = p}|. Throws
// ValidationError on length mismatch, empty input, or labels outside
// [0, num_classes).
ConfusionMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> actual,
                                 std::size_t num_classes);

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_defined = true;
  bool recall_defined = true;
  bool f1_defined = true;
  // "binary" for two classes, "macro" (unweighted class mean) otherwise.
  std::string averaging = "binary";
  ConfusionMatrix confusion{2};
};

// Throws ValidationError for an empty matrix.
MetricsReport metrics(const ConfusionMatrix& cm);

struct TimingRecord {
  std::string model_name;
  double training_minutes = 0.0;
  double accuracy = 0.0;
  double accuracy_per_minute = 0.0;
  // Sum of member times when ensemble members ran concurrently.
  std::optional<double> sequential_minutes;
};

// accuracy / minutes; throws ValidationError for minutes <= 0.
double accuracy_per_minute(double accuracy, double minutes);

TimingRecord make_timing_record(std::string model_name, double training_seconds,
                                double accuracy);

// 100 * (time_a - time_b) / time_b; throws ValidationError for time_b <= 0.
double relative_overhead(double time_a, double time_b);

// 100 * (value - baseline) / baseline; throws ValidationError when the
// baseline is zero.
double percent_gap(double value, double baseline);

// Half-up rounding to `decimals` places.
double round_half_up(double value, int decimals);

inline constexpr std::array<const char*, 4> kMetricNames = {"accuracy", "precision", "recall",
                                                            "f1"};

struct RunResult {
  std::string name;
  MetricsReport metrics;
  std::optional<TimingRecord> timing;
};

struct PairwiseGap {
  std::string run;
  std::string baseline;
  std::array<double, 4> gaps_percent{};  // in kMetricNames order
  std::string largest_metric;            // by absolute gap
  double largest_gap_percent = 0.0;
};

struct ComparisonReport {
  std::vector<RunResult> runs;
  std::vector<PairwiseGap> gaps;  // every ordered pair of distinct runs
};

ComparisonReport compare_report(std::vector<RunResult> runs);

// Deterministic part (metrics, confusion matrices, gaps).
nlohmann::json metrics_section_json(const ComparisonReport& report);
// Wall-clock part.
nlohmann::json timing_section_json(const ComparisonReport& report);
// {"metrics": ..., "timing": ...}
nlohmann::json report_json(const ComparisonReport& report);

// Markdown tables: evaluation indices per run, confusion matrices, pairwise
// gaps, and training time with accuracy per minute.
std::string metrics_markdown(const ComparisonReport& report);
std::string timing_markdown(const ComparisonReport& report);
std::string report_markdown(const ComparisonReport& report);

// Fixed-point formatting with `decimals` places after half-up rounding.
std::string format_fixed(double value, int decimals);

}  // namespace minibert
