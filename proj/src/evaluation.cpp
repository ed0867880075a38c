#include "minibert/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "minibert/errors.hpp"

namespace minibert {

using nlohmann::json;

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : num_classes_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes < 2) throw ValidationError("confusion matrix needs at least 2 classes");
}

ConfusionMatrix ConfusionMatrix::binary(std::size_t tn, std::size_t fp, std::size_t fn,
                                        std::size_t tp) {
  ConfusionMatrix cm(2);
  cm.add(0, 0, tn);
  cm.add(0, 1, fp);
  cm.add(1, 0, fn);
  cm.add(1, 1, tp);
  return cm;
}

std::size_t ConfusionMatrix::count(std::size_t actual, std::size_t predicted) const {
  if (actual >= num_classes_ || predicted >= num_classes_) {
    throw ValidationError("confusion matrix cell (" + std::to_string(actual) + ", " +
                          std::to_string(predicted) + ") out of range");
  }
  return counts_[actual * num_classes_ + predicted];
}

void ConfusionMatrix::add(std::size_t actual, std::size_t predicted, std::size_t n) {
  if (actual >= num_classes_ || predicted >= num_classes_) {
    throw ValidationError("confusion matrix cell (" + std::to_string(actual) + ", " +
                          std::to_string(predicted) + ") out of range");
  }
  counts_[actual * num_classes_ + predicted] += n;
}

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (auto c : counts_) n += c;
  return n;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < num_classes_; ++i) n += counts_[i * num_classes_ + i];
  return n;
}

namespace {
void require_binary(const ConfusionMatrix& cm) {
  if (cm.num_classes() != 2) {
    throw UsageError("tn/fp/fn/tp are defined for binary matrices only");
  }
}
}  // namespace

std::size_t ConfusionMatrix::tn() const { require_binary(*this); return counts_[0]; }
std::size_t ConfusionMatrix::fp() const { require_binary(*this); return counts_[1]; }
std::size_t ConfusionMatrix::fn() const { require_binary(*this); return counts_[2]; }
std::size_t ConfusionMatrix::tp() const { require_binary(*this); return counts_[3]; }

ConfusionMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> actual,
                                 std::size_t num_classes) {
  if (predicted.size() != actual.size()) {
    throw ValidationError("confusion_matrix: " + std::to_string(predicted.size()) +
                          " predictions for " + std::to_string(actual.size()) + " labels");
  }
  if (predicted.empty()) throw ValidationError("confusion_matrix: no labels");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto in_range = [&](int v) {
      return v >= 0 && static_cast<std::size_t>(v) < num_classes;
    };
    if (!in_range(predicted[i]) || !in_range(actual[i])) {
      throw ValidationError("confusion_matrix: label out of range at index " + std::to_string(i));
    }
    cm.add(static_cast<std::size_t>(actual[i]), static_cast<std::size_t>(predicted[i]));
  }
  return cm;
}

namespace {

struct Ratio {
  double value = 0.0;
  bool defined = false;
};

Ratio ratio(double num, double den) {
  if (den == 0.0) return {};
  return {num / den, true};
}

Ratio harmonic(const Ratio& p, const Ratio& r) {
  if (!p.defined || !r.defined) return {};
  return ratio(2.0 * p.value * r.value, p.value + r.value);
}

}  // namespace

MetricsReport metrics(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  if (total == 0) throw ValidationError("metrics: empty confusion matrix");
  MetricsReport report;
  report.confusion = cm;
  report.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);

  const std::size_t k = cm.num_classes();
  // Per-class one-vs-rest precision/recall/f1.
  const auto class_scores = [&](std::size_t c) {
    double tp = static_cast<double>(cm.count(c, c));
    double predicted = 0, actual = 0;
    for (std::size_t i = 0; i < k; ++i) {
      predicted += static_cast<double>(cm.count(i, c));
      actual += static_cast<double>(cm.count(c, i));
    }
    const Ratio p = ratio(tp, predicted);
    const Ratio r = ratio(tp, actual);
    return std::array<Ratio, 3>{p, r, harmonic(p, r)};
  };

  if (k == 2) {
    const auto s = class_scores(1);
    report.averaging = "binary";
    report.precision = s[0].value;
    report.precision_defined = s[0].defined;
    report.recall = s[1].value;
    report.recall_defined = s[1].defined;
    report.f1 = s[2].value;
    report.f1_defined = s[2].defined;
    return report;
  }

  report.averaging = "macro";
  std::array<double, 3> sums{};
  std::array<bool, 3> defined{true, true, true};
  for (std::size_t c = 0; c < k; ++c) {
    const auto s = class_scores(c);
    for (std::size_t m = 0; m < 3; ++m) {
      sums[m] += s[m].value;
      defined[m] = defined[m] && s[m].defined;
    }
  }
  report.precision = sums[0] / static_cast<double>(k);
  report.recall = sums[1] / static_cast<double>(k);
  report.f1 = sums[2] / static_cast<double>(k);
  report.precision_defined = defined[0];
  report.recall_defined = defined[1];
  report.f1_defined = defined[2];
  return report;
}

double accuracy_per_minute(double accuracy, double minutes) {
  if (!(minutes > 0.0)) {
    throw ValidationError("accuracy_per_minute: minutes must be > 0, got " + std::to_string(minutes));
  }
  return accuracy / minutes;
}

TimingRecord make_timing_record(std::string model_name, double training_seconds,
                                double accuracy) {
  TimingRecord record;
  record.model_name = std::move(model_name);
  record.training_minutes = training_seconds / 60.0;
  record.accuracy = accuracy;
  record.accuracy_per_minute = accuracy_per_minute(accuracy, record.training_minutes);
  return record;
}

double relative_overhead(double time_a, double time_b) {
  if (!(time_b > 0.0)) {
    throw ValidationError("relative_overhead: baseline time must be > 0, got " + std::to_string(time_b));
  }
  return 100.0 * (time_a - time_b) / time_b;
}

double percent_gap(double value, double baseline) {
  if (baseline == 0.0) throw ValidationError("percent_gap: zero baseline");
  return 100.0 * (value - baseline) / baseline;
}

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  // The nudge absorbs representation error for values that are exact halves
  // in decimal (0.00455 is stored slightly below the half).
  const double scaled = std::floor(std::abs(value) * scale + 0.5 + 1e-9) / scale;
  return std::copysign(scaled, value);
}

std::string format_fixed(double value, int decimals) {
  double rounded = round_half_up(value, decimals);
  if (rounded == 0.0) rounded = 0.0;  // drop negative zero
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.*f", decimals, rounded);
  return buffer;
}

ComparisonReport compare_report(std::vector<RunResult> runs) {
  if (runs.empty()) throw ValidationError("compare_report: no runs");
  ComparisonReport report;
  report.runs = std::move(runs);
  const auto values = [](const MetricsReport& m) {
    return std::array<double, 4>{m.accuracy, m.precision, m.recall, m.f1};
  };
  for (const auto& a : report.runs) {
    for (const auto& b : report.runs) {
      if (&a == &b) continue;
      PairwiseGap gap;
      gap.run = a.name;
      gap.baseline = b.name;
      const auto va = values(a.metrics);
      const auto vb = values(b.metrics);
      for (std::size_t m = 0; m < 4; ++m) {
        // A zero baseline metric has no relative gap; report 0.
        gap.gaps_percent[m] = vb[m] == 0.0 ? 0.0 : percent_gap(va[m], vb[m]);
        if (m == 0 || std::abs(gap.gaps_percent[m]) > std::abs(gap.largest_gap_percent)) {
          gap.largest_gap_percent = gap.gaps_percent[m];
          gap.largest_metric = kMetricNames[m];
        }
      }
      report.gaps.push_back(std::move(gap));
    }
  }
  return report;
}

namespace {

json confusion_json(const ConfusionMatrix& cm) {
  json rows = json::array();
  for (std::size_t a = 0; a < cm.num_classes(); ++a) {
    json row = json::array();
    for (std::size_t p = 0; p < cm.num_classes(); ++p) row.push_back(cm.count(a, p));
    rows.push_back(std::move(row));
  }
  json out{{"counts", rows}};
  if (cm.num_classes() == 2) {
    out["tn"] = cm.tn();
    out["fp"] = cm.fp();
    out["fn"] = cm.fn();
    out["tp"] = cm.tp();
  }
  return out;
}

}  // namespace

json metrics_section_json(const ComparisonReport& report) {
  json runs = json::array();
  for (const auto& run : report.runs) {
    const auto& m = run.metrics;
    runs.push_back({{"name", run.name},
                    {"averaging", m.averaging},
                    {"accuracy", m.accuracy},
                    {"precision", m.precision},
                    {"recall", m.recall},
                    {"f1", m.f1},
                    {"precision_defined", m.precision_defined},
                    {"recall_defined", m.recall_defined},
                    {"f1_defined", m.f1_defined},
                    {"confusion", confusion_json(m.confusion)}});
  }
  json gaps = json::array();
  for (const auto& g : report.gaps) {
    json per_metric;
    for (std::size_t m = 0; m < 4; ++m) per_metric[kMetricNames[m]] = g.gaps_percent[m];
    gaps.push_back({{"run", g.run},
                    {"baseline", g.baseline},
                    {"gap_percent", per_metric},
                    {"largest_metric", g.largest_metric},
                    {"largest_gap_percent", g.largest_gap_percent}});
  }
  return {{"runs", runs}, {"gaps", gaps}};
}

json timing_section_json(const ComparisonReport& report) {
  json rows = json::array();
  for (const auto& run : report.runs) {
    if (!run.timing) continue;
    const auto& t = *run.timing;
    json row{{"name", t.model_name},
             {"training_minutes", t.training_minutes},
             {"accuracy", t.accuracy},
             {"accuracy_per_minute", t.accuracy_per_minute}};
    if (t.sequential_minutes) row["sequential_minutes"] = *t.sequential_minutes;
    rows.push_back(std::move(row));
  }
  json overheads = json::array();
  for (const auto& a : report.runs) {
    for (const auto& b : report.runs) {
      if (&a == &b || !a.timing || !b.timing || !(b.timing->training_minutes > 0.0)) continue;
      overheads.push_back({{"run", a.name},
                           {"baseline", b.name},
                           {"overhead_percent", relative_overhead(a.timing->training_minutes,
                                                                  b.timing->training_minutes)}});
    }
  }
  return {{"runs", rows}, {"overheads", overheads}};
}

json report_json(const ComparisonReport& report) {
  return {{"metrics", metrics_section_json(report)}, {"timing", timing_section_json(report)}};
}

std::string metrics_markdown(const ComparisonReport& report) {
  std::ostringstream out;
  out << "## Evaluation\n\n| Evaluation index |";
  for (const auto& run : report.runs) out << ' ' << run.name << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < report.runs.size(); ++i) out << "---|";
  out << '\n';
  const auto row = [&](const char* label, auto getter, auto defined) {
    out << "| " << label << " |";
    for (const auto& run : report.runs) {
      out << ' ' << format_fixed(getter(run.metrics), 4) << (defined(run.metrics) ? "" : "*")
          << " |";
    }
    out << '\n';
  };
  row("Accuracy", [](const MetricsReport& m) { return m.accuracy; },
      [](const MetricsReport&) { return true; });
  row("Precision", [](const MetricsReport& m) { return m.precision; },
      [](const MetricsReport& m) { return m.precision_defined; });
  row("Recall", [](const MetricsReport& m) { return m.recall; },
      [](const MetricsReport& m) { return m.recall_defined; });
  row("F1-score", [](const MetricsReport& m) { return m.f1; },
      [](const MetricsReport& m) { return m.f1_defined; });
  const bool any_undefined = std::any_of(report.runs.begin(), report.runs.end(), [](const RunResult& r) {
    return !r.metrics.precision_defined || !r.metrics.recall_defined || !r.metrics.f1_defined;
  });
  if (any_undefined) out << "\n(* zero denominator, reported as 0)\n";

  out << "\n## Confusion matrices\n";
  for (const auto& run : report.runs) {
    const auto& cm = run.metrics.confusion;
    out << "\n" << run.name << " (rows = true class, columns = predicted)\n\n| |";
    for (std::size_t p = 0; p < cm.num_classes(); ++p) out << " pred " << p << " |";
    out << "\n|---|";
    for (std::size_t p = 0; p < cm.num_classes(); ++p) out << "---|";
    out << '\n';
    for (std::size_t a = 0; a < cm.num_classes(); ++a) {
      out << "| true " << a << " |";
      for (std::size_t p = 0; p < cm.num_classes(); ++p) out << ' ' << cm.count(a, p) << " |";
      out << '\n';
    }
  }

  if (!report.gaps.empty()) {
    out << "\n## Relative gaps (%)\n\n| Run | Baseline | Accuracy | Precision | Recall | F1 | "
           "Largest |\n|---|---|---|---|---|---|---|\n";
    for (const auto& g : report.gaps) {
      out << "| " << g.run << " | " << g.baseline << " |";
      for (double v : g.gaps_percent) out << ' ' << format_fixed(v, 2) << " |";
      out << ' ' << g.largest_metric << " (" << format_fixed(g.largest_gap_percent, 2) << ") |\n";
    }
  }
  return out.str();
}

std::string timing_markdown(const ComparisonReport& report) {
  std::ostringstream out;
  out << "## Training time\n\n| Model | Training Time (min) | Accuracy | Accuracy per min |\n"
         "|---|---|---|---|\n";
  for (const auto& run : report.runs) {
    if (!run.timing) continue;
    const auto& t = *run.timing;
    out << "| " << t.model_name << " | " << format_fixed(t.training_minutes, 4);
    if (t.sequential_minutes) out << " (members summed: " << format_fixed(*t.sequential_minutes, 4) << ")";
    out << " | " << format_fixed(t.accuracy, 4) << " | " << format_fixed(t.accuracy_per_minute, 4)
        << " |\n";
  }
  return out.str();
}

std::string report_markdown(const ComparisonReport& report) {
  return "# Comparison report\n\n" + metrics_markdown(report) + "\n" + timing_markdown(report);
}

}  // namespace minibert
