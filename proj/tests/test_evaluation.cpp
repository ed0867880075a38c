#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "minibert/errors.hpp"
#include "minibert/evaluation.hpp"

using namespace minibert;

namespace {

MetricsReport reported(double a, double p, double r, double f) {
  MetricsReport m;
  m.accuracy = a;
  m.precision = p;
  m.recall = r;
  m.f1 = f;
  return m;
}

}  // namespace

TEST_CASE("confusion_matrix examples") {
  const std::vector<int> predicted{1, 0, 1, 1}, actual{1, 0, 0, 1};
  const auto cm = confusion_matrix(predicted, actual, 2);
  CHECK(cm.tn() == 1);
  CHECK(cm.fp() == 1);
  CHECK(cm.fn() == 0);
  CHECK(cm.tp() == 2);
  CHECK(cm.total() == 4);
  CHECK(cm == ConfusionMatrix::binary(1, 1, 0, 2));

  const std::vector<int> p3{0, 1, 2, 2}, a3{0, 2, 2, 1};
  const auto cm3 = confusion_matrix(p3, a3, 3);
  CHECK(cm3.count(0, 0) == 1);
  CHECK(cm3.count(2, 1) == 1);
  CHECK(cm3.count(2, 2) == 1);
  CHECK(cm3.count(1, 2) == 1);
  CHECK(cm3.trace() == 2);
  CHECK_THROWS_AS(cm3.tp(), UsageError);

  const std::vector<int> short_pred{1};
  CHECK_THROWS_AS(confusion_matrix(short_pred, actual, 2), ValidationError);
  CHECK_THROWS_AS(confusion_matrix(std::vector<int>{}, std::vector<int>{}, 2), ValidationError);
  CHECK_THROWS_AS(confusion_matrix(std::vector<int>{2}, std::vector<int>{0}, 2), ValidationError);
  CHECK_THROWS_AS(confusion_matrix(std::vector<int>{0}, std::vector<int>{-1}, 2), ValidationError);
}

TEST_CASE("confusion_matrix agrees with a brute-force count") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> label(0, 3);
  std::vector<int> predicted(1000), actual(1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    predicted[i] = label(rng);
    actual[i] = label(rng);
  }
  const auto cm = confusion_matrix(predicted, actual, 4);
  std::size_t total = 0;
  for (int a = 0; a < 4; ++a)
    for (int p = 0; p < 4; ++p) {
      std::size_t n = 0;
      for (std::size_t i = 0; i < 1000; ++i) n += actual[i] == a && predicted[i] == p;
      CHECK(cm.count(static_cast<std::size_t>(a), static_cast<std::size_t>(p)) == n);
      total += n;
    }
  CHECK(total == 1000);
  CHECK(cm.total() == 1000);
}

TEST_CASE("metrics examples") {
  SUBCASE("perfect") {
    const auto m = metrics(ConfusionMatrix::binary(10, 0, 0, 10));
    CHECK(m.accuracy == 1.0);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);
  }
  SUBCASE("small binary case") {
    const auto m = metrics(ConfusionMatrix::binary(1, 1, 0, 2));
    CHECK(m.accuracy == doctest::Approx(0.75));
    CHECK(m.precision == doctest::Approx(2.0 / 3.0));
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == doctest::Approx(0.8));
    CHECK(m.averaging == "binary");
  }
  SUBCASE("no predicted positives") {
    const auto m = metrics(ConfusionMatrix::binary(5, 0, 3, 0));
    CHECK(m.precision == 0.0);
    CHECK_FALSE(m.precision_defined);
    CHECK(m.recall == 0.0);
    CHECK(m.recall_defined);
    CHECK_FALSE(m.f1_defined);
    CHECK(m.accuracy == doctest::Approx(5.0 / 8.0));
  }
  SUBCASE("macro averaging for three classes") {
    ConfusionMatrix cm(3);
    cm.add(0, 0, 2);
    cm.add(1, 1, 1);
    cm.add(1, 2, 1);
    cm.add(2, 2, 2);
    const auto m = metrics(cm);
    CHECK(m.averaging == "macro");
    // class precisions 1, 1, 2/3; recalls 1, 1/2, 1
    CHECK(m.precision == doctest::Approx((1.0 + 1.0 + 2.0 / 3.0) / 3.0));
    CHECK(m.recall == doctest::Approx((1.0 + 0.5 + 1.0) / 3.0));
    CHECK(m.f1 == doctest::Approx((1.0 + 2.0 / 3.0 + 0.8) / 3.0));
    CHECK(m.accuracy == doctest::Approx(5.0 / 6.0));
  }
  CHECK_THROWS_AS(metrics(ConfusionMatrix(2)), ValidationError);
}

TEST_CASE("metric bounds hold for random matrices") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> cell(0, 50);
  for (int i = 0; i < 500; ++i) {
    const auto cm = ConfusionMatrix::binary(cell(rng), cell(rng), cell(rng), cell(rng));
    if (cm.total() == 0) continue;
    const auto m = metrics(cm);
    for (double v : {m.accuracy, m.precision, m.recall, m.f1}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    if (m.f1_defined && m.f1 > 0.0) {
      CHECK(m.f1 >= std::min(m.precision, m.recall) - 1e-12);
      CHECK(m.f1 <= std::max(m.precision, m.recall) + 1e-12);
    }
  }
}

TEST_CASE("published ensemble confusion counts reproduce the reported indices") {
  const auto m = metrics(ConfusionMatrix::binary(11858, 150, 565, 11427));
  CHECK(std::abs(m.accuracy - 0.9702) <= 5e-5);
  CHECK(std::abs(m.precision - 0.9870) <= 5e-5);
  CHECK(std::abs(m.recall - 0.9529) <= 5e-5);
  CHECK(std::abs(m.f1 - 0.9697) <= 5e-5);
  CHECK(format_fixed(m.accuracy, 4) == "0.9702");
  CHECK(format_fixed(m.f1, 4) == "0.9697");
}

TEST_CASE("training economics") {
  CHECK(std::abs(relative_overhead(212, 190) - 11.58) <= 0.01);
  CHECK(relative_overhead(190, 190) == 0.0);
  CHECK(relative_overhead(95, 190) == doctest::Approx(-50.0));
  CHECK_THROWS_AS(relative_overhead(1, 0), ValidationError);

  CHECK(round_half_up(accuracy_per_minute(0.9702, 212), 4) == doctest::Approx(0.0046));
  CHECK(round_half_up(accuracy_per_minute(0.9707, 190), 4) == doctest::Approx(0.0051));
  CHECK(round_half_up(accuracy_per_minute(0.9982, 792), 4) == doctest::Approx(0.0013));
  CHECK_THROWS_AS(accuracy_per_minute(0.9, 0.0), ValidationError);
  CHECK_THROWS_AS(accuracy_per_minute(0.9, -1.0), ValidationError);

  CHECK(round_half_up(0.00455, 4) == doctest::Approx(0.0046));
  CHECK(round_half_up(0.00445, 4) == doctest::Approx(0.0045));
  CHECK(round_half_up(-0.125, 2) == doctest::Approx(-0.13));
  CHECK(format_fixed(-0.00001, 2) == "0.00");

  const auto t = make_timing_record("ensemble", 120.0, 0.9);
  CHECK(t.training_minutes == doctest::Approx(2.0));
  CHECK(t.accuracy_per_minute == doctest::Approx(0.45));
}

TEST_CASE("pairwise gaps between published runs") {
  const std::vector<RunResult> runs = {
      {"ensemble", reported(0.9702, 0.9870, 0.9529, 0.9697), std::nullopt},
      {"base", reported(0.9612, 0.9825, 0.9510, 0.9665), std::nullopt},
      {"bert3", reported(0.9707, 0.9937, 0.9470, 0.9699), std::nullopt},
  };
  const auto report = compare_report(runs);
  CHECK(report.gaps.size() == 6);
  const auto find = [&](const std::string& a, const std::string& b) {
    for (const auto& g : report.gaps)
      if (g.run == a && g.baseline == b) return g;
    FAIL("missing gap");
    return PairwiseGap{};
  };
  const auto eb = find("ensemble", "base");
  CHECK(eb.largest_metric == "accuracy");
  CHECK(std::abs(eb.largest_gap_percent - 0.94) <= 0.01);
  const auto te = find("bert3", "ensemble");
  CHECK(te.largest_metric == "precision");
  CHECK(std::abs(te.gaps_percent[1] - 0.68) <= 0.01);
  CHECK(std::abs(te.gaps_percent[2] - (-0.62)) <= 0.01);
  CHECK(std::abs(te.gaps_percent[0] - 0.05) <= 0.01);
  CHECK(percent_gap(1.1, 1.0) == doctest::Approx(10.0));
  CHECK_THROWS_AS(percent_gap(1.0, 0.0), ValidationError);
  CHECK_THROWS_AS(compare_report({}), ValidationError);
}

TEST_CASE("report serialization") {
  RunResult a{"ensemble", metrics(ConfusionMatrix::binary(11858, 150, 565, 11427)),
              make_timing_record("ensemble", 212 * 60.0, 0.9702)};
  RunResult b{"bert3", metrics(ConfusionMatrix::binary(5, 0, 3, 0)),
              make_timing_record("bert3", 190 * 60.0, 0.9707)};
  const auto report = compare_report({a, b});

  const auto j = report_json(report);
  CHECK(j.contains("metrics"));
  CHECK(j.contains("timing"));
  CHECK(metrics_section_json(report) == metrics_section_json(compare_report({a, b})));
  bool found_overhead = false;
  for (const auto& o : j.at("timing").at("overheads")) {
    if (o.at("run") == "ensemble" && o.at("baseline") == "bert3") {
      found_overhead = true;
      CHECK(std::abs(o.at("overhead_percent").get<double>() - 11.58) <= 0.01);
    }
  }
  CHECK(found_overhead);

  const auto md = report_markdown(report);
  CHECK(md.find("| Accuracy | 0.9702 |") != std::string::npos);
  CHECK(md.find("0.0000*") != std::string::npos);
  CHECK(md.find("zero denominator") != std::string::npos);
  CHECK(md.find("0.0046") != std::string::npos);

  const auto clean = metrics_markdown(compare_report({a}));
  CHECK(clean.find("zero denominator") == std::string::npos);
}
