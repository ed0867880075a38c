#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "minibert/errors.hpp"
#include "minibert/tensor.hpp"

using namespace minibert;
using T = Tensor<double>;
using F = Tensor<float>;

namespace {

T random_tensor(std::mt19937_64& rng, Shape shape, bool requires_grad = true) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = dist(rng);
  return T::from_data(std::move(shape), std::move(values), requires_grad);
}

}  // namespace

TEST_CASE("tensor construction keeps shape and data consistent") {
  const auto t = F::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.at(1, 2) == 6.0f);
  CHECK_THROWS_AS(F::from_data({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(F::zeros({2, 0}), ShapeError);

  auto g = F::zeros({4}, true);
  CHECK_FALSE(g.has_grad());
  CHECK(g.grad().size() == g.numel());
}

TEST_CASE("matmul") {
  SUBCASE("identity") {
    const auto eye = F::from_data({2, 2}, {1, 0, 0, 1});
    const auto b = F::from_data({2, 2}, {3, 4, 5, 6});
    const auto c = matmul(eye, b);
    CHECK(std::vector<float>(c.data().begin(), c.data().end()) == std::vector<float>{3, 4, 5, 6});
  }
  SUBCASE("row times column") {
    const auto c = matmul(F::from_data({1, 2}, {1, 2}), F::from_data({2, 1}, {3, 4}));
    CHECK(c.shape() == Shape{1, 1});
    CHECK(c.item() == 11.0f);
  }
  SUBCASE("mismatch names both shapes") {
    try {
      matmul(F::zeros({2, 3}), F::zeros({2, 3}));
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2, 3]") != std::string::npos);
    }
  }
}

TEST_CASE("softmax") {
  SUBCASE("symmetric input") {
    const auto s = softmax(F::from_data({1, 2}, {0, 0}), 1);
    CHECK(s.at(0, 0) == doctest::Approx(0.5));
    CHECK(s.at(0, 1) == doctest::Approx(0.5));
  }
  SUBCASE("large equal logits do not overflow") {
    const auto s = softmax(F::from_data({1, 2}, {1000, 1000}), 1);
    CHECK(std::isfinite(s.at(0, 0)));
    CHECK(s.at(0, 0) == doctest::Approx(0.5));
  }
  SUBCASE("matches long double scalar evaluation") {
    const auto s = softmax(T::from_data({1, 3}, {1, 2, 3}), 1);
    const long double e1 = std::exp(1.0L), e2 = std::exp(2.0L), e3 = std::exp(3.0L);
    const long double z = e1 + e2 + e3;
    CHECK(std::abs(s.at(0, 0) - static_cast<double>(e1 / z)) < 1e-9);
    CHECK(std::abs(s.at(0, 1) - static_cast<double>(e2 / z)) < 1e-9);
    CHECK(std::abs(s.at(0, 2) - static_cast<double>(e3 / z)) < 1e-9);
  }
  SUBCASE("rows sum to one, entries in [0, 1], along either axis") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      auto x = random_tensor(rng, {4, 5}, false);
      for (auto& v : x.data()) v *= 30.0;
      for (std::size_t axis : {0u, 1u}) {
        const auto s = softmax(x, axis);
        const std::size_t outer = axis == 1 ? 4 : 5, inner = axis == 1 ? 5 : 4;
        for (std::size_t o = 0; o < outer; ++o) {
          double total = 0.0;
          for (std::size_t i = 0; i < inner; ++i) {
            const double v = axis == 1 ? s.at(o, i) : s.at(i, o);
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            total += v;
          }
          CHECK(std::abs(total - 1.0) < 1e-6);
        }
      }
    }
  }
  CHECK_THROWS_AS(softmax(F::zeros({2, 2}), 2), ShapeError);
}

TEST_CASE("layer_norm") {
  const auto ones = F::from_data({3}, {1, 1, 1});
  const auto zeros = F::zeros({3});
  SUBCASE("constant row maps to the bias") {
    const auto y = layer_norm(F::from_data({1, 3}, {5, 5, 5}), ones, zeros, 1e-5f);
    for (float v : y.data()) CHECK(v == 0.0f);
  }
  SUBCASE("two-point row standardizes to -1, 1") {
    const auto y = layer_norm(F::from_data({1, 2}, {1, 3}), F::from_data({2}, {1, 1}),
                              F::zeros({2}), 1e-5f);
    CHECK(y.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(y.at(0, 1) == doctest::Approx(1.0).epsilon(1e-4));
  }
  SUBCASE("pre-affine statistics") {
    std::mt19937_64 rng(11);
    const std::size_t n = 16;
    const auto x = random_tensor(rng, {6, n}, false);
    const auto y = layer_norm(x, T::full({n}, 1.0), T::zeros({n}), 1e-5);
    for (std::size_t r = 0; r < 6; ++r) {
      double mean = 0.0, var = 0.0;
      for (std::size_t c = 0; c < n; ++c) mean += y.at(r, c);
      mean /= n;
      for (std::size_t c = 0; c < n; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
      var /= n;
      CHECK(std::abs(mean) < 1e-5);
      CHECK(std::abs(var - 1.0) < 1e-4);
    }
  }
  SUBCASE("gain and bias apply after normalization") {
    const auto y = layer_norm(F::from_data({1, 2}, {1, 3}), F::from_data({2}, {2, 3}),
                              F::from_data({2}, {10, 20}), 1e-5f);
    CHECK(y.at(0, 0) == doctest::Approx(8.0).epsilon(1e-4));
    CHECK(y.at(0, 1) == doctest::Approx(23.0).epsilon(1e-4));
  }
  CHECK_THROWS_AS(layer_norm(F::zeros({2, 3}), F::zeros({2}), F::zeros({3}), 1e-5f), ShapeError);
}

TEST_CASE("gelu uses the tanh approximation") {
  const auto y = gelu(T::from_data({3}, {0.0, 10.0, 1.0}));
  CHECK(y.data()[0] == 0.0);
  CHECK(std::abs(y.data()[1] - 10.0) < 1e-3);
  const double x = 1.0;
  const double reference =
      0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
  CHECK(std::abs(y.data()[2] - reference) < 1e-6);
}

TEST_CASE("cross_entropy") {
  SUBCASE("uniform logits give ln 2") {
    const std::vector<int> labels = {1};
    const auto loss = cross_entropy(F::from_data({1, 2}, {0, 0}), labels);
    CHECK(loss.item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  }
  SUBCASE("confident and correct gives about zero") {
    const std::vector<int> labels = {0};
    const auto loss = cross_entropy(F::from_data({1, 2}, {20, -20}), labels);
    CHECK(loss.item() < 1e-12);
  }
  SUBCASE("gradient is softmax minus one-hot, averaged") {
    const std::vector<int> labels = {0, 1};
    auto logits = T::from_data({2, 2}, {1.0, 2.0, 0.5, -0.5}, true);
    backward(cross_entropy(logits, labels));
    const auto g = logits.grad();
    const double p00 = std::exp(1.0) / (std::exp(1.0) + std::exp(2.0));
    const double p10 = std::exp(0.5) / (std::exp(0.5) + std::exp(-0.5));
    CHECK(g[0] == doctest::Approx((p00 - 1.0) / 2.0));
    CHECK(g[1] == doctest::Approx((1.0 - p00) / 2.0));
    CHECK(g[2] == doctest::Approx(p10 / 2.0));
    CHECK(g[3] == doctest::Approx((1.0 - p10 - 1.0) / 2.0));
  }
  SUBCASE("labels out of range") {
    const std::vector<int> bad = {2};
    CHECK_THROWS_AS(cross_entropy(F::zeros({1, 2}), bad), ValidationError);
    const std::vector<int> negative = {-1};
    CHECK_THROWS_AS(cross_entropy(F::zeros({1, 2}), negative), ValidationError);
    const std::vector<int> too_many = {0, 1};
    CHECK_THROWS(cross_entropy(F::zeros({1, 2}), too_many));
  }
}

TEST_CASE("backward") {
  SUBCASE("sum gives all-ones") {
    auto p = F::from_data({2, 2}, {1, -2, 3, 4}, true);
    backward(sum(p));
    for (float g : p.grad()) CHECK(g == 1.0f);
  }
  SUBCASE("sum of squares gives 2p") {
    auto p = F::from_data({3}, {1.5f, -2, 0.25f}, true);
    backward(sum(mul(p, p)));
    for (std::size_t i = 0; i < 3; ++i) CHECK(p.grad()[i] == 2.0f * p.data()[i]);
  }
  SUBCASE("leaf gradients accumulate across calls") {
    auto p = F::from_data({2}, {1, 2}, true);
    backward(sum(p));
    backward(sum(p));
    CHECK(p.grad()[0] == 2.0f);
    p.zero_grad();
    CHECK(p.grad()[0] == 0.0f);
  }
  SUBCASE("shared subexpressions are visited once") {
    auto p = F::from_data({2}, {1, 2}, true);
    const auto q = scale(p, 3.0f);
    backward(sum(add(q, q)));
    CHECK(p.grad()[0] == 6.0f);
    CHECK(p.grad()[1] == 6.0f);
  }
  SUBCASE("non-scalar loss is a usage error") {
    auto p = F::from_data({2}, {1, 2}, true);
    CHECK_THROWS_AS(backward(p), UsageError);
  }
  SUBCASE("no graph is recorded under NoGradGuard") {
    auto p = F::from_data({2}, {1, 2}, true);
    Tensor<float> s;
    {
      NoGradGuard guard;
      CHECK_FALSE(grad_enabled());
      s = sum(mul(p, p));
    }
    CHECK(grad_enabled());
    CHECK_FALSE(s.requires_grad());
  }
}

TEST_CASE("gather, slice and concat") {
  const auto table = F::from_data({3, 2}, {0, 1, 10, 11, 20, 21});
  const std::vector<int> ids = {2, 0, 2};
  const auto g = gather_rows(table, ids);
  CHECK(g.shape() == Shape{3, 2});
  CHECK(g.at(0, 1) == 21.0f);
  CHECK(g.at(1, 0) == 0.0f);
  const std::vector<int> bad = {3};
  CHECK_THROWS_AS(gather_rows(table, bad), ValidationError);

  const auto s = slice_cols(table, 1, 1);
  CHECK(s.shape() == Shape{3, 1});
  CHECK(s.at(2, 0) == 21.0f);
  CHECK_THROWS_AS(slice_cols(table, 1, 2), ShapeError);

  const std::vector<F> cols = {table, s};
  CHECK(concat_cols(std::span<const F>(cols)).shape() == Shape{3, 3});
  const std::vector<F> rows = {table, g};
  const auto r = concat_rows(std::span<const F>(rows));
  CHECK(r.shape() == Shape{6, 2});
  CHECK(r.at(3, 0) == 20.0f);

  auto leaf = F::from_data({3, 2}, {0, 1, 10, 11, 20, 21}, true);
  backward(sum(gather_rows(leaf, ids)));
  CHECK(leaf.grad()[4] == 2.0f);
  CHECK(leaf.grad()[2] == 0.0f);
}

TEST_CASE("operations are deterministic and finite") {
  std::mt19937_64 rng(5);
  const auto a = random_tensor(rng, {4, 6}, false);
  const auto b = random_tensor(rng, {6, 3}, false);
  const auto run = [&] {
    return softmax(gelu(matmul(layer_norm(a, T::full({6}, 1.0), T::zeros({6}), 1e-5), b)), 1);
  };
  const auto first = run();
  const auto second = run();
  CHECK(std::vector<double>(first.data().begin(), first.data().end()) ==
        std::vector<double>(second.data().begin(), second.data().end()));
  for (double v : first.data()) CHECK(std::isfinite(v));
}
