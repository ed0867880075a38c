#include <string>
#include <vector>

#include "doctest.h"
#include "minibert/masking.hpp"
#include "support/gradient_suite.hpp"

using namespace minibert;
using namespace minibert::testing;

namespace {

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

void require_pass(const GradCheckResult& r) {
  INFO("worst: " << r.worst << " (excess " << r.worst_excess << ")");
  CHECK(r.checked > 0);
  CHECK(r.failures == 0);
}

}  // namespace

TEST_CASE("finite differences: every differentiable operation") {
  for (auto seed : kSeeds) {
    CAPTURE(seed);
    std::size_t cases = 0;
    check_operations(seed, [&](const std::string& name, const GradCheckResult& r) {
      CAPTURE(name);
      require_pass(r);
      ++cases;
    });
    CHECK(cases == 18);
  }
}

TEST_CASE("finite differences: full single-layer classifier, every parameter") {
  for (auto seed : kSeeds) {
    CAPTURE(seed);
    const auto result = check_classifier(seed);
    CHECK(result.checked == parameter_count(tiny_config(seed)));
    require_pass(result);
  }
}

TEST_CASE("finite differences: two-layer classifier") {
  require_pass(check_classifier(9, 2, 3));
}

TEST_CASE("finite differences: masked language model loss") {
  for (auto seed : kSeeds) {
    CAPTURE(seed);
    const auto config = tiny_config(seed);
    auto model = init_model<double>(config);
    const auto examples = random_examples(seed * 13, 3, config);
    MaskingPolicy policy;
    policy.select_rate = 0.5;
    const auto batch = apply_mlm_mask(examples, config.vocab_size, policy, seed);
    REQUIRE_FALSE(batch.targets.empty());
    require_pass(check_gradients(model.parameters(), [&] { return mlm_pretrain_loss(batch, model); }));
  }
}
