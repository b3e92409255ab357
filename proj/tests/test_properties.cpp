#include "doctest.h"
#include "invariants.hpp"

using namespace marketrank;

TEST_SUITE("properties") {
  TEST_CASE("randomized invariants hold") {
    for (const auto& outcome : testing::run_invariant_suite(2024, 60)) {
      INFO(outcome.name << ": " << outcome.first_failure);
      CHECK(outcome.trials > 0);
      CHECK(outcome.failures == 0);
    }
  }
}
