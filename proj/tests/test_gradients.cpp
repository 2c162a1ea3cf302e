#include <doctest.h>

#include "support/gradient_cases.hpp"

using namespace sanet::testing;

TEST_CASE("primitive gradients match central differences") {
  for (const auto& c : primitive_gradient_cases()) {
    CAPTURE(c.name);
    CHECK(c.error() < 1e-4);
  }
}

TEST_CASE("composed network gradients match central differences") {
  for (const auto& c : composed_gradient_cases()) {
    CAPTURE(c.name);
    CHECK(c.error() < 1e-3);
  }
}
