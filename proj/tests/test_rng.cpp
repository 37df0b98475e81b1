#include <doctest.h>

#include <cmath>

#include "plapsde/rng.hpp"

using namespace plapsde;

// Known-answer vectors of the Random123 distribution for philox4x32-10.
TEST_CASE("Philox4x32-10 known answers") {
  using C = Philox4x32::Counter;
  using K = Philox4x32::Key;
  CHECK(Philox4x32::generate(C{0, 0, 0, 0}, K{0, 0}) ==
        C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox4x32::generate(C{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff},
                             K{0xffffffff, 0xffffffff}) ==
        C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(Philox4x32::generate(C{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344},
                             K{0xa4093822, 0x299f31d0}) ==
        C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("keyed draws are pure functions of the key") {
  CHECK(keyed_normal(3, 17, 5, 2) == keyed_normal(3, 17, 5, 2));
  CHECK(keyed_normal(3, 17, 5, 2) != keyed_normal(3, 17, 5, 3));
  CHECK(keyed_normal(3, 17, 5, 2) != keyed_normal(3, 18, 5, 2));
  CHECK(keyed_normal(3, 17, 5, 2) != keyed_normal(4, 17, 5, 2));
  const std::uint64_t hi = (std::uint64_t(1) << 40) + 17;
  CHECK(keyed_normal(3, hi, 5, 2) != keyed_normal(3, 17, 5, 2));
  for (std::uint32_t s = 0; s < 1000; ++s) {
    const double u = keyed_uniform(1, 2, s, 0);
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("keyed normals have unit moments") {
  const int n = 200000;
  double s1 = 0.0, s2 = 0.0, s4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = keyed_normal(11, std::uint64_t(i), 0, 0);
    s1 += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  CHECK(std::abs(s1 / n) <= 4.0 / std::sqrt(n));
  CHECK(std::abs(s2 / n - 1.0) <= 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(s4 / n - 3.0) <= 4.0 * std::sqrt(96.0 / n));
}
