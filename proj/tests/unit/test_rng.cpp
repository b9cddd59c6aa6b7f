#include <doctest.h>

#include <cmath>

#include "mkv/rng.hpp"

using mkv::CounterStream;
using mkv::Philox4x32;
using mkv::StreamTag;

TEST_CASE("Philox4x32-10 known-answer vectors") {
  CHECK(Philox4x32::block({0, 0, 0, 0}, {0, 0}) ==
        Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                          {0xffffffffu, 0xffffffffu}) ==
        Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                          {0xa4093822u, 0x299f31d0u}) ==
        Philox4x32::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("streams are reproducible and distinct") {
  CounterStream a(42, 7, 3, StreamTag::increment);
  CounterStream b(42, 7, 3, StreamTag::increment);
  CounterStream c(42, 8, 3, StreamTag::increment);
  CounterStream d(42, 7, 3, StreamTag::initial);
  for (int i = 0; i < 10; ++i) {
    const double x = a.normal();
    CHECK(x == b.normal());
    CHECK(x != c.normal());
    CHECK(x != d.normal());
  }
}

TEST_CASE("normal variates have unit moments") {
  double s1 = 0.0;
  double s2 = 0.0;
  double s4 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    CounterStream s(1, static_cast<std::uint64_t>(i), 0, StreamTag::increment);
    const double z = s.normal();
    s1 += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  CHECK(std::abs(s1 / n) < 4.0 / std::sqrt(n));
  CHECK(std::abs(s2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(s4 / n - 3.0) < 4.0 * std::sqrt(96.0 / n));

  CounterStream u(9, 0, 0, StreamTag::initial);
  double mean = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = u.uniform();
    REQUIRE(x > 0.0);
    REQUIRE(x < 1.0);
    mean += x;
  }
  CHECK(std::abs(mean / n - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
}
