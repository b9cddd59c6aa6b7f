#include "mkv/rng.hpp"

#include <cmath>
#include <numbers>

namespace mkv {

std::uint32_t CounterStream::next_word() noexcept {
  if (used_ == 4) {
    Philox4x32::Counter c = ctr_;
    c[3] |= block_++ & 0x00FFFFFFu;
    buf_ = Philox4x32::block(c, key_);
    used_ = 0;
  }
  return buf_[used_++];
}

double CounterStream::uniform() noexcept {
  const std::uint64_t hi = next_word() >> 5;  // 27 bits
  const std::uint64_t lo = next_word() >> 6;  // 26 bits
  const std::uint64_t bits = (hi << 26) | lo;
  return (static_cast<double>(bits) + 0.5) * 0x1p-53;
}

double CounterStream::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

}  // namespace mkv
