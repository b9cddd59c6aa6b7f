#pragma once

#include <array>
#include <cstdint>

namespace mkv {

/// Philox4x32-10 counter-based generator. Each (key, counter) pair maps to
/// four independent 32-bit words, so any stream position can be computed
/// directly without shared state.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;
};

/// Purpose tags kept in the last counter word so streams never overlap.
enum class StreamTag : std::uint32_t { initial = 1, increment = 2 };

/// Stream of variates for one (seed, particle, step, purpose).
class CounterStream {
 public:
  CounterStream(std::uint64_t seed, std::uint64_t particle, std::uint32_t step, StreamTag tag) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        ctr_{step, static_cast<std::uint32_t>(particle), static_cast<std::uint32_t>(particle >> 32),
             static_cast<std::uint32_t>(tag) << 24} {}

  /// Uniform in (0, 1) with 53 random bits.
  double uniform() noexcept;

  /// Standard normal by Box-Muller; pairs are cached.
  double normal() noexcept;

 private:
  std::uint32_t next_word() noexcept;

  Philox4x32::Key key_;
  Philox4x32::Counter ctr_;
  Philox4x32::Counter buf_{};
  int used_ = 4;
  std::uint32_t block_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mkv
