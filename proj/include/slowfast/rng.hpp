#pragma once

#include <cmath>
#include <cstdint>

namespace slowfast {

/// Philox4x32-10 counter-based generator. A draw is a pure function of
/// (seed, particle, stream, step), so particle updates can be farmed out to
/// any number of workers and the replayed stream is bitwise identical.
struct Philox {
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;

  struct Block {
    std::uint32_t v[4];
  };

  static Block block(std::uint64_t seed, std::uint32_t particle,
                     std::uint32_t stream, std::uint64_t step) {
    std::uint32_t c0 = static_cast<std::uint32_t>(step);
    std::uint32_t c1 = static_cast<std::uint32_t>(step >> 32);
    std::uint32_t c2 = particle;
    std::uint32_t c3 = stream;
    std::uint32_t k0 = static_cast<std::uint32_t>(seed);
    std::uint32_t k1 = static_cast<std::uint32_t>(seed >> 32);
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c0;
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c2;
      const std::uint32_t n0 = static_cast<std::uint32_t>(p1 >> 32) ^ c1 ^ k0;
      const std::uint32_t n1 = static_cast<std::uint32_t>(p1);
      const std::uint32_t n2 = static_cast<std::uint32_t>(p0 >> 32) ^ c3 ^ k1;
      const std::uint32_t n3 = static_cast<std::uint32_t>(p0);
      c0 = n0;
      c1 = n1;
      c2 = n2;
      c3 = n3;
      k0 += kW0;
      k1 += kW1;
    }
    return Block{{c0, c1, c2, c3}};
  }
};

/// Stream tags. Multiscale, IID and controlled runs share W/B per particle;
/// the averaged limit draws on the W stream so runs couple under a common
/// seed.
enum class NoiseTag : std::uint32_t { W = 0, B = 1 };

inline double uniform_open(std::uint32_t w) {
  return (static_cast<double>(w) + 0.5) * (1.0 / 4294967296.0);
}

/// Standard normal draw for (seed, particle, tag, step) via Box-Muller on
/// one Philox block.
inline double normal_draw(std::uint64_t seed, std::uint32_t particle,
                          NoiseTag tag, std::uint64_t step) {
  const auto b =
      Philox::block(seed, particle, static_cast<std::uint32_t>(tag), step);
  const double u1 = uniform_open(b.v[0]);
  const double u2 = uniform_open(b.v[1]);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace slowfast
