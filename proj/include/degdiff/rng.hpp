#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace degdiff {

// Philox4x32-10 counter-based generator (Salmon et al., SC 2011).
// Every draw is a pure function of (seed, stream, slot), so paths are
// reproducible regardless of worker count or call order.
namespace philox {

inline constexpr uint32_t kW32A = 0x9E3779B9u;
inline constexpr uint32_t kW32B = 0xBB67AE85u;
inline constexpr uint32_t kM4x32A = 0xD2511F53u;
inline constexpr uint32_t kM4x32B = 0xCD9E8D57u;

inline void mulhilo(uint32_t a, uint32_t b, uint32_t& lo, uint32_t& hi) {
  const uint64_t p = static_cast<uint64_t>(a) * b;
  lo = static_cast<uint32_t>(p);
  hi = static_cast<uint32_t>(p >> 32);
}

inline std::array<uint32_t, 4> block(std::array<uint32_t, 4> ctr, std::array<uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    uint32_t lo0, hi0, lo1, hi1;
    mulhilo(kM4x32A, ctr[0], lo0, hi0);
    mulhilo(kM4x32B, ctr[2], lo1, hi1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW32A;
    key[1] += kW32B;
  }
  return ctr;
}

}  // namespace philox

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Draw-slot namespaces. A slot identifies one normal variate within a stream.
enum class DrawKind : uint64_t {
  path = 0,      // base-grid Brownian increment
  bridge = 1,    // level-coupling bridge midpoint
  substep = 2,   // in-step bisection (Dyson safeguard)
  direction = 3, // Cameron-Martin densities and other auxiliary directions
  generic = 4,   // test states and miscellaneous sampling
};

inline uint64_t slot_path(int64_t step, int coord, int d) {
  return (static_cast<uint64_t>(DrawKind::path) << 60) | (static_cast<uint64_t>(step) * d + coord);
}

inline uint64_t slot_bridge(int level, int64_t cell, int coord, int d) {
  return (static_cast<uint64_t>(DrawKind::bridge) << 60) | (static_cast<uint64_t>(level) << 44) |
         (static_cast<uint64_t>(cell) * d + coord);
}

inline uint64_t slot_substep(int64_t step, int node, int coord, int d) {
  return (static_cast<uint64_t>(DrawKind::substep) << 60) | (static_cast<uint64_t>(step) << 26) |
         (static_cast<uint64_t>(node) * d + coord);
}

inline uint64_t slot_direction(int64_t step, int coord, int d) {
  return (static_cast<uint64_t>(DrawKind::direction) << 60) | (static_cast<uint64_t>(step) * d + coord);
}

inline uint64_t slot_generic(int64_t k) {
  return (static_cast<uint64_t>(DrawKind::generic) << 60) | static_cast<uint64_t>(k);
}

// Streams derived for nested sampling get the top bit set so they can never
// collide with outer stream indices (which are plain path counters).
inline uint64_t derive_stream(uint64_t outer, uint64_t tag, uint64_t k) {
  return (1ull << 63) | splitmix64(outer ^ splitmix64(tag ^ splitmix64(k)));
}

class BrownianDriver {
 public:
  explicit BrownianDriver(uint64_t seed) : seed_(seed) {}

  uint64_t seed() const { return seed_; }

  double uniform(uint64_t stream, uint64_t slot) const {
    const auto out = raw(stream, slot);
    const uint64_t a = (static_cast<uint64_t>(out[0]) << 32) | out[1];
    // (0,1]: never zero, so it is safe under log().
    return (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;
  }

  double normal(uint64_t stream, uint64_t slot) const {
    const auto out = raw(stream, slot);
    const uint64_t a = (static_cast<uint64_t>(out[0]) << 32) | out[1];
    const uint64_t b = (static_cast<uint64_t>(out[2]) << 32) | out[3];
    const double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  std::array<uint32_t, 4> raw(uint64_t stream, uint64_t slot) const {
    const std::array<uint32_t, 4> ctr = {
        static_cast<uint32_t>(slot), static_cast<uint32_t>(slot >> 32),
        static_cast<uint32_t>(stream), static_cast<uint32_t>(stream >> 32)};
    const std::array<uint32_t, 2> key = {static_cast<uint32_t>(seed_), static_cast<uint32_t>(seed_ >> 32)};
    return philox::block(ctr, key);
  }

  uint64_t seed_;
};

}  // namespace degdiff
