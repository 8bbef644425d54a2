#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace atebench {

// splitmix64 finalizer.  Used both as the seeding PRNG and as the hash that
// derives independent substreams from (seed, stream) pairs.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// xoshiro256++ with splitmix64 seeding and hash-derived substreams.
//
// Every randomized routine in the library draws from an Rng constructed via
// substream(seed, stream), where `stream` identifies the replication, fold,
// or chunk.  Substreams can therefore be generated in any order, on any
// thread, and still reproduce bit-identically.  Normal deviates come from
// Box-Muller on the raw uniforms, so the stream does not depend on the C++
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept {
    std::uint64_t x = seed;
    for (auto& word : state_) {
      x = mix64(x);
      word = x;
    }
  }

  static Rng substream(std::uint64_t seed, std::uint64_t stream) noexcept {
    return Rng(mix64(seed ^ mix64(stream + 0x517cc1b727220a95ULL)));
  }

  std::uint64_t next() noexcept {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on (0, 1]; never returns 0 so log(uniform()) is safe.
  double uniform() noexcept {
    return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
  }

  double normal() noexcept {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double a = 2.0 * 3.14159265358979323846 * uniform();
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace atebench
