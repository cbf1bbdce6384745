#pragma once

#include <cstdint>
#include <random>

namespace nidlab {

// Deterministic random source. All sampling goes through the helpers below
// rather than <random> distributions, whose output is implementation-defined;
// with a fixed seed the byte stream is identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t u64() { return gen_(); }

  // Uniform in [0,1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  // Uniform integer in [0,n), unbiased via rejection.
  int uniform_int(int n);

  bool coin() { return (u64() >> 63) != 0; }

  // Stream derivation for independent child generators (splitmix64 mix of
  // seed and stream id). Children of distinct streams never share state.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 gen_;
};

}  // namespace nidlab
