#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace ocnopt {

/// Deterministic random source. All randomness in the project flows through
/// this class so that runs are reproducible from a seed and the generator
/// state can be checkpointed. The uniform mapping is pinned (top 53 bits of
/// the engine output) rather than delegated to std distributions, whose
/// output is not specified across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller. Draws two uniforms per call and keeps
  /// no cached spare, so the state is exactly the engine state.
  double normal();

  /// Uniform integer on {0, ..., n-1}; n must be positive.
  int uniform_int(int n);

  std::vector<int> permutation(int n);

  /// Engine state as text; round-trips exactly through deserialize.
  std::string serialize() const;
  static Rng deserialize(const std::string& s);

 private:
  std::mt19937_64 eng_;
};

}  // namespace ocnopt
