#pragma once

#include <array>
#include <cstdint>

namespace emberflow {

// xoshiro256** seeded through splitmix64. Only integer arithmetic is used to
// produce the raw stream and the float conversions are exact, so a given seed
// yields the same samples on every platform.
class Rng {
 public:
  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t seed = 0) noexcept;

  std::uint64_t next_u64() noexcept;

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;

  // Box-Muller, one sample per call (the sine branch is discarded so the
  // generator carries no hidden cached value).
  double normal(double mean = 0.0, double stddev = 1.0) noexcept;

  bool bernoulli(double p) noexcept { return uniform() < p; }

  // Derive an independent generator; advances this one by one step.
  Rng split() noexcept;

  const State& state() const noexcept { return s_; }
  void set_state(const State& s) noexcept { s_ = s; }

 private:
  State s_{};
};

}  // namespace emberflow
