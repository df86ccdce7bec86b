#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "tokencast/core/tensor.hpp"

namespace tokencast::core {

// Seeded generator used everywhere a run needs randomness.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0);
  double normal(double mean = 0.0, double stddev = 1.0);
  // Normal resampled until within two standard deviations of the mean.
  double truncated_normal(double stddev);
  std::size_t index(std::size_t n);
  std::uint64_t next() { return engine_(); }

  // Derives an independent child stream.
  Rng fork(std::uint64_t salt);

 private:
  std::mt19937_64 engine_;
};

Tensor truncated_normal_tensor(Shape shape, double stddev, Rng& rng, bool requires_grad = true);

}  // namespace tokencast::core
