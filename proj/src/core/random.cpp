#include "tokencast/core/random.hpp"

#include <cmath>
#include <stdexcept>

namespace tokencast::core {

double Rng::uniform(double lo, double hi) {
  // 53 random bits; avoids implementation-defined distribution objects.
  const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

double Rng::normal(double mean, double stddev) {
  // Box-Muller on (0,1]; deterministic for a given engine state.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(2.0 * M_PI * u2);
}

double Rng::truncated_normal(double stddev) {
  for (;;) {
    const double z = normal();
    if (std::abs(z) <= 2.0) return z * stddev;
  }
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::index on empty range");
  return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

Rng Rng::fork(std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(engine_()), static_cast<std::uint32_t>(salt),
                    static_cast<std::uint32_t>(salt >> 32)};
  std::mt19937_64 child(seq);
  Rng out(0);
  out.engine_ = child;
  return out;
}

Tensor truncated_normal_tensor(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.truncated_normal(stddev);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

}  // namespace tokencast::core
