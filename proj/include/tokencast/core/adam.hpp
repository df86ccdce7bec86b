#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tokencast/core/tensor.hpp"

namespace tokencast::core {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

// One bias-corrected Adam update of `param` in place. `step` is the 1-based
// index of this update.
void adam_update(std::span<double> param, std::span<const double> grad, AdamMoments& moments,
                 std::uint64_t step, const AdamConfig& cfg);

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg);

  // Applies one update using each parameter's accumulated gradient; a
  // parameter without a gradient is treated as having a zero gradient.
  void step();
  void zero_grad();

  std::uint64_t steps() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  const std::vector<Tensor>& params() const { return params_; }
  const AdamMoments& moments(std::size_t i) const { return moments_.at(i); }

 private:
  std::vector<Tensor> params_;
  std::vector<AdamMoments> moments_;
  AdamConfig cfg_;
  std::uint64_t step_ = 0;
};

// Scales gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);
double grad_norm(std::span<const Tensor> params);

}  // namespace tokencast::core
