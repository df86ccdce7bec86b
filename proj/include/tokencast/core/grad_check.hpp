#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tokencast/core/tensor.hpp"

namespace tokencast::core {

struct GradCheckReport {
  // Per input: max over elements of |analytic - numeric| / max(|analytic|, |numeric|, floor).
  std::vector<double> max_rel_error;
  // Per input: max |analytic| (0 exactly when no gradient reached the input).
  std::vector<double> max_abs_analytic;

  double worst() const;
  bool passed(double tolerance) const { return worst() <= tolerance; }
  std::string summary() const;
};

using ScalarFn = std::function<Tensor(std::span<const Tensor>)>;

// Compares reverse-mode gradients of a scalar function with central finite
// differences. Never throws on mismatch; the report carries the errors.
GradCheckReport grad_check(const ScalarFn& fn, std::vector<Tensor> inputs, double step = 1e-5,
                           double floor = 1e-4);

}  // namespace tokencast::core
