#include "tokencast/core/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tokencast::core {

double GradCheckReport::worst() const {
  double w = 0.0;
  for (double e : max_rel_error) w = std::max(w, e);
  return w;
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << "max rel err per input:";
  for (double e : max_rel_error) os << ' ' << e;
  return os.str();
}

GradCheckReport grad_check(const ScalarFn& fn, std::vector<Tensor> inputs, double step,
                           double floor) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  Tensor out = fn(inputs);
  out.backward();

  GradCheckReport report;
  for (auto& in : inputs) {
    std::vector<double> analytic(in.size(), 0.0);
    if (in.has_grad()) std::copy(in.grad().begin(), in.grad().end(), analytic.begin());
    double worst = 0.0, max_abs = 0.0;
    auto values = in.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      double plus, minus;
      {
        NoGradGuard guard;
        values[i] = saved + step;
        plus = fn(inputs).item();
        values[i] = saved - step;
        minus = fn(inputs).item();
      }
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
      max_abs = std::max(max_abs, std::abs(analytic[i]));
    }
    report.max_rel_error.push_back(worst);
    report.max_abs_analytic.push_back(max_abs);
  }
  return report;
}

}  // namespace tokencast::core
