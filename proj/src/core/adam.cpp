#include "tokencast/core/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tokencast::core {

void adam_update(std::span<double> param, std::span<const double> grad, AdamMoments& moments,
                 std::uint64_t step, const AdamConfig& cfg) {
  if (!grad.empty() && grad.size() != param.size()) {
    throw std::invalid_argument("adam: gradient of " + std::to_string(grad.size()) +
                                " values for parameter of " + std::to_string(param.size()));
  }
  if (moments.m.size() != param.size()) moments.m.assign(param.size(), 0.0);
  if (moments.v.size() != param.size()) moments.v.assign(param.size(), 0.0);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.empty() ? 0.0 : grad[i];
    moments.m[i] = cfg.beta1 * moments.m[i] + (1.0 - cfg.beta1) * g;
    moments.v[i] = cfg.beta2 * moments.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = moments.m[i] / bc1;
    const double vhat = moments.v[i] / bc2;
    param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), moments_(params_.size()), cfg_(cfg) {}

void Adam::step() {
  ++step_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    adam_update(p.mutable_data(), p.grad(), moments_[i], step_, cfg_);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double grad_norm(std::span<const Tensor> params) {
  double s = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad()) s += g * g;
  }
  return std::sqrt(s);
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.mutable_grad()) g *= f;
    }
  }
  return norm;
}

}  // namespace tokencast::core
