#include "tokencast/rin.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tokencast/error.hpp"

namespace tokencast::rin {

NormStats fit(std::span<const double> history) {
  if (history.size() < 2) {
    throw ValidationError("instance normalization needs at least 2 history steps, got " +
                          std::to_string(history.size()));
  }
  double mu = 0.0;
  for (double v : history) mu += v;
  mu /= static_cast<double>(history.size());
  double var = 0.0;
  for (double v : history) var += (v - mu) * (v - mu);
  var /= static_cast<double>(history.size());
  return {{mu}, {std::max(std::sqrt(var), kSigmaFloor)}};
}

NormStats fit(const std::vector<std::vector<double>>& history) {
  NormStats out;
  for (const auto& ch : history) {
    auto s = fit(std::span<const double>(ch));
    out.mu.push_back(s.mu[0]);
    out.sigma.push_back(s.sigma[0]);
  }
  return out;
}

std::vector<double> normalize(std::span<const double> x, const NormStats& stats,
                              std::size_t channel) {
  const double mu = stats.mu.at(channel), sigma = stats.sigma.at(channel);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mu) / sigma;
  return out;
}

std::vector<double> denormalize(std::span<const double> x, const NormStats& stats,
                                std::size_t channel) {
  const double mu = stats.mu.at(channel), sigma = stats.sigma.at(channel);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * sigma + mu;
  return out;
}

}  // namespace tokencast::rin
