#pragma once

#include <span>
#include <vector>

// History-based reversible instance normalization. Statistics come from the
// history segment alone and are kept with the window so decoded values can be
// mapped back exactly.
namespace tokencast::rin {

inline constexpr double kSigmaFloor = 1e-5;

struct NormStats {
  std::vector<double> mu;     // per channel
  std::vector<double> sigma;  // per channel, population std, >= kSigmaFloor

  std::size_t channels() const { return mu.size(); }
};

// history[c] holds channel c's history. Throws ValidationError when a channel
// has fewer than two steps.
NormStats fit(const std::vector<std::vector<double>>& history);
NormStats fit(std::span<const double> history);

std::vector<double> normalize(std::span<const double> x, const NormStats& stats,
                              std::size_t channel = 0);
std::vector<double> denormalize(std::span<const double> x, const NormStats& stats,
                                std::size_t channel = 0);

}  // namespace tokencast::rin
