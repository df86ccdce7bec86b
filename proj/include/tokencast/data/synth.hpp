#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tokencast/core/random.hpp"
#include "tokencast/data/series.hpp"

namespace tokencast::data {

enum class SynthKind { sine_mixture, seasonal_trend, ar1 };

const char* to_string(SynthKind k);
SynthKind synth_kind_from_string(const std::string& s);

struct SineComponent {
  double amplitude = 1.0;
  double frequency = 1.0 / 24.0;  // cycles per step
  double phase = 0.0;
};

struct SynthParams {
  std::size_t length = 4000;
  std::size_t channels = 1;
  double noise = 0.05;  // std of additive Gaussian noise
  // sine-mixture
  std::vector<SineComponent> sines{{1.0, 1.0 / 24.0, 0.0}, {0.5, 1.0 / 12.0, 0.7}};
  // seasonal-trend: level + slope*t + amplitude*sin(2 pi t/period) + harmonic
  double period = 24.0;
  double amplitude = 1.0;
  double harmonic = 0.3;
  double slope = 0.002;
  double level = 0.0;
  // ar1: x_t = rho x_{t-1} + sigma e_t
  double rho = 0.9;
  double sigma = 1.0;
};

// Deterministic for a seed. Additional channels are phase-shifted copies with
// independent noise.
RawSeries synth_series(SynthKind kind, const SynthParams& params, std::uint64_t seed);

// Order-2 Markov grammar over word ids. Each previous word has four distinct
// successors; the two-back word rotates which successor gets which weight,
// so the next-word distribution depends on both context words.
class MarkovGrammar {
 public:
  static constexpr std::array<double, 4> kWeights{0.55, 0.25, 0.12, 0.08};

  MarkovGrammar(std::size_t vocab_size, std::uint64_t seed);

  std::size_t vocab_size() const { return successors_.size(); }
  int sample(int prev2, int prev1, core::Rng& rng) const;
  double probability(int prev2, int prev1, int next) const;
  // Entropy of the next word given both context words (nats); the same for
  // every context.
  double conditional_entropy() const;

 private:
  std::vector<std::array<int, 4>> successors_;
};

// Token stream of exactly n_tokens ids in [0, vocab_size): Markov runs
// interleaved with template sentences in the prompt's phrasing (domain,
// instruction, rendered statistics).
std::vector<int> synth_corpus(std::size_t vocab_size, std::uint64_t seed, std::size_t n_tokens);

// Markov-only stream (no templates), used to measure the entropy floor.
std::vector<int> synth_markov_stream(const MarkovGrammar& grammar, std::uint64_t seed,
                                     std::size_t n_tokens);

}  // namespace tokencast::data
