#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tokencast/backbone/generate.hpp"
#include "tokencast/backbone/lm.hpp"
#include "tokencast/data/window.hpp"
#include "tokencast/tokenizer/tokenizer.hpp"
#include "tokencast/vocab/unified.hpp"

namespace tokencast::eval {

struct Forecast {
  std::vector<double> point;  // horizon values, standardized-series units
  std::vector<int> codes;     // future codebook indices used for decoding
  std::vector<std::vector<double>> samples;
  // Per-step empirical quantiles of the samples (empty without samples).
  std::vector<double> q10, q25, q75, q90;
  bool repaired = false;   // count fixed by truncation or padding
  bool malformed = false;  // no usable temporal span; point is persistence
  std::size_t retries = 0;
};

// Everything needed to turn a window into a forecast. Read-only after
// construction, so one instance serves many threads.
class Forecaster {
 public:
  Forecaster(tokenizer::Tokenizer tokenizer, const backbone::LanguageModel& lm,
             vocab::UnifiedVocab vocab, std::size_t words, vocab::SegmentToggles toggles,
             std::size_t horizon);

  static constexpr std::size_t kMaxRetries = 3;

  std::size_t horizon() const { return horizon_; }
  std::size_t future_tokens() const { return horizon_ / tok_.config().patch; }
  const tokenizer::Tokenizer& tokenizer() const { return tok_; }
  const vocab::UnifiedVocab& vocab() const { return vocab_; }

  std::vector<int> prompt_ids(const data::TimeSeriesWindow& w) const;
  std::vector<int> history_codes(const data::TimeSeriesWindow& w) const;

  // Greedy or sampled point forecast with the malformed-generation repair
  // rule applied.
  Forecast forecast(const data::TimeSeriesWindow& w, const backbone::SamplingPolicy& policy,
                    std::uint64_t seed) const;

  // Greedy point plus `samples` sampled paths at the given temperature; the
  // bands are per-step quantiles of the paths.
  Forecast forecast_intervals(const data::TimeSeriesWindow& w, double temperature,
                              std::size_t samples, std::uint64_t seed, std::size_t top_k = 0) const;

  // Decodes history codes followed by future codes and returns the future
  // part in the window's units.
  std::vector<double> decode_future(const data::TimeSeriesWindow& w,
                                    const std::vector<int>& history,
                                    const std::vector<int>& future) const;

 private:
  struct Draw {
    std::vector<int> codes;
    bool repaired = false;
    bool malformed = false;
    std::size_t retries = 0;
  };
  Draw draw(const backbone::InferenceEngine::Cursor& cursor, const backbone::SamplingPolicy& policy,
            core::Rng& rng) const;

  tokenizer::Tokenizer tok_;
  backbone::InferenceEngine engine_;
  vocab::UnifiedVocab vocab_;
  vocab::WordTable words_;
  vocab::SegmentToggles toggles_;
  std::size_t horizon_;
};

// Rule applied to an extracted code list: truncate long spans, pad short
// ones with the final code. Empty input stays empty.
std::vector<int> repair_codes(std::vector<int> codes, std::size_t wanted);

// Linear-interpolated empirical quantile (q in [0, 1]).
double quantile(std::vector<double> values, double q);

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
};
Metrics metrics(std::span<const double> pred, std::span<const double> truth);

std::vector<double> persistence(const data::TimeSeriesWindow& w, std::size_t horizon);
std::vector<double> seasonal_naive(const data::TimeSeriesWindow& w, std::size_t horizon,
                                   std::size_t period);

}  // namespace tokencast::eval
