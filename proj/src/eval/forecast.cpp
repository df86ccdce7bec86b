#include "tokencast/eval/forecast.hpp"

#include <algorithm>
#include <cmath>

#include "tokencast/error.hpp"

namespace tokencast::eval {

using backbone::SamplingPolicy;

Forecaster::Forecaster(tokenizer::Tokenizer tokenizer, const backbone::LanguageModel& lm,
                       vocab::UnifiedVocab vocab, std::size_t words, vocab::SegmentToggles toggles,
                       std::size_t horizon)
    : tok_(std::move(tokenizer)),
      engine_(lm),
      vocab_(std::move(vocab)),
      words_(words),
      toggles_(toggles),
      horizon_(horizon) {
  if (vocab_.codes() != tok_.config().K) {
    throw ValidationError("vocabulary has " + std::to_string(vocab_.codes()) +
                          " temporal ids but the codebook has " + std::to_string(tok_.config().K));
  }
  if (lm.vocab_size() != vocab_.size()) {
    throw ValidationError("language model vocabulary " + std::to_string(lm.vocab_size()) +
                          " does not match the unified vocabulary " +
                          std::to_string(vocab_.size()) + "; run align first");
  }
  if (horizon_ == 0 || horizon_ % tok_.config().patch != 0) {
    throw ValidationError("horizon must be a positive multiple of the patch size");
  }
}

std::vector<int> Forecaster::history_codes(const data::TimeSeriesWindow& w) const {
  return tok_.series_to_tokens(w.history, w.norm);
}

std::vector<int> Forecaster::prompt_ids(const data::TimeSeriesWindow& w) const {
  return vocab::build_prompt(w.stats, history_codes(w), nullptr, vocab_, words_,
                             vocab::PromptMode::infer, toggles_, horizon_)
      .ids;
}

std::vector<int> repair_codes(std::vector<int> codes, std::size_t wanted) {
  if (codes.empty()) return codes;
  if (codes.size() > wanted) codes.resize(wanted);
  while (codes.size() < wanted) codes.push_back(codes.back());
  return codes;
}

Forecaster::Draw Forecaster::draw(const backbone::InferenceEngine::Cursor& cursor,
                                  const SamplingPolicy& policy, core::Rng& rng) const {
  const std::size_t wanted = future_tokens();
  const bool stochastic = !policy.greedy && policy.temperature >= SamplingPolicy::kGreedyTemperature &&
                          policy.top_k != 1;
  Draw d;
  vocab::ResponseTokens best;
  for (std::size_t attempt = 0; attempt <= kMaxRetries; ++attempt) {
    const auto gen = backbone::generate_from(engine_, cursor, policy, wanted + 4, vocab_.ts_end(), rng);
    const auto r = vocab::extract_response(gen, 0, vocab_);
    if (attempt == 0 || (r.opened && !r.codes.empty() && (best.codes.empty() || !best.opened))) {
      best = r;
    }
    if (r.opened && r.codes.size() == wanted) {
      best = r;
      break;
    }
    // Greedy decoding would repeat itself exactly.
    if (!stochastic) break;
    if (attempt < kMaxRetries) ++d.retries;
  }
  if (!best.opened || best.codes.empty()) {
    d.malformed = true;
    return d;
  }
  d.repaired = best.codes.size() != wanted;
  d.codes = repair_codes(best.codes, wanted);
  return d;
}

std::vector<double> Forecaster::decode_future(const data::TimeSeriesWindow& w,
                                              const std::vector<int>& history,
                                              const std::vector<int>& future) const {
  std::vector<int> ids = history;
  ids.insert(ids.end(), future.begin(), future.end());
  const auto full = tok_.tokens_to_series(ids, w.norm);
  const std::size_t n = future.size() * tok_.config().patch;
  return std::vector<double>(full.end() - static_cast<std::ptrdiff_t>(n), full.end());
}

Forecast Forecaster::forecast(const data::TimeSeriesWindow& w, const SamplingPolicy& policy,
                              std::uint64_t seed) const {
  const auto hist = history_codes(w);
  const auto prompt = vocab::build_prompt(w.stats, hist, nullptr, vocab_, words_,
                                          vocab::PromptMode::infer, toggles_, horizon_);
  core::Rng rng(seed);
  const auto cursor = engine_.start(prompt.ids);
  const Draw d = draw(cursor, policy, rng);
  Forecast f;
  f.repaired = d.repaired;
  f.malformed = d.malformed;
  f.retries = d.retries;
  f.codes = d.codes;
  f.point = d.malformed ? persistence(w, horizon_) : decode_future(w, hist, d.codes);
  return f;
}

Forecast Forecaster::forecast_intervals(const data::TimeSeriesWindow& w, double temperature,
                                        std::size_t samples, std::uint64_t seed,
                                        std::size_t top_k) const {
  const auto hist = history_codes(w);
  const auto prompt = vocab::build_prompt(w.stats, hist, nullptr, vocab_, words_,
                                          vocab::PromptMode::infer, toggles_, horizon_);
  const auto cursor = engine_.start(prompt.ids);
  core::Rng greedy_rng(seed);
  const Draw g = draw(cursor, SamplingPolicy::make_greedy(), greedy_rng);
  Forecast f;
  f.repaired = g.repaired;
  f.malformed = g.malformed;
  f.codes = g.codes;
  f.point = g.malformed ? persistence(w, horizon_) : decode_future(w, hist, g.codes);

  const auto policy = SamplingPolicy::make_sample(temperature, top_k);
  core::Rng base(seed ^ 0x5bd1e995ULL);
  for (std::size_t s = 0; s < samples; ++s) {
    core::Rng rng = base.fork(s);
    const Draw d = draw(cursor, policy, rng);
    if (d.malformed) continue;
    f.samples.push_back(decode_future(w, hist, d.codes));
  }
  const std::size_t h = horizon_;
  f.q10.resize(h);
  f.q25.resize(h);
  f.q75.resize(h);
  f.q90.resize(h);
  for (std::size_t t = 0; t < h; ++t) {
    std::vector<double> col;
    for (const auto& path : f.samples) col.push_back(path[t]);
    if (col.empty()) col.push_back(f.point[t]);
    f.q10[t] = quantile(col, 0.10);
    f.q25[t] = quantile(col, 0.25);
    f.q75[t] = quantile(col, 0.75);
    f.q90[t] = quantile(col, 0.90);
  }
  return f;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Metrics metrics(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size() || pred.empty()) {
    throw ValidationError("metrics: prediction has " + std::to_string(pred.size()) +
                          " values, truth has " + std::to_string(truth.size()));
  }
  Metrics m;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    m.mse += d * d;
    m.mae += std::abs(d);
  }
  m.mse /= static_cast<double>(pred.size());
  m.mae /= static_cast<double>(pred.size());
  return m;
}

std::vector<double> persistence(const data::TimeSeriesWindow& w, std::size_t horizon) {
  if (w.history.empty()) throw ValidationError("persistence needs a history");
  return std::vector<double>(horizon, w.history.back());
}

std::vector<double> seasonal_naive(const data::TimeSeriesWindow& w, std::size_t horizon,
                                   std::size_t period) {
  if (period == 0 || period > w.history.size()) {
    throw ValidationError("seasonal period " + std::to_string(period) +
                          " must be in [1, history length " + std::to_string(w.history.size()) +
                          "]");
  }
  std::vector<double> out(horizon);
  const std::size_t start = w.history.size() - period;
  for (std::size_t t = 0; t < horizon; ++t) out[t] = w.history[start + t % period];
  return out;
}

}  // namespace tokencast::eval
