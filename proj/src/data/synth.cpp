#include "tokencast/data/synth.hpp"

#include <algorithm>
#include <cmath>

#include "tokencast/error.hpp"
#include "tokencast/vocab/words.hpp"

namespace tokencast::data {

const char* to_string(SynthKind k) {
  switch (k) {
    case SynthKind::sine_mixture: return "sine-mixture";
    case SynthKind::seasonal_trend: return "seasonal-trend";
    default: return "ar1";
  }
}

SynthKind synth_kind_from_string(const std::string& s) {
  if (s == "sine-mixture") return SynthKind::sine_mixture;
  if (s == "seasonal-trend") return SynthKind::seasonal_trend;
  if (s == "ar1") return SynthKind::ar1;
  throw ValidationError("unknown synthetic kind '" + s +
                        "' (expected sine-mixture, seasonal-trend or ar1)");
}

RawSeries synth_series(SynthKind kind, const SynthParams& p, std::uint64_t seed) {
  if (p.length == 0 || p.channels == 0) throw ValidationError("synthetic series must be non-empty");
  core::Rng rng(seed);
  Series s;
  s.name = to_string(kind);
  for (std::size_t c = 0; c < p.channels; ++c) {
    s.channel_names.push_back("ch" + std::to_string(c));
    const double shift = 2.0 * M_PI * static_cast<double>(c) / static_cast<double>(p.channels);
    std::vector<double> x(p.length);
    double prev = 0.0;
    for (std::size_t i = 0; i < p.length; ++i) {
      const double t = static_cast<double>(i);
      double v = 0.0;
      switch (kind) {
        case SynthKind::sine_mixture:
          for (const auto& sc : p.sines) {
            v += sc.amplitude * std::sin(2.0 * M_PI * sc.frequency * t + sc.phase + shift);
          }
          break;
        case SynthKind::seasonal_trend:
          v = p.level + p.slope * t + p.amplitude * std::sin(2.0 * M_PI * t / p.period + shift) +
              p.harmonic * std::sin(4.0 * M_PI * t / p.period + 1.0 + shift);
          break;
        case SynthKind::ar1:
          v = p.rho * prev + p.sigma * rng.normal();
          prev = v;
          break;
      }
      if (kind != SynthKind::ar1 && p.noise > 0.0) v += p.noise * rng.normal();
      x[i] = v;
    }
    s.channels.push_back(std::move(x));
  }
  return to_raw(s);
}

MarkovGrammar::MarkovGrammar(std::size_t vocab_size, std::uint64_t seed) {
  if (vocab_size < 32) {
    throw ValidationError("Markov grammar needs at least 32 words, got " +
                          std::to_string(vocab_size));
  }
  core::Rng rng(seed);
  successors_.resize(vocab_size);
  for (auto& succ : successors_) {
    for (std::size_t j = 0; j < succ.size(); ++j) {
      int cand;
      do {
        cand = static_cast<int>(rng.index(vocab_size));
      } while (std::find(succ.begin(), succ.begin() + j, cand) != succ.begin() + j);
      succ[j] = cand;
    }
  }
}

int MarkovGrammar::sample(int prev2, int prev1, core::Rng& rng) const {
  const auto& succ = successors_.at(static_cast<std::size_t>(prev1));
  const std::size_t rot = static_cast<std::size_t>(prev2) % 4;
  double u = rng.uniform();
  for (std::size_t j = 0; j < 4; ++j) {
    u -= kWeights[(j + rot) % 4];
    if (u < 0.0) return succ[j];
  }
  return succ[3];
}

double MarkovGrammar::probability(int prev2, int prev1, int next) const {
  const auto& succ = successors_.at(static_cast<std::size_t>(prev1));
  const std::size_t rot = static_cast<std::size_t>(prev2) % 4;
  for (std::size_t j = 0; j < 4; ++j) {
    if (succ[j] == next) return kWeights[(j + rot) % 4];
  }
  return 0.0;
}

double MarkovGrammar::conditional_entropy() const {
  double h = 0.0;
  for (double w : kWeights) h -= w * std::log(w);
  return h;
}

namespace {

void append(std::vector<int>& out, const std::vector<int>& ids) {
  out.insert(out.end(), ids.begin(), ids.end());
}

void template_sentence(const vocab::WordTable& words, core::Rng& rng, std::vector<int>& out) {
  static constexpr unsigned long kHorizons[] = {24, 48, 96, 192};
  switch (rng.index(3)) {
    case 0:
      append(out, words.encode("domain synthetic seasonal series"));
      break;
    case 1:
      append(out, words.encode("task forecast next"));
      append(out, vocab::encode_integer(words, kHorizons[rng.index(4)]));
      append(out, words.encode("steps"));
      break;
    default: {
      for (const char* name : {"min", "max", "mean", "last"}) {
        out.push_back(words.id(name));
        append(out, vocab::encode_decimal(words, rng.uniform(-3.0, 3.0)));
      }
      static constexpr const char* kTrends[] = {"up", "down", "flat"};
      out.push_back(words.id("trend"));
      out.push_back(words.id(kTrends[rng.index(3)]));
    }
  }
}

}  // namespace

std::vector<int> synth_markov_stream(const MarkovGrammar& grammar, std::uint64_t seed,
                                     std::size_t n_tokens) {
  core::Rng rng(seed);
  const std::size_t w = grammar.vocab_size();
  std::vector<int> out;
  out.reserve(n_tokens);
  int a = static_cast<int>(rng.index(w)), b = static_cast<int>(rng.index(w));
  while (out.size() < n_tokens) {
    const int c = grammar.sample(a, b, rng);
    out.push_back(c);
    a = b;
    b = c;
  }
  return out;
}

std::vector<int> synth_corpus(std::size_t vocab_size, std::uint64_t seed, std::size_t n_tokens) {
  const vocab::WordTable words(vocab_size);
  const MarkovGrammar grammar(vocab_size, seed);
  core::Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<int> out;
  out.reserve(n_tokens + 64);
  while (out.size() < n_tokens) {
    if (rng.uniform() < 0.25) {
      template_sentence(words, rng, out);
      continue;
    }
    const std::size_t run = 8 + rng.index(25);
    int a = static_cast<int>(rng.index(vocab_size)), b = static_cast<int>(rng.index(vocab_size));
    out.push_back(a);
    out.push_back(b);
    for (std::size_t i = 2; i < run; ++i) {
      const int c = grammar.sample(a, b, rng);
      out.push_back(c);
      a = b;
      b = c;
    }
  }
  out.resize(n_tokens);
  return out;
}

}  // namespace tokencast::data
