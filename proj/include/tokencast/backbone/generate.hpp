#pragma once

#include <memory>
#include <span>
#include <vector>

#include "tokencast/backbone/lm.hpp"
#include "tokencast/core/random.hpp"

namespace tokencast::backbone {

struct SamplingPolicy {
  bool greedy = true;
  double temperature = 1.0;  // below kGreedyTemperature sampling is greedy
  std::size_t top_k = 0;     // 0 keeps every id

  static constexpr double kGreedyTemperature = 1e-6;
  static SamplingPolicy make_greedy() { return {}; }
  static SamplingPolicy make_sample(double temperature, std::size_t top_k = 0) {
    return {false, temperature, top_k};
  }
};

// Incremental (key/value cached) evaluation of a LanguageModel for
// generation. Holds a copy of the weights; the model may be discarded.
class InferenceEngine {
 public:
  explicit InferenceEngine(const LanguageModel& model);
  ~InferenceEngine();
  InferenceEngine(InferenceEngine&&) noexcept;

  struct State;
  class Cursor {
   public:
    Cursor();
    ~Cursor();
    Cursor(const Cursor&);
    Cursor& operator=(const Cursor&);
    Cursor(Cursor&&) noexcept;
    std::size_t length() const;
    // Next-token logits after the last consumed id.
    const std::vector<double>& logits() const;

   private:
    friend class InferenceEngine;
    std::unique_ptr<State> state_;
  };

  Cursor start(std::span<const int> prompt) const;
  void feed(Cursor& cursor, int id) const;

  std::size_t vocab_size() const;
  std::size_t max_seq_len() const;

 private:
  struct Weights;
  std::unique_ptr<Weights> w_;
};

// Chooses the next id from logits under a policy. Greedy ties go to the
// lowest id.
int choose_token(std::span<const double> logits, const SamplingPolicy& policy, core::Rng& rng);

// Continues from a cursor until stop_id is produced or max_new ids have been
// generated (or the context is full). The stop id is included.
std::vector<int> generate_from(const InferenceEngine& engine, InferenceEngine::Cursor cursor,
                               const SamplingPolicy& policy, std::size_t max_new, int stop_id,
                               core::Rng& rng);

std::vector<int> generate(const InferenceEngine& engine, std::span<const int> prompt,
                          const SamplingPolicy& policy, std::size_t max_new, int stop_id,
                          core::Rng& rng);

}  // namespace tokencast::backbone
