#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tokencast/core/tensor.hpp"
#include "tokencast/data/window.hpp"
#include "tokencast/vocab/words.hpp"

namespace tokencast::vocab {

inline constexpr const char* kPromptTemplateVersion = "tokencast-prompt-v1";

const std::vector<std::string>& default_specials();

// Word ids [0, W), temporal ids [W, W+K), special ids [W+K, W+K+S).
class UnifiedVocab {
 public:
  static constexpr std::size_t kDefaultMaxSize = 1 << 20;

  UnifiedVocab(std::size_t words, std::size_t codes,
               std::vector<std::string> specials = default_specials(),
               std::size_t max_size = kDefaultMaxSize);

  std::size_t words() const { return words_; }
  std::size_t codes() const { return codes_; }
  std::size_t specials() const { return specials_.size(); }
  std::size_t size() const { return words_ + codes_ + specials_.size(); }

  int temporal_id(std::size_t code) const;
  std::size_t code_index(int id) const;
  int special(const std::string& name) const;
  const std::string& special_name(int id) const;

  bool is_word(int id) const { return id >= 0 && static_cast<std::size_t>(id) < words_; }
  bool is_temporal(int id) const {
    return id >= 0 && static_cast<std::size_t>(id) >= words_ &&
           static_cast<std::size_t>(id) < words_ + codes_;
  }
  bool is_special(int id) const {
    return id >= 0 && static_cast<std::size_t>(id) >= words_ + codes_ &&
           static_cast<std::size_t>(id) < size();
  }

  // Layout plus the readable name of every id.
  nlohmann::json to_json(const WordTable& table) const;
  nlohmann::json layout_json() const;
  static UnifiedVocab from_layout(const nlohmann::json& j);

  int bos() const { return bos_; }
  int eos() const { return eos_; }
  int pad() const { return pad_; }
  int ts_start() const { return ts_start_; }
  int ts_end() const { return ts_end_; }
  int ctx_start() const { return ctx_start_; }
  int ctx_end() const { return ctx_end_; }
  int resp_start() const { return resp_start_; }

 private:
  std::size_t words_;
  std::size_t codes_;
  std::vector<std::string> specials_;
  int bos_, eos_, pad_, ts_start_, ts_end_, ctx_start_, ctx_end_, resp_start_;
};

enum class InitStrategy { mean, word_sample, random };
const char* to_string(InitStrategy s);
InitStrategy init_strategy_from_string(const std::string& s);

inline constexpr double kCovarianceShrinkage = 0.1;

// New embedding rows [count x d] initialized from the original word rows
// E_orig [W x d].
core::Tensor init_new_embeddings(const core::Tensor& original, InitStrategy strategy,
                                 std::size_t count, std::uint64_t seed);

struct EmbeddingMoments {
  std::vector<double> mean;
  std::vector<double> covariance;  // d x d, shrunk toward its diagonal
};
EmbeddingMoments embedding_moments(const core::Tensor& original,
                                   double shrinkage = kCovarianceShrinkage);

// Lower triangular L with L L^T = a for a symmetric positive semidefinite
// matrix; columns with a non-positive pivot are zero.
std::vector<double> psd_cholesky(const std::vector<double>& a, std::size_t n);

enum class PromptMode { align, finetune, infer };

struct SegmentToggles {
  bool general = true;  // domain and instruction words
  bool local = true;    // rendered statistics
};

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  std::size_t size() const { return end - begin; }
  bool empty() const { return begin == end; }
};

struct Prompt {
  std::vector<int> ids;
  // loss_mask[i]: token i is a supervised next-token target.
  std::vector<std::uint8_t> loss_mask;
  Span general, local, history, response;
  std::size_t supervised() const;
};

// Statistic words: min v max v mean v last v trend dir.
std::vector<int> render_stats(const data::ContextStats& stats, const WordTable& words);
std::vector<int> render_general(const WordTable& words, std::size_t horizon);

// history/future hold codebook indices; future is required unless mode is
// infer.
Prompt build_prompt(const data::ContextStats& stats, const std::vector<int>& history,
                    const std::vector<int>* future, const UnifiedVocab& vocab,
                    const WordTable& words, PromptMode mode, const SegmentToggles& toggles,
                    std::size_t horizon);

// Codebook indices between the first ts_start after `from` and the next
// ts_end (or the end of ids). `closed` is false when no ts_end was found.
struct ResponseTokens {
  std::vector<int> codes;
  bool opened = false;
  bool closed = false;
  std::size_t stray = 0;  // non-temporal tokens skipped inside the span
};
ResponseTokens extract_response(const std::vector<int>& ids, std::size_t from,
                                const UnifiedVocab& vocab);

}  // namespace tokencast::vocab
