#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "tokencast/backbone/generate.hpp"
#include "tokencast/backbone/lm.hpp"
#include "tokencast/data/synth.hpp"
#include "tokencast/data/window.hpp"
#include "tokencast/tokenizer/tokenizer.hpp"
#include "tokencast/vocab/unified.hpp"

namespace tokencast::pipeline {

struct DataConfig {
  std::string source = "synth";  // "synth" or "csv"
  std::string csv_path;
  data::SynthKind synth_kind = data::SynthKind::seasonal_trend;
  data::SynthParams synth;
  data::SplitRatios ratios;
  std::size_t stride = 1;
  std::size_t history_len = 96;
  std::vector<std::size_t> horizons{24};
};

struct CorpusConfig {
  std::size_t words = 256;
  std::size_t tokens = 200000;
  std::size_t seq_len = 64;
  std::size_t val_sequences = 64;
};

struct PromptConfig {
  vocab::InitStrategy init = vocab::InitStrategy::mean;
  vocab::SegmentToggles toggles;
  // Every n-th validation window becomes a validation prompt.
  std::size_t val_stride = 4;
};

struct ForecastConfig {
  std::string policy = "greedy";  // greedy | sample
  double temperature = 1.0;
  std::size_t top_k = 0;
  std::size_t samples = 100;
  std::vector<double> interval_temperatures{1.0};
  std::size_t seasonal_period = 24;
  // Every n-th test window is evaluated; max_windows caps the count (0 = all).
  std::size_t window_stride = 3;
  std::size_t max_windows = 0;
  // Windows drawn as SVG overlays.
  std::size_t plots = 3;

  backbone::SamplingPolicy sampling() const;
};

struct RunConfig {
  std::uint64_t seed = 7;
  DataConfig data;
  tokenizer::TokenizerConfig tokenizer;
  tokenizer::TrainOptions tokenizer_train;
  CorpusConfig corpus;
  backbone::BackboneConfig backbone;
  backbone::TrainPlan pretrain = backbone::TrainPlan::pretrain_defaults();
  backbone::TrainPlan align = backbone::TrainPlan::align_defaults();
  backbone::TrainPlan finetune = backbone::TrainPlan::finetune_defaults();
  PromptConfig prompt;
  ForecastConfig forecast;

  // Stage seeds are derived from the run seed.
  std::uint64_t stage_seed(const std::string& stage) const;

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys take defaults; unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  // SHA-256 of the canonical JSON.
  std::string digest() const;
};

// Applies "a.b.c=value" overrides; the value is parsed as JSON when possible
// and kept as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

// Length of the infer prompt plus response for a horizon.
std::size_t sequence_length(const RunConfig& cfg, std::size_t horizon);

}  // namespace tokencast::pipeline
