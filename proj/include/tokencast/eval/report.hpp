#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "tokencast/eval/forecast.hpp"

namespace tokencast::eval {

struct IntervalStats {
  double temperature = 1.0;
  double coverage50 = 0.0;  // truth inside [q25, q75]
  double coverage80 = 0.0;  // truth inside [q10, q90]
  double width50 = 0.0;
  double width80 = 0.0;
  double sample_mean_mse = 0.0;  // mse of the per-step mean of the sampled paths
};

struct EvalOptions {
  backbone::SamplingPolicy policy = backbone::SamplingPolicy::make_greedy();
  std::size_t seasonal_period = 24;
  std::vector<double> interval_temperatures;
  std::size_t samples = 100;
  std::size_t top_k = 0;
  std::uint64_t seed = 0;
};

struct EvalReport {
  std::string config_digest;
  std::size_t horizon = 0;
  std::size_t windows = 0;
  // Means over windows for each forecast step, and over everything.
  std::vector<double> mse_per_step, mae_per_step;
  std::vector<double> persistence_mse_per_step, seasonal_mse_per_step;
  Metrics model, persistence, seasonal;
  std::vector<IntervalStats> intervals;
  double utilization = 0.0;
  double recon_mse = 0.0;
  std::size_t malformed = 0;
  std::size_t repaired = 0;
  std::size_t retries = 0;

  nlohmann::json to_json() const;
  // report.json, report.csv (metric,value) and per_step.csv.
  void write(const std::filesystem::path& dir) const;
};

// Seed used for window i of an evaluation.
std::uint64_t window_seed(std::uint64_t seed, std::size_t index);

// Forecasts every window in parallel and aggregates in window order. With
// interval temperatures, bands are drawn for each temperature. When
// forecasts is given, it receives the point forecast of each window (with
// bands from the first temperature).
EvalReport evaluate(const Forecaster& forecaster, const std::vector<data::TimeSeriesWindow>& windows,
                    const EvalOptions& options, std::vector<Forecast>* forecasts = nullptr);

struct CodebookDiagnosis {
  std::vector<std::size_t> counts;
  std::size_t total = 0;
  double utilization = 0.0;
  std::size_t rows = 0, cols = 0;  // heatmap grid
};

// Per-code assignment counts of the windows' tokens (history and future).
CodebookDiagnosis diagnose_codebook(const tokenizer::Tokenizer& tok,
                                    const std::vector<data::TimeSeriesWindow>& windows);
// Grid closest to square: rows is the largest divisor of K not above sqrt(K).
std::pair<std::size_t, std::size_t> heatmap_grid(std::size_t k);

void write_usage_csv(const std::filesystem::path& path, const CodebookDiagnosis& d,
                     const std::string& config_digest);
std::string usage_heatmap_svg(const CodebookDiagnosis& d, const std::string& config_digest);
// Original and reconstructed full windows.
std::string reconstruction_svg(const tokenizer::Tokenizer& tok, const data::TimeSeriesWindow& w,
                               const std::string& config_digest);
// History tail, truth, point forecast and the 50%/80% bands when present.
std::string forecast_svg(const data::TimeSeriesWindow& w, const Forecast& f,
                         const std::string& config_digest);

}  // namespace tokencast::eval
