#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "tokencast/data/series.hpp"
#include "tokencast/rin.hpp"

namespace tokencast::data {

enum class Trend { up, down, flat };
enum class Split { train, val, test };

const char* to_string(Trend t);
const char* to_string(Split s);
Split split_from_string(const std::string& s);

// Local statistics rendered into the prompt; computed from history only.
struct ContextStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double last = 0.0;
  Trend trend = Trend::flat;  // sign of the least-squares slope
};

ContextStats context_stats(std::span<const double> history);

// One channel-independent instance: history H, future P and its context.
struct TimeSeriesWindow {
  std::vector<double> history;
  std::vector<double> future;
  std::size_t channel = 0;
  std::size_t offset = 0;  // index of history[0] in the source series
  Split split = Split::train;
  ContextStats stats;
  rin::NormStats norm;  // fitted on history

  std::vector<double> full() const;
};

// Windows with history length `history_len` and horizon `horizon` starting at
// begin, begin+stride, ... and lying entirely inside [begin, end). Returns an
// empty vector (with a warning) when the range is too short.
std::vector<TimeSeriesWindow> make_windows(const Series& series, std::size_t history_len,
                                           std::size_t horizon, std::size_t stride,
                                           std::size_t begin, std::size_t end,
                                           Split split = Split::train);
std::vector<TimeSeriesWindow> make_windows(const Series& series, std::size_t history_len,
                                           std::size_t horizon, std::size_t stride);

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

struct SplitBounds {
  std::size_t train_end = 0;
  std::size_t val_end = 0;
  std::size_t length = 0;
};

SplitBounds split_bounds(std::size_t length, const SplitRatios& ratios);

struct DatasetManifest {
  std::string source_name;
  std::string source_digest;
  SplitRatios ratios;
  SplitBounds bounds;
  std::size_t stride = 1;
  std::size_t history_len = 96;
  std::size_t horizon = 24;
  std::size_t patch = 4;
  ZScoreStats zscore;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

struct PrepareOptions {
  SplitRatios ratios;
  std::size_t stride = 1;
  std::size_t history_len = 96;
  std::size_t horizon = 24;
  std::size_t patch = 4;
};

struct PreparedDataset {
  DatasetManifest manifest;
  Series standardized;
  std::vector<TimeSeriesWindow> train;
  std::vector<TimeSeriesWindow> val;
  std::vector<TimeSeriesWindow> test;
};

// Impute, split chronologically, z-score with train statistics and window
// each split separately.
PreparedDataset prepare(const RawSeries& raw, const PrepareOptions& options,
                        const std::string& source_digest);

// Window archive: <stem>.json manifest next to <stem>.bin holding, per
// window, history, future, mu and sigma as little-endian 64-bit floats.
void write_window_archive(const std::filesystem::path& json_path,
                          const std::vector<TimeSeriesWindow>& windows,
                          const std::string& config_digest);
std::vector<TimeSeriesWindow> read_window_archive(const std::filesystem::path& json_path);

}  // namespace tokencast::data
