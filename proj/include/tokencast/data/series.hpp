#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tokencast::data {

// Possibly incomplete multichannel series as read from disk.
struct RawSeries {
  std::string name;
  std::vector<std::string> channel_names;
  // channels[c][t]; every channel has the same length.
  std::vector<std::vector<std::optional<double>>> channels;

  std::size_t length() const { return channels.empty() ? 0 : channels.front().size(); }
  std::size_t channel_count() const { return channels.size(); }
};

// Fully observed series.
struct Series {
  std::string name;
  std::vector<std::string> channel_names;
  std::vector<std::vector<double>> channels;

  std::size_t length() const { return channels.empty() ? 0 : channels.front().size(); }
  std::size_t channel_count() const { return channels.size(); }
};

struct CsvSchema {
  // Unset fields are detected: a header is present when the first row has a
  // non-numeric cell; a timestamp column is present when the first column of
  // the first data row is non-numeric.
  std::optional<bool> header;
  std::optional<bool> timestamp_column;
};

RawSeries load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
RawSeries parse_csv(const std::string& text, const CsvSchema& schema = {},
                    const std::string& name = "series");
void write_csv(const std::filesystem::path& path, const Series& series);

// Wraps a complete series as raw (every value observed).
RawSeries to_raw(const Series& series);

// Forward fill, then backward fill of leading gaps. Observed values are never
// changed. An all-missing channel is rejected.
Series impute(const RawSeries& series);

struct ZScoreStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population form, floored
};

inline constexpr double kZScoreFloor = 1e-5;

// Statistics over the first `count` time steps of each channel.
ZScoreStats fit_zscore(const Series& series, std::size_t count);
Series apply_zscore(const Series& series, const ZScoreStats& stats);
Series invert_zscore(const Series& series, const ZScoreStats& stats);

}  // namespace tokencast::data
