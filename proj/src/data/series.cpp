#include "tokencast/data/series.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "tokencast/error.hpp"

namespace tokencast::data {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::optional<double> parse_number(const std::string& cell) {
  double v = 0.0;
  const char* b = cell.data();
  const char* e = cell.data() + cell.size();
  if (b != e && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || !std::isfinite(v)) return std::nullopt;
  return v;
}

bool row_has_text(const std::vector<std::string>& cells) {
  for (const auto& c : cells) {
    if (!c.empty() && !parse_number(c)) return true;
  }
  return false;
}

}  // namespace

RawSeries parse_csv(const std::string& text, const CsvSchema& schema, const std::string& name) {
  std::vector<std::vector<std::string>> rows;
  {
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (first && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      first = false;
      if (trim(line).empty()) continue;
      rows.push_back(split_row(line));
    }
  }
  if (rows.empty()) throw ValidationError(name + ": no data rows");

  const bool header = schema.header.value_or(row_has_text(rows.front()));
  const std::size_t first_data = header ? 1 : 0;
  if (rows.size() <= first_data) throw ValidationError(name + ": no data rows");

  const std::size_t width = rows[first_data].size();
  bool timestamp = false;
  if (schema.timestamp_column) {
    timestamp = *schema.timestamp_column;
  } else {
    const auto& c0 = rows[first_data].front();
    timestamp = !c0.empty() && !parse_number(c0);
  }
  const std::size_t skip = timestamp ? 1 : 0;
  if (width <= skip) throw ValidationError(name + ": no value columns");

  RawSeries out;
  out.name = name;
  out.channels.resize(width - skip);
  for (std::size_t c = skip; c < width; ++c) {
    if (header && c < rows.front().size() && !rows.front()[c].empty()) {
      out.channel_names.push_back(rows.front()[c]);
    } else {
      out.channel_names.push_back("ch" + std::to_string(c - skip));
    }
  }
  for (std::size_t r = first_data; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    if (cells.size() != width) {
      throw ValidationError(name + ": row " + std::to_string(r + 1) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(width));
    }
    for (std::size_t c = skip; c < width; ++c) {
      if (cells[c].empty()) {
        out.channels[c - skip].push_back(std::nullopt);
        continue;
      }
      auto v = parse_number(cells[c]);
      if (!v) {
        throw ValidationError(name + ": non-numeric cell '" + cells[c] + "' at row " +
                              std::to_string(r + 1) + ", column " + std::to_string(c + 1));
      }
      out.channels[c - skip].push_back(*v);
    }
  }
  return out;
}

RawSeries load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), schema, path.stem().string());
}

void write_csv(const std::filesystem::path& path, const Series& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "t";
  for (const auto& n : series.channel_names) out << ',' << n;
  out << '\n';
  out << std::setprecision(17);
  for (std::size_t t = 0; t < series.length(); ++t) {
    out << t;
    for (const auto& ch : series.channels) out << ',' << ch[t];
    out << '\n';
  }
}

RawSeries to_raw(const Series& series) {
  RawSeries raw;
  raw.name = series.name;
  raw.channel_names = series.channel_names;
  for (const auto& ch : series.channels) {
    raw.channels.emplace_back(ch.begin(), ch.end());
  }
  return raw;
}

Series impute(const RawSeries& series) {
  Series out;
  out.name = series.name;
  out.channel_names = series.channel_names;
  for (std::size_t c = 0; c < series.channel_count(); ++c) {
    const auto& in = series.channels[c];
    std::vector<double> filled(in.size());
    std::optional<double> last;
    std::optional<std::size_t> first_observed;
    for (std::size_t t = 0; t < in.size(); ++t) {
      if (in[t]) {
        last = in[t];
        if (!first_observed) first_observed = t;
      }
      filled[t] = last.value_or(0.0);
    }
    if (!first_observed) {
      const auto label = c < series.channel_names.size() ? series.channel_names[c]
                                                         : std::to_string(c);
      throw ValidationError(series.name + ": channel '" + label + "' has no observed values");
    }
    for (std::size_t t = 0; t < *first_observed; ++t) filled[t] = *in[*first_observed];
    out.channels.push_back(std::move(filled));
  }
  return out;
}

ZScoreStats fit_zscore(const Series& series, std::size_t count) {
  if (count == 0 || count > series.length()) {
    throw ValidationError("z-score fit over " + std::to_string(count) + " of " +
                          std::to_string(series.length()) + " steps");
  }
  ZScoreStats stats;
  for (const auto& ch : series.channels) {
    double mu = 0.0;
    for (std::size_t t = 0; t < count; ++t) mu += ch[t];
    mu /= static_cast<double>(count);
    double var = 0.0;
    for (std::size_t t = 0; t < count; ++t) var += (ch[t] - mu) * (ch[t] - mu);
    var /= static_cast<double>(count);
    stats.mean.push_back(mu);
    stats.stddev.push_back(std::max(std::sqrt(var), kZScoreFloor));
  }
  return stats;
}

Series apply_zscore(const Series& series, const ZScoreStats& stats) {
  Series out = series;
  for (std::size_t c = 0; c < out.channel_count(); ++c) {
    for (auto& v : out.channels[c]) v = (v - stats.mean.at(c)) / stats.stddev.at(c);
  }
  return out;
}

Series invert_zscore(const Series& series, const ZScoreStats& stats) {
  Series out = series;
  for (std::size_t c = 0; c < out.channel_count(); ++c) {
    for (auto& v : out.channels[c]) v = v * stats.stddev.at(c) + stats.mean.at(c);
  }
  return out;
}

}  // namespace tokencast::data
