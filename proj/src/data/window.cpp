#include "tokencast/data/window.hpp"

#include <algorithm>
#include <cmath>

#include "tokencast/error.hpp"
#include "tokencast/io/binary.hpp"
#include "tokencast/io/digest.hpp"
#include "tokencast/log.hpp"

namespace tokencast::data {

using nlohmann::json;

const char* to_string(Trend t) {
  switch (t) {
    case Trend::up: return "up";
    case Trend::down: return "down";
    default: return "flat";
  }
}

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "test";
  }
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split '" + s + "'");
}

namespace {

Trend trend_from_string(const std::string& s) {
  if (s == "up") return Trend::up;
  if (s == "down") return Trend::down;
  return Trend::flat;
}

}  // namespace

ContextStats context_stats(std::span<const double> h) {
  if (h.empty()) throw ValidationError("context statistics of an empty history");
  ContextStats s;
  s.min = *std::min_element(h.begin(), h.end());
  s.max = *std::max_element(h.begin(), h.end());
  double sum = 0.0;
  for (double v : h) sum += v;
  s.mean = sum / static_cast<double>(h.size());
  s.last = h.back();
  // Least-squares slope against t = 0..n-1.
  const double n = static_cast<double>(h.size());
  const double tbar = (n - 1.0) / 2.0;
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < h.size(); ++t) {
    num += (static_cast<double>(t) - tbar) * (h[t] - s.mean);
    den += (static_cast<double>(t) - tbar) * (static_cast<double>(t) - tbar);
  }
  const double slope = den > 0.0 ? num / den : 0.0;
  constexpr double kFlat = 1e-12;
  s.trend = slope > kFlat ? Trend::up : (slope < -kFlat ? Trend::down : Trend::flat);
  return s;
}

std::vector<double> TimeSeriesWindow::full() const {
  std::vector<double> x(history);
  x.insert(x.end(), future.begin(), future.end());
  return x;
}

std::vector<TimeSeriesWindow> make_windows(const Series& series, std::size_t history_len,
                                           std::size_t horizon, std::size_t stride,
                                           std::size_t begin, std::size_t end, Split split) {
  if (stride == 0) throw ValidationError("window stride must be >= 1");
  end = std::min(end, series.length());
  std::vector<TimeSeriesWindow> out;
  const std::size_t span = history_len + horizon;
  if (end < begin || end - begin < span) {
    log_warn(series.name, ": ", to_string(split), " range [", begin, ", ", end,
             ") is shorter than one window of ", span, " steps; no windows");
    return out;
  }
  for (std::size_t c = 0; c < series.channel_count(); ++c) {
    const auto& ch = series.channels[c];
    for (std::size_t off = begin; off + span <= end; off += stride) {
      TimeSeriesWindow w;
      w.history.assign(ch.begin() + off, ch.begin() + off + history_len);
      w.future.assign(ch.begin() + off + history_len, ch.begin() + off + span);
      w.channel = c;
      w.offset = off;
      w.split = split;
      w.stats = context_stats(w.history);
      w.norm = rin::fit(std::span<const double>(w.history));
      out.push_back(std::move(w));
    }
  }
  return out;
}

std::vector<TimeSeriesWindow> make_windows(const Series& series, std::size_t history_len,
                                           std::size_t horizon, std::size_t stride) {
  return make_windows(series, history_len, horizon, stride, 0, series.length());
}

SplitBounds split_bounds(std::size_t length, const SplitRatios& r) {
  const double total = r.train + r.val + r.test;
  if (r.train <= 0.0 || r.val < 0.0 || r.test < 0.0 || total <= 0.0) {
    throw ValidationError("invalid split ratios");
  }
  SplitBounds b;
  b.length = length;
  // The epsilon keeps 0.7 + 0.1 of 600 at 480 rather than 479.
  const auto cut = [&](double frac) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(length) * frac / total + 1e-9));
  };
  b.train_end = cut(r.train);
  b.val_end = cut(r.train + r.val);
  return b;
}

json DatasetManifest::to_json() const {
  return json{{"format", "tokencast-dataset-manifest"},
              {"version", 1},
              {"source_name", source_name},
              {"source_digest", source_digest},
              {"split_ratios", {{"train", ratios.train}, {"val", ratios.val}, {"test", ratios.test}}},
              {"split_bounds",
               {{"train_end", bounds.train_end}, {"val_end", bounds.val_end}, {"length", bounds.length}}},
              {"stride", stride},
              {"history_len", history_len},
              {"horizon", horizon},
              {"patch", patch},
              {"zscore", {{"mean", zscore.mean}, {"stddev", zscore.stddev}}}};
}

DatasetManifest DatasetManifest::from_json(const json& j) {
  if (j.value("format", "") != "tokencast-dataset-manifest") {
    throw ValidationError("not a dataset manifest");
  }
  DatasetManifest m;
  m.source_name = j.at("source_name").get<std::string>();
  m.source_digest = j.at("source_digest").get<std::string>();
  m.ratios = {j.at("split_ratios").at("train").get<double>(),
              j.at("split_ratios").at("val").get<double>(),
              j.at("split_ratios").at("test").get<double>()};
  m.bounds = {j.at("split_bounds").at("train_end").get<std::size_t>(),
              j.at("split_bounds").at("val_end").get<std::size_t>(),
              j.at("split_bounds").at("length").get<std::size_t>()};
  m.stride = j.at("stride").get<std::size_t>();
  m.history_len = j.at("history_len").get<std::size_t>();
  m.horizon = j.at("horizon").get<std::size_t>();
  m.patch = j.at("patch").get<std::size_t>();
  m.zscore.mean = j.at("zscore").at("mean").get<std::vector<double>>();
  m.zscore.stddev = j.at("zscore").at("stddev").get<std::vector<double>>();
  return m;
}

PreparedDataset prepare(const RawSeries& raw, const PrepareOptions& opt,
                        const std::string& source_digest) {
  if (opt.patch == 0 || opt.history_len % opt.patch != 0 || opt.horizon % opt.patch != 0) {
    throw ValidationError("history length " + std::to_string(opt.history_len) + " and horizon " +
                          std::to_string(opt.horizon) + " must be multiples of patch " +
                          std::to_string(opt.patch));
  }
  PreparedDataset out;
  Series complete = impute(raw);
  auto& m = out.manifest;
  m.source_name = raw.name;
  m.source_digest = source_digest;
  m.ratios = opt.ratios;
  m.bounds = split_bounds(complete.length(), opt.ratios);
  m.stride = opt.stride;
  m.history_len = opt.history_len;
  m.horizon = opt.horizon;
  m.patch = opt.patch;
  m.zscore = fit_zscore(complete, m.bounds.train_end);
  out.standardized = apply_zscore(complete, m.zscore);
  const auto& s = out.standardized;
  out.train = make_windows(s, opt.history_len, opt.horizon, opt.stride, 0, m.bounds.train_end,
                           Split::train);
  out.val = make_windows(s, opt.history_len, opt.horizon, opt.stride, m.bounds.train_end,
                         m.bounds.val_end, Split::val);
  out.test = make_windows(s, opt.history_len, opt.horizon, opt.stride, m.bounds.val_end,
                          m.bounds.length, Split::test);
  return out;
}

void write_window_archive(const std::filesystem::path& json_path,
                          const std::vector<TimeSeriesWindow>& windows,
                          const std::string& config_digest) {
  auto bin_path = json_path;
  bin_path.replace_extension(".bin");
  std::string payload;
  json entries = json::array();
  std::size_t history_len = windows.empty() ? 0 : windows.front().history.size();
  std::size_t horizon = windows.empty() ? 0 : windows.front().future.size();
  for (const auto& w : windows) {
    if (w.history.size() != history_len || w.future.size() != horizon) {
      throw ValidationError("window archive requires uniform window lengths");
    }
    entries.push_back({{"split", to_string(w.split)},
                       {"channel", w.channel},
                       {"offset", w.offset},
                       {"payload_offset", payload.size()},
                       {"stats",
                        {{"min", w.stats.min},
                         {"max", w.stats.max},
                         {"mean", w.stats.mean},
                         {"last", w.stats.last},
                         {"trend", to_string(w.stats.trend)}}}});
    io::append_f64(payload, w.history);
    io::append_f64(payload, w.future);
    const double norm[2] = {w.norm.mu.at(0), w.norm.sigma.at(0)};
    io::append_f64(payload, norm);
  }
  json j{{"format", "tokencast-windows"},
         {"version", 1},
         {"config_digest", config_digest},
         {"history_len", history_len},
         {"horizon", horizon},
         {"count", windows.size()},
         {"payload", bin_path.filename().string()},
         {"payload_bytes", payload.size()},
         {"payload_sha256", io::sha256_hex(payload)},
         {"windows", entries}};
  io::write_file(bin_path, payload);
  io::write_file(json_path, j.dump(2) + "\n");
}

std::vector<TimeSeriesWindow> read_window_archive(const std::filesystem::path& json_path) {
  const json j = json::parse(io::read_file(json_path));
  if (j.value("format", "") != "tokencast-windows") {
    throw ValidationError(json_path.string() + ": not a window archive");
  }
  const auto bin_path = json_path.parent_path() / j.at("payload").get<std::string>();
  const std::string payload = io::read_file(bin_path);
  if (payload.size() != j.at("payload_bytes").get<std::size_t>()) {
    throw ValidationError(bin_path.string() + ": payload length mismatch");
  }
  const auto hl = j.at("history_len").get<std::size_t>();
  const auto hz = j.at("horizon").get<std::size_t>();
  const std::size_t record = (hl + hz + 2) * sizeof(double);
  std::vector<TimeSeriesWindow> out;
  for (const auto& e : j.at("windows")) {
    const auto at = e.at("payload_offset").get<std::size_t>();
    if (at + record > payload.size()) throw ValidationError("window payload truncated");
    TimeSeriesWindow w;
    w.history = io::read_f64(payload, at, hl);
    w.future = io::read_f64(payload, at + hl * sizeof(double), hz);
    auto norm = io::read_f64(payload, at + (hl + hz) * sizeof(double), 2);
    w.norm = {{norm[0]}, {norm[1]}};
    w.channel = e.at("channel").get<std::size_t>();
    w.offset = e.at("offset").get<std::size_t>();
    w.split = split_from_string(e.at("split").get<std::string>());
    const auto& s = e.at("stats");
    w.stats = {s.at("min").get<double>(), s.at("max").get<double>(), s.at("mean").get<double>(),
               s.at("last").get<double>(), trend_from_string(s.at("trend").get<std::string>())};
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace tokencast::data
