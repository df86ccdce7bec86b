#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "tokencast/eval/report.hpp"

namespace tokencast::eval {

namespace {

constexpr double kWidth = 720.0, kHeight = 300.0, kMargin = 40.0;

std::string num(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

// Maps (step, value) to plot coordinates over fixed ranges.
struct Frame {
  double x0, x1, y0, y1;
  double x(double t) const { return kMargin + (t - x0) / (x1 - x0) * (kWidth - 2 * kMargin); }
  double y(double v) const {
    return kHeight - kMargin - (v - y0) / (y1 - y0) * (kHeight - 2 * kMargin);
  }
};

Frame frame_for(double x0, double x1, std::initializer_list<const std::vector<double>*> series) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto* s : series) {
    for (double v : *s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  return {x0, x1, lo - pad, hi + pad};
}

std::string header(const std::string& digest, const std::string& title) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  os << "<!-- config_digest=" << digest << " -->\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kMargin << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">" << title
     << "</text>\n";
  return os.str();
}

std::string polyline(const Frame& f, const std::vector<double>& v, double t0,
                     const std::string& color, const std::string& extra = "") {
  std::ostringstream os;
  os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"" << extra
     << " points=\"";
  for (std::size_t i = 0; i < v.size(); ++i) {
    os << (i ? " " : "") << num(f.x(t0 + static_cast<double>(i))) << "," << num(f.y(v[i]));
  }
  os << "\"/>\n";
  return os.str();
}

std::string band(const Frame& f, const std::vector<double>& lo, const std::vector<double>& hi,
                 double t0, const std::string& color, double opacity) {
  std::ostringstream os;
  os << "<polygon fill=\"" << color << "\" fill-opacity=\"" << opacity << "\" stroke=\"none\" points=\"";
  for (std::size_t i = 0; i < hi.size(); ++i) {
    os << num(f.x(t0 + static_cast<double>(i))) << "," << num(f.y(hi[i])) << " ";
  }
  for (std::size_t i = lo.size(); i-- > 0;) {
    os << num(f.x(t0 + static_cast<double>(i))) << "," << num(f.y(lo[i])) << (i ? " " : "");
  }
  os << "\"/>\n";
  return os.str();
}

std::string legend(const std::vector<std::pair<std::string, std::string>>& items) {
  std::ostringstream os;
  double x = kWidth - kMargin - 110.0 * static_cast<double>(items.size());
  for (const auto& [label, color] : items) {
    os << "<rect x=\"" << num(x) << "\" y=\"10\" width=\"12\" height=\"12\" fill=\"" << color
       << "\"/><text x=\"" << num(x + 16) << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"11\">"
       << label << "</text>\n";
    x += 110.0;
  }
  return os.str();
}

}  // namespace

std::string usage_heatmap_svg(const CodebookDiagnosis& d, const std::string& digest) {
  const double cell = 40.0;
  const double w = kMargin * 2 + cell * static_cast<double>(d.cols);
  const double h = kMargin * 2 + cell * static_cast<double>(d.rows);
  const std::size_t peak = d.counts.empty() ? 0 : *std::max_element(d.counts.begin(), d.counts.end());
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
  os << "<!-- config_digest=" << digest << " -->\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kMargin << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"13\">code usage, "
     << "utilization " << num(100.0 * d.utilization) << "%</text>\n";
  for (std::size_t k = 0; k < d.counts.size(); ++k) {
    const double share = peak ? static_cast<double>(d.counts[k]) / static_cast<double>(peak) : 0.0;
    const int shade = static_cast<int>(std::lround(255.0 * (1.0 - share)));
    const double x = kMargin + cell * static_cast<double>(k % d.cols);
    const double y = kMargin + cell * static_cast<double>(k / d.cols);
    os << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << cell - 2 << "\" height=\""
       << cell - 2 << "\" fill=\"rgb(" << shade << "," << shade << ",255)\"><title>code " << k << ": "
       << d.counts[k] << "</title></rect>\n";
    os << "<text x=\"" << num(x + 4) << "\" y=\"" << num(y + 14)
       << "\" font-family=\"sans-serif\" font-size=\"9\">" << k << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string reconstruction_svg(const tokenizer::Tokenizer& tok, const data::TimeSeriesWindow& w,
                               const std::string& digest) {
  const auto full = w.full();
  const auto ids = tok.series_to_tokens(full, w.norm);
  const auto recon = tok.tokens_to_series(ids, w.norm);
  const Frame f = frame_for(0.0, static_cast<double>(full.size() - 1), {&full, &recon});
  std::ostringstream os;
  os << header(digest, "reconstruction, window offset " + std::to_string(w.offset));
  os << legend({{"original", "#333333"}, {"decoded", "#d62728"}});
  os << polyline(f, full, 0.0, "#333333");
  os << polyline(f, recon, 0.0, "#d62728", " stroke-dasharray=\"4 2\"");
  os << "</svg>\n";
  return os.str();
}

std::string forecast_svg(const data::TimeSeriesWindow& w, const Forecast& fc,
                         const std::string& digest) {
  const std::size_t tail = std::min<std::size_t>(w.history.size(), 2 * w.future.size());
  const std::vector<double> hist(w.history.end() - static_cast<std::ptrdiff_t>(tail), w.history.end());
  const double t0 = static_cast<double>(tail);
  const bool bands = fc.q10.size() == fc.point.size() && !fc.point.empty();
  Frame f = frame_for(0.0, t0 + static_cast<double>(w.future.size()) - 1.0, {&hist, &w.future, &fc.point});
  if (bands) {
    f = frame_for(0.0, f.x1, {&hist, &w.future, &fc.point, &fc.q10, &fc.q90});
  }
  std::ostringstream os;
  os << header(digest, "forecast, window offset " + std::to_string(w.offset) +
                           (fc.malformed ? " (malformed, persistence shown)" : ""));
  if (bands) {
    os << legend({{"history", "#333333"}, {"truth", "#2ca02c"}, {"forecast", "#1f77b4"},
                  {"50%/80%", "#9ecae1"}});
    os << band(f, fc.q10, fc.q90, t0, "#1f77b4", 0.15);
    os << band(f, fc.q25, fc.q75, t0, "#1f77b4", 0.3);
  } else {
    os << legend({{"history", "#333333"}, {"truth", "#2ca02c"}, {"forecast", "#1f77b4"}});
  }
  os << polyline(f, hist, 0.0, "#333333");
  os << polyline(f, w.future, t0, "#2ca02c");
  os << polyline(f, fc.point, t0, "#1f77b4");
  os << "</svg>\n";
  return os.str();
}

}  // namespace tokencast::eval
