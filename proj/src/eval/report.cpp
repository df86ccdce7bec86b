#include "tokencast/eval/report.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "tokencast/core/parallel.hpp"
#include "tokencast/error.hpp"
#include "tokencast/io/binary.hpp"

namespace tokencast::eval {

using nlohmann::json;

std::uint64_t window_seed(std::uint64_t seed, std::size_t index) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

struct WindowResult {
  Forecast point;
  Metrics model, persistence, seasonal;
  std::vector<Forecast> bands;  // one per interval temperature
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

EvalReport evaluate(const Forecaster& fc, const std::vector<data::TimeSeriesWindow>& windows,
                    const EvalOptions& opt, std::vector<Forecast>* forecasts) {
  const std::size_t h = fc.horizon();
  std::vector<WindowResult> results(windows.size());
  core::parallel_for(windows.size(), [&](std::size_t i) {
    const auto& w = windows[i];
    if (w.future.size() != h) {
      throw ValidationError("window future length " + std::to_string(w.future.size()) +
                            " does not match the forecaster horizon " + std::to_string(h));
    }
    auto& r = results[i];
    const std::uint64_t seed = window_seed(opt.seed, i);
    r.point = fc.forecast(w, opt.policy, seed);
    r.model = metrics(r.point.point, w.future);
    r.persistence = metrics(persistence(w, h), w.future);
    r.seasonal = metrics(seasonal_naive(w, h, opt.seasonal_period), w.future);
    for (std::size_t t = 0; t < opt.interval_temperatures.size(); ++t) {
      r.bands.push_back(fc.forecast_intervals(w, opt.interval_temperatures[t], opt.samples,
                                              window_seed(seed, t), opt.top_k));
    }
  });

  EvalReport rep;
  rep.horizon = h;
  rep.windows = windows.size();
  rep.mse_per_step.assign(h, 0.0);
  rep.mae_per_step.assign(h, 0.0);
  rep.persistence_mse_per_step.assign(h, 0.0);
  rep.seasonal_mse_per_step.assign(h, 0.0);
  rep.intervals.resize(opt.interval_temperatures.size());
  for (std::size_t t = 0; t < rep.intervals.size(); ++t) {
    rep.intervals[t].temperature = opt.interval_temperatures[t];
  }
  if (windows.empty()) return rep;

  const auto persist_h = [&](const data::TimeSeriesWindow& w) { return w.history.back(); };
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    const auto& r = results[i];
    const auto seasonal = seasonal_naive(w, h, opt.seasonal_period);
    for (std::size_t s = 0; s < h; ++s) {
      const double d = r.point.point[s] - w.future[s];
      rep.mse_per_step[s] += d * d;
      rep.mae_per_step[s] += std::abs(d);
      const double dp = persist_h(w) - w.future[s];
      rep.persistence_mse_per_step[s] += dp * dp;
      const double ds = seasonal[s] - w.future[s];
      rep.seasonal_mse_per_step[s] += ds * ds;
    }
    rep.model.mse += r.model.mse;
    rep.model.mae += r.model.mae;
    rep.persistence.mse += r.persistence.mse;
    rep.persistence.mae += r.persistence.mae;
    rep.seasonal.mse += r.seasonal.mse;
    rep.seasonal.mae += r.seasonal.mae;
    rep.malformed += r.point.malformed;
    rep.repaired += r.point.repaired;
    rep.retries += r.point.retries;
    for (std::size_t t = 0; t < r.bands.size(); ++t) {
      const auto& b = r.bands[t];
      auto& st = rep.intervals[t];
      std::vector<double> mean(h, 0.0);
      for (const auto& path : b.samples) {
        for (std::size_t s = 0; s < h; ++s) mean[s] += path[s] / static_cast<double>(b.samples.size());
      }
      if (b.samples.empty()) mean = b.point;
      st.sample_mean_mse += metrics(mean, w.future).mse;
      for (std::size_t s = 0; s < h; ++s) {
        const double y = w.future[s];
        st.coverage50 += (y >= b.q25[s] && y <= b.q75[s]) ? 1.0 : 0.0;
        st.coverage80 += (y >= b.q10[s] && y <= b.q90[s]) ? 1.0 : 0.0;
        st.width50 += b.q75[s] - b.q25[s];
        st.width80 += b.q90[s] - b.q10[s];
      }
    }
  }
  const double n = static_cast<double>(windows.size());
  const double points = n * static_cast<double>(h);
  for (std::size_t s = 0; s < h; ++s) {
    rep.mse_per_step[s] /= n;
    rep.mae_per_step[s] /= n;
    rep.persistence_mse_per_step[s] /= n;
    rep.seasonal_mse_per_step[s] /= n;
  }
  for (Metrics* m : {&rep.model, &rep.persistence, &rep.seasonal}) {
    m->mse /= n;
    m->mae /= n;
  }
  for (auto& st : rep.intervals) {
    st.coverage50 /= points;
    st.coverage80 /= points;
    st.width50 /= points;
    st.width80 /= points;
    st.sample_mean_mse /= n;
  }
  const auto recon = tokenizer::evaluate_reconstruction(fc.tokenizer(), windows);
  rep.recon_mse = recon.mse;
  rep.utilization = recon.utilization;

  if (forecasts) {
    forecasts->clear();
    for (auto& r : results) {
      Forecast f = std::move(r.point);
      if (!r.bands.empty()) {
        auto& b = r.bands.front();
        f.q10 = std::move(b.q10);
        f.q25 = std::move(b.q25);
        f.q75 = std::move(b.q75);
        f.q90 = std::move(b.q90);
      }
      forecasts->push_back(std::move(f));
    }
  }
  return rep;
}

json EvalReport::to_json() const {
  json iv = json::array();
  for (const auto& s : intervals) {
    iv.push_back({{"temperature", s.temperature},
                  {"coverage50", s.coverage50},
                  {"coverage80", s.coverage80},
                  {"width50", s.width50},
                  {"width80", s.width80},
                  {"sample_mean_mse", s.sample_mean_mse}});
  }
  return json{{"format", "tokencast-eval-report"},
              {"config_digest", config_digest},
              {"horizon", horizon},
              {"windows", windows},
              {"mse", model.mse},
              {"mae", model.mae},
              {"mse_per_step", mse_per_step},
              {"mae_per_step", mae_per_step},
              {"baselines",
               {{"persistence", {{"mse", persistence.mse}, {"mae", persistence.mae}}},
                {"seasonal_naive", {{"mse", seasonal.mse}, {"mae", seasonal.mae}}}}},
              {"intervals", iv},
              {"codebook_utilization", utilization},
              {"recon_mse", recon_mse},
              {"malformed", malformed},
              {"repaired", repaired},
              {"retries", retries}};
}

void EvalReport::write(const std::filesystem::path& dir) const {
  io::write_file(dir / "report.json", to_json().dump(2) + "\n");
  std::ostringstream csv;
  csv << "# config_digest=" << config_digest << "\n";
  csv << "metric,value\n";
  csv << "windows," << windows << "\n";
  csv << "horizon," << horizon << "\n";
  csv << "mse," << fmt(model.mse) << "\n";
  csv << "mae," << fmt(model.mae) << "\n";
  csv << "persistence_mse," << fmt(persistence.mse) << "\n";
  csv << "persistence_mae," << fmt(persistence.mae) << "\n";
  csv << "seasonal_naive_mse," << fmt(seasonal.mse) << "\n";
  csv << "seasonal_naive_mae," << fmt(seasonal.mae) << "\n";
  for (const auto& s : intervals) {
    const std::string tag = "_t" + fmt(s.temperature);
    csv << "coverage50" << tag << "," << fmt(s.coverage50) << "\n";
    csv << "coverage80" << tag << "," << fmt(s.coverage80) << "\n";
    csv << "width50" << tag << "," << fmt(s.width50) << "\n";
    csv << "width80" << tag << "," << fmt(s.width80) << "\n";
    csv << "sample_mean_mse" << tag << "," << fmt(s.sample_mean_mse) << "\n";
  }
  csv << "codebook_utilization," << fmt(utilization) << "\n";
  csv << "recon_mse," << fmt(recon_mse) << "\n";
  csv << "malformed," << malformed << "\n";
  csv << "repaired," << repaired << "\n";
  csv << "retries," << retries << "\n";
  io::write_file(dir / "report.csv", csv.str());

  std::ostringstream ps;
  ps << "# config_digest=" << config_digest << "\n";
  ps << "step,mse,mae,persistence_mse,seasonal_naive_mse\n";
  for (std::size_t s = 0; s < mse_per_step.size(); ++s) {
    ps << s + 1 << "," << fmt(mse_per_step[s]) << "," << fmt(mae_per_step[s]) << ","
       << fmt(persistence_mse_per_step[s]) << "," << fmt(seasonal_mse_per_step[s]) << "\n";
  }
  io::write_file(dir / "per_step.csv", ps.str());
}

std::pair<std::size_t, std::size_t> heatmap_grid(std::size_t k) {
  std::size_t rows = 1;
  for (std::size_t r = 1; r * r <= k; ++r) {
    if (k % r == 0) rows = r;
  }
  return {rows, k / rows};
}

CodebookDiagnosis diagnose_codebook(const tokenizer::Tokenizer& tok,
                                    const std::vector<data::TimeSeriesWindow>& windows) {
  CodebookDiagnosis d;
  const auto stats = tokenizer::evaluate_reconstruction(tok, windows);
  d.counts = stats.usage;
  for (auto c : d.counts) d.total += c;
  d.utilization = stats.utilization;
  std::tie(d.rows, d.cols) = heatmap_grid(d.counts.size());
  return d;
}

void write_usage_csv(const std::filesystem::path& path, const CodebookDiagnosis& d,
                     const std::string& config_digest) {
  std::ostringstream os;
  os << "# config_digest=" << config_digest << "\n";
  os << "# utilization=" << fmt(d.utilization) << "\n";
  os << "code,count,fraction\n";
  for (std::size_t k = 0; k < d.counts.size(); ++k) {
    const double frac = d.total ? static_cast<double>(d.counts[k]) / static_cast<double>(d.total) : 0.0;
    os << k << "," << d.counts[k] << "," << fmt(frac) << "\n";
  }
  io::write_file(path, os.str());
}

}  // namespace tokencast::eval
