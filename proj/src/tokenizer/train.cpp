#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "tokencast/core/adam.hpp"
#include "tokencast/core/parallel.hpp"
#include "tokencast/error.hpp"
#include "tokencast/io/binary.hpp"
#include "tokencast/log.hpp"
#include "tokencast/tokenizer/tokenizer.hpp"

namespace tokencast::tokenizer {

using namespace tokencast::core;

Batch make_batch(const std::vector<data::TimeSeriesWindow>& windows,
                 std::span<const std::size_t> indices) {
  if (indices.empty()) throw ValidationError("empty tokenizer batch");
  const std::size_t len = windows.at(indices[0]).history.size() + windows[indices[0]].future.size();
  std::vector<double> x;
  x.reserve(indices.size() * len);
  Batch b;
  for (std::size_t i : indices) {
    const auto& w = windows.at(i);
    const auto full = w.full();
    if (full.size() != len) throw ValidationError("tokenizer batch mixes window lengths");
    const auto norm = rin::normalize(full, w.norm);
    x.insert(x.end(), norm.begin(), norm.end());
    b.weights.push_back(w.norm.sigma.at(0) * w.norm.sigma.at(0));
  }
  b.x = Tensor::from({indices.size(), len}, std::move(x));
  return b;
}

double utilization(std::span<const std::size_t> usage) {
  if (usage.empty()) return 0.0;
  const double total = std::accumulate(usage.begin(), usage.end(), 0.0);
  if (total == 0.0) return 0.0;
  const double floor = 0.01 * total / static_cast<double>(usage.size());
  std::size_t used = 0;
  for (auto c : usage) used += static_cast<double>(c) >= floor && c > 0;
  return static_cast<double>(used) / static_cast<double>(usage.size());
}

ReconStats evaluate_reconstruction(const Tokenizer& model,
                                   const std::vector<data::TimeSeriesWindow>& windows) {
  ReconStats out;
  out.usage.assign(model.config().K, 0);
  if (windows.empty()) return out;
  constexpr std::size_t kChunk = 32;
  const std::size_t chunks = (windows.size() + kChunk - 1) / kChunk;
  std::vector<double> sq(chunks, 0.0);
  std::vector<std::size_t> counts(chunks, 0);
  std::vector<std::vector<std::size_t>> usage(chunks, std::vector<std::size_t>(model.config().K));
  parallel_for(chunks, [&](std::size_t c) {
    NoGradGuard ng;
    std::vector<std::size_t> idx;
    for (std::size_t i = c * kChunk; i < std::min(windows.size(), (c + 1) * kChunk); ++i) {
      idx.push_back(i);
    }
    const Batch b = make_batch(windows, idx);
    const std::size_t tokens = b.x.cols() / model.config().patch;
    const Tensor z = model.encode(b.x);
    const Quantized q = model.quantize(z);
    const Tensor xhat = model.decode(q.zq, tokens);
    const std::size_t len = b.x.cols();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t j = 0; j < len; ++j) {
        const double diff = xhat.at(r * len + j) - b.x.at(r * len + j);
        sq[c] += b.weights[r] * diff * diff;
      }
    }
    counts[c] = idx.size() * len;
    for (int id : q.ids) ++usage[c][static_cast<std::size_t>(id)];
  });
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < chunks; ++c) {
    total += sq[c];
    n += counts[c];
    for (std::size_t k = 0; k < out.usage.size(); ++k) out.usage[k] += usage[c][k];
  }
  out.mse = total / static_cast<double>(n);
  out.utilization = utilization(out.usage);
  return out;
}

namespace {

std::vector<data::TimeSeriesWindow> spread_subset(const std::vector<data::TimeSeriesWindow>& w,
                                                  std::size_t n) {
  if (w.size() <= n || n == 0) return w;
  std::vector<data::TimeSeriesWindow> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(w[i * w.size() / n]);
  return out;
}

void init_codebook(Tokenizer& model, const std::vector<data::TimeSeriesWindow>& train,
                   std::span<const std::size_t> first_batch, double noise, Rng& rng) {
  NoGradGuard ng;
  const Tensor z = model.encode(make_batch(train, first_batch).x);
  const std::size_t d = model.config().d, k = model.config().K, n = z.rows();
  auto codes = model.codebook().mutable_data();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t row = order[c % n];
    for (std::size_t j = 0; j < d; ++j) codes[c * d + j] = z.at(row * d + j) + noise * rng.normal();
  }
}

}  // namespace

TrainReport train_tokenizer(Tokenizer& model, const std::vector<data::TimeSeriesWindow>& train,
                            const std::vector<data::TimeSeriesWindow>& eval,
                            const TrainOptions& opt) {
  if (train.empty()) throw ValidationError("tokenizer training needs at least one train window");
  const auto& cfg = model.config();
  cfg.validate_lengths(train.front().history.size(), train.front().future.size());
  Rng rng(opt.seed);
  Rng init_rng = rng.fork(1);
  const auto eval_set = spread_subset(eval.empty() ? train : eval, opt.eval_windows);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  auto shuffle = [&] {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  };
  shuffle();
  const std::size_t batch = std::min(opt.batch, train.size());
  init_codebook(model, train, std::span(order).subspan(0, batch), opt.init_noise, init_rng);

  auto params = model.parameters();
  Adam adam(params, AdamConfig{.lr = opt.lr});
  std::vector<std::vector<double>> last_good;
  auto snapshot = [&] {
    last_good.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      last_good[i].assign(params[i].data().begin(), params[i].data().end());
    }
  };
  snapshot();

  TrainReport report;
  EpochMetrics acc;
  std::size_t in_epoch = 0, cursor = 0, epoch = 0;
  auto close_epoch = [&](std::size_t step) {
    if (in_epoch == 0) return;
    const double n = static_cast<double>(in_epoch);
    EpochMetrics m{epoch, step, acc.loss / n, acc.recon / n, acc.commit / n, acc.codebook / n,
                   acc.diversity / n, 0.0, 0.0};
    const auto rs = evaluate_reconstruction(model, eval_set);
    m.eval_recon_mse = rs.mse;
    m.utilization = rs.utilization;
    log_info("tokenizer epoch ", epoch, " step ", step, " loss ", m.loss, " recon ", m.recon,
             " eval_mse ", m.eval_recon_mse, " util ", m.utilization);
    report.epochs.push_back(m);
    acc = EpochMetrics{};
    in_epoch = 0;
  };

  for (std::size_t step = 1; step <= opt.steps; ++step) {
    if (cursor + batch > order.size()) {
      close_epoch(step - 1);
      ++epoch;
      shuffle();
      cursor = 0;
    }
    const Batch b = make_batch(train, std::span(order).subspan(cursor, batch));
    cursor += batch;
    const std::size_t tokens = b.x.cols() / cfg.patch;
    adam.zero_grad();
    const Tensor z = model.encode(b.x);
    const Quantized q = model.quantize(z);
    const Tensor xhat = model.decode(straight_through(z, q.zq), tokens);
    const LossParts loss = tokenizer_loss(b.x, xhat, z, q.zq, model.codebook(), b.weights, cfg);
    const double value = loss.total.item();
    if (!std::isfinite(value)) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        std::copy(last_good[i].begin(), last_good[i].end(), params[i].mutable_data().begin());
      }
      if (opt.abort_checkpoint) {
        io::save_checkpoint(*opt.abort_checkpoint,
                            model.to_checkpoint({{"aborted_at_step", step}}));
      }
      throw TrainingAbort("tokenizer loss became non-finite at step " + std::to_string(step) +
                          "; last finite state kept");
    }
    loss.total.backward();
    clip_grad_norm(params, opt.clip);
    adam.step();
    snapshot();
    acc.loss += value;
    acc.recon += loss.recon;
    acc.commit += loss.commit;
    acc.codebook += loss.codebook;
    acc.diversity += loss.diversity;
    ++in_epoch;
  }
  close_epoch(opt.steps);
  const auto final_stats = evaluate_reconstruction(model, eval_set);
  report.final_recon_mse = final_stats.mse;
  report.final_utilization = final_stats.utilization;
  return report;
}

void write_metrics_csv(const std::filesystem::path& path, const TrainReport& report,
                       const std::string& config_digest) {
  std::string out = "# config_digest=" + config_digest + "\n";
  out += "epoch,step,loss,recon,commit,codebook,diversity,eval_recon_mse,utilization\n";
  char buf[512];
  for (const auto& m : report.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.6g\n", m.epoch,
                  m.step, m.loss, m.recon, m.commit, m.codebook, m.diversity, m.eval_recon_mse,
                  m.utilization);
    out += buf;
  }
  io::write_file(path, out);
}

}  // namespace tokencast::tokenizer
