#include <algorithm>
#include <cmath>
#include <numeric>

#include "tokencast/backbone/lm.hpp"
#include "tokencast/core/adam.hpp"
#include "tokencast/core/parallel.hpp"
#include "tokencast/error.hpp"
#include "tokencast/io/binary.hpp"
#include "tokencast/log.hpp"

namespace tokencast::backbone {

using namespace tokencast::core;

LmBatch make_lm_batch(const std::vector<Sequence>& seqs, std::span<const std::size_t> indices,
                      int pad_id) {
  LmBatch b;
  for (std::size_t i : indices) b.seq_len = std::max(b.seq_len, seqs.at(i).ids.size());
  b.ids.assign(indices.size() * b.seq_len, pad_id);
  b.targets.assign(indices.size() * b.seq_len, -1);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& s = seqs[indices[r]];
    if (s.loss_mask.size() != s.ids.size()) throw ValidationError("sequence mask length mismatch");
    std::copy(s.ids.begin(), s.ids.end(), b.ids.begin() + r * b.seq_len);
    for (std::size_t t = 0; t + 1 < s.ids.size(); ++t) {
      if (s.loss_mask[t + 1]) b.targets[r * b.seq_len + t] = s.ids[t + 1];
    }
  }
  return b;
}

double evaluate_loss(const LanguageModel& model, const std::vector<Sequence>& seqs, int pad_id,
                     std::size_t batch) {
  if (seqs.empty()) return NAN;
  const std::size_t chunks = (seqs.size() + batch - 1) / batch;
  std::vector<double> sums(chunks, 0.0), counts(chunks, 0.0);
  parallel_for(chunks, [&](std::size_t c) {
    NoGradGuard ng;
    std::vector<std::size_t> idx;
    for (std::size_t i = c * batch; i < std::min(seqs.size(), (c + 1) * batch); ++i) {
      idx.push_back(i);
    }
    const LmBatch b = make_lm_batch(seqs, idx, pad_id);
    const double n = static_cast<double>(
        std::count_if(b.targets.begin(), b.targets.end(), [](int t) { return t >= 0; }));
    if (n == 0) return;
    const Tensor logits = model.forward(b.ids, b.seq_len);
    sums[c] = cross_entropy(logits, b.targets).item() * n;
    counts[c] = n;
  });
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  return std::accumulate(sums.begin(), sums.end(), 0.0) / total;
}

namespace {

struct Snapshot {
  std::vector<std::vector<double>> values;

  void take(const std::vector<Tensor>& params) {
    values.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      values[i].assign(params[i].data().begin(), params[i].data().end());
    }
  }
  void restore(std::vector<Tensor>& params) const {
    for (std::size_t i = 0; i < params.size(); ++i) {
      std::copy(values[i].begin(), values[i].end(), params[i].mutable_data().begin());
    }
  }
};

// Marks non-trainable tensors as constants for the duration of a stage.
class FreezeScope {
 public:
  explicit FreezeScope(io::NamedTensors frozen) : frozen_(std::move(frozen)) {
    for (auto& [n, t] : frozen_) t.set_requires_grad(false);
  }
  ~FreezeScope() {
    for (auto& [n, t] : frozen_) t.set_requires_grad(true);
  }

 private:
  io::NamedTensors frozen_;
};

}  // namespace

TrainResult train_lm(LanguageModel& model, const std::vector<Sequence>& train,
                     const std::vector<Sequence>& val, const TrainPlan& plan) {
  plan.validate();
  if (train.empty()) throw ValidationError(std::string(to_string(plan.stage)) + " needs training data");
  std::vector<Tensor> params;
  io::NamedTensors frozen;
  if (plan.trainable == Trainable::embeddings_only) {
    params.push_back(model.embedding());
    frozen = model.backbone_tensors();
  } else {
    params = tensors_of(model.named_tensors());
  }
  FreezeScope freeze(frozen);
  for (auto& p : params) p.set_requires_grad(true);

  Rng rng(plan.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  auto shuffle = [&] {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  };
  shuffle();
  const std::size_t batch = std::min(plan.batch, train.size());
  Adam adam(params, AdamConfig{.lr = plan.lr});

  TrainResult res;
  Snapshot best;
  best.take(params);
  const bool have_val = !val.empty() && plan.eval_every > 0;
  res.initial_val_loss = have_val ? evaluate_loss(model, val, plan.pad_id) : NAN;
  res.best_val_loss = res.initial_val_loss;
  res.curve.push_back({0, NAN, res.initial_val_loss});
  std::size_t since_best = 0, cursor = 0, window_steps = 0;
  double window_loss = 0.0;

  for (std::size_t step = 1; step <= plan.steps; ++step) {
    if (cursor + batch > order.size()) {
      shuffle();
      cursor = 0;
    }
    const LmBatch b = make_lm_batch(train, std::span(order).subspan(cursor, batch), plan.pad_id);
    cursor += batch;
    adam.zero_grad();
    const Tensor loss = cross_entropy(model.forward(b.ids, b.seq_len), b.targets);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      best.restore(params);
      throw TrainingAbort(std::string(to_string(plan.stage)) + " loss became non-finite at step " +
                          std::to_string(step) + "; restored the best state");
    }
    loss.backward();
    clip_grad_norm(params, plan.clip);
    adam.step();
    window_loss += value;
    ++window_steps;
    res.steps_run = step;

    const bool eval_now = plan.eval_every > 0 && (step % plan.eval_every == 0 || step == plan.steps);
    if (!eval_now) continue;
    CurvePoint pt{step, window_loss / static_cast<double>(window_steps), NAN};
    window_loss = 0.0;
    window_steps = 0;
    if (have_val) {
      pt.val_loss = evaluate_loss(model, val, plan.pad_id);
      if (pt.val_loss < res.best_val_loss || !std::isfinite(res.best_val_loss)) {
        res.best_val_loss = pt.val_loss;
        res.best_step = step;
        since_best = 0;
        if (plan.patience > 0) best.take(params);
      } else {
        ++since_best;
      }
    }
    res.curve.push_back(pt);
    log_info(to_string(plan.stage), " step ", step, " train ", pt.train_loss, " val ", pt.val_loss);
    if (plan.patience > 0 && since_best >= plan.patience) {
      res.early_stopped = true;
      break;
    }
  }
  if (plan.patience > 0 && have_val) best.restore(params);
  return res;
}

void write_curve_csv(const std::filesystem::path& path, const TrainResult& result,
                     const std::string& config_digest) {
  std::string out = "# config_digest=" + config_digest + "\nstep,train_loss,val_loss\n";
  char buf[128];
  for (const auto& p : result.curve) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g\n", p.step, p.train_loss, p.val_loss);
    out += buf;
  }
  io::write_file(path, out);
}

}  // namespace tokencast::backbone
