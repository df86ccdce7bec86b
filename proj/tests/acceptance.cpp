// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance --workdir <dir> [--only 1,5,9]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "gradient_cases.hpp"
#include "tokencast/backbone/generate.hpp"
#include "tokencast/core/ops.hpp"
#include "tokencast/data/synth.hpp"
#include "tokencast/io/binary.hpp"
#include "tokencast/io/checkpoint.hpp"
#include "tokencast/log.hpp"
#include "tokencast/pipeline/ablation.hpp"
#include "tokencast/rin.hpp"
#include "tokencast/tokenizer/tokenizer.hpp"
#include "tokencast/vocab/unified.hpp"

using namespace tokencast;
namespace fs = std::filesystem;
using core::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string f3(double v) {
  char b[64];
  std::snprintf(b, sizeof b, "%.4g", v);
  return b;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path g_workdir;

// ---------------------------------------------------------------- 1

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  core::Rng rng(2024);
  std::size_t instances = 0;
  double worst = 0.0;
  std::string worst_op;
  std::size_t ops = 0;
  for (const auto& op : testing::gradient_ops()) {
    ++ops;
    for (int i = 0; i < 20; ++i) {
      auto c = op.make(rng);
      const auto r = core::grad_check(c.fn, c.inputs);
      ++instances;
      if (r.worst() > worst) {
        worst = r.worst();
        worst_op = op.name;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-3 && secs < 60.0,
          std::to_string(ops) + " ops x 20 instances, worst relative error " + f3(worst) + " (" +
              worst_op + "), " + f3(secs) + " s"};
}

// ---------------------------------------------------------------- 2

int argmin_reference(const double* z, const std::vector<double>& codes, std::size_t k,
                     std::size_t d) {
  int best = 0;
  double best_d = INFINITY;
  for (std::size_t c = 0; c < k; ++c) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double e = z[j] - codes[c * d + j];
      s += e * e;
    }
    if (s < best_d) {
      best_d = s;
      best = static_cast<int>(c);
    }
  }
  return best;
}

Outcome quantizer_oracle() {
  core::Rng rng(77);
  std::size_t pairs = 0, mismatches = 0, ties = 0;
  const std::size_t d = 16;
  for (std::size_t k : {2, 32, 64, 256}) {
    tokenizer::TokenizerConfig cfg;
    cfg.d = d;
    cfg.K = k;
    tokenizer::Tokenizer tok(cfg, 5);
    for (std::size_t trial = 0; trial < 100; ++trial) {
      std::vector<double> codes(k * d);
      for (auto& v : codes) v = rng.normal();
      const std::size_t n = 25;
      std::vector<double> z(n * d);
      for (auto& v : z) v = rng.normal();
      // Every fifth latent sits exactly between a duplicated code pair.
      for (std::size_t i = 0; i < n; i += 5) {
        const std::size_t lo = rng.index(k), hi = rng.index(k);
        if (lo == hi) continue;
        for (std::size_t j = 0; j < d; ++j) {
          codes[std::max(lo, hi) * d + j] = codes[std::min(lo, hi) * d + j];
          z[i * d + j] = codes[std::min(lo, hi) * d + j] + 0.25;
        }
        ++ties;
      }
      auto cb = tok.codebook().mutable_data();
      std::copy(codes.begin(), codes.end(), cb.begin());
      core::NoGradGuard ng;
      const auto q = tok.quantize(Tensor::from({n, d}, z));
      const auto direct = tokenizer::nearest_codes(z, codes, d);
      for (std::size_t i = 0; i < n; ++i) {
        const int want = argmin_reference(&z[i * d], codes, k, d);
        mismatches += (q.ids[i] != want) + (direct[i] != want);
        ++pairs;
      }
    }
  }
  return {pairs >= 10000 && mismatches == 0,
          std::to_string(pairs) + " pairs over K in {2,32,64,256}, " + std::to_string(ties) +
              " constructed ties, " + std::to_string(mismatches) + " mismatches"};
}

// ---------------------------------------------------------------- 3

Outcome rin_contract() {
  core::Rng rng(3);
  double worst = 0.0;
  bool invariant = true;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 8 + rng.index(120);
    std::vector<double> h(n), p(24);
    const double scale = std::exp(rng.uniform(-6.0, 6.0)), shift = rng.uniform(-1e3, 1e3);
    for (auto& v : h) v = shift + scale * rng.normal();
    for (auto& v : p) v = shift + scale * rng.normal();
    const auto st = rin::fit(std::span<const double>(h));
    std::vector<double> full = h;
    full.insert(full.end(), p.begin(), p.end());
    const auto back = rin::denormalize(rin::normalize(full, st), st);
    for (std::size_t i = 0; i < full.size(); ++i) {
      worst = std::max(worst, std::abs(back[i] - full[i]) / std::max(1.0, std::abs(full[i])));
    }
    // Windows sharing a history but not a future get the same statistics.
    data::Series a{"a", {"x"}, {full}}, b = a;
    for (std::size_t i = n; i < b.channels[0].size(); ++i) b.channels[0][i] = rng.normal() * 1e6;
    const auto wa = data::make_windows(a, n, 24, 1), wb = data::make_windows(b, n, 24, 1);
    invariant = invariant && wa.size() == 1 && wb.size() == 1 && wa[0].norm.mu == wb[0].norm.mu &&
                wa[0].norm.sigma == wb[0].norm.sigma;
  }
  const std::vector<double> flat(96, 4.25);
  const auto fs_ = rin::fit(std::span<const double>(flat));
  const bool floored = fs_.sigma[0] == rin::kSigmaFloor && fs_.mu[0] == 4.25;
  const auto z = rin::normalize(flat, fs_);
  const auto back = rin::denormalize(z, fs_);
  bool flat_ok = floored;
  for (std::size_t i = 0; i < flat.size(); ++i) flat_ok = flat_ok && z[i] == 0.0 && back[i] == 4.25;
  return {worst <= 1e-9 && invariant && flat_ok,
          "max relative round-trip error " + f3(worst) + ", future-invariant stats " +
              (invariant ? "yes" : "no") + ", constant-history floor " + (flat_ok ? "ok" : "broken")};
}

// ---------------------------------------------------------------- 4

Outcome causality_probes() {
  core::Rng rng(4);
  tokenizer::TokenizerConfig cfg;
  tokenizer::Tokenizer tok(cfg, 9);
  backbone::BackboneConfig bc;
  backbone::LanguageModel lm(bc, 328, 10);
  core::NoGradGuard ng;
  std::size_t enc_bad = 0, dec_bad = 0, lm_bad = 0, enc_vac = 0, dec_vac = 0, lm_vac = 0;
  const std::size_t len = 120, tokens = len / cfg.patch, d = cfg.d;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(len);
    for (auto& v : x) v = rng.normal();
    const Tensor za = tok.encode(Tensor::from({1, len}, x));
    const std::size_t p = 4 + rng.index(len - 4);
    x[p] += 1.0 + rng.uniform();
    const Tensor zb = tok.encode(Tensor::from({1, len}, x));
    const std::size_t safe = p / cfg.patch;  // tokens whose patch ends before p
    for (std::size_t i = 0; i < safe * d; ++i) enc_bad += za.at(i) != zb.at(i);
    bool changed = false;
    for (std::size_t i = safe * d; i < tokens * d; ++i) changed = changed || za.at(i) != zb.at(i);
    enc_vac += !changed;

    std::vector<double> q(tokens * d);
    for (auto& v : q) v = rng.normal();
    const Tensor da = tok.decode(Tensor::from({tokens, d}, q), tokens);
    const std::size_t t = 1 + rng.index(tokens - 1);
    for (std::size_t j = 0; j < d; ++j) q[t * d + j] += rng.normal();
    const Tensor db = tok.decode(Tensor::from({tokens, d}, q), tokens);
    for (std::size_t i = 0; i < t * cfg.patch; ++i) dec_bad += da.at(i) != db.at(i);
    changed = false;
    for (std::size_t i = t * cfg.patch; i < len; ++i) changed = changed || da.at(i) != db.at(i);
    dec_vac += !changed;

    const std::size_t n = 64;
    std::vector<int> ids(n);
    for (auto& id : ids) id = static_cast<int>(rng.index(328));
    const Tensor la = lm.forward(ids, n);
    const std::size_t s = 1 + rng.index(n - 1);
    ids[s] = (ids[s] + 1 + static_cast<int>(rng.index(327))) % 328;
    const Tensor lb = lm.forward(ids, n);
    for (std::size_t i = 0; i < s * 328; ++i) lm_bad += la.at(i) != lb.at(i);
    changed = false;
    for (std::size_t i = s * 328; i < n * 328; ++i) changed = changed || la.at(i) != lb.at(i);
    lm_vac += !changed;
  }
  const bool ok = enc_bad + dec_bad + lm_bad == 0 && enc_vac + dec_vac + lm_vac == 0;
  return {ok, "100 trials each; past values changed: encoder " + std::to_string(enc_bad) +
                  ", decoder " + std::to_string(dec_bad) + ", lm " + std::to_string(lm_bad) +
                  "; perturbations without downstream effect: " +
                  std::to_string(enc_vac + dec_vac + lm_vac)};
}

// ---------------------------------------------------------------- 5

double max_abs_grad(const Tensor& t) {
  double m = 0.0;
  if (!t.has_grad()) return 0.0;
  for (double g : t.grad()) m = std::max(m, std::abs(g));
  return m;
}

Outcome loss_contracts() {
  tokenizer::TokenizerConfig cfg;
  cfg.d = 16;
  cfg.K = 16;
  tokenizer::Tokenizer tok(cfg, 21);
  core::Rng rng(22);
  std::vector<double> xv(2 * 32);
  for (auto& v : xv) v = rng.normal();
  const Tensor x = Tensor::from({2, 32}, xv);
  const auto reset = [&] {
    for (auto& p : tok.parameters()) {
      Tensor h = p;
      h.zero_grad();
    }
  };
  const auto encoder_grad = [&] {
    double m = 0.0;
    for (const auto& [name, t] : tok.named_tensors()) {
      if (name.rfind("encoder.", 0) == 0) m = std::max(m, max_abs_grad(t));
    }
    return m;
  };
  reset();
  {
    const Tensor z = tok.encode(x);
    const auto q = tok.quantize(z);
    core::mse(z, core::stop_gradient(q.zq)).backward();
  }
  const double commit_to_codes = max_abs_grad(tok.codebook()), commit_to_enc = encoder_grad();
  reset();
  {
    const Tensor z = tok.encode(x);
    const auto q = tok.quantize(z);
    core::mse(core::stop_gradient(z), q.zq).backward();
  }
  const double book_to_enc = encoder_grad(), book_to_codes = max_abs_grad(tok.codebook());

  const std::size_t k = 16;
  const double lnk = std::log(static_cast<double>(k));
  std::vector<double> far(k * 2, 0.0);
  for (std::size_t c = 1; c < k; ++c) far[c * 2] = 50.0 + static_cast<double>(c);
  const double degenerate =
      tokenizer::diversity_loss(Tensor::zeros({6, 2}), Tensor::from({k, 2}, far), 1e-3).item();
  const double uniform =
      tokenizer::diversity_loss(Tensor::zeros({6, 2}), Tensor::full({k, 2}, 0.3), 1.0).item();
  bool in_range = true;
  for (int t = 0; t < 500; ++t) {
    std::vector<double> zv(8 * 2), cv(k * 2);
    for (auto& v : zv) v = rng.normal() * 3.0;
    for (auto& v : cv) v = rng.normal() * 3.0;
    const double v = tokenizer::diversity_loss(Tensor::from({8, 2}, zv), Tensor::from({k, 2}, cv),
                                               rng.uniform(0.05, 5.0))
                         .item();
    in_range = in_range && v >= -1e-12 && v <= lnk + 1e-12;
  }
  const bool ok = commit_to_codes == 0.0 && commit_to_enc > 0.0 && book_to_enc == 0.0 &&
                  book_to_codes > 0.0 && std::abs(degenerate - lnk) < 1e-9 &&
                  std::abs(uniform) < 1e-12 && in_range;
  return {ok, "dL_commit/dcodebook " + f3(commit_to_codes) + ", dL_codebook/dencoder " +
                  f3(book_to_enc) + ", diversity degenerate " + f3(degenerate) + " (ln K " +
                  f3(lnk) + "), uniform " + f3(uniform) + ", 500 random cases in range " +
                  (in_range ? "yes" : "no")};
}

// ---------------------------------------------------------------- 6

Outcome tokenizer_training() {
  data::SynthParams sp;
  const auto raw = data::synth_series(data::SynthKind::sine_mixture, sp, 606);
  data::PrepareOptions po;
  const auto ds = data::prepare(raw, po, "sine-mixture");
  struct Run {
    double recon, util, secs;
  };
  const auto run = [&](double gamma) {
    tokenizer::TokenizerConfig cfg;
    cfg.gamma = gamma;
    tokenizer::Tokenizer tok(cfg, 61);
    tokenizer::TrainOptions opt;
    opt.steps = 2000;
    opt.seed = 62;
    const auto t0 = std::chrono::steady_clock::now();
    tokenizer::train_tokenizer(tok, ds.train, ds.val, opt);
    const double secs = seconds_since(t0);
    const auto st = tokenizer::evaluate_reconstruction(tok, ds.test);
    return Run{st.mse, st.utilization, secs};
  };
  const Run with = run(0.25), without = run(0.0);
  const bool ok = with.recon <= 0.1 && with.util >= 0.5 && with.secs < 600.0 &&
                  without.util < with.util;
  return {ok, "gamma=0.25: test recon mse " + f3(with.recon) + ", utilization " +
                  f3(100 * with.util) + "%, " + f3(with.secs) + " s; gamma=0: utilization " +
                  f3(100 * without.util) + "%, recon " + f3(without.recon)};
}

// ---------------------------------------------- shared pipeline (7, 9, 10, 11)

constexpr std::size_t kHorizon = 24;

pipeline::RunConfig acceptance_config() {
  pipeline::RunConfig c;
  c.seed = 7;
  c.data.synth_kind = data::SynthKind::seasonal_trend;
  c.data.horizons = {kHorizon};
  c.forecast.window_stride = 3;
  c.forecast.interval_temperatures = {0.5, 1.0};
  c.forecast.samples = 100;
  c.validate();
  return c;
}

struct PipelineRun {
  pipeline::RunConfig cfg;
  pipeline::Layout layout;
  double seconds = 0.0;
  eval::EvalReport report;
  std::string error;
};

PipelineRun& pipeline_run() {
  static std::optional<PipelineRun> run;
  if (run) return *run;
  run.emplace();
  auto& r = *run;
  r.cfg = acceptance_config();
  r.layout = pipeline::Layout{g_workdir / "pipeline"};
  fs::remove_all(r.layout.root);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    pipeline::write_config(r.cfg, r.layout);
    pipeline::run_prepare(r.cfg, r.layout, kHorizon);
    pipeline::run_train_tokenizer(r.cfg, r.layout, kHorizon);
    pipeline::run_pretrain(r.cfg, r.layout);
    pipeline::run_align(r.cfg, r.layout, kHorizon);
    pipeline::run_finetune(r.cfg, r.layout, kHorizon);
    r.report = pipeline::run_evaluate(r.cfg, r.layout, kHorizon);
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  r.seconds = seconds_since(t0);
  return r;
}

// ---------------------------------------------------------------- 7

Outcome freeze_contract() {
  auto& r = pipeline_run();
  if (!r.error.empty()) return {false, "pipeline failed: " + r.error};
  const auto pre = io::load_checkpoint(r.layout.pretrain());
  const auto aligned = io::load_checkpoint(r.layout.align(kHorizon));
  std::size_t compared = 0, differing = 0;
  for (const auto& [name, t] : pre.tensors) {
    if (name == "lm.embedding") continue;
    ++compared;
    differing += io::tensor_digest(t) != io::tensor_digest(aligned.tensor(name));
  }
  // Held-out align loss at initialization and after alignment.
  const auto ds = pipeline::load_dataset(r.cfg, r.layout, kHorizon);
  const auto tok = pipeline::load_tokenizer(r.cfg, r.layout, kHorizon);
  const auto init = pipeline::extend_model(backbone::LanguageModel::from_checkpoint(pre),
                                           r.cfg.tokenizer.K, r.cfg.prompt.init,
                                           r.cfg.stage_seed("extend"));
  const auto val = pipeline::build_sequences(tok, ds.val, init.vocab, init.vocab.words(),
                                             vocab::PromptMode::align, r.cfg.prompt.toggles,
                                             kHorizon, r.cfg.prompt.val_stride);
  const double before = backbone::evaluate_loss(init.lm, val, init.vocab.pad());
  const double after = backbone::evaluate_loss(backbone::LanguageModel::from_checkpoint(aligned),
                                               val, init.vocab.pad());
  const bool ok = compared > 0 && differing == 0 && after <= 0.8 * before;
  return {ok, std::to_string(compared) + " backbone tensors compared, " +
                  std::to_string(differing) + " differ; held-out align loss " + f3(before) +
                  " -> " + f3(after) + " (ratio " + f3(after / before) + ")"};
}

// ---------------------------------------------------------------- 8

Outcome mean_init_statistics() {
  const std::size_t d = 32;
  std::vector<double> same(50 * d);
  core::Rng rng(8);
  std::vector<double> v(d);
  for (auto& x : v) x = rng.normal();
  for (std::size_t r = 0; r < 50; ++r) std::copy(v.begin(), v.end(), same.begin() + r * d);
  const auto rows = vocab::init_new_embeddings(Tensor::from({50, d}, same), vocab::InitStrategy::mean, 64, 9);
  bool exact = true;
  for (std::size_t r = 0; r < 64; ++r) {
    for (std::size_t j = 0; j < d; ++j) exact = exact && rows.at(r * d + j) == v[j];
  }

  // Correlated surrogate vocabulary: rows = A g + b.
  std::size_t inside = 0, total = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    core::Rng g(100 + seed);
    const std::size_t w = 1000;
    std::vector<double> a(d * d), b(d), e(w * d);
    for (auto& x : a) x = g.normal() * 0.3;
    for (auto& x : b) x = g.normal();
    for (std::size_t r = 0; r < w; ++r) {
      std::vector<double> z(d);
      for (auto& x : z) x = g.normal();
      for (std::size_t i = 0; i < d; ++i) {
        double s = b[i];
        for (std::size_t j = 0; j < d; ++j) s += a[i * d + j] * z[j];
        e[r * d + i] = s;
      }
    }
    std::vector<double> mu(d, 0.0), var(d, 0.0);
    for (std::size_t r = 0; r < w; ++r) {
      for (std::size_t j = 0; j < d; ++j) mu[j] += e[r * d + j] / static_cast<double>(w);
    }
    for (std::size_t r = 0; r < w; ++r) {
      for (std::size_t j = 0; j < d; ++j) {
        var[j] += (e[r * d + j] - mu[j]) * (e[r * d + j] - mu[j]) / static_cast<double>(w - 1);
      }
    }
    const auto fresh = vocab::init_new_embeddings(Tensor::from({w, d}, e), vocab::InitStrategy::mean, 64, seed);
    for (std::size_t j = 0; j < d; ++j) {
      double m = 0.0;
      for (std::size_t r = 0; r < 64; ++r) m += fresh.at(r * d + j) / 64.0;
      inside += std::abs(m - mu[j]) <= 3.0 * std::sqrt(var[j] / 64.0);
      ++total;
    }
  }
  const double frac = static_cast<double>(inside) / static_cast<double>(total);
  return {exact && frac >= 0.95, std::string("identical rows reproduced exactly: ") +
                                     (exact ? "yes" : "no") + "; coordinates within 3 SE of mu: " +
                                     std::to_string(inside) + "/" + std::to_string(total) + " (" +
                                     f3(100 * frac) + "%)"};
}

// ---------------------------------------------------------------- 9

Outcome end_to_end() {
  auto& r = pipeline_run();
  if (!r.error.empty()) return {false, "pipeline failed: " + r.error};
  const auto& rep = r.report;
  const bool ok = rep.windows >= 200 && rep.model.mse <= 0.9 * rep.persistence.mse &&
                  r.seconds < 1800.0;
  return {ok, "greedy mse " + f3(rep.model.mse) + " vs persistence " + f3(rep.persistence.mse) +
                  " (ratio " + f3(rep.model.mse / rep.persistence.mse) + "), seasonal-naive " +
                  f3(rep.seasonal.mse) + ", " + std::to_string(rep.windows) + " windows, " +
                  std::to_string(rep.malformed) + " malformed, " + std::to_string(rep.repaired) +
                  " repaired; pipeline " + f3(r.seconds / 60.0) + " min"};
}

// ---------------------------------------------------------------- 10

Outcome stage_ablation() {
  auto& r = pipeline_run();
  if (!r.error.empty()) return {false, "pipeline failed: " + r.error};
  const auto t = pipeline::run_ablation(r.cfg, r.layout, pipeline::Suite::stages, kHorizon);
  std::string detail;
  for (const auto& row : t.rows) {
    detail += row.cell + " " + (row.ok() ? "mse " + f3(row.values.at("mse").get<double>()) : row.status) + "; ";
  }
  const auto& both = t.row("align+finetune");
  const auto& ft = t.row("finetune-only");
  const bool ok = t.rows.size() == 3 && both.ok() && ft.ok() &&
                  both.values.at("mse").get<double>() <= ft.values.at("mse").get<double>();
  return {ok, detail};
}

// ---------------------------------------------------------------- 11

Outcome uncertainty() {
  auto& r = pipeline_run();
  if (!r.error.empty()) return {false, "pipeline failed: " + r.error};
  const eval::IntervalStats* hot = nullptr;
  const eval::IntervalStats* warm = nullptr;
  for (const auto& s : r.report.intervals) {
    if (s.temperature == 1.0) hot = &s;
    if (s.temperature == 0.5) warm = &s;
  }
  if (!hot || !warm) return {false, "report lacks the tau=0.5 and tau=1.0 bands"};
  const double w_hot = 0.5 * (hot->width50 + hot->width80);
  const double w_warm = 0.5 * (warm->width50 + warm->width80);
  const bool ok = hot->coverage80 >= 0.6 && hot->coverage80 <= 0.95 &&
                  hot->coverage80 >= hot->coverage50 && w_hot > w_warm;
  return {ok, "tau=1: coverage80 " + f3(100 * hot->coverage80) + "%, coverage50 " +
                  f3(100 * hot->coverage50) + "%; mean band width " + f3(w_hot) + " vs " +
                  f3(w_warm) + " at tau=0.5"};
}

// ---------------------------------------------------------------- 12

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = io::read_file(e.path());
  }
  return out;
}

Outcome determinism() {
  pipeline::RunConfig c;
  c.seed = 12;
  c.data.synth.length = 1200;
  c.tokenizer_train.steps = 40;
  c.tokenizer_train.eval_windows = 64;
  c.corpus.tokens = 20000;
  c.pretrain.steps = 20;
  c.align.steps = 20;
  c.finetune.steps = 20;
  c.pretrain.eval_every = c.align.eval_every = c.finetune.eval_every = 10;
  c.forecast.max_windows = 12;
  c.forecast.samples = 20;
  c.forecast.interval_temperatures = {1.0};
  const auto run = [&](const fs::path& dir) {
    fs::remove_all(dir);
    const pipeline::Layout l{dir};
    pipeline::write_config(c, l);
    pipeline::run_prepare(c, l, 24);
    pipeline::run_train_tokenizer(c, l, 24);
    pipeline::run_pretrain(c, l);
    pipeline::run_align(c, l, 24);
    pipeline::run_finetune(c, l, 24);
    pipeline::run_forecast(c, l, 24, true);
    pipeline::run_evaluate(c, l, 24);
    pipeline::run_diagnose(c, l, 24);
    return tree_bytes(dir);
  };
  const auto a = run(g_workdir / "determinism_a");
  const auto b = run(g_workdir / "determinism_b");
  std::size_t differing = 0, checkpoints = 0, roundtrip_bad = 0, digest_missing = 0;
  const std::string digest = c.digest();
  for (const auto& [name, bytes] : a) {
    auto it = b.find(name);
    differing += it == b.end() || it->second != bytes;
    if (name.size() > 4 && name.substr(name.size() - 4) == ".tkc") {
      ++checkpoints;
      const auto ck = io::parse_checkpoint(bytes, name);
      roundtrip_bad += io::serialize_checkpoint(ck) != bytes;
    }
    if (name.size() > 4 && name.substr(name.size() - 4) != ".bin") {
      digest_missing += bytes.find(digest) == std::string::npos;
    }
  }
  differing += a.size() != b.size();
  const bool ok = differing == 0 && roundtrip_bad == 0 && checkpoints >= 4 && digest_missing == 0;
  return {ok, std::to_string(a.size()) + " files compared, " + std::to_string(differing) +
                  " differ; " + std::to_string(checkpoints) + " checkpoints, " +
                  std::to_string(roundtrip_bad) + " change on load/save; " +
                  std::to_string(digest_missing) + " outputs lack the config digest"};
}

}  // namespace

int main(int argc, char** argv) {
  g_workdir = fs::temp_directory_path() / "tokencast_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--workdir" && i + 1 < argc) {
      g_workdir = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else {
      std::fprintf(stderr, "usage: acceptance [--workdir DIR] [--only 1,2,...]\n");
      return 2;
    }
  }
  fs::create_directories(g_workdir);
  set_log_threshold(LogLevel::warn);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"quantizer oracle", quantizer_oracle},
      {"RIN round trip and future invariance", rin_contract},
      {"causality probes", causality_probes},
      {"loss component contracts", loss_contracts},
      {"tokenizer training on sine-mixture", tokenizer_training},
      {"align freeze contract", freeze_contract},
      {"mean initialization statistics", mean_init_statistics},
      {"end-to-end forecasting vs persistence", end_to_end},
      {"stage ablation", stage_ablation},
      {"predictive interval coverage", uncertainty},
      {"determinism and checkpoint round trip", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s [%d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
