#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "tokencast/data/synth.hpp"
#include "tokencast/error.hpp"
#include "tokencast/io/checkpoint.hpp"
#include "tokencast/tokenizer/tokenizer.hpp"

using namespace tokencast;
using namespace tokencast::tokenizer;
using core::Tensor;

namespace {

TokenizerConfig small_config() {
  TokenizerConfig c;
  c.d = 16;
  c.K = 8;
  c.decoder_heads = 2;
  return c;
}

Tensor random_input(std::size_t b, std::size_t len, core::Rng& rng) {
  std::vector<double> v(b * len);
  for (auto& x : v) x = rng.normal();
  return Tensor::from({b, len}, v);
}

// Reference nearest-code search written independently of the library.
int brute_force_argmin(const std::vector<double>& z, const std::vector<std::vector<double>>& codes) {
  int best = -1;
  double best_d = 0.0;
  for (std::size_t k = 0; k < codes.size(); ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) s += (z[j] - codes[k][j]) * (z[j] - codes[k][j]);
    if (best < 0 || s < best_d) {
      best = static_cast<int>(k);
      best_d = s;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("encoder emits one latent per patch and is causal") {
  Tokenizer tk(small_config(), 1);
  core::Rng rng(2);
  core::NoGradGuard ng;
  Tensor x = random_input(1, 8, rng);
  const Tensor z = tk.encode(x);
  CHECK(z.shape() == core::Shape{2, 16});
  auto xv = std::vector<double>(x.data().begin(), x.data().end());
  xv[7] += 3.0;
  const Tensor z2 = tk.encode(Tensor::from({1, 8}, xv));
  for (std::size_t j = 0; j < 16; ++j) CHECK(z.at(j) == z2.at(j));
  CHECK(z.at(16) != z2.at(16));
  CHECK_THROWS_AS(tk.encode(Tensor::zeros({1, 7})), ValidationError);
}

TEST_CASE("zero input gives finite latents") {
  Tokenizer tk(TokenizerConfig{}, 3);
  core::NoGradGuard ng;
  const Tensor z = tk.encode(Tensor::zeros({2, 120}));
  for (double v : z.data()) CHECK(std::isfinite(v));
}

TEST_CASE("quantizer picks the nearest code with lowest-index ties") {
  const std::vector<double> codes{0, 0, 1, 1};
  CHECK(nearest_codes(std::vector<double>{0.9, 0.8}, codes, 2) == std::vector<int>{1});
  std::vector<double> six(12, 0.0);
  six[2 * 2] = 1.0;   // code 2 = (1, 0)
  six[5 * 2] = -1.0;  // code 5 = (-1, 0)
  for (int k : {0, 1, 3, 4}) six[k * 2 + 1] = 10.0;
  CHECK(nearest_codes(std::vector<double>{0.0, 0.0}, six, 2) == std::vector<int>{2});
}

TEST_CASE("quantizer matches brute force on random codebooks") {
  core::Rng rng(4);
  const std::size_t k = 64, d = 8;
  std::vector<std::vector<double>> codes(k, std::vector<double>(d));
  std::vector<double> flat;
  for (auto& c : codes) {
    for (auto& v : c) {
      v = rng.normal();
      flat.push_back(v);
    }
  }
  std::vector<double> z(100 * d);
  for (auto& v : z) v = rng.normal();
  const auto ids = nearest_codes(z, flat, d);
  for (std::size_t i = 0; i < 100; ++i) {
    const std::vector<double> row(z.begin() + i * d, z.begin() + (i + 1) * d);
    CHECK(ids[i] == brute_force_argmin(row, codes));
  }
}

TEST_CASE("quantized latents equal code rows exactly") {
  Tokenizer tk(small_config(), 5);
  core::Rng rng(6);
  core::NoGradGuard ng;
  const Tensor z = tk.encode(random_input(3, 16, rng));
  const Quantized q = tk.quantize(z);
  for (std::size_t r = 0; r < q.ids.size(); ++r) {
    for (std::size_t j = 0; j < 16; ++j) {
      CHECK(q.zq.at(r * 16 + j) == tk.codebook().at(static_cast<std::size_t>(q.ids[r]) * 16 + j));
    }
  }
}

TEST_CASE("decoder output length and causality") {
  Tokenizer tk(small_config(), 7);
  core::Rng rng(8);
  core::NoGradGuard ng;
  const std::size_t t = 5;
  std::vector<double> zq(t * 16);
  for (auto& v : zq) v = rng.normal();
  const Tensor out = tk.decode(Tensor::from({t, 16}, zq), t);
  CHECK(out.shape() == core::Shape{1, t * 4});
  for (double v : out.data()) CHECK(std::isfinite(v));
  for (std::size_t j = 0; j < 16; ++j) zq[(t - 1) * 16 + j] += 1.0;
  const Tensor out2 = tk.decode(Tensor::from({t, 16}, zq), t);
  for (std::size_t i = 0; i < (t - 1) * 4; ++i) CHECK(out.at(i) == out2.at(i));
}

TEST_CASE("loss reduces to the diversity term when residuals vanish") {
  const TokenizerConfig cfg = small_config();
  core::Rng rng(9);
  const Tensor x = random_input(2, 8, rng);
  const Tensor z = random_input(4, 16, rng);
  const Tensor codes = random_input(8, 16, rng);
  const auto parts = tokenizer_loss(x, x, z, z, codes, {}, cfg);
  CHECK(parts.recon == 0.0);
  CHECK(parts.commit == 0.0);
  CHECK(parts.codebook == 0.0);
  CHECK(parts.total.item() == doctest::Approx(cfg.gamma * parts.diversity));
}

TEST_CASE("diversity loss endpoints") {
  const std::size_t k = 8;
  // Every latent sits on code 0 and the other codes are far away.
  std::vector<double> codes(k * 2, 0.0);
  for (std::size_t c = 1; c < k; ++c) codes[c * 2] = 100.0 + c;
  const Tensor z = Tensor::zeros({5, 2});
  const double collapsed = diversity_loss(z, Tensor::from({k, 2}, codes), 1e-3).item();
  CHECK(collapsed == doctest::Approx(std::log(8.0)).epsilon(1e-9));
  // Identical codes give uniform soft assignments.
  const double uniform = diversity_loss(z, Tensor::full({k, 2}, 0.5), 1.0).item();
  CHECK(std::abs(uniform) < 1e-12);
}

TEST_CASE("commit loss leaves codes alone and codebook loss leaves the encoder alone") {
  Tokenizer tk(small_config(), 10);
  core::Rng rng(11);
  const Tensor x = random_input(2, 16, rng);
  auto grads_after = [&](bool commit) {
    for (auto& p : tk.parameters()) {
      Tensor h = p;
      h.zero_grad();
    }
    const Tensor z = tk.encode(x);
    const Quantized q = tk.quantize(z);
    const Tensor loss = commit ? core::mse(z, core::stop_gradient(q.zq))
                               : core::mse(core::stop_gradient(z), q.zq);
    loss.backward();
  };
  auto max_abs = [](const Tensor& t) {
    double m = 0.0;
    if (!t.has_grad()) return m;
    for (double g : t.grad()) m = std::max(m, std::abs(g));
    return m;
  };
  grads_after(true);
  CHECK(max_abs(tk.codebook()) == 0.0);
  double enc = 0.0;
  for (const auto& [name, t] : tk.named_tensors()) {
    if (name.rfind("encoder.", 0) == 0) enc = std::max(enc, max_abs(t));
  }
  CHECK(enc > 0.0);

  grads_after(false);
  CHECK(max_abs(tk.codebook()) > 0.0);
  for (const auto& [name, t] : tk.named_tensors()) {
    if (name.rfind("encoder.", 0) == 0) CHECK(max_abs(t) == 0.0);
  }
}

TEST_CASE("straight-through gradient equals the identity-quantizer gradient") {
  Tokenizer tk(small_config(), 12);
  core::Rng rng(13);
  const Tensor x = random_input(1, 16, rng);
  const Tensor z = tk.encode(x).detach();
  Tensor zc = z.clone();
  zc.set_requires_grad(true);
  const Quantized q = tk.quantize(zc);
  const Tensor target = random_input(4, 16, rng);
  core::mse(core::straight_through(zc, q.zq), target).backward();
  const std::vector<double> ste(zc.grad().begin(), zc.grad().end());

  // Identity quantizer evaluated at the same forward point.
  Tensor zq = q.zq.detach().clone();
  zq.set_requires_grad(true);
  core::mse(zq, target).backward();
  for (std::size_t i = 0; i < ste.size(); ++i) CHECK(ste[i] == zq.grad()[i]);
}

TEST_CASE("series to tokens and back") {
  Tokenizer tk(TokenizerConfig{}, 14);
  core::Rng rng(15);
  std::vector<double> h(96), full(120);
  for (std::size_t i = 0; i < 120; ++i) full[i] = std::sin(i / 3.0) + 0.1 * rng.normal();
  std::copy(full.begin(), full.begin() + 96, h.begin());
  const auto stats = rin::fit(std::span<const double>(h));
  CHECK(tk.series_to_tokens(h, stats).size() == 24);
  const auto ids = tk.series_to_tokens(full, stats);
  REQUIRE(ids.size() == 30);
  // History tokens are a prefix of full-window tokens (causal encoder).
  const auto hid = tk.series_to_tokens(h, stats);
  CHECK(std::equal(hid.begin(), hid.end(), ids.begin()));

  const auto back = tk.tokens_to_series(ids, stats);
  REQUIRE(back.size() == 120);
  // Same value computed through the batch evaluation path.
  data::TimeSeriesWindow w;
  w.history = h;
  w.future.assign(full.begin() + 96, full.end());
  w.norm = stats;
  const auto rs = evaluate_reconstruction(tk, {w});
  double mse = 0.0;
  for (std::size_t i = 0; i < 120; ++i) mse += (back[i] - full[i]) * (back[i] - full[i]);
  CHECK(mse / 120 == doctest::Approx(rs.mse).epsilon(1e-12));

  const std::vector<int> bad{3, 65};
  CHECK_THROWS_AS(tk.tokens_to_series(bad, stats), ValidationError);
}

TEST_CASE("utilization counts codes above one percent of the uniform share") {
  CHECK(utilization(std::vector<std::size_t>{100, 100, 0, 0}) == 0.5);
  CHECK(utilization(std::vector<std::size_t>{1000, 1, 0, 0}) == 0.25);
  CHECK(utilization(std::vector<std::size_t>{}) == 0.0);
}

namespace {

data::PreparedDataset small_dataset() {
  data::SynthParams p;
  p.length = 400;
  data::PrepareOptions o;
  o.history_len = 16;
  o.horizon = 8;
  return data::prepare(data::synth_series(data::SynthKind::sine_mixture, p, 3), o, "d");
}

}  // namespace

TEST_CASE("training is deterministic for a seed and lowers the loss") {
  const auto ds = small_dataset();
  TrainOptions opt;
  opt.steps = 40;
  opt.seed = 21;
  auto run = [&] {
    Tokenizer tk(small_config(), 21);
    const auto rep = train_tokenizer(tk, ds.train, ds.val, opt);
    return std::make_pair(io::serialize_checkpoint(tk.to_checkpoint()), rep);
  };
  const auto [a, ra] = run();
  const auto [b, rb] = run();
  CHECK(a == b);
  REQUIRE(ra.epochs.size() >= 2);
  CHECK(ra.epochs.back().recon < ra.epochs.front().recon);
}

TEST_CASE("non-finite loss aborts and keeps a checkpoint") {
  auto ds = small_dataset();
  ds.train[0].history[0] = NAN;
  ds.train[0].norm = rin::fit(std::span<const double>(ds.train[0].history));
  std::vector<data::TimeSeriesWindow> one{ds.train[0]};
  const auto path = std::filesystem::temp_directory_path() / "tokencast_abort.tkc";
  std::filesystem::remove(path);
  TrainOptions opt;
  opt.steps = 5;
  opt.batch = 1;
  opt.abort_checkpoint = path;
  Tokenizer tk(small_config(), 1);
  CHECK_THROWS_AS(train_tokenizer(tk, one, {}, opt), TrainingAbort);
  CHECK(std::filesystem::exists(path));
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint restores an identical tokenizer") {
  Tokenizer tk(small_config(), 30);
  const auto bytes = io::serialize_checkpoint(tk.to_checkpoint());
  const Tokenizer back = Tokenizer::from_checkpoint(io::parse_checkpoint(bytes));
  CHECK(io::serialize_checkpoint(back.to_checkpoint()) == bytes);
}
