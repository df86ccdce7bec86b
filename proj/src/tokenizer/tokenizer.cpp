#include "tokencast/tokenizer/tokenizer.hpp"

#include <algorithm>
#include <cmath>

#include "tokencast/error.hpp"

namespace tokencast::tokenizer {

using nlohmann::json;
using namespace tokencast::core;

void TokenizerConfig::validate() const {
  if (patch == 0) throw ValidationError("tokenizer patch must be >= 1");
  if (K < 2) throw ValidationError("codebook size K must be >= 2, got " + std::to_string(K));
  if (d == 0 || decoder_heads == 0 || d % decoder_heads != 0) {
    throw ValidationError("tokenizer width " + std::to_string(d) +
                          " must be divisible by decoder heads " + std::to_string(decoder_heads));
  }
  if (kernel == 0) throw ValidationError("encoder kernel must be >= 1");
  if (diversity_temp <= 0.0) throw ValidationError("diversity temperature must be positive");
}

void TokenizerConfig::validate_lengths(std::size_t history_len, std::size_t horizon) const {
  validate();
  if (history_len % patch != 0 || horizon % patch != 0) {
    throw ValidationError("patch " + std::to_string(patch) + " must divide history length " +
                          std::to_string(history_len) + " and horizon " + std::to_string(horizon));
  }
  if ((history_len + horizon) / patch > max_tokens) {
    throw ValidationError("window of " + std::to_string(history_len + horizon) +
                          " steps exceeds the decoder's " + std::to_string(max_tokens) + " tokens");
  }
}

json TokenizerConfig::to_json() const {
  return json{{"patch", patch},
              {"d", d},
              {"encoder_layers", encoder_layers},
              {"kernel", kernel},
              {"K", K},
              {"decoder_layers", decoder_layers},
              {"decoder_heads", decoder_heads},
              {"max_tokens", max_tokens},
              {"beta", beta},
              {"gamma", gamma},
              {"diversity_temp", diversity_temp}};
}

TokenizerConfig TokenizerConfig::from_json(const json& j) {
  TokenizerConfig c;
  c.patch = j.value("patch", c.patch);
  c.d = j.value("d", c.d);
  c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
  c.kernel = j.value("kernel", c.kernel);
  c.K = j.value("K", c.K);
  c.decoder_layers = j.value("decoder_layers", c.decoder_layers);
  c.decoder_heads = j.value("decoder_heads", c.decoder_heads);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.beta = j.value("beta", c.beta);
  c.gamma = j.value("gamma", c.gamma);
  c.diversity_temp = j.value("diversity_temp", c.diversity_temp);
  c.validate();
  return c;
}

std::vector<int> nearest_codes(std::span<const double> z, std::span<const double> codes,
                               std::size_t d) {
  const std::size_t n = z.size() / d, k = codes.size() / d;
  std::vector<int> ids(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double best = INFINITY;
    for (std::size_t c = 0; c < k; ++c) {
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = z[i * d + j] - codes[c * d + j];
        dist += diff * diff;
      }
      if (dist < best) {
        best = dist;
        ids[i] = static_cast<int>(c);
      }
    }
  }
  return ids;
}

namespace {

double fan_in_std(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

}  // namespace

Tokenizer::Tokenizer(const TokenizerConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t d = cfg_.d;
  patch_in_ = make_linear(cfg_.patch, d, fan_in_std(cfg_.patch), rng);
  for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
    EncoderBlock b;
    b.conv_weight = truncated_normal_tensor({cfg_.kernel, d, d}, fan_in_std(cfg_.kernel * d), rng);
    b.conv_bias = Tensor::zeros({d}, true);
    b.mix = make_linear(d, d, fan_in_std(d), rng);
    encoder_.push_back(std::move(b));
  }
  codebook_ = truncated_normal_tensor({cfg_.K, d}, 1.0, rng);
  positions_ = truncated_normal_tensor({cfg_.max_tokens, d}, 0.02, rng);
  for (std::size_t l = 0; l < cfg_.decoder_layers; ++l) {
    decoder_.push_back(make_transformer_block(d, fan_in_std(d), rng));
  }
  final_ln_ = make_layer_norm(d);
  head_ = make_linear(d, cfg_.patch, fan_in_std(d), rng);
}

Tensor Tokenizer::encode(const Tensor& x) const {
  const std::size_t len = x.cols();
  if (len % cfg_.patch != 0) {
    throw ValidationError("series length " + std::to_string(len) +
                          " is not a multiple of patch " + std::to_string(cfg_.patch));
  }
  const std::size_t tokens = len / cfg_.patch;
  Tensor h = patch_in_(reshape(x, {x.rows() * tokens, cfg_.patch}));
  std::size_t dilation = 1;
  for (const auto& b : encoder_) {
    const Tensor c = causal_conv1d(h, b.conv_weight, b.conv_bias, tokens, dilation);
    h = add(h, b.mix(gelu(c)));
    dilation *= 2;
  }
  return h;
}

Quantized Tokenizer::quantize(const Tensor& z) const {
  Quantized q;
  q.ids = nearest_codes(z.data(), codebook_.data(), cfg_.d);
  q.zq = embedding(codebook_, q.ids);
  return q;
}

Tensor Tokenizer::decode(const Tensor& zq, std::size_t tokens) const {
  if (tokens == 0 || zq.rows() % tokens != 0) {
    throw ValidationError("decode: " + std::to_string(zq.rows()) +
                          " latent rows are not a whole number of " + std::to_string(tokens) +
                          "-token sequences");
  }
  if (tokens > cfg_.max_tokens) {
    throw ValidationError("decode: " + std::to_string(tokens) + " tokens exceed the maximum " +
                          std::to_string(cfg_.max_tokens));
  }
  Tensor h = add_periodic_rows(zq, positions_, tokens);
  for (const auto& b : decoder_) h = b(h, tokens, cfg_.decoder_heads);
  const Tensor out = head_(final_ln_(h));
  return reshape(out, {zq.rows() / tokens, tokens * cfg_.patch});
}

io::NamedTensors Tokenizer::named_tensors() const {
  io::NamedTensors out;
  patch_in_.collect(out, "encoder.patch_in");
  for (std::size_t l = 0; l < encoder_.size(); ++l) {
    const std::string p = "encoder.block" + std::to_string(l);
    out.emplace_back(p + ".conv.weight", encoder_[l].conv_weight);
    out.emplace_back(p + ".conv.bias", encoder_[l].conv_bias);
    encoder_[l].mix.collect(out, p + ".mix");
  }
  out.emplace_back("codebook", codebook_);
  out.emplace_back("decoder.positions", positions_);
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    decoder_[l].collect(out, "decoder.block" + std::to_string(l));
  }
  final_ln_.collect(out, "decoder.final_ln");
  head_.collect(out, "decoder.head");
  return out;
}

io::Checkpoint Tokenizer::to_checkpoint(const json& extra_meta) const {
  io::Checkpoint ck;
  ck.stage = "tokenizer";
  ck.meta = extra_meta;
  ck.meta["tokenizer"] = cfg_.to_json();
  for (const auto& [name, t] : named_tensors()) ck.tensors.emplace_back(name, t.clone());
  return ck;
}

Tokenizer Tokenizer::from_checkpoint(const io::Checkpoint& ckpt) {
  if (!ckpt.meta.contains("tokenizer")) {
    throw ValidationError("checkpoint (" + ckpt.stage + ") has no tokenizer; run train-tokenizer");
  }
  Tokenizer t(TokenizerConfig::from_json(ckpt.meta.at("tokenizer")), 0);
  io::restore_tensors(ckpt, t.named_tensors());
  return t;
}

std::vector<int> Tokenizer::series_to_tokens(std::span<const double> values,
                                             const rin::NormStats& stats) const {
  NoGradGuard ng;
  auto x = rin::normalize(values, stats);
  const std::size_t len = x.size();
  const Tensor z = encode(Tensor::from({1, len}, std::move(x)));
  return nearest_codes(z.data(), codebook_.data(), cfg_.d);
}

std::vector<double> Tokenizer::tokens_to_series(std::span<const int> ids,
                                                const rin::NormStats& stats) const {
  NoGradGuard ng;
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= cfg_.K) {
      throw ValidationError("temporal token " + std::to_string(id) + " is outside [0, " +
                            std::to_string(cfg_.K) + ")");
    }
  }
  const Tensor xhat = decode(embedding(codebook_, ids), ids.size());
  return rin::denormalize(xhat.data(), stats);
}

Tensor diversity_loss(const Tensor& z, const Tensor& codes, double tau) {
  const Tensor soft = softmax(scale(squared_distances(z, codes), -1.0 / tau));
  const double lnk = std::log(static_cast<double>(codes.rows()));
  return add_scalar(scale(entropy(mean_rows(soft)), -1.0), lnk);
}

LossParts tokenizer_loss(const Tensor& x, const Tensor& xhat, const Tensor& z, const Tensor& zq,
                         const Tensor& codes, std::span<const double> row_weights,
                         const TokenizerConfig& cfg) {
  LossParts p;
  const Tensor recon = mse(xhat, x, row_weights);
  const Tensor codebook = mse(stop_gradient(z), zq);
  const Tensor commit = mse(z, stop_gradient(zq));
  Tensor total = add(recon, scale(add(commit, codebook), cfg.beta));
  double div = 0.0;
  if (cfg.gamma != 0.0) {
    const Tensor d = diversity_loss(z, codes, cfg.diversity_temp);
    div = d.item();
    total = add(total, scale(d, cfg.gamma));
  } else {
    NoGradGuard ng;
    div = diversity_loss(z, codes, cfg.diversity_temp).item();
  }
  p.total = total;
  p.recon = recon.item();
  p.commit = commit.item();
  p.codebook = codebook.item();
  p.diversity = div;
  return p;
}

}  // namespace tokencast::tokenizer
